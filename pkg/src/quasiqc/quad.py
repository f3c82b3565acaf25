"""Gauss-Legendre quadrature building blocks.

All integrands are assumed vectorized: they accept an ndarray of nodes and
return an ndarray of the same shape.
"""

import heapq
from functools import lru_cache

import numpy as np

from .errors import ParameterError, QuadratureError


@lru_cache(maxsize=64)
def gauss_legendre(order):
    """Nodes and weights on [-1, 1], cached per order."""
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def composite_nodes(a, b, panels, order=16):
    """Flattened nodes/weights of `panels` equal Gauss-Legendre panels on [a, b]."""
    if b <= a:
        raise ParameterError(f"empty integration interval [{a}, {b}]")
    x, w = gauss_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def adaptive_panels(f, a, b, tol, rtol=1e-12, order=10, max_panels=4000):
    """Adaptive Gauss-Legendre panel integration of a vectorized integrand.

    Panels are bisected worst-first until the summed local error estimate
    (difference between order-`order` and order-`2*order+1` rules) drops
    below max(tol, rtol*|integral|).  Returns (value, error_estimate).
    Raises QuadratureError with the achieved estimate when the panel budget
    runs out.
    """
    if b <= a:
        raise ParameterError(f"empty integration interval [{a}, {b}]")

    xl, wl = gauss_legendre(order)
    xh, wh = gauss_legendre(2 * order + 1)

    def panel(lo, hi):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        i_low = half * np.dot(wl, f(mid + half * xl))
        i_high = half * np.dot(wh, f(mid + half * xh))
        return abs(i_high - i_low), i_high

    err, val = panel(a, b)
    # heap keyed by -error so the worst panel pops first; tie-break by bounds
    heap = [(-err, a, b, val)]
    total_err, total_val = err, val
    n_panels = 1
    while total_err > max(tol, rtol * abs(total_val)):
        if n_panels >= max_panels:
            raise QuadratureError(
                f"adaptive quadrature stalled at {n_panels} panels "
                f"(achieved {total_err:.3e}, requested {tol:.3e})",
                achieved=total_err,
            )
        neg_err, lo, hi, val = heapq.heappop(heap)
        total_err += neg_err  # neg_err is negative
        total_val -= val
        mid = 0.5 * (lo + hi)
        for (l2, h2) in ((lo, mid), (mid, hi)):
            e2, v2 = panel(l2, h2)
            heapq.heappush(heap, (-e2, l2, h2, v2))
            total_err += e2
            total_val += v2
        n_panels += 1
    return total_val, total_err


def trapezoid_weights(axis):
    """Trapezoid quadrature weights for a 1-D grid (uniform or not)."""
    axis = np.asarray(axis, dtype=float)
    if axis.size < 2:
        raise ParameterError("need at least two grid points")
    w = np.empty_like(axis)
    d = np.diff(axis)
    w[0] = d[0] / 2
    w[-1] = d[-1] / 2
    w[1:-1] = (d[:-1] + d[1:]) / 2
    return w
