"""Pure-NumPy fallback for the compiled estimator kernels.

Same interface as quasiqc._kernels; used when the extension is not built.
Within a call the sums use vectorized dot products (pairwise summation),
which keeps chunk-layout sensitivity below the 1e-10 relative bound the
estimators promise; cross-chunk merging is compensated by the caller either
way.
"""

import numpy as np

IMPLEMENTATION = "python"

_SUBCHUNK = 16384


def _stencil(values, x0, inv_dx, n):
    u = (values - x0) * inv_dx
    idx = np.clip(u.astype(np.intp), 1, n - 3)
    t = u - idx
    w = np.empty(values.shape + (4,))
    w[..., 0] = -t * (t - 1.0) * (t - 2.0) / 6.0
    w[..., 1] = (t * t - 1.0) * (t - 2.0) / 2.0
    w[..., 2] = -t * (t + 1.0) * (t - 2.0) / 2.0
    w[..., 3] = t * (t * t - 1.0) / 6.0
    return idx, w


def alpha_stencils(alphas, a0, inv_da, na_tab):
    return _stencil(np.asarray(alphas, dtype=float), a0, inv_da, na_tab)


def _interp_matrix(xv, tab, x0, inv_dx, ja, ja_wts):
    """Pattern values f(x_j, alpha_i): (len(xv), len(ja)) by bicubic stencils."""
    ix, wx = _stencil(xv, x0, inv_dx, tab.shape[0])
    out = np.zeros((len(xv), len(ja)))
    for u in range(4):
        rows = tab[ix - 1 + u]  # (nrec, na_tab)
        col = np.zeros_like(out)
        for v in range(4):
            col += ja_wts[:, v][None, :] * rows[:, ja - 1 + v]
        out += wx[:, u][:, None] * col
    return out


def accumulate_2m(xa, xb, tab, x0, inv_dx, ja_idx, ja_wts, jb_idx, jb_wts):
    na, nb = len(ja_idx), len(jb_idx)
    sums = np.zeros((na, nb))
    sums2 = np.zeros((na, nb))
    for lo in range(0, len(xa), _SUBCHUNK):
        hi = min(lo + _SUBCHUNK, len(xa))
        fa = _interp_matrix(xa[lo:hi], tab, x0, inv_dx, ja_idx, ja_wts)
        fb = _interp_matrix(xb[lo:hi], tab, x0, inv_dx, jb_idx, jb_wts)
        sums += fa.T @ fb
        sums2 += (fa * fa).T @ (fb * fb)
    return sums, sums2


def accumulate_1m(xv, tab, x0, inv_dx, ja_idx, ja_wts):
    na = len(ja_idx)
    sums = np.zeros(na)
    sums2 = np.zeros(na)
    for lo in range(0, len(xv), _SUBCHUNK):
        hi = min(lo + _SUBCHUNK, len(xv))
        fa = _interp_matrix(xv[lo:hi], tab, x0, inv_dx, ja_idx, ja_wts)
        sums += fa.sum(axis=0)
        sums2 += (fa * fa).sum(axis=0)
    return sums, sums2
