"""Regularized quasiprobabilities and Wigner functions from characteristic functions.

Fourier convention (single mode): a characteristic function Phi maps back to
phase space through

    P(alpha) = (1/pi^2) int d2beta Phi(beta) W(beta) e^{alpha beta* - alpha* beta},

where W is the regularizing weight: the radial filter Omega(|beta|/w) for the
width-w quasiprobability, or exp(-|beta|^2/2) for the Wigner function.  For
per-mode phase-invariant states the angular integrals reduce to Bessel J0
factors and everything collapses to low-dimensional radial quadrature; the
general Cartesian route integrates the full 2n-dimensional product rule.
All prefactors are pinned by the vacuum identity (vacuum in, smoothing kernel
out), which the test suite checks rather than trusting transcription.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import j0

from .errors import (
    FilterRangeError,
    ParameterError,
    QuadratureError,
    ResourceGuardError,
)
from .filters import filtered_b_max
from .grids import QPGrid
from .quad import adaptive_panels, composite_nodes
from .states import CharacteristicFunctionModel, verify_phase_invariance

_PROBE_CAP = 64.0
_ENVELOPE_BOUND = 1e-15


@dataclass(frozen=True)
class ModeTransform:
    """Unitary reshuffling of mode operators; alpha and beta arguments rotate with U."""

    matrix: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", u)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ParameterError("mode transform must be a square matrix")
        if not np.allclose(u @ u.conj().T, np.eye(len(u)), atol=1e-10):
            raise ParameterError("mode transform must be unitary within 1e-10")


def transform_modes(cf, transform):
    """Characteristic function in the transformed mode decomposition.

    Coherent amplitudes rotate with U, so the evaluator is Phi(U^dag beta').
    """
    if not isinstance(transform, ModeTransform):
        transform = ModeTransform(transform)
    u = transform.matrix
    if len(u) != cf.mode_count:
        raise ParameterError("transform dimension does not match mode count")

    def evaluator(betas):
        return cf(np.asarray(betas, dtype=complex) @ u.conj())

    log_abs = None
    if cf.log_abs_evaluator is not None:
        log_abs = lambda betas: cf.log_abs(  # noqa: E731
            np.asarray(betas, dtype=complex) @ u.conj()
        )
    return CharacteristicFunctionModel(
        mode_count=cf.mode_count,
        evaluator=evaluator,
        label=f"{cf.label}|transformed",
        phase_invariant=False,
        log_abs_evaluator=log_abs,
    )


# ---------------------------------------------------------------------------
# truncation of the beta integrals


def _weight_onaxis(table, w, ordering):
    if ordering == "wigner":
        return lambda b: np.exp(-np.asarray(b) ** 2 / 2.0)
    return lambda b: table.values_at(np.asarray(b) / w)


def _probe_directions(mode_count):
    if mode_count == 1:
        return np.array([[1.0]], dtype=complex)
    dirs = [
        [1.0, 0.0],
        [0.0, 1.0],
        [1.0, 1.0],
        [1.0, 0.5],
        [0.5, 1.0],
        [1.0, 1.0j],
    ]
    return np.asarray(dirs, dtype=complex)


def _probed_b_max(cf, table, w, ordering, bound=_ENVELOPE_BOUND):
    """State-dependent truncation: scan log|Phi| along probe rays plus the
    log-weight.

    Needed where the state-independent envelope does not apply (Wigner) or is
    unreachable (very large w with a bounded characteristic function).  Works
    in log space because |Phi| alone may overflow where the weighted product
    is still meaningful.
    """
    dirs = _probe_directions(cf.mode_count)
    cap = _PROBE_CAP if ordering == "wigner" else table.r_max * w
    ts = np.arange(0.25, cap + 0.25, 0.25)
    betas = ts[:, None, None] * dirs[None, :, :]
    log_mags = cf.log_abs(betas)
    if ordering == "wigner":
        log_weight = -np.sum(np.abs(betas) ** 2, axis=-1) / 2.0
    else:
        radial = np.minimum(np.abs(betas) / w, table.r_max)
        log_weight = np.sum(np.log(table.values_at(radial)), axis=-1)
    log_env = (log_mags + log_weight).max(axis=1) + cf.mode_count * np.log1p(ts)
    below = np.nonzero(log_env < np.log(bound))[0]
    if len(below) == 0:
        raise QuadratureError(
            f"could not truncate the transform of '{cf.label}': envelope still "
            f"exp({log_env[-1]:.1f}) at |beta|={ts[-1]:.1f}"
        )
    return float(ts[below[0]])


def _b_max(cf, table, w, ordering, allow_probe_fallback=False):
    if ordering == "wigner":
        return _probed_b_max(cf, table, w, ordering)
    if allow_probe_fallback:
        # Cartesian route: when the state-independent envelope cannot close
        # within the table (very large w), truncate on the actual decay of
        # this state instead, still guarded by the table range.
        try:
            return filtered_b_max(table, w)
        except FilterRangeError:
            return _probed_b_max(cf, table, w, ordering)
    return filtered_b_max(table, w)


# ---------------------------------------------------------------------------
# radial route (phase-invariant states)


def _require_phase_invariant(cf):
    if not (cf.phase_invariant and verify_phase_invariance(cf)):
        raise ParameterError(
            f"model '{cf.label}' is not verified phase-invariant; "
            "use the Cartesian route"
        )


def _radial_grid_values(cf, table, w, axes, tol, ordering):
    """Grid of radial transforms by composite Gauss-Legendre with doubling.

    One GEMM per refinement level; converged when the whole grid moves by
    less than tol.
    """
    bmax = _b_max(cf, table, w, ordering)
    weight = _weight_onaxis(table, w, ordering)
    alpha_peak = max(float(np.max(a)) for a in axes)
    panels = max(16, int(bmax * max(alpha_peak, 1.0) / 3.0) + 8)
    prev = None
    while panels <= 4096:
        b, wq = composite_nodes(0.0, bmax, panels)
        u = wq * b * weight(b)
        if cf.mode_count == 1:
            phi = cf(b[:, None].astype(complex)).real
            vals = (2.0 / np.pi) * ((u * phi) @ j0(2.0 * np.outer(b, axes[0])))
        else:
            pairs = np.stack(
                np.broadcast_arrays(b[:, None], b[None, :]), axis=-1
            ).astype(complex)
            phi = cf(pairs).real
            a_mat = u[:, None] * j0(2.0 * np.outer(b, axes[0]))
            b_mat = u[:, None] * j0(2.0 * np.outer(b, axes[1]))
            vals = (2.0 / np.pi) ** 2 * (a_mat.T @ phi @ b_mat)
        if prev is not None and np.max(np.abs(vals - prev)) < tol:
            return vals
        prev = vals
        panels *= 2
    raise QuadratureError(
        f"radial grid quadrature did not converge to {tol:g}", achieved=None
    )


def pqc_point_radial(cf, table, w, radii, tol=1e-9):
    """Filtered quasiprobability at per-mode moduli, phase-invariant route.

    Two modes: (2/pi)^2 times the double Bessel transform of
    Phi(b, b') Omega(b/w) Omega(b'/w); one mode drops one integral.  The
    b-range is truncated where exp(b^2/2) Omega(b/w), the worst admissible
    characteristic function growth times the filter, falls below 1e-14 --
    making the cut state-independent.  Absolute error <= tol.
    """
    _require_phase_invariant(cf)
    if w <= 0:
        raise ParameterError("width w must be positive")
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if len(radii) != cf.mode_count:
        raise ParameterError("one radius per mode required")
    return _point_radial(cf, table, w, radii, tol, "filtered-p")


def wigner_point(cf, alphas, tol=1e-9, table=None):
    """Wigner value: transform of Phi(beta) times the Gaussian weight.

    Phase-invariant states take the radial route with |alphas|; any other
    state falls back to the Cartesian rule.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    if cf.phase_invariant and verify_phase_invariance(cf):
        return _point_radial(cf, None, None, np.abs(alphas), tol, "wigner")
    return _cartesian_point(cf, table, None, alphas, tol, "wigner", False)


def _point_radial(cf, table, w, radii, tol, ordering):
    bmax = _b_max(cf, table, w, ordering)
    weight = _weight_onaxis(table, w, ordering)

    if cf.mode_count == 1:
        def integrand(b):
            phi = cf(b[:, None].astype(complex)).real
            return b * weight(b) * phi * j0(2.0 * b * radii[0])

        val, _ = adaptive_panels(integrand, 0.0, bmax, tol * np.pi / 2.0)
        return (2.0 / np.pi) * val

    prev = None
    for inner_panels in (128, 256, 512):
        b_in, w_in = composite_nodes(0.0, bmax, inner_panels)
        u_in = w_in * b_in * weight(b_in) * j0(2.0 * b_in * radii[1])

        def integrand(b):
            pairs = np.stack(
                np.broadcast_arrays(b[:, None], b_in[None, :]), axis=-1
            ).astype(complex)
            inner = cf(pairs).real @ u_in
            return b * weight(b) * j0(2.0 * b * radii[0]) * inner

        val, _ = adaptive_panels(
            integrand, 0.0, bmax, tol * (np.pi / 2.0) ** 2 / 2.0
        )
        val *= (2.0 / np.pi) ** 2
        if prev is not None and abs(val - prev) <= tol / 2.0:
            return val
        prev = val
    raise QuadratureError(
        f"inner radial quadrature did not stabilize to {tol:g}",
        achieved=abs(val - prev),
    )


def pqc_grid(cf, table, w, axes, tol=1e-9, ordering="filtered-p"):
    """Radial QPGrid over per-mode |alpha| axes (phase-invariant states)."""
    _require_phase_invariant(cf)
    if ordering == "filtered-p" and w <= 0:
        raise ParameterError("width w must be positive")
    axes = [np.asarray(a, dtype=float) for a in np.atleast_1d(axes)]
    if len(axes) != cf.mode_count:
        raise ParameterError("one radial axis per mode required")
    values = _radial_grid_values(cf, table, w, axes, tol, ordering)
    return QPGrid(
        mode_count=cf.mode_count,
        ordering=ordering,
        axes_kind="radial",
        axes=axes,
        values=values,
        w=w if ordering == "filtered-p" else None,
        tolerance=tol,
        provenance={"state": cf.label},
    )


def wigner_grid(cf, axes, tol=1e-9):
    return pqc_grid(cf, None, None, axes, tol, ordering="wigner")


def marginal_pqc(cf, table, w, kept_mode, radii, tol=1e-9):
    """Reduced single-mode quasiprobability on the kept mode's radial grid.

    Tracing the other mode sets its characteristic-function argument to zero
    (the filter is 1 at the origin), so this is the single-mode transform of
    b -> Phi(..., b, ..., 0).
    """
    if cf.mode_count != 2:
        raise ParameterError("marginal_pqc expects a two-mode model")
    if kept_mode not in (0, 1):
        raise ParameterError("kept_mode must be 0 or 1")
    _require_phase_invariant(cf)

    def reduced_eval(betas):
        betas = np.asarray(betas, dtype=complex)
        full = np.zeros(betas.shape[:-1] + (2,), dtype=complex)
        full[..., kept_mode] = betas[..., 0]
        return cf(full)

    reduced = CharacteristicFunctionModel(
        mode_count=1,
        evaluator=reduced_eval,
        label=f"{cf.label}|traced",
        phase_invariant=True,
    )
    radii = np.asarray(radii, dtype=float)
    return _radial_grid_values(reduced, table, w, [radii], tol, "filtered-p")


# ---------------------------------------------------------------------------
# general Cartesian route


def _cartesian_axis_nodes(bmax, axes, tol_level):
    alpha_peak = 1.0
    for re_axis, im_axis in axes:
        alpha_peak = max(
            alpha_peak,
            float(np.max(np.abs(re_axis))),
            float(np.max(np.abs(im_axis))),
        )
    panels = max(4, int(np.ceil(bmax * (1.0 + 1.5 * alpha_peak) / 8.0)))
    return panels * tol_level


def _mode_transform_2d(cf_factor, table, w, re_axis, im_axis, tol, ordering):
    """Single-mode Cartesian transform used by the product fast path."""
    bmax = _b_max(cf_factor, table, w, ordering, allow_probe_fallback=True)
    weight = _weight_onaxis(table, w, ordering)
    prev = None
    panels = _cartesian_axis_nodes(bmax, [(re_axis, im_axis)], 1)
    while panels <= 512:
        x, wq = composite_nodes(-bmax, bmax, panels)
        beta = x[:, None] + 1j * x[None, :]
        f = cf_factor(beta[..., None]) * weight(np.abs(beta))
        f = f * np.outer(wq, wq)
        k_re = np.exp(2j * np.outer(x, re_axis))   # pairs with Im beta
        k_im = np.exp(-2j * np.outer(x, im_axis))  # pairs with Re beta
        vals = np.einsum("ri,rj,ik->jk", f, k_im, k_re).real / np.pi**2
        # index order (re, im)
        vals = vals.T
        if prev is not None and np.max(np.abs(vals - prev)) < tol:
            return vals
        prev = vals
        panels = int(panels * 1.5) + 1
    raise QuadratureError("single-mode Cartesian transform did not converge")


def _cartesian_values_2m(cf, table, w, axes, tol, ordering):
    """Two-mode Cartesian product rule, streamed over slabs of the first axis.

    Phi(-beta) = conj(Phi(beta)) pairs each slab with its mirror, so only
    positive Re(beta_A) nodes are visited and twice the real part kept.
    """
    (re_a, im_a), (re_b, im_b) = axes
    bmax = _b_max(cf, table, w, ordering, allow_probe_fallback=True)
    weight = _weight_onaxis(table, w, ordering)
    prev = None
    panels = _cartesian_axis_nodes(bmax, axes, 1)
    while panels <= 14:
        x, wq = composite_nodes(-bmax, bmax, panels)
        k_re_a = np.exp(2j * np.outer(x, re_a))    # pairs Im(beta_A) <-> Re alpha_A
        k_im_b = np.exp(-2j * np.outer(x, im_b))   # pairs Re(beta_B) <-> Im alpha_B
        k_re_b = np.exp(2j * np.outer(x, re_b))    # pairs Im(beta_B) <-> Re alpha_B
        w3 = wq[:, None, None] * wq[None, :, None] * wq[None, None, :]
        bai, bbr, bbi = np.meshgrid(x, x, x, indexing="ij")
        beta_b = bbr + 1j * bbi
        wgt_b = weight(np.abs(beta_b))
        out = np.zeros((len(re_a), len(im_a), len(re_b), len(im_b)))
        for s_idx in np.nonzero(x > 0)[0]:
            s = x[s_idx]
            beta_a = s + 1j * bai
            stack = np.stack(np.broadcast_arrays(beta_a, beta_b), axis=-1)
            f = cf(stack)
            f = f * (weight(np.abs(beta_a)) * wgt_b)
            f = f * (wq[s_idx] * w3)
            t1 = np.tensordot(f, k_re_a, axes=([0], [0]))   # (bBr, bBi, reA)
            t2 = np.tensordot(t1, k_im_b, axes=([0], [0]))  # (bBi, reA, imB)
            t3 = np.tensordot(t2, k_re_b, axes=([0], [0]))  # (reA, imB, reB)
            phase_im_a = np.exp(-2j * s * np.asarray(im_a))
            # the mirror slab at -s contributes the complex conjugate
            out += 2.0 * np.real(np.einsum("aqb,p->apbq", t3, phase_im_a))
        out /= np.pi**4
        if prev is not None and np.max(np.abs(out - prev)) < tol:
            return out
        prev = out
        panels = int(panels * 1.5) + 1
    raise QuadratureError(
        "two-mode Cartesian transform did not converge "
        f"(last delta {np.max(np.abs(out - prev)):.2e})"
    )


def pqc_grid_cartesian(
    cf, table, w, axes, tol=1e-9, ordering="filtered-p", allow_large=False
):
    """QPGrid over Cartesian per-mode (re, im) axes for arbitrary states.

    Product states (cf.factors set) factorize into per-mode 2-D transforms;
    entangled two-mode states run the full 4-D product rule.  More than two
    modes is refused unless allow_large=True (cost grows as nodes^(2n)).
    """
    axes = [
        (np.atleast_1d(np.asarray(r, float)), np.atleast_1d(np.asarray(i, float)))
        for r, i in axes
    ]
    if len(axes) != cf.mode_count:
        raise ParameterError("one (re, im) axis pair per mode required")
    if cf.mode_count > 2 and not allow_large:
        raise ResourceGuardError(
            f"{cf.mode_count}-mode Cartesian quadrature grows as nodes^(2n); "
            "pass allow_large=True to proceed"
        )

    if cf.factors is not None:
        parts = [
            _mode_transform_2d(fac, table, w, re_ax, im_ax, tol, ordering)
            for fac, (re_ax, im_ax) in zip(cf.factors, axes)
        ]
        values = parts[0]
        for part in parts[1:]:
            values = np.multiply.outer(values, part)
    elif cf.mode_count == 1:
        values = _mode_transform_2d(cf, table, w, *axes[0], tol, ordering)
    elif cf.mode_count == 2:
        values = _cartesian_values_2m(cf, table, w, axes, tol, ordering)
    else:
        raise ResourceGuardError(
            "general non-product states beyond two modes are not supported"
        )

    return QPGrid(
        mode_count=cf.mode_count,
        ordering=ordering,
        axes_kind="cartesian",
        axes=axes,
        values=values,
        w=w if ordering == "filtered-p" else None,
        tolerance=tol,
        provenance={"state": cf.label},
    )


def _cartesian_point(cf, table, w, alphas, tol, ordering, allow_large):
    axes = [([a.real], [a.imag]) for a in alphas]
    grid = pqc_grid_cartesian(
        cf, table, w, axes, tol, ordering=ordering, allow_large=allow_large
    )
    return float(grid.values.ravel()[0])


def pqc_point_general(cf, table, w, alphas, tol=1e-9, allow_large=False):
    """Filtered quasiprobability at complex per-mode amplitudes, any state.

    Full 2n-dimensional Fourier quadrature over the truncated beta domain;
    agrees with the radial route within 2*tol for phase-invariant states.
    """
    if w <= 0:
        raise ParameterError("width w must be positive")
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    if len(alphas) != cf.mode_count:
        raise ParameterError("one amplitude per mode required")
    return _cartesian_point(cf, table, w, alphas, tol, "filtered-p", allow_large)
