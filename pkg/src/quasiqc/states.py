"""Test states and their normally ordered characteristic functions.

The central state is the fully phase-randomized two-mode squeezed vacuum:
a geometric mixture of twin Fock states |n,n> with weights (1-p) p^n.  It
is separable, discord-free, has a positive Wigner function and thermal
single-mode reductions, yet its joint P function is nonclassical -- which
is exactly what the filtered quasiprobability machinery is meant to expose.

Quadrature convention: x(phi) is the eigenvalue of a e^{-i phi} + a^dag e^{i phi},
so the vacuum quadrature variance is 1 and the vacuum characteristic function
of x is exp(-b^2/2).  The sampling formulas depend on this scaling; it is
pinned by a numerical check in the test suite rather than assumed.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ive

from .errors import ParameterError
from .sampling import QuadratureDataset

_TAIL_BOUND = 1e-12


def default_n_max(p):
    """Smallest Fock cutoff with geometric tail p^(n_max+1) <= 1e-12."""
    return int(math.ceil(math.log(_TAIL_BOUND) / math.log(p)))


@dataclass(frozen=True)
class PhaseRandomizedTMSV:
    """Fully phase-randomized two-mode squeezed vacuum, sum_n (1-p) p^n |n,n><n,n|."""

    p: float
    n_max: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ParameterError(f"p must lie in (0, 1), got {self.p}")
        if self.n_max is None:
            object.__setattr__(self, "n_max", default_n_max(self.p))
        if self.n_max < 0:
            raise ParameterError("n_max must be nonnegative")
        if self.p ** (self.n_max + 1) > _TAIL_BOUND:
            raise ParameterError(
                f"n_max={self.n_max} leaves geometric tail "
                f"{self.p ** (self.n_max + 1):.2e} > {_TAIL_BOUND:g}"
            )

    @property
    def nbar(self):
        """Mean photon number of either reduced mode, p/(1-p)."""
        return self.p / (1.0 - self.p)


def fock_weight(state, n):
    """Weight (1-p) p^n of the twin Fock component |n,n>."""
    if not 0 <= n <= state.n_max:
        raise ParameterError(f"n={n} outside [0, {state.n_max}]")
    return (1.0 - state.p) * state.p**n


@dataclass
class CharacteristicFunctionModel:
    """Evaluator for an n-mode normally ordered characteristic function.

    evaluator maps a complex array of shape (..., mode_count) to complex
    values of shape (...).  phase_invariant declares per-mode phase
    invariance (consumers re-verify by spot checks before relying on it);
    factors optionally lists single-mode models whose product this is;
    log_abs_evaluator, when set, returns log|Phi| without overflow (the
    magnitude itself may exceed double range far out, where truncation
    probes still need it).
    """

    mode_count: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    label: str = ""
    phase_invariant: bool = False
    factors: Optional[list] = None
    log_abs_evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None
    _phase_checked: bool = field(default=False, repr=False)

    def __call__(self, betas):
        betas = np.asarray(betas, dtype=complex)
        if betas.shape[-1] != self.mode_count:
            raise ParameterError(
                f"expected last axis of length {self.mode_count}, "
                f"got shape {betas.shape}"
            )
        return self.evaluator(betas)

    def log_abs(self, betas):
        """log|Phi(betas)|; overflow-safe when log_abs_evaluator is set."""
        betas = np.asarray(betas, dtype=complex)
        if self.log_abs_evaluator is not None:
            return self.log_abs_evaluator(betas)
        with np.errstate(over="ignore", divide="ignore"):
            return np.log(np.abs(self.evaluator(betas)))


def verify_phase_invariance(cf, rng=None, n_checks=20, tol=1e-10):
    """Spot-check per-mode phase invariance; caches the result on the model."""
    if cf._phase_checked:
        return True
    if not cf.phase_invariant:
        return False
    rng = np.random.default_rng(0) if rng is None else rng
    moduli = rng.uniform(0.0, 3.0, size=(n_checks, cf.mode_count))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_checks, cf.mode_count))
    base = cf(moduli.astype(complex))
    rotated = cf(moduli * np.exp(1j * phases))
    if not np.allclose(base, rotated, rtol=0.0, atol=tol):
        raise ParameterError(
            f"model '{cf.label}' declared phase-invariant but is not"
        )
    cf._phase_checked = True
    return True


def char_fn_prtmsv(state):
    """Two-mode characteristic function of the phase-randomized TMSV.

    The Fock series (1-p) sum_n p^n L_n(|bA|^2) L_n(|bB|^2) sums in closed
    form (bilinear Laguerre generating function) to

        exp(-p(x+y)/(1-p)) * I0(2 sqrt(p x y)/(1-p)),   x=|bA|^2, y=|bB|^2,

    evaluated here with the exponentially scaled Bessel function so the
    growing I0 never overflows.
    """
    p = state.p

    def _log_value(betas):
        x = np.abs(betas[..., 0]) ** 2
        y = np.abs(betas[..., 1]) ** 2
        z = 2.0 * np.sqrt(p * x * y) / (1.0 - p)
        with np.errstate(divide="ignore"):
            return -p * (x + y) / (1.0 - p) + z + np.log(ive(0, z))

    def evaluator(betas):
        return np.exp(_log_value(betas)).astype(complex)

    return CharacteristicFunctionModel(
        mode_count=2,
        evaluator=evaluator,
        label=f"pr-tmsv(p={p})",
        phase_invariant=True,
        log_abs_evaluator=_log_value,
    )


def char_fn_prtmsv_series(state, n_terms=None):
    """Truncated-series evaluator (trusted reference for the closed form).

    Sums (1-p) p^n L_n(x) L_n(y) with the stable upward three-term Laguerre
    recurrence; no factorials.
    """
    p = state.p
    n_terms = state.n_max if n_terms is None else n_terms

    def evaluator(betas):
        x = np.abs(betas[..., 0]) ** 2
        y = np.abs(betas[..., 1]) ** 2
        lam1, la = np.ones_like(x), np.ones_like(x)
        lbm1, lb = np.ones_like(y), np.ones_like(y)
        total = (1.0 - p) * la * lb
        weight = 1.0 - p
        for n in range(n_terms):
            if n == 0:
                la_next, lb_next = 1.0 - x, 1.0 - y
            else:
                la_next = ((2 * n + 1 - x) * la - n * lam1) / (n + 1)
                lb_next = ((2 * n + 1 - y) * lb - n * lbm1) / (n + 1)
            lam1, la = la, la_next
            lbm1, lb = lb, lb_next
            weight *= p
            total = total + weight * la * lb
        return total.astype(complex)

    return CharacteristicFunctionModel(
        mode_count=2,
        evaluator=evaluator,
        label=f"pr-tmsv-series(p={p},n={n_terms})",
        phase_invariant=True,
    )


def reduced_char_fn(state):
    """Single-mode characteristic function of either reduced mode: exp(-nbar |b|^2)."""
    return thermal_cf(state.nbar)


def thermal_cf(nbar, mode_count=1):
    """Product of single-mode thermal characteristic functions exp(-nbar |b_k|^2)."""
    if nbar < 0:
        raise ParameterError("nbar must be nonnegative")

    def evaluator(betas):
        return np.exp(-nbar * np.sum(np.abs(betas) ** 2, axis=-1)).astype(complex)

    model = CharacteristicFunctionModel(
        mode_count=mode_count,
        evaluator=evaluator,
        label=f"thermal(nbar={nbar},n={mode_count})",
        phase_invariant=True,
        log_abs_evaluator=lambda betas: -nbar * np.sum(np.abs(betas) ** 2, axis=-1),
    )
    if mode_count > 1:
        model.factors = [thermal_cf(nbar) for _ in range(mode_count)]
    return model


def coherent_cf(alpha0):
    """Coherent product state |alpha0>: Phi(beta) = exp(beta.alpha0* - beta*.alpha0)."""
    alpha0 = np.atleast_1d(np.asarray(alpha0, dtype=complex))

    def evaluator(betas):
        return np.exp(
            np.sum(betas * alpha0.conj() - betas.conj() * alpha0, axis=-1)
        )

    model = CharacteristicFunctionModel(
        mode_count=len(alpha0),
        evaluator=evaluator,
        label=f"coherent({alpha0})",
        phase_invariant=bool(np.all(alpha0 == 0)),
        log_abs_evaluator=lambda betas: np.zeros(betas.shape[:-1]),
    )
    if len(alpha0) > 1:
        model.factors = [coherent_cf(a) for a in alpha0]
    return model


def vacuum_cf(mode_count=1):
    return coherent_cf(np.zeros(mode_count, dtype=complex))


# ---------------------------------------------------------------------------
# quadrature statistics


def fock_wavefunctions(n_max, x):
    """All harmonic-oscillator eigenfunctions psi_0..psi_n_max on the grid x.

    Scaled so the vacuum quadrature variance is 1: psi_n(x) = 2^{-1/4} h_n(x/sqrt2)
    with h_n the unit-normalized Hermite functions, built by the stable upward
    recurrence.
    """
    x = np.asarray(x, dtype=float)
    xi = x / np.sqrt(2.0)
    out = np.empty((n_max + 1, len(x)))
    out[0] = np.pi**-0.25 * np.exp(-xi * xi / 2.0)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * xi * out[n] - np.sqrt(
            n / (n + 1)
        ) * out[n - 1]
    return out * 2.0**-0.25


def fock_wavefunction(n, x):
    """psi_n on x (see fock_wavefunctions for the scaling convention)."""
    if n < 0:
        raise ParameterError("n must be nonnegative")
    scalar = np.isscalar(x)
    vals = fock_wavefunctions(n, np.atleast_1d(x))[n]
    return float(vals[0]) if scalar else vals


def quadrature_pdf(state, x_a, x_b):
    """Joint quadrature density sum_n (1-p) p^n psi_n(x_a)^2 psi_n(x_b)^2.

    Phase-independent because the state is fully dephased.
    """
    x_a = np.atleast_1d(np.asarray(x_a, dtype=float))
    x_b = np.atleast_1d(np.asarray(x_b, dtype=float))
    pa = fock_wavefunctions(state.n_max, x_a.ravel()) ** 2
    pb = fock_wavefunctions(state.n_max, x_b.ravel()) ** 2
    w = (1.0 - state.p) * state.p ** np.arange(state.n_max + 1)
    out = np.einsum("n,ni,ni->i", w, pa, pb.reshape(pa.shape[0], -1))
    return out.reshape(x_a.shape) if out.size > 1 else float(out[0])


def thermal_quadrature_pdf(state, x):
    """Marginal quadrature density of either mode.

    The geometric mixture of psi_n^2 sums (Mehler kernel) to a Gaussian with
    variance 1 + 2 nbar; kept as the analytic cross-check for the series.
    """
    var = 1.0 + 2.0 * state.nbar
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


# ---------------------------------------------------------------------------
# simulated homodyne records

_INV_CDF_POINTS = 4096
_INV_CDF_CACHE = {}
_INV_CDF_MAX_N = 2048


def _x_span(n):
    # classical turning points sqrt(2n+1) plus a wide Gaussian skirt
    return 2.0 * np.sqrt(2.0 * n + 1.0) + 6.0


def _inverse_cdf_table(n):
    tab = _INV_CDF_CACHE.get(n)
    if tab is None:
        span = _x_span(n)
        x = np.linspace(-span, span, _INV_CDF_POINTS)
        pdf = fock_wavefunctions(n, x)[n] ** 2
        cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2.0 * np.diff(x))])
        tab = (x, cdf / cdf[-1])
        _INV_CDF_CACHE[n] = tab
    return tab


def _sample_psi2_inverse_cdf(n, count, rng):
    x, cdf = _inverse_cdf_table(n)
    return np.interp(rng.random(count), cdf, x)


def _sample_psi2_rejection(n, count, rng):
    """Rejection fallback for photon numbers past the table cache cap."""
    span = _x_span(n)
    probe = np.linspace(-span, span, 2048)
    bound = 1.02 * np.max(fock_wavefunctions(n, probe)[n] ** 2)
    out = np.empty(count)
    filled = 0
    while filled < count:
        draw = max(count - filled, 1024)
        x = rng.uniform(-span, span, draw)
        accept = rng.random(draw) * bound < fock_wavefunctions(n, x)[n] ** 2
        take = x[accept][: count - filled]
        out[filled : filled + len(take)] = take
        filled += len(take)
    return out


def sample_quadratures(
    state,
    n_records,
    seed,
    phase_mode="uniform-random",
    phases=None,
    chunk_size=65536,
):
    """Simulate balanced-homodyne records for the phase-randomized TMSV.

    Each record draws a photon number n from the geometric law, then x_A and
    x_B independently from psi_n^2.  Deterministic given the seed; records
    are generated in fixed-size chunks whose RNG substreams mix the chunk
    index into the seed, so the output is independent of the worker layout.

    phase_mode 'uniform-random' draws phases uniformly in [0, 2pi);
    'fixed-list' cycles through the rows of `phases` (shape (k, 2)).
    """
    if n_records < 1:
        raise ParameterError("n_records must be >= 1")
    if phase_mode not in ("uniform-random", "fixed-list"):
        raise ParameterError(f"unknown phase_mode {phase_mode!r}")
    if phase_mode == "fixed-list":
        phases = np.atleast_2d(np.asarray(phases, dtype=float))
        if phases.shape[1] != 2:
            raise ParameterError("fixed-list phases must have two columns")
        if np.any(phases < 0) or np.any(phases >= 2 * np.pi):
            raise ParameterError("phases must lie in [0, 2pi)")

    x = np.empty((n_records, 2))
    phi = np.empty((n_records, 2))
    for chunk, lo in enumerate(range(0, n_records, chunk_size)):
        hi = min(lo + chunk_size, n_records)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(chunk,))
        )
        count = hi - lo
        # geometric draw of n (support 0,1,2,...); the n_max clip only acts
        # with probability p^(n_max+1) <= 1e-12 and keeps table sizes bounded
        n = np.minimum(rng.geometric(1.0 - state.p, size=count) - 1, state.n_max)
        xa = np.empty(count)
        xb = np.empty(count)
        for nv in np.unique(n):
            mask = n == nv
            cnt = int(mask.sum())
            sampler = (
                _sample_psi2_inverse_cdf
                if nv <= _INV_CDF_MAX_N
                else _sample_psi2_rejection
            )
            xa[mask] = sampler(int(nv), cnt, rng)
            xb[mask] = sampler(int(nv), cnt, rng)
        x[lo:hi, 0] = xa
        x[lo:hi, 1] = xb
        if phase_mode == "uniform-random":
            phi[lo:hi] = rng.uniform(0.0, 2.0 * np.pi, size=(count, 2))
        else:
            idx = (lo + np.arange(count)) % len(phases)
            phi[lo:hi] = phases[idx]

    return QuadratureDataset(
        x=x,
        phi=phi,
        source={
            "kind": "simulated-pr-tmsv",
            "p": state.p,
            "n_max": state.n_max,
            "seed": seed,
            "phase_mode": phase_mode,
        },
    )
