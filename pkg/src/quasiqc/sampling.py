"""Direct estimation of regularized quasiprobabilities from quadrature records.

For fully dephased states the single-mode pattern function

    f(x, |alpha|; w) = Re (2/pi) int_0^inf db b e^{b^2/2} e^{i b x}
                                        J0(2 b |alpha|) Omega(b/w)

turns homodyne samples straight into quasiprobability estimates: the value at
alpha is the sample mean of per-record products of pattern values, one factor
per mode.  The pattern function is tabulated once on an (x, |alpha|) grid and
interpolated bicubically; the estimator is real because f is defined through
the real part (equivalently the cos-symmetrized integral), a convention pinned
by the vacuum identity test.

Error model: sigma is the empirical standard deviation of the per-record
products (biased second-moment form), delta = sigma/sqrt(N) the standard
error, and a negative estimate carries the confidence |value|/delta.
"""

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import j0

from ._accel import kernels
from .errors import FilterRangeError, ParameterError, QuadratureError, SchemaError
from .filters import filtered_b_max
from .grids import QPGrid
from .quad import composite_nodes

_CHUNK_RECORDS = 262144


# ---------------------------------------------------------------------------
# datasets


@dataclass
class QuadratureDataset:
    """Homodyne records: x[j, k] and phi[j, k] for record j, mode k."""

    x: np.ndarray
    phi: np.ndarray
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        if self.x.shape != self.phi.shape:
            raise ParameterError("x and phi shapes differ")
        if self.x.shape[0] < 1:
            raise ParameterError("dataset needs at least one record")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.phi))):
            raise ParameterError("dataset contains non-finite entries")
        if np.any(self.phi < 0.0) or np.any(self.phi >= 2.0 * np.pi):
            raise ParameterError("phases must lie in [0, 2pi)")

    @property
    def n_records(self):
        return self.x.shape[0]

    @property
    def mode_count(self):
        return self.x.shape[1]


def save_dataset(data, path):
    """CSV: '# modes=n' header, column row, then one record per line."""
    n = data.mode_count
    cols = ",".join(f"x_{k+1},phi_{k+1}" for k in range(n))
    with open(path, "w") as fh:
        fh.write(f"# modes={n}\n{cols}\n")
        inter = np.empty((data.n_records, 2 * n))
        inter[:, 0::2] = data.x
        inter[:, 1::2] = data.phi
        for row in inter:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_dataset(path):
    """Parse and validate a dataset CSV; schema errors carry line numbers."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# modes="):
        raise SchemaError(f"{path}: missing '# modes=' header", line=1)
    try:
        n = int(lines[0].split("=", 1)[1])
    except ValueError:
        raise SchemaError(f"{path}: unreadable mode count", line=1)
    if n < 1:
        raise SchemaError(f"{path}: mode count must be positive", line=1)
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or (ln == 2 and line.startswith("x_1")):
            continue
        parts = line.split(",")
        if len(parts) != 2 * n:
            raise SchemaError(
                f"{path}: expected {2 * n} columns for {n} modes, "
                f"got {len(parts)}",
                line=ln,
            )
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise SchemaError(f"{path}: unparsable number", line=ln)
        if not all(math.isfinite(v) for v in vals):
            raise SchemaError(f"{path}: non-finite value", line=ln)
        for k in range(n):
            if not 0.0 <= vals[2 * k + 1] < 2.0 * math.pi:
                raise SchemaError(
                    f"{path}: phase out of [0, 2pi)", line=ln
                )
        rows.append(vals)
    if not rows:
        raise SchemaError(f"{path}: no records")
    arr = np.asarray(rows)
    return QuadratureDataset(
        x=arr[:, 0::2], phi=arr[:, 1::2], source={"path": str(path)}
    )


# ---------------------------------------------------------------------------
# pattern tables


@dataclass
class PatternTable:
    """Tabulated f(x, |alpha|; w) on a uniform (x, alpha) grid."""

    w: float
    x0: float
    x_step: float
    alpha0: float
    alpha_step: float
    values: np.ndarray  # (n_x, n_alpha)
    quad_tolerance: float
    provenance: dict = field(default_factory=dict)

    @property
    def x_grid(self):
        return self.x0 + self.x_step * np.arange(self.values.shape[0])

    @property
    def alpha_grid(self):
        return self.alpha0 + self.alpha_step * np.arange(self.values.shape[1])

    @property
    def x_end(self):
        return self.x0 + self.x_step * (self.values.shape[0] - 1)

    @property
    def alpha_end(self):
        return self.alpha0 + self.alpha_step * (self.values.shape[1] - 1)


def _pattern_cache_name(w, x_range, x_step, alpha_range, alpha_step, tol):
    tag = (
        f"w{w!r}_x{x_range[0]!r}_{x_range[1]!r}_{x_step!r}"
        f"_a{alpha_range[0]!r}_{alpha_range[1]!r}_{alpha_step!r}_tol{tol!r}"
    )
    return f"pattern_{tag}.npz"


def build_pattern_table(
    table,
    w,
    x_range=(-30.0, 30.0),
    x_step=0.01,
    alpha_range=(0.0, 3.0),
    alpha_step=0.02,
    tol=1e-9,
    cache_dir=None,
):
    """Tabulate the phase-randomized pattern function for width w.

    The b integral is truncated by the same state-independent rule as the
    quadrature transforms (exp(b^2/2) Omega(b/w) < 1e-14).  Panel counts are
    chosen by doubling until a probe set spanning the grid corners moves by
    less than tol, then the full table is filled at that resolution.
    """
    if w <= 0:
        raise ParameterError("width w must be positive")
    if x_step <= 0 or alpha_step <= 0:
        raise ParameterError("grid steps must be positive")
    if x_range[1] <= x_range[0] or alpha_range[1] < alpha_range[0]:
        raise ParameterError("empty grid range")

    from .filters import default_cache_dir

    cache_dir = cache_dir if cache_dir is not None else default_cache_dir()
    path = os.path.join(
        cache_dir,
        _pattern_cache_name(w, x_range, x_step, alpha_range, alpha_step, tol),
    )
    if os.path.exists(path):
        return _load_pattern(path)

    bmax = filtered_b_max(table, w)
    n_x = int(round((x_range[1] - x_range[0]) / x_step)) + 1
    n_a = int(round((alpha_range[1] - alpha_range[0]) / alpha_step)) + 1
    x_grid = x_range[0] + x_step * np.arange(n_x)
    a_grid = alpha_range[0] + alpha_step * np.arange(n_a)

    # fastest oscillation: cos(b x) at the x extremes
    probe_x = np.array([x_range[0], x_range[0] / 3.0, 0.0, x_range[1]])
    probe_a = a_grid[:: max(1, n_a // 4)]
    panels = max(32, int(bmax * np.max(np.abs(x_grid)) / 6.0))
    prev = None
    while panels <= 16384:
        b, wq = composite_nodes(0.0, bmax, panels)
        u = wq * b * np.exp(b * b / 2.0) * table.values_at(b / w)
        probe = (2.0 / np.pi) * (
            np.cos(np.outer(probe_x, b)) @ (u[:, None] * j0(2.0 * np.outer(b, probe_a)))
        )
        if prev is not None and np.max(np.abs(probe - prev)) < tol:
            break
        prev = probe
        panels *= 2
    else:
        raise QuadratureError(f"pattern quadrature did not converge to {tol:g}")

    uj = u[:, None] * j0(2.0 * np.outer(b, a_grid))
    values = np.empty((n_x, n_a))
    for lo in range(0, n_x, 1024):
        hi = min(lo + 1024, n_x)
        values[lo:hi] = (2.0 / np.pi) * (np.cos(np.outer(x_grid[lo:hi], b)) @ uj)

    pat = PatternTable(
        w=w,
        x0=x_range[0],
        x_step=x_step,
        alpha0=alpha_range[0],
        alpha_step=alpha_step,
        values=values,
        quad_tolerance=tol,
        provenance={
            "b_max": bmax,
            "panels": panels,
            "checksum": hashlib.sha256(values.tobytes()).hexdigest(),
        },
    )
    os.makedirs(cache_dir, exist_ok=True)
    _save_pattern(pat, path)
    return pat


def _save_pattern(pat, path):
    np.savez_compressed(
        path,
        values=pat.values,
        params=np.array(
            [pat.w, pat.x0, pat.x_step, pat.alpha0, pat.alpha_step, pat.quad_tolerance]
        ),
        meta=json.dumps(pat.provenance),
    )


def _load_pattern(path):
    with np.load(path, allow_pickle=False) as archive:
        values = archive["values"]
        w, x0, x_step, a0, a_step, tol = archive["params"]
        meta = json.loads(str(archive["meta"]))
    if meta.get("checksum") != hashlib.sha256(values.tobytes()).hexdigest():
        raise SchemaError(f"{path}: pattern cache checksum mismatch")
    return PatternTable(
        w=float(w),
        x0=float(x0),
        x_step=float(x_step),
        alpha0=float(a0),
        alpha_step=float(a_step),
        values=values,
        quad_tolerance=float(tol),
        provenance=meta,
    )


def pattern_value_general(table, x, phi, alpha, w, tol=1e-9):
    """Phase-dependent pattern function for a record measured at phase phi.

    The quadrature x(phi) pins the characteristic function along the ray
    i b e^{i phi}, which shifts the effective argument to
    x - 2|alpha| cos(arg alpha - phi); averaging over phi uniform in
    [0, 2pi) recovers the tabulated phase-randomized form (the angular
    integral is exactly J0).
    """
    if w <= 0:
        raise ParameterError("width w must be positive")
    alpha = complex(alpha)
    shift = x - 2.0 * abs(alpha) * np.cos(np.angle(alpha) - phi)
    bmax = filtered_b_max(table, w)

    from .quad import adaptive_panels

    def integrand(b):
        return (
            b * np.exp(b * b / 2.0) * table.values_at(b / w) * np.cos(b * shift)
        )

    val, _ = adaptive_panels(integrand, 0.0, bmax, tol * np.pi / 2.0)
    return (2.0 / np.pi) * val


# ---------------------------------------------------------------------------
# estimators


@dataclass
class EstimateWithError:
    """Sampled quasiprobability value with its statistical uncertainty.

    confidence = |value|/delta is present only for negative values with
    delta > 0 (a zero-variance dataset leaves it undefined).
    """

    value: float
    sigma: float
    delta: float
    confidence: Optional[float]
    n_records: int


def _check_coverage(data, pat, alphas):
    x = data.x
    bad = np.nonzero((x < pat.x0) | (x > pat.x_end))[0]
    if len(bad) > 0:
        shown = ", ".join(str(int(i)) for i in np.unique(bad)[:10])
        raise ParameterError(
            f"{len(np.unique(bad))} records fall outside the pattern table "
            f"x-range [{pat.x0}, {pat.x_end}]; record indices: {shown}"
        )
    moduli = np.abs(np.asarray(alphas, dtype=complex))
    if np.any(moduli < pat.alpha0 - 1e-12) or np.any(moduli > pat.alpha_end + 1e-12):
        raise ParameterError(
            f"requested |alpha| outside pattern table range "
            f"[{pat.alpha0}, {pat.alpha_end}]"
        )
    return moduli


class _Kahan:
    """Compensated elementwise accumulator for merging chunk partial sums."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self._comp = np.zeros(shape)

    def add(self, arr):
        y = arr - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t


def _accumulate(data, pat, moduli_per_mode, workers=1):
    """Chunked kernel dispatch; returns (sum, sum2) over all records."""
    tab = np.ascontiguousarray(pat.values)
    inv_dx = 1.0 / pat.x_step
    inv_da = 1.0 / pat.alpha_step
    stencils = [
        kernels.alpha_stencils(
            np.ascontiguousarray(m, dtype=float), pat.alpha0, inv_da, tab.shape[1]
        )
        for m in moduli_per_mode
    ]

    def run_chunk(lo, hi):
        if data.mode_count == 1:
            return kernels.accumulate_1m(
                np.ascontiguousarray(data.x[lo:hi, 0]),
                tab, pat.x0, inv_dx, stencils[0][0], stencils[0][1],
            )
        return kernels.accumulate_2m(
            np.ascontiguousarray(data.x[lo:hi, 0]),
            np.ascontiguousarray(data.x[lo:hi, 1]),
            tab, pat.x0, inv_dx,
            stencils[0][0], stencils[0][1],
            stencils[1][0], stencils[1][1],
        )

    bounds = [
        (lo, min(lo + _CHUNK_RECORDS, data.n_records))
        for lo in range(0, data.n_records, _CHUNK_RECORDS)
    ]
    shape = tuple(len(m) for m in moduli_per_mode)
    acc = _Kahan(shape)
    acc2 = _Kahan(shape)
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: run_chunk(*b), bounds))
    else:
        parts = [run_chunk(*b) for b in bounds]
    # merge in chunk order regardless of completion order: results do not
    # depend on the worker count
    for s, s2 in parts:
        acc.add(s)
        acc2.add(s2)
    return acc.total, acc2.total


def _finalize(sums, sums2, n):
    value = sums / n
    # biased second-moment form of the per-record product variance
    var = np.maximum(sums2 / n - value * value, 0.0)
    sigma = np.sqrt(var)
    delta = sigma / math.sqrt(n)
    return value, sigma, delta


def estimate_pqc(data, pat, alphas, w):
    """Sampled quasiprobability at one phase-space point.

    value = mean over records of prod_k f(x_k, |alpha_k|; w); sigma is the
    per-record product standard deviation, delta = sigma/sqrt(N).
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    if len(alphas) != data.mode_count:
        raise ParameterError(
            f"dataset has {data.mode_count} modes, got {len(alphas)} amplitudes"
        )
    if abs(w - pat.w) > 1e-12:
        raise ParameterError(f"pattern table was built for w={pat.w}, not {w}")
    if data.n_records < 2:
        raise ParameterError("sigma is undefined for a single record")
    moduli = _check_coverage(data, pat, alphas)
    sums, sums2 = _accumulate(data, pat, [np.array([m]) for m in moduli])
    value, sigma, delta = _finalize(sums, sums2, data.n_records)
    v = float(value.ravel()[0])
    s = float(sigma.ravel()[0])
    d = float(delta.ravel()[0])
    conf = abs(v) / d if (v < 0.0 and d > 0.0) else None
    return EstimateWithError(
        value=v, sigma=s, delta=d, confidence=conf, n_records=data.n_records
    )


def estimate_grid(data, pat, axes, w, workers=1):
    """Vectorized estimate_pqc over a radial grid.

    Returns (QPGrid, errors) where errors maps 'sigma', 'delta' and
    'confidence' to grids of the same shape (confidence is NaN where
    undefined).
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    if len(axes) != data.mode_count:
        raise ParameterError("one radial axis per mode required")
    if abs(w - pat.w) > 1e-12:
        raise ParameterError(f"pattern table was built for w={pat.w}, not {w}")
    if data.n_records < 2:
        raise ParameterError("sigma is undefined for a single record")
    for a in axes:
        _check_coverage(data, pat, a.astype(complex))
    _check_coverage(data, pat, np.array([], dtype=complex))

    sums, sums2 = _accumulate(data, pat, axes, workers=workers)
    value, sigma, delta = _finalize(sums, sums2, data.n_records)
    with np.errstate(divide="ignore", invalid="ignore"):
        confidence = np.where(
            (value < 0.0) & (delta > 0.0), np.abs(value) / delta, np.nan
        )
    grid = QPGrid(
        mode_count=data.mode_count,
        ordering="filtered-p",
        axes_kind="radial",
        axes=axes,
        values=value,
        w=w,
        tolerance=0.0,
        provenance={
            "estimator": "pattern-sampling",
            "n_records": data.n_records,
            "kernel": kernels.IMPLEMENTATION,
        },
    )
    return grid, {"sigma": sigma, "delta": delta, "confidence": confidence}


def save_estimates_csv(path, axes, grid, errors):
    """Estimate table: alphaA,alphaB,value,sigma,delta,confidence,N."""
    n = grid.provenance.get("n_records", 0)
    mesh = np.meshgrid(*axes, indexing="ij")
    cols = ["alphaA", "alphaB"][: len(axes)] if len(axes) == 2 else ["alpha"]
    with open(path, "w") as fh:
        fh.write(",".join(cols + ["value", "sigma", "delta", "confidence", "N"]) + "\n")
        rows = zip(
            *[m.ravel() for m in mesh],
            grid.values.ravel(),
            errors["sigma"].ravel(),
            errors["delta"].ravel(),
            errors["confidence"].ravel(),
        )
        for row in rows:
            *head, conf = row
            conf_s = "" if np.isnan(conf) else f"{conf:.17g}"
            fh.write(
                ",".join(f"{v:.17g}" for v in head) + f",{conf_s},{n}\n"
            )


# ---------------------------------------------------------------------------
# Gaussian-model variance (optional path)


@dataclass
class GaussianQuadratureStats:
    """First and second moments of the quadrature data, biased (1/N) form."""

    mu: np.ndarray
    sigma_matrix: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma_matrix = np.asarray(self.sigma_matrix, dtype=float)
        s = self.sigma_matrix
        if s.shape != (len(self.mu), len(self.mu)):
            raise ParameterError("covariance shape does not match mean vector")
        scale = max(np.abs(s).max(), 1.0)
        if np.abs(s - s.T).max() > 1e-10 * scale:
            raise ParameterError("covariance matrix must be symmetric")
        ev = np.linalg.eigvalsh((s + s.T) / 2.0)
        if ev.min() < -1e-10 * max(abs(ev).max(), 1.0):
            raise ParameterError("covariance matrix must be PSD")


def compute_gaussian_stats(data):
    """Empirical mean vector and (1/N-normalized) covariance of the records."""
    if data.n_records < 2:
        raise ParameterError("need at least two records")
    mu = data.x.mean(axis=0)
    centered = data.x - mu
    sigma = (centered.T @ centered) / data.n_records
    sigma = (sigma + sigma.T) / 2.0
    return GaussianQuadratureStats(mu=mu, sigma_matrix=sigma)


def _gaussian_b_cut(table, w, p_matrix):
    """Truncation for the Gaussian-model integrals.

    Each axis carries at most exp((lambda_max_+(I-Sigma) + 1/2) b^2) of
    growth against the filter; diverges (error) when the filter cannot
    suppress that.
    """
    lam = np.linalg.eigvalsh(p_matrix).max()
    c_axis = max(lam, 0.0) + 0.5
    r = table.radii
    log_env = c_axis * (r * w) ** 2 + table._log_values
    k = int(np.argmax(log_env))
    below = np.nonzero(log_env[k:] < np.log(1e-14))[0]
    if len(below) == 0:
        raise FilterRangeError(
            "Gaussian statistics grow faster than the filter suppression "
            f"(largest eigenvalue of I-Sigma is {lam:.3f}); the model "
            "integrals diverge within the tabulated range"
        )
    return float(r[k + below[0]] * w)


def gaussian_cf_variance(stats, table, w, alphas, tol=1e-4):
    """Model variance of the per-record product under Gaussian statistics.

    Second moment minus squared first moment of f(x1)f(x2) for
    x ~ N(mu, Sigma), with the characteristic-function factors
    exp(b^2/2) E[e^{ibx}] assembled into exp(kT (I-Sigma) k / 2 + i kT mu).
    The cos-symmetrized estimator makes both moments sign-summed versions of
    the plain Fourier integrals.  Cost grows as nodes^4; intended for spot
    checks, not grids.
    """
    if len(stats.mu) != 2:
        raise ParameterError("Gaussian variance path is two-mode")
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    if len(alphas) != 2:
        raise ParameterError("need exactly two amplitudes")
    p_mat = np.eye(2) - stats.sigma_matrix
    bcut = _gaussian_b_cut(table, w, p_mat)
    mu = stats.mu

    prev = None
    for panels in (3, 5, 7, 10):
        b, wq = composite_nodes(0.0, bcut, panels, order=16)
        g = [
            wq * b * j0(2.0 * b * abs(alphas[k])) * table.values_at(b / w)
            for k in range(2)
        ]

        # first moment: (2/pi)^2 * (1/2) sum_s over sign of b'
        first = 0.0
        for s in (1.0, -1.0):
            k1 = b[:, None]
            k2 = s * b[None, :]
            expo = 0.5 * (
                p_mat[0, 0] * k1**2 + p_mat[1, 1] * k2**2
            ) + p_mat[0, 1] * k1 * k2
            first += 0.5 * np.einsum(
                "i,j,ij->", g[0], g[1], np.exp(expo) * np.cos(k1 * mu[0] + k2 * mu[1])
            )
        first *= (2.0 / np.pi) ** 2

        # second moment: sign-symmetrized four-fold integral
        second = 0.0
        for s2, s3, s4, mult in (
            (1, 1, 1, 1.0), (1, 1, -1, 2.0), (1, -1, -1, 1.0),
            (-1, 1, 1, 1.0), (-1, 1, -1, 2.0), (-1, -1, -1, 1.0),
        ):
            k1 = (b[:, None] + s2 * b[None, :]).ravel()
            cross1 = (-s2 * np.outer(b, b)).ravel()
            a1 = (
                np.outer(g[0], g[0]).ravel()
                * np.exp(0.5 * p_mat[0, 0] * k1**2 + cross1)
            )
            k2 = (s3 * b[:, None] + s4 * b[None, :]).ravel()
            cross2 = (-s3 * s4 * np.outer(b, b)).ravel()
            a2 = (
                np.outer(g[1], g[1]).ravel()
                * np.exp(0.5 * p_mat[1, 1] * k2**2 + cross2)
            )
            phase2 = k2 * mu[1]
            term = 0.0
            for lo in range(0, len(k2), 4096):
                hi = min(lo + 4096, len(k2))
                coupling = np.exp(np.outer(k1, p_mat[0, 1] * k2[lo:hi]))
                c_cos = coupling * np.cos(np.add.outer(k1 * mu[0], phase2[lo:hi]))
                term += a1 @ c_cos @ a2[lo:hi]
            second += mult * term
        second *= (2.0 / np.pi) ** 4 / 8.0

        variance = second - first * first
        if prev is not None and abs(variance - prev) < max(tol, 1e-6 * abs(variance)):
            return float(variance)
        prev = variance
    raise QuadratureError(
        f"Gaussian-model variance did not converge (last delta "
        f"{abs(variance - prev):.3e})"
    )
