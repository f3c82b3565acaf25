"""Command-line front end.

Subcommands: filter-table, pqc, simulate, estimate, bochner.  Every run
writes a JSON manifest echoing the merged effective parameters and input
checksums, so outputs are reproducible from the manifest alone.  Parameter
precedence: command-line flags > config file (--config, TOML or JSON) >
built-in defaults.

Exit codes: 0 success, 2 usage/parameter error, 3 data or schema error,
4 numerical failure.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .bochner import search_violation
from .errors import (
    FilterRangeError,
    ParameterError,
    QuadratureError,
    ResourceGuardError,
    SchemaError,
    TableInvariantError,
)
from .filters import (
    CACHE_ENV_VAR,
    _cache_filename,
    build_filter_table,
    default_cache_dir,
)
from .grids import negativity_scan, save_negativity_json
from .quasiprob import pqc_grid, wigner_grid
from .sampling import (
    build_pattern_table,
    estimate_grid,
    load_dataset,
    save_dataset,
    save_estimates_csv,
)
from .states import PhaseRandomizedTMSV, char_fn_prtmsv, sample_quadratures, thermal_cf

_DEFAULTS = {
    "filter-table": {"r_max": 8.0, "step": 0.005, "tol": 1e-10},
    "pqc": {"p": 0.8, "w": 1.5, "grid": "0:3:0.05", "wigner": False, "tol": 1e-9},
    "simulate": {"p": 0.8, "n": 10**6, "seed": 42},
    "estimate": {"w": 1.5, "grid": None, "points": None, "tol": 1e-9},
    "bochner": {
        "p": 0.8,
        "w": 1.5,
        "budget": 10000,
        "seed": 0,
        "state": "prtmsv",
        "strategy": "grid-seeded",
    },
}


def _parse_grid(spec):
    try:
        lo, hi, step = (float(tok) for tok in spec.split(":"))
    except ValueError:
        raise ParameterError(f"grid spec must be lo:hi:step, got {spec!r}")
    if step <= 0 or hi <= lo:
        raise ParameterError(f"bad grid spec {spec!r}")
    return np.arange(lo, hi + step / 2.0, step)


def _parse_points(spec):
    points = []
    for tok in spec.split(";"):
        parts = tok.split(",")
        if len(parts) != 2:
            raise ParameterError(f"point {tok!r} must be alphaA,alphaB")
        points.append((float(parts[0]), float(parts[1])))
    if not points:
        raise ParameterError("no points given")
    return points


def _checksum(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _load_config(path):
    if path is None:
        return {}
    if path.endswith(".toml"):
        import tomllib

        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def _merge_params(command, args, config):
    merged = dict(_DEFAULTS[command])
    merged.update(config.get(command.replace("-", "_"), {}))
    merged.update(config.get(command, {}))
    for key, val in vars(args).items():
        if key in merged and val is not None:
            merged[key] = val
    return merged


def _write_manifest(path, command, params, inputs, outputs, metrics=None):
    manifest = {
        "tool": f"quasiqc {__version__}",
        "command": command,
        "parameters": params,
        "input_checksums": {p: _checksum(p) for p in inputs},
        "outputs": outputs,
    }
    if metrics:
        manifest["metrics"] = metrics
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _validate_p(p):
    if not 0.0 < p < 1.0:
        raise ParameterError(f"p must lie in (0, 1), got {p}")


def cmd_filter_table(args, config):
    params = _merge_params("filter-table", args, config)
    cache_dir = args.cache_dir or default_cache_dir()
    path = os.path.join(
        cache_dir, _cache_filename(params["r_max"], params["step"], params["tol"])
    )
    hit = os.path.exists(path)
    table = build_filter_table(
        params["r_max"], params["step"], params["tol"], cache_dir=cache_dir
    )
    status = "cache hit" if hit else "built"
    print(
        f"{status}: {path}\n"
        f"Omega(0) = {table.values[0]:.12f}, r_max = {table.r_max}, "
        f"entries = {len(table.values)}\n"
        f"checksum = {table.provenance['checksum']}"
    )
    _write_manifest(
        path + ".manifest.json", "filter-table", params, [path], [path],
        metrics={"omega_at_0": table.values[0]},
    )
    return 0


def cmd_pqc(args, config):
    params = _merge_params("pqc", args, config)
    _validate_p(params["p"])
    axis = _parse_grid(params["grid"])
    cache_dir = args.cache_dir or default_cache_dir()
    state = PhaseRandomizedTMSV(params["p"])
    cf = char_fn_prtmsv(state)
    out = args.out
    if params["wigner"]:
        grid = wigner_grid(cf, [axis, axis], tol=params["tol"])
    else:
        table = build_filter_table(cache_dir=cache_dir)
        grid = pqc_grid(cf, table, params["w"], [axis, axis], tol=params["tol"])
    grid.provenance["p"] = params["p"]
    report = negativity_scan(grid)
    grid.save_csv(out + ".csv")
    save_negativity_json(report, grid, out + ".negativity.json")
    _write_manifest(
        out + ".manifest.json", "pqc", params, [], [out + ".csv"],
        metrics={"min_value": report.min_value, "argmin": list(report.argmin)},
    )
    print(
        f"{grid.ordering} grid {grid.values.shape}: min = {report.min_value:.6g} "
        f"at {report.argmin}, negative mass = {report.negative_mass:.4g}"
    )
    return 0


def cmd_simulate(args, config):
    params = _merge_params("simulate", args, config)
    _validate_p(params["p"])
    if params["n"] < 1:
        raise ParameterError("--n must be >= 1")
    state = PhaseRandomizedTMSV(params["p"])
    data = sample_quadratures(state, params["n"], params["seed"])
    save_dataset(data, args.out)
    metrics = {
        "mean_xA": float(data.x[:, 0].mean()),
        "var_xA": float(data.x[:, 0].var()),
        "var_xB": float(data.x[:, 1].var()),
        "expected_var": 1.0 + 2.0 * state.nbar,
    }
    _write_manifest(
        args.out + ".manifest.json", "simulate", params, [args.out], [args.out],
        metrics=metrics,
    )
    print(
        f"wrote {params['n']} records to {args.out} "
        f"(var xA = {metrics['var_xA']:.4f}, expected {metrics['expected_var']:.1f})"
    )
    return 0


def cmd_estimate(args, config):
    params = _merge_params("estimate", args, config)
    if params["grid"] is None and params["points"] is None:
        raise ParameterError("need --grid or --points")
    data = load_dataset(args.data)
    if data.mode_count != 2:
        raise SchemaError(
            f"{args.data}: estimate expects 2-mode data, found {data.mode_count}"
        )
    if params["grid"] is not None:
        axis = _parse_grid(params["grid"])
        axes = [axis, axis]
    else:
        pts = _parse_points(params["points"])
        axes = None
    cache_dir = args.cache_dir or default_cache_dir()
    table = build_filter_table(cache_dir=cache_dir)
    alpha_peak = (
        float(np.max(axes[0])) if axes is not None
        else max(max(a, b) for a, b in pts)
    )
    pat = build_pattern_table(
        table,
        params["w"],
        alpha_range=(0.0, max(3.0, np.ceil(alpha_peak * 50.0) / 50.0)),
        tol=params["tol"],
        cache_dir=cache_dir,
    )
    out = args.out
    outputs = []
    if axes is not None:
        grid, errors = estimate_grid(
            data, pat, axes, params["w"], workers=args.workers or 1
        )
        save_estimates_csv(out + ".csv", axes, grid, errors)
        outputs.append(out + ".csv")
        idx = np.unravel_index(np.argmin(grid.values), grid.values.shape)
        summary = {
            "min_value": float(grid.values[idx]),
            "argmin": [float(axes[0][idx[0]]), float(axes[1][idx[1]])],
            "delta_at_min": float(errors["delta"][idx]),
            "confidence_at_min": (
                None
                if np.isnan(errors["confidence"][idx])
                else float(errors["confidence"][idx])
            ),
            "n_records": data.n_records,
        }
    else:
        from .sampling import estimate_pqc

        rows = []
        for a, b in pts:
            est = estimate_pqc(data, pat, [a, b], params["w"])
            rows.append(
                {
                    "alphaA": a,
                    "alphaB": b,
                    "value": est.value,
                    "sigma": est.sigma,
                    "delta": est.delta,
            "confidence": est.confidence,
                }
            )
        best = min(rows, key=lambda r: r["value"])
        summary = {"points": rows, "min_value": best["value"],
                   "confidence_at_min": best["confidence"],
                   "n_records": data.n_records}
    with open(out + ".summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(out + ".summary.json")
    _write_manifest(
        out + ".manifest.json", "estimate", params, [args.data], outputs,
        metrics={"min_value": summary["min_value"]},
    )
    print(
        f"estimate minimum {summary['min_value']:.6g} "
        f"(confidence {summary.get('confidence_at_min')})"
    )
    return 0


def cmd_bochner(args, config):
    params = _merge_params("bochner", args, config)
    _validate_p(params["p"])
    if params["budget"] < 1:
        raise ParameterError("--budget must be >= 1")
    cache_dir = args.cache_dir or default_cache_dir()
    table = build_filter_table(cache_dir=cache_dir)
    state = PhaseRandomizedTMSV(params["p"])
    if params["state"] == "prtmsv":
        cf = char_fn_prtmsv(state)
    elif params["state"] == "thermal":
        cf = thermal_cf(state.nbar, mode_count=2)
    else:
        raise ParameterError(f"unknown state {params['state']!r}")
    result = search_violation(
        cf,
        table,
        params["w"],
        strategy=params["strategy"],
        budget=params["budget"],
        seed=params["seed"],
    )
    if args.out:
        result.save_json(args.out)
        _write_manifest(
            args.out + ".manifest.json", "bochner", params, [], [args.out],
            metrics={"found": result.found,
                     "min_eig": result.min_eigenvalue_normalized},
        )
    verdict = (
        f"violation found (normalized min eigenvalue "
        f"{result.min_eigenvalue_normalized:.4g})"
        if result.found
        else "none found"
    )
    print(f"{verdict} after {result.evaluations} evaluations")
    return 0


def _render(prefix):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise ParameterError("--render requires matplotlib (pip install quasiqc[plot])")
    data = np.genfromtxt(prefix + ".csv", delimiter=",", names=True, comments="#")
    a = np.unique(data["alphaA"])
    b = np.unique(data["alphaB"])
    vals = data["value"].reshape(len(a), len(b))
    fig, ax = plt.subplots(figsize=(5, 4))
    lim = np.abs(vals).max()
    im = ax.pcolormesh(a, b, vals.T, cmap="RdBu_r", vmin=-lim, vmax=lim)
    ax.set_xlabel("|alpha_A|")
    ax.set_ylabel("|alpha_B|")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(prefix + ".png", dpi=150)
    print(f"wrote {prefix}.png")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="quasiqc",
        description="Quasiprobability computation, sampling and positivity tests",
    )
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument(
        "--cache-dir",
        help=f"table cache directory (default ${CACHE_ENV_VAR} or ~/.cache/quasiqc)",
    )
    parser.add_argument("--workers", type=int, help="worker threads for estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter-table", help="build or refresh the filter table cache")
    p.add_argument("--r-max", dest="r_max", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("pqc", help="quasiprobability or Wigner grid for the test state")
    p.add_argument("--p", type=float)
    p.add_argument("--w", type=float)
    p.add_argument("--grid", help="radial axis as lo:hi:step")
    p.add_argument("--wigner", action="store_true", default=None)
    p.add_argument("--tol", type=float)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--render", action="store_true")

    p = sub.add_parser("simulate", help="simulate homodyne quadrature records")
    p.add_argument("--p", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="sample quasiprobabilities from records")
    p.add_argument("--data", required=True)
    p.add_argument("--w", type=float)
    p.add_argument("--grid", help="radial axis as lo:hi:step")
    p.add_argument("--points", help="semicolon-separated alphaA,alphaB pairs")
    p.add_argument("--tol", type=float)
    p.add_argument("--out", required=True, help="output prefix")

    p = sub.add_parser("bochner", help="search for a Bochner positivity violation")
    p.add_argument("--p", type=float)
    p.add_argument("--w", type=float)
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--state", choices=["prtmsv", "thermal"])
    p.add_argument("--strategy", choices=["grid-seeded", "random-restart"])
    p.add_argument("--out")
    return parser


_HANDLERS = {
    "filter-table": cmd_filter_table,
    "pqc": cmd_pqc,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "bochner": cmd_bochner,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.cache_dir:
        os.environ[CACHE_ENV_VAR] = args.cache_dir
    try:
        config = _load_config(args.config)
        code = _HANDLERS[args.command](args, config)
        if args.command == "pqc" and getattr(args, "render", False):
            _render(args.out)
        return code
    except (ParameterError, ResourceGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (QuadratureError, FilterRangeError, TableInvariantError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
