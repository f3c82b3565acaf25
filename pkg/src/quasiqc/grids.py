"""Phase-space value grids, their measures, and negativity reports."""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError
from .quad import trapezoid_weights

ORDERINGS = ("filtered-p", "wigner")


@dataclass
class QPGrid:
    """Real-valued quasiprobability samples on a phase-space grid.

    Radial grids hold per-mode |alpha| axes (valid only for phase-invariant
    states) and values indexed as values[i1, ..., in].  Cartesian grids hold
    per-mode (re, im) axis pairs with values indexed mode-major as
    values[re1, im1, re2, im2, ...]; singleton axes mark slices.
    """

    mode_count: int
    ordering: str
    axes_kind: str
    axes: list
    values: np.ndarray
    w: Optional[float] = None
    tolerance: float = 0.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ordering not in ORDERINGS:
            raise ParameterError(f"unknown ordering {self.ordering!r}")
        if self.axes_kind not in ("radial", "cartesian"):
            raise ParameterError(f"unknown axes kind {self.axes_kind!r}")
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("grid contains non-finite values")
        if self.ordering == "filtered-p" and (self.w is None or self.w <= 0):
            raise ParameterError("filtered-p grids carry a positive width w")

    def axis_weights(self):
        """Per-axis quadrature weights implementing the grid measure.

        Radial axes carry 2*pi*|alpha| d|alpha| per mode; Cartesian axes
        carry plain trapezoid weights per real coordinate.  Singleton axes
        (slices) weigh 1 and contribute no measure.
        """
        weights = []
        if self.axes_kind == "radial":
            for a in self.axes:
                a = np.asarray(a, dtype=float)
                if len(a) == 1:
                    weights.append(np.ones(1))
                else:
                    weights.append(2.0 * np.pi * a * trapezoid_weights(a))
        else:
            for re_axis, im_axis in self.axes:
                for ax in (re_axis, im_axis):
                    ax = np.asarray(ax, dtype=float)
                    weights.append(
                        np.ones(1) if len(ax) == 1 else trapezoid_weights(ax)
                    )
        return weights

    def normalization(self):
        """Grid-quadrature of the values under the grid measure."""
        total = self.values
        for axis_w in reversed(self.axis_weights()):
            total = total @ axis_w
        return float(total)

    def is_slice(self):
        return any(len(np.atleast_1d(ax)) == 1 for ax in self._flat_axes())

    def _flat_axes(self):
        if self.axes_kind == "radial":
            return list(self.axes)
        return [ax for pair in self.axes for ax in pair]

    def save_csv(self, path):
        """Write the grid with a '# key=value, ...' metadata header."""
        meta = dict(self.provenance)
        meta.update(
            ordering=self.ordering,
            axes=self.axes_kind,
            modes=self.mode_count,
        )
        if self.w is not None:
            meta["w"] = self.w
        header = "# " + ", ".join(f"{k}={v}" for k, v in sorted(meta.items()))
        axes = self._flat_axes()
        if self.axes_kind == "radial":
            columns = (
                ["alpha"] if self.mode_count == 1 else ["alphaA", "alphaB"]
            )
        else:
            columns = ["reA", "imA", "reB", "imB"][: 2 * self.mode_count]
        lines = [header, ",".join(columns + ["value"])]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = [m.ravel() for m in mesh] + [self.values.ravel()]
        for row in zip(*flat):
            lines.append(",".join(f"{v:.17g}" for v in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass
class NegativityReport:
    min_value: float
    argmin: tuple
    negative_mass: float

    def to_dict(self):
        return {
            "min_value": self.min_value,
            "argmin": list(self.argmin),
            "negative_mass": self.negative_mass,
        }


def negativity_scan(grid):
    """Deterministic scan: minimum value, its grid coordinates, negative mass.

    Negative mass integrates min(values, 0) with the grid measure, so it is 0
    exactly when no grid value is negative.
    """
    idx = np.unravel_index(np.argmin(grid.values), grid.values.shape)
    axes = grid._flat_axes()
    argmin = tuple(float(np.atleast_1d(axes[d])[idx[d]]) for d in range(len(idx)))
    neg = np.minimum(grid.values, 0.0)
    for axis_w in reversed(grid.axis_weights()):
        neg = neg @ axis_w
    return NegativityReport(
        min_value=float(grid.values[idx]),
        argmin=argmin,
        negative_mass=float(neg),
    )


def save_negativity_json(report, grid, path):
    payload = report.to_dict()
    payload.update(
        ordering=grid.ordering,
        w=grid.w,
        axes_kind=grid.axes_kind,
        provenance=grid.provenance,
    )
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
