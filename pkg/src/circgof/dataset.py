"""Regression samples, evaluation grids, boundary weights and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circular import wrap
from .errors import InvalidArgumentError, ParseError

DEFAULT_GRID_1D = 201
DEFAULT_GRID_2D = 51


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` covariate rows in R^d paired with ``n`` angles."""

    covariates: np.ndarray
    responses: np.ndarray
    columns: tuple[str, ...] = field(default=())

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        theta = np.asarray(self.responses, dtype=float).ravel()
        if x.ndim != 2 or x.shape[0] != theta.size:
            raise InvalidArgumentError(
                f"covariates have {x.shape[0]} rows but responses have {theta.size}"
            )
        if theta.size < 1:
            raise InvalidArgumentError("dataset must contain at least one observation")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(theta))):
            raise InvalidArgumentError("dataset entries must be finite")
        x = x.copy()
        theta = np.atleast_1d(wrap(theta)).copy()
        x.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "responses", theta)
        if not self.columns:
            cols = tuple(f"x{j + 1}" for j in range(x.shape[1])) + ("theta",)
            object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return self.responses.size

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def with_responses(self, responses) -> "Dataset":
        return Dataset(self.covariates, responses, self.columns)


@dataclass(frozen=True, eq=False)
class EvalGrid:
    """Regular midpoint grid; ``cell_measure`` is the volume of one cell."""

    points: np.ndarray
    cell_measure: float
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    resolution: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class BoundaryWeight:
    """Indicator of the closed box ``[lower, upper]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not all(a < b for a, b in zip(lo, hi)):
            raise InvalidArgumentError("boundary weight requires lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def for_sample_size(cls, n: int, d: int) -> "BoundaryWeight":
        """The simulation weight: indicator of ``[1/sqrt(n), 1 - 1/sqrt(n)]^d``."""
        t = 1.0 / math.sqrt(n)
        return cls((t,) * d, (1.0 - t,) * d)

    def __call__(self, x) -> np.ndarray:
        return boundary_weight(self, x)


def boundary_weight(w: BoundaryWeight, x):
    """1 when ``x`` lies in the closed box, else 0.

    ``x`` may be a single d-vector or an (m, d) array of points.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim <= 1
    pts = np.atleast_2d(pts.reshape(1, -1) if single else pts)
    lo, hi = np.asarray(w.lower), np.asarray(w.upper)
    inside = np.all((pts >= lo) & (pts <= hi), axis=1).astype(int)
    return int(inside[0]) if single else inside


def make_grid(lower, upper, resolution) -> EvalGrid:
    """Midpoint grid on the box ``[lower, upper]`` with ``resolution`` cells per axis."""
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    res = np.atleast_1d(np.asarray(resolution, dtype=int))
    if res.size == 1 and lo.size > 1:
        res = np.repeat(res, lo.size)
    if not (lo.size == hi.size == res.size):
        raise InvalidArgumentError("lower, upper and resolution must have equal length")
    if np.any(res < 2):
        raise InvalidArgumentError("grid resolution must be >= 2 per axis")
    if np.any(hi <= lo):
        raise InvalidArgumentError("grid box requires lower < upper")
    axes = []
    for a, b, k in zip(lo, hi, res):
        step = (b - a) / k
        axes.append(a + step * (np.arange(k) + 0.5))
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])
    cell = float(np.prod((hi - lo) / res))
    return EvalGrid(points, cell, tuple(lo), tuple(hi), tuple(int(r) for r in res))


def default_resolution(d: int) -> int:
    return DEFAULT_GRID_1D if d == 1 else DEFAULT_GRID_2D


def load_csv(path, angle_unit: str = "radians") -> Dataset:
    """Read ``x1[,x2],theta`` rows into a Dataset.

    The last column is the response; angles in degrees are converted when
    ``angle_unit='degrees'``. Errors name the offending line.
    """
    if angle_unit not in ("radians", "degrees"):
        raise InvalidArgumentError(f"unknown angle unit {angle_unit!r}")
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"no such file: {path}")
    rows = []
    header = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            row = next(csv.reader([line]))
            if header is None:
                header = [h.strip() for h in row]
                if len(header) < 2:
                    raise ParseError(
                        "header needs covariate column(s) and a response column", line=lineno
                    )
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise ParseError(f"non-numeric value {bad.strip()!r}", line=lineno) from None
    if header is None:
        raise ParseError("empty file", line=1)
    if not rows:
        raise ParseError("no data rows", line=2)
    arr = np.asarray(rows)
    if not np.all(np.isfinite(arr)):
        raise ParseError("non-finite value in data")
    theta = arr[:, -1]
    if angle_unit == "degrees":
        theta = np.deg2rad(theta)
    return Dataset(arr[:, :-1], theta, tuple(header))


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def save_csv(data: Dataset, path, header_lines=()) -> None:
    """Write a Dataset with full float precision (``repr`` round-trips)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(data.columns)
        for xi, ti in zip(data.covariates, data.responses):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(ti))])
