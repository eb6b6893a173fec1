"""Goodness-of-fit statistics comparing parametric and nonparametric fits.

``T1`` integrates the circular distance between the nonparametric estimate
and the parametric fit; ``T2`` replaces the parametric fit by its smoothed
version (same kernel, bandwidth and degree). Integrals over the weighted
region are midpoint Riemann sums on a regular grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import BoundaryWeight, Dataset, EvalGrid, boundary_weight, default_resolution, make_grid
from .errors import InvalidArgumentError, UnreliableStatisticError
from .nonparam import BandwidthSpec, LocalSmoother
from .param_fit import ParametricModel, predict

STATISTICS = ("T1", "T2")
MAX_EXCLUDED_FRACTION = 0.10


@dataclass(frozen=True, eq=False)
class TestConfig:
    statistic: str
    degree: int
    h: float
    grid: EvalGrid
    weight: BoundaryWeight

    __test__ = False  # not a pytest class

    def __post_init__(self):
        stat = self.statistic.upper()
        if stat not in STATISTICS:
            raise InvalidArgumentError(f"statistic must be T1 or T2, got {self.statistic!r}")
        object.__setattr__(self, "statistic", stat)
        BandwidthSpec(self.h, self.degree)  # validates h and degree

    @property
    def bandwidth(self) -> BandwidthSpec:
        return BandwidthSpec(self.h, self.degree)

    @classmethod
    def default(cls, statistic, degree, h, n, d, domain=None, resolution=None) -> "TestConfig":
        """Config with the ``1/sqrt(n)`` boundary weight on ``domain`` (unit box by default).

        The integration grid covers the support of the weight, so every grid
        point carries weight one.
        """
        lo, hi = _domain(domain, d)
        t = 1.0 / math.sqrt(n)
        weight = BoundaryWeight(tuple(lo + t * (hi - lo)), tuple(hi - t * (hi - lo)))
        grid = make_grid(weight.lower, weight.upper, resolution or default_resolution(d))
        return cls(statistic, degree, h, grid, weight)

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "degree": self.degree,
            "h": self.h,
            "grid": {
                "lower": list(self.grid.lower),
                "upper": list(self.grid.upper),
                "resolution": list(self.grid.resolution),
                "cell_measure": self.grid.cell_measure,
            },
            "weight": {"lower": list(self.weight.lower), "upper": list(self.weight.upper)},
        }


def _domain(domain, d):
    if domain is None:
        return np.zeros(d), np.ones(d)
    lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in domain)
    if lo.size == 1 and d > 1:
        lo, hi = np.repeat(lo, d), np.repeat(hi, d)
    return lo, hi


@dataclass
class TestResult:
    observed: float
    boot: np.ndarray
    p_value: float
    excluded_points: int = 0
    config: dict = field(default_factory=dict)

    __test__ = False


class StatisticEngine:
    """Evaluates T1 and T2 for one (covariates, bandwidth, degree, grid, weight).

    The smoother weights depend only on the covariates, so one engine serves
    the observed sample and every bootstrap resample at the same design.
    """

    def __init__(self, X, degree: int, h: float, grid: EvalGrid, weight: BoundaryWeight):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        self.X = X
        w = boundary_weight(weight, grid.points).astype(float)
        keep = w > 0
        self.points = grid.points[keep]
        self.quad = w[keep] * grid.cell_measure
        self.n_weighted = int(keep.sum())
        self.smoother = LocalSmoother(X, self.points, BandwidthSpec(h, degree))

    @classmethod
    def from_config(cls, X, cfg: TestConfig) -> "StatisticEngine":
        return cls(X, cfg.degree, cfg.h, cfg.grid, cfg.weight)

    def nonparametric(self, theta):
        return self.smoother.fit_angles(theta)

    def evaluate(self, theta, model: ParametricModel, statistics=STATISTICS, nonparam=None):
        """Return ``{name: (value, excluded_count)}`` for the requested statistics."""
        _, _, m_np, ok_np = nonparam if nonparam is not None else self.nonparametric(theta)
        out = {}
        for stat in statistics:
            if stat == "T1":
                ref = predict(model, self.points)
                ok = ok_np
            else:
                fitted = predict(model, self.X)
                _, _, ref, ok_sp = self.smoother.fit_angles(fitted)
                ok = ok_np & ok_sp
            excluded = self.n_weighted - int(ok.sum())
            if excluded > MAX_EXCLUDED_FRACTION * self.n_weighted:
                raise UnreliableStatisticError(
                    f"{excluded} of {self.n_weighted} weighted grid points excluded "
                    f"(h={self.smoother.bw.h})"
                )
            val = float(np.sum((1.0 - np.cos(m_np[ok] - ref[ok])) * self.quad[ok]))
            out[stat] = (val, excluded)
        return out


def _statistic(data, model, cfg, name):
    if cfg.statistic != name:
        raise InvalidArgumentError(f"config requests {cfg.statistic}, not {name}")
    engine = StatisticEngine.from_config(data.covariates, cfg)
    return engine.evaluate(data.responses, model, (name,))[name]


def statistic_t1(data: Dataset, model: ParametricModel, cfg: TestConfig) -> float:
    """Weighted integrated circular distance between nonparametric and parametric fits."""
    return _statistic(data, model, cfg, "T1")[0]


def statistic_t2(data: Dataset, model: ParametricModel, cfg: TestConfig) -> float:
    """As :func:`statistic_t1` but against the smoothed parametric fit."""
    return _statistic(data, model, cfg, "T2")[0]


def statistic(data: Dataset, model: ParametricModel, cfg: TestConfig) -> tuple[float, int]:
    """Value and excluded-point count of the statistic named in ``cfg``."""
    return _statistic(data, model, cfg, cfg.statistic)
