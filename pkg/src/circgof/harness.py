"""Simulation scenarios and the Monte Carlo driver for rejection tables.

Two regression functions are provided::

    d = 1:  m(x) = 2*atan(x) + c*asin(2x^5 - 1)
    d = 2:  m(x) = 2*atan(-x1 + x2) + c*asin(2*x1^3 - 1)

``c = 0`` lies in the null family ``beta0 + 2*atan(beta1 . x)``. Errors are
i.i.d. von Mises or one wrapped Gaussian field per sample.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .bootstrap import BootstrapScheme, calibrate, SPATIAL_SCHEMES
from .circular import VonMisesParams, sample_von_mises, wrap
from .dataset import Dataset
from .errors import CircGofError, DomainError, InvalidArgumentError
from .gof import TestConfig
from .spatial import ExponentialCovariance, SpatialFitConfig, SpatialModel, simulate_field

H_GRID_1D = tuple(round(0.15 + 0.10 * i, 2) for i in range(6))
H_GRID_2D = tuple(round(0.25 + 0.10 * i, 2) for i in range(7))
H_GRID_SPATIAL = tuple(round(0.25 + 0.15 * i, 2) for i in range(8))
MAX_FAILED_REPEATS = 0.05


def _check_unit(x, what):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)) or not np.all(np.isfinite(x)):
        raise DomainError(f"{what} must lie in [0, 1]")
    return x


def true_m_uni(x, c: float):
    """``wrap(2*atan(x) + c*asin(2x^5 - 1))`` for x in [0, 1]."""
    x = _check_unit(x, "x")
    return wrap(2.0 * np.arctan(x) + c * np.arcsin(2.0 * x**5 - 1.0))


def true_m_bi(x, c: float):
    """``wrap(2*atan(-x1 + x2) + c*asin(2*x1^3 - 1))``; ``x`` is a 2-vector or (m, 2) array."""
    x = np.asarray(x, dtype=float)
    x1, x2 = (x[0], x[1]) if x.ndim == 1 else (x[:, 0], x[:, 1])
    _check_unit(x1, "x1")
    return wrap(2.0 * np.arctan(-x1 + x2) + c * np.arcsin(2.0 * x1**3 - 1.0))


@dataclass
class Scenario:
    d: int = 1
    c: float = 0.0
    n: int = 100
    error: str = "vonmises"
    kappa: float = 10.0
    sigma2: float = 1.0
    a_e: float = 0.3
    design: str = "uniform"
    bandwidths: list = field(default_factory=lambda: list(H_GRID_1D))
    statistics: list = field(default_factory=lambda: ["T1", "T2"])
    degrees: list = field(default_factory=lambda: [0, 1])
    schemes: list = field(default_factory=lambda: ["PCB", "NPCB"])
    alpha: float = 0.05
    mc: int = 200
    B: int = 200
    seed: int = 0
    grid_resolution: int | None = None
    spatial_iterations: int = 5000
    spatial_burn_in: int = 1000

    def __post_init__(self):
        self.statistics = [s.upper() for s in self.statistics]
        self.schemes = [s.upper() for s in self.schemes]
        if self.d not in (1, 2):
            raise InvalidArgumentError("d must be 1 or 2")
        if self.error not in ("vonmises", "wrapped_gaussian"):
            raise InvalidArgumentError(f"unknown error model {self.error!r}")
        if self.design not in ("uniform", "grid"):
            raise InvalidArgumentError(f"unknown design {self.design!r}")
        if any(s in SPATIAL_SCHEMES for s in self.schemes) and self.error != "wrapped_gaussian":
            raise InvalidArgumentError("spatial schemes require wrapped Gaussian errors")
        if self.design == "grid":
            side = math.isqrt(self.n)
            if self.d == 2 and side * side != self.n:
                raise InvalidArgumentError("a regular 2D grid needs n to be a perfect square")
        if self.mc < 1 or self.B < 1:
            raise InvalidArgumentError("mc and B must be >= 1")

    @classmethod
    def from_dict(cls, obj: dict) -> "Scenario":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidArgumentError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)

    def true_m(self):
        f = true_m_uni if self.d == 1 else true_m_bi
        return lambda x: f(x, self.c)

    def spatial_config(self) -> SpatialFitConfig:
        return SpatialFitConfig(iterations=self.spatial_iterations, burn_in=self.spatial_burn_in)


def design_points(scn: Scenario, rng: np.random.Generator) -> np.ndarray:
    if scn.design == "grid":
        if scn.d == 1:
            return np.linspace(0.0, 1.0, scn.n)[:, None]
        g = np.linspace(0.0, 1.0, math.isqrt(scn.n))
        a, b = np.meshgrid(g, g, indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])
    return rng.uniform(0.0, 1.0, (scn.n, scn.d))


def generate_dataset(scn: Scenario, rng: np.random.Generator) -> Dataset:
    """One sample from the scenario: covariates, then ``wrap(m(X) + eps)``."""
    X = design_points(scn, rng)
    m = true_m_uni(X[:, 0], scn.c) if scn.d == 1 else true_m_bi(X, scn.c)
    if scn.error == "vonmises":
        eps = sample_von_mises(VonMisesParams(0.0, scn.kappa), scn.n, rng)
    else:
        model = SpatialModel(0.0, ExponentialCovariance(scn.sigma2, scn.a_e))
        eps = simulate_field(model, X, rng)
    return Dataset(X, wrap(m + eps))


def test_configs(scn: Scenario) -> list[TestConfig]:
    return [
        TestConfig.default(stat, p, h, scn.n, scn.d, resolution=scn.grid_resolution)
        for stat in scn.statistics
        for p in scn.degrees
        for h in scn.bandwidths
    ]


test_configs.__test__ = False


def _cells(scn: Scenario):
    return [(s, c.statistic, c.degree, c.h) for s in scn.schemes for c in test_configs(scn)]


def run_repeat(scn: Scenario, r: int) -> list[float]:
    """p-values of every cell for Monte Carlo repeat ``r`` (NaN where the cell failed)."""
    root = np.random.SeedSequence(scn.seed)
    rng = np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=(r,)))
    data = generate_dataset(scn, rng)
    configs = test_configs(scn)
    out = []
    spatial = scn.spatial_config()
    for k, kind in enumerate(scn.schemes):
        ss = np.random.SeedSequence(root.entropy, spawn_key=(r, k + 1))
        try:
            runs = calibrate(data, configs, BootstrapScheme(kind, scn.B), ss, spatial=spatial, strict=False)
            out.extend(run.p_value for run in runs)
        except CircGofError:
            out.extend([math.nan] * len(configs))
    return out


def _repeat_chunk(args):
    scn, repeats = args
    return [run_repeat(scn, r) for r in repeats]


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("CIRC_GOF_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise InvalidArgumentError("threads must be >= 1")
    return threads


@dataclass
class RejectionTable:
    """Rejection proportions keyed by (scheme, statistic, degree, h).

    ``pvalues`` holds the per-repeat log (MC rows, one column per cell), so
    every proportion can be recomputed from it.
    """

    scenario: Scenario
    cells: list
    pvalues: np.ndarray

    @property
    def mc(self) -> int:
        return self.pvalues.shape[0]

    def failed(self) -> np.ndarray:
        return np.isnan(self.pvalues).sum(axis=0)

    def valid(self) -> np.ndarray:
        return self.failed() <= MAX_FAILED_REPEATS * self.mc

    def proportions(self) -> np.ndarray:
        ok = ~np.isnan(self.pvalues)
        rej = (self.pvalues < self.scenario.alpha) & ok
        with np.errstate(invalid="ignore", divide="ignore"):
            prop = rej.sum(axis=0) / ok.sum(axis=0)
        return np.where(self.valid(), prop, np.nan)

    def std_errors(self) -> np.ndarray:
        p = self.proportions()
        m = (~np.isnan(self.pvalues)).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sqrt(p * (1.0 - p) / m)

    def proportion(self, scheme, statistic, degree, h) -> float:
        key = (scheme.upper(), statistic.upper(), degree, h)
        for j, cell in enumerate(self.cells):
            if cell[:3] == key[:3] and math.isclose(cell[3], h):
                return float(self.proportions()[j])
        raise KeyError(key)

    def rows(self):
        props, ses, fails = self.proportions(), self.std_errors(), self.failed()
        for j, (scheme, stat, degree, h) in enumerate(self.cells):
            yield {
                "scheme": scheme, "statistic": stat, "degree": degree, "h": h,
                "proportion": props[j], "se": ses[j], "failed": int(fails[j]),
            }

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["repeat"] + [f"{s}|{t}|p{p}|h{h}" for s, t, p, h in self.cells])
        for r, row in enumerate(self.pvalues):
            w.writerow([r] + ["nan" if math.isnan(v) else repr(float(v)) for v in row])
        return buf.getvalue()


def run_experiment(scn: Scenario, threads: int | None = None) -> RejectionTable:
    """Monte Carlo over ``scn.mc`` repeats; each repeat uses substream ``(seed, r)``."""
    threads = resolve_threads(threads)
    repeats = list(range(scn.mc))
    if threads <= 1 or scn.mc < 2:
        rows = [run_repeat(scn, r) for r in repeats]
    else:
        chunks = [list(map(int, c)) for c in np.array_split(repeats, min(threads, scn.mc)) if c.size]
        rows = []
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(_repeat_chunk, [(scn, c) for c in chunks]):
                rows.extend(part)
    return RejectionTable(scn, _cells(scn), np.asarray(rows, dtype=float))


# --- table presets -------------------------------------------------------

SCALES = {"desk": (200, 200), "full": (500, 500)}


@dataclass(frozen=True)
class TablePreset:
    number: int
    statistic: str
    d: int
    factor: str  # "n", "kappa" or "a_e"
    levels: tuple
    schemes: tuple
    bandwidths: tuple
    spatial: bool = False


def _presets() -> dict:
    out = {}
    specs = [
        # (first table, d, factor, levels, schemes, bandwidths, spatial)
        (1, 1, "n", (50, 100, 200), ("PCB", "NPCB"), H_GRID_1D, False),
        (3, 1, "kappa", (5, 10, 15), ("PCB", "NPCB"), H_GRID_1D, False),
        (5, 2, "n", (100, 225, 400), ("PCB", "NPCB"), H_GRID_2D, False),
        (7, 2, "kappa", (5, 10, 15), ("PCB", "NPCB"), H_GRID_2D, False),
        (9, 2, "n", (100, 225, 400), ("PCB", "NPCB"), H_GRID_SPATIAL, True),
        (11, 2, "a_e", (0.1, 0.3, 0.6), ("PCB", "NPCB"), H_GRID_SPATIAL, True),
        (13, 2, "n", (100, 225, 400), ("PSCB", "NPSCB"), H_GRID_SPATIAL, True),
        (15, 2, "a_e", (0.1, 0.3, 0.6), ("PSCB", "NPSCB"), H_GRID_SPATIAL, True),
    ]
    for first, d, factor, levels, schemes, bws, spatial in specs:
        for offset, stat in enumerate(("T1", "T2")):
            out[first + offset] = TablePreset(first + offset, stat, d, factor, levels, schemes, bws, spatial)
    return out


TABLES = _presets()

# sigma2 of the spatial error field; "captions" reproduces the value printed
# under the spatial tables instead of the one used in the text
SIGMA2_PRESETS = {"text": 1.0, "captions": 0.16}


def table_scenarios(number: int, scale: str = "desk", seed: int = 0, sigma2: str = "text",
                    mc: int | None = None, B: int | None = None) -> list[Scenario]:
    """One scenario per (c, factor level) of the given table."""
    if number not in TABLES:
        raise InvalidArgumentError(f"table must be in 1..16, got {number}")
    if scale not in SCALES:
        raise InvalidArgumentError(f"scale must be desk or full, got {scale!r}")
    t = TABLES[number]
    mc_, B_ = SCALES[scale]
    mc, B = mc or mc_, B or B_
    # non-factor defaults: 1D kappa tables use n=200, 2D ones n=400
    base_n = 200 if t.d == 1 else 400
    out = []
    for ci, c in enumerate((0.0, 1.0, 2.0)):
        for li, level in enumerate(t.levels):
            kw = dict(
                d=t.d, c=c, n=base_n, kappa=10.0, a_e=0.3, sigma2=SIGMA2_PRESETS[sigma2],
                error="wrapped_gaussian" if t.spatial else "vonmises",
                design="grid" if t.d == 2 else "uniform",
                bandwidths=list(t.bandwidths), statistics=[t.statistic], degrees=[0, 1],
                schemes=list(t.schemes), mc=mc, B=B, seed=seed * 1_000_003 + number * 100 + ci * 10 + li,
            )
            kw["kappa" if t.factor == "kappa" else t.factor] = level
            out.append(Scenario(**kw))
    return out


def table_header(number: int) -> list[str]:
    t = TABLES[number]
    factor = {"n": "n", "kappa": "kappa", "a_e": "a_e"}[t.factor]
    return ["Estimator", "c", factor, "Method"] + [f"h={h:g}" for h in t.bandwidths]


def reproduce_table(number: int, scale: str = "desk", seed: int = 0, threads: int | None = None,
                    sigma2: str = "text", mc: int | None = None, B: int | None = None):
    """Run every scenario of a table; return (header, rows, tables)."""
    t = TABLES[number]
    header = table_header(number)
    scenarios = table_scenarios(number, scale, seed, sigma2, mc, B)
    results = [run_experiment(s, threads) for s in scenarios]
    rows = []
    for degree, name in ((0, "Nadaraya-Watson"), (1, "Local linear")):
        for scn, tab in zip(scenarios, results):
            level = {"n": scn.n, "kappa": scn.kappa, "a_e": scn.a_e}[t.factor]
            for scheme in t.schemes:
                props = [tab.proportion(scheme, t.statistic, degree, h) for h in t.bandwidths]
                rows.append([name, f"{scn.c:g}", f"{level:g}", scheme] + [f"{p:.3f}" for p in props])
    return header, rows, results


def scenario_json(scn: Scenario) -> str:
    return json.dumps(scn.to_dict(), sort_keys=True)
