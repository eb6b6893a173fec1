"""Residual bootstrap calibration of the goodness-of-fit statistics.

Four schemes are supported. PCB and NPCB resample residuals i.i.d. with
replacement; PSCB and NPSCB fit a wrapped Gaussian spatial process to the
residuals once and simulate fresh error fields from its posterior-mean
parameters. The "P"/"NP" prefix says whether residuals come from the
parametric or the nonparametric fit. In every scheme a bootstrap sample is
built around the null parametric fit, ``theta* = m_beta_hat(X) + eps*``,
and the parametric model is refitted on each sample.

Every replicate draws from its own substream
``SeedSequence(entropy, spawn_key=(..., 1, i))``, so results do not depend
on how replicates are distributed over workers.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circular import mean_direction, wrap
from .dataset import Dataset
from .errors import BootstrapFailure, CircGofError, DegenerateDirectionError, InvalidArgumentError
from .gof import StatisticEngine, TestConfig
from .nonparam import BandwidthSpec, LocalSmoother
from .param_fit import FitConfig, fit_circular_ls, predict
from .spatial import FieldSampler, PosteriorSummary, SpatialFitConfig, mh_fit

logger = logging.getLogger(__name__)

SCHEMES = ("PCB", "NPCB", "PSCB", "NPSCB")
IID_SCHEMES = ("PCB", "NPCB")
SPATIAL_SCHEMES = ("PSCB", "NPSCB")
MAX_FAILED_FRACTION = 0.05


@dataclass(frozen=True)
class BootstrapScheme:
    kind: str
    B: int
    recenter_residuals: bool = False
    nonparam_bw_for_residuals: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in SCHEMES:
            raise InvalidArgumentError(f"unknown bootstrap scheme {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if int(self.B) < 1:
            raise InvalidArgumentError("B must be >= 1")
        h = self.nonparam_bw_for_residuals
        if h is not None and not h > 0:
            raise InvalidArgumentError("residual bandwidth must be positive")

    @property
    def spatial(self) -> bool:
        return self.kind in SPATIAL_SCHEMES

    @property
    def parametric_residuals(self) -> bool:
        return self.kind in ("PCB", "PSCB")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "B": self.B,
            "recenter_residuals": self.recenter_residuals,
            "nonparam_bw_for_residuals": self.nonparam_bw_for_residuals,
        }


@dataclass
class BootstrapRun:
    observed: float
    replicates: np.ndarray
    p_value: float
    residual_source: str
    scheme: BootstrapScheme
    config: TestConfig
    posterior: PosteriorSummary | None = None
    failed: int = 0
    excluded_points: int = 0
    warnings: list = field(default_factory=list)

    @property
    def B(self) -> int:
        return self.replicates.size

    def to_dict(self) -> dict:
        out = {
            "observed": self.observed,
            "p_value": self.p_value,
            "B": self.B,
            "replicates": [None if math.isnan(v) else float(v) for v in self.replicates],
            "failed_replicates": self.failed,
            "excluded_points": self.excluded_points,
            "residual_source": self.residual_source,
            "scheme": self.scheme.to_dict(),
            "config": self.config.to_dict(),
            "warnings": list(self.warnings),
        }
        if self.posterior is not None:
            post = self.posterior
            out["posterior"] = {"mu": post.mu_mean, "sigma2": post.sigma2_mean, "a_e": post.a_e_mean}
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def residuals(data: Dataset, fitted) -> np.ndarray:
    """``wrap(theta_i - fitted_i)``."""
    fitted = np.atleast_1d(np.asarray(fitted, dtype=float))
    if fitted.size != data.n:
        raise InvalidArgumentError(f"fitted has {fitted.size} values for {data.n} observations")
    return np.atleast_1d(wrap(data.responses - fitted))


def bootstrap_p_value(observed: float, boot) -> float:
    """Share of bootstrap statistics strictly above ``observed``.

    Failed replicates (NaN) are dropped from both numerator and denominator.
    """
    boot = np.asarray(boot, dtype=float)
    ok = boot[~np.isnan(boot)]
    if ok.size == 0:
        raise BootstrapFailure("no successful bootstrap replicates")
    return int(np.count_nonzero(ok > observed)) / ok.size


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, a SeedSequence or a Generator (one integer is drawn from it)."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    if seed is None:
        raise InvalidArgumentError("a seed is required for reproducible bootstrap runs")
    return np.random.SeedSequence(int(seed))


def substream(ss: np.random.SeedSequence, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + key))


def _nonparametric_fitted(data: Dataset, h: float, degree: int) -> np.ndarray:
    sm = LocalSmoother(data.covariates, data.covariates, BandwidthSpec(h, degree))
    _, _, m, valid = sm.fit_angles(data.responses)
    if not valid.all():
        raise BootstrapFailure(
            f"nonparametric fit undefined at {int((~valid).sum())} design points (h={h}, p={degree})"
        )
    return m


def _recenter(eps):
    try:
        return np.atleast_1d(wrap(eps - mean_direction(eps)))
    except DegenerateDirectionError:
        return eps


@dataclass
class _Group:
    """Configs sharing one residual source, hence one set of bootstrap samples."""

    residuals: np.ndarray
    members: list  # indices into the config list
    source: str
    posterior: PosteriorSummary | None = None
    sampler: FieldSampler | None = None


def _engine_key(cfg: TestConfig):
    return (cfg.degree, cfg.h, id(cfg.grid), cfg.weight)


def _replicate(ctx, group: _Group, i: int) -> list[float]:
    """Statistics of all configs in ``group`` for replicate ``i`` (NaN on failure)."""
    data, fitted, configs, engines, engine_of, fit_cfg, ss = ctx
    rng = substream(ss, 1, i)
    if group.sampler is not None:
        eps = group.sampler.draw(rng)
    else:
        eps = group.residuals[rng.integers(0, data.n, data.n)]
    theta = np.atleast_1d(wrap(fitted + eps))
    out = [math.nan] * len(group.members)
    try:
        model = fit_circular_ls(data.with_responses(theta), fit_cfg).model
    except CircGofError:
        return out
    cache = {}
    for slot, j in enumerate(group.members):
        cfg = configs[j]
        key = engine_of[j]
        eng = engines[key]
        try:
            if key not in cache:
                cache[key] = eng.nonparametric(theta)
            out[slot] = eng.evaluate(theta, model, (cfg.statistic,), cache[key])[cfg.statistic][0]
        except CircGofError:
            pass
    return out


def _run_chunk(args):
    ctx, group, indices = args
    return [_replicate(ctx, group, i) for i in indices]


def _run_group(ctx, group: _Group, B: int, threads: int) -> np.ndarray:
    if threads <= 1 or B < 2:
        rows = [_replicate(ctx, group, i) for i in range(B)]
    else:
        chunks = [list(c) for c in np.array_split(np.arange(B), min(threads, B)) if c.size]
        rows = []
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(_run_chunk, [(ctx, group, [int(i) for i in c]) for c in chunks]):
                rows.extend(part)
    return np.asarray(rows, dtype=float).reshape(B, len(group.members))


def calibrate(
    data: Dataset,
    configs: Sequence[TestConfig],
    scheme: BootstrapScheme,
    seed,
    *,
    fit_config: FitConfig | None = None,
    spatial: SpatialFitConfig | None = None,
    posterior: PosteriorSummary | None = None,
    threads: int = 1,
    strict: bool = True,
) -> list[BootstrapRun]:
    """Calibrate several test configurations on one dataset.

    Configurations that share a residual source share bootstrap samples, so
    each sample is refitted once and evaluated under every statistic,
    degree and bandwidth that uses it. For PSCB a precomputed ``posterior``
    may be supplied to skip the MCMC fit.

    With ``strict`` a run with more than 5% failed replicates raises
    :class:`BootstrapFailure`; otherwise its p-value is NaN.
    """
    configs = list(configs)
    if not configs:
        raise InvalidArgumentError("no test configurations")
    if scheme.spatial and spatial is None and posterior is None:
        raise InvalidArgumentError(f"{scheme.kind} requires a spatial fit configuration")
    ss = as_seed_sequence(seed)
    fit_config = fit_config or FitConfig()

    model = fit_circular_ls(data, fit_config).model
    fitted = np.atleast_1d(predict(model, data.covariates))

    engines, engine_of, slots = [], [], {}
    for cfg in configs:
        key = _engine_key(cfg)
        if key not in slots:
            slots[key] = len(engines)
            engines.append(StatisticEngine.from_config(data.covariates, cfg))
        engine_of.append(slots[key])
    observed = []
    cache = {}
    for j, cfg in enumerate(configs):
        key = engine_of[j]
        if key not in cache:
            cache[key] = engines[key].nonparametric(data.responses)
        observed.append(engines[key].evaluate(data.responses, model, (cfg.statistic,), cache[key])[cfg.statistic])

    # residual sources
    groups: list[_Group] = []
    if scheme.parametric_residuals:
        groups.append(_Group(residuals(data, fitted), list(range(len(configs))), "parametric"))
    else:
        by_bw = {}
        for j, cfg in enumerate(configs):
            h = scheme.nonparam_bw_for_residuals or cfg.h
            by_bw.setdefault((cfg.degree, h), []).append(j)
        for (degree, h), members in by_bw.items():
            eps = residuals(data, _nonparametric_fitted(data, h, degree))
            groups.append(_Group(eps, members, "nonparametric"))
    for g, group in enumerate(groups):
        if scheme.recenter_residuals:
            group.residuals = _recenter(group.residuals)
        if scheme.spatial:
            if posterior is not None and scheme.parametric_residuals:
                group.posterior = posterior
            else:
                group.posterior = mh_fit(group.residuals, data.covariates, spatial, substream(ss, 0, g))
            group.sampler = FieldSampler(group.posterior.model(), data.covariates)

    ctx = (data, fitted, configs, engines, engine_of, fit_config, ss)
    runs: list[BootstrapRun | None] = [None] * len(configs)
    for group in groups:
        boot = _run_group(ctx, group, scheme.B, threads)
        for slot, j in enumerate(group.members):
            reps = boot[:, slot]
            failed = int(np.isnan(reps).sum())
            obs, excluded = observed[j]
            warn = list(group.posterior.warnings) if group.posterior is not None else []
            if failed > MAX_FAILED_FRACTION * scheme.B:
                msg = f"{failed} of {scheme.B} bootstrap replicates failed"
                if strict:
                    raise BootstrapFailure(msg)
                warn.append(msg)
                p = math.nan
            else:
                p = bootstrap_p_value(obs, reps)
            runs[j] = BootstrapRun(
                observed=obs,
                replicates=reps,
                p_value=p,
                residual_source=group.source,
                scheme=scheme,
                config=configs[j],
                posterior=group.posterior,
                failed=failed,
                excluded_points=excluded,
                warnings=warn,
            )
    return runs


def run_iid_bootstrap(data: Dataset, scheme: BootstrapScheme, cfg: TestConfig, rng, *,
                      fit_config: FitConfig | None = None, threads: int = 1) -> BootstrapRun:
    """PCB or NPCB calibration of one statistic."""
    if scheme.kind not in IID_SCHEMES:
        raise InvalidArgumentError(f"run_iid_bootstrap needs PCB or NPCB, got {scheme.kind}")
    return calibrate(data, [cfg], scheme, rng, fit_config=fit_config, threads=threads)[0]


def run_spatial_bootstrap(data: Dataset, scheme: BootstrapScheme, cfg: TestConfig,
                          spatial: SpatialFitConfig | None, rng, *, fit_config: FitConfig | None = None,
                          posterior: PosteriorSummary | None = None, threads: int = 1) -> BootstrapRun:
    """PSCB or NPSCB calibration of one statistic.

    The spatial process is fitted once to the residuals; ``posterior`` can
    be given instead to reuse an existing PSCB fit.
    """
    if scheme.kind not in SPATIAL_SCHEMES:
        raise InvalidArgumentError(f"run_spatial_bootstrap needs PSCB or NPSCB, got {scheme.kind}")
    spatial = spatial or (SpatialFitConfig() if posterior is None else None)
    run = calibrate(data, [cfg], scheme, rng, fit_config=fit_config, spatial=spatial,
                    posterior=posterior, threads=threads)[0]
    for msg in run.warnings:
        logger.warning(msg)
    return run
