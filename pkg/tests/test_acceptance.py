"""Acceptance criteria 1-9.

Each test records ``(passed, detail)`` in ``conftest.ACCEPTANCE``; the
terminal summary prints one line per criterion. Tolerances are fixed.
The Monte Carlo criteria take roughly 20 minutes on one core.
"""

import json
import math

import numpy as np
import pytest
from scipy.stats import norm

from circgof.bootstrap import BootstrapScheme, calibrate
from circgof.circular import mean_direction
from circgof.cli import main
from circgof.dataset import Dataset, save_csv
from circgof.gof import TestConfig, statistic
from circgof.harness import Scenario, run_experiment
from circgof.nonparam import BandwidthSpec, LocalSmoother, estimate_m
from circgof.param_fit import ParametricModel, fit_circular_ls, ls_gradient
from circgof.spatial import (
    ExponentialCovariance, FieldSampler, SpatialFitConfig, SpatialModel, covariance_matrix, mh_fit,
    simulate_field,
)
from conftest import ACCEPTANCE
from test_nonparam import cosine_risk_minimizer
from test_param_fit import central_gradient, grid_minimum

pytestmark = pytest.mark.acceptance

TWO_PI = 2 * math.pi


def record(num, ok, detail):
    prev = ACCEPTANCE.get(num)
    if prev is not None:
        ok = ok and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[num] = (ok, detail)
    return ok


def ll_t2_pcb(**kw):
    """Desk-scale LL / T2 / PCB cell at a single bandwidth."""
    base = dict(d=1, degrees=[1], statistics=["T2"], schemes=["PCB"], mc=200, B=200)
    base.update(kw)
    scn = Scenario(**base)
    return run_experiment(scn, threads=1).proportion("PCB", "T2", 1, scn.bandwidths[0])


@pytest.fixture(scope="module")
def power_grid():
    """Rejection proportions at n=200, h=0.35 keyed by (c, kappa)."""
    cells = [(0.0, 10.0), (1.0, 10.0), (2.0, 10.0), (2.0, 5.0), (2.0, 15.0)]
    return {(c, k): ll_t2_pcb(c=c, kappa=k, n=200, bandwidths=[0.35], seed=300 + i)
            for i, (c, k) in enumerate(cells)}


class TestMonteCarloLevelsAndPower:
    def test_c1_null_level(self):
        p = ll_t2_pcb(c=0.0, n=100, kappa=10.0, bandwidths=[0.45], seed=101)
        ok = record(1, abs(p - 0.032) <= 0.04, f"rejection {p:.3f}, target 0.032 +/- 0.04")
        assert ok

    def test_c2_power(self, power_grid):
        p = power_grid[(2.0, 10.0)]
        ok = record(2, p >= 0.95, f"rejection {p:.3f}, target >= 0.95")
        assert ok

    def test_c3_monotone(self, power_grid):
        by_c = [power_grid[(c, 10.0)] for c in (0.0, 1.0, 2.0)]
        by_k = [power_grid[(2.0, k)] for k in (5.0, 10.0, 15.0)]
        ok = all(b >= a - 0.05 for seq in (by_c, by_k) for a, b in zip(seq, seq[1:]))
        detail = "c=0,1,2: " + ", ".join(f"{v:.3f}" for v in by_c) + "; kappa=5,10,15: " + ", ".join(
            f"{v:.3f}" for v in by_k)
        assert record(3, ok, detail)


class TestSpatialErrors:
    def test_c4_iid_bootstrap_miscalibrated(self):
        scn = Scenario(d=2, c=0.0, n=225, design="grid", error="wrapped_gaussian", sigma2=1.0, a_e=0.3,
                       bandwidths=[0.55], statistics=["T1"], degrees=[1], schemes=["PCB"], mc=100, B=100,
                       seed=401)
        p = run_experiment(scn, threads=1).proportion("PCB", "T1", 1, 0.55)
        assert record(4, p > 0.30, f"rejection {p:.3f}, target > 0.30")

    def test_c5_spatial_bootstrap_level(self):
        scn = Scenario(d=2, c=0.0, n=100, design="grid", error="wrapped_gaussian", sigma2=1.0, a_e=0.3,
                       bandwidths=[0.55], statistics=["T1"], degrees=[1], schemes=["PSCB"], mc=100, B=100,
                       seed=501)
        tab = run_experiment(scn, threads=1)
        p = tab.proportion("PSCB", "T1", 1, 0.55)
        assert record(5, abs(p - 0.028) <= 0.06, f"rejection {p:.3f}, target 0.028 +/- 0.06")


class TestOracles:
    def test_c6a_nw_cosine_risk(self):
        rng = np.random.default_rng(601)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(3, 30))
            x = rng.uniform(size=n)
            theta = rng.vonmises(rng.uniform(0, 6), rng.uniform(0.5, 10), n)
            h = rng.uniform(0.1, 0.6)
            x0 = float(x[rng.integers(n)] + rng.uniform(-0.5, 0.5) * h)
            got = estimate_m(Dataset(x, theta), BandwidthSpec(h, 0), [x0]).m_hat
            worst = max(worst, abs(math.remainder(got - cosine_risk_minimizer(x, theta, x0, h), TWO_PI)))
        assert record(6, worst < TWO_PI * 1e-4, f"(a) worst NW gap {worst:.2e}")

    def test_c6b_ls_grid_search(self):
        rng = np.random.default_rng(602)
        worst = -np.inf
        for _ in range(20):
            x = rng.uniform(size=20)
            theta = rng.uniform(0, TWO_PI) + 2 * np.arctan(rng.uniform(-4, 4) * x) + rng.vonmises(0, 2, 20)
            data = Dataset(x, theta)
            worst = max(worst, fit_circular_ls(data).objective - grid_minimum(data))
        assert record(6, worst <= 1e-6, f"(b) max fit - grid {worst:.2e}")

    def test_c6c_mean_direction_grid(self):
        rng = np.random.default_rng(603)
        grid = np.arange(10**6) * (TWO_PI / 10**6)
        worst = 0.0
        for _ in range(5):
            theta = rng.vonmises(rng.uniform(0, TWO_PI), 2.0, 7)
            c, s = np.cos(theta).sum(), np.sin(theta).sum()
            ref = grid[np.argmin(-(c * np.cos(grid) + s * np.sin(grid)))]
            worst = max(worst, abs(math.remainder(mean_direction(theta) - ref, TWO_PI)))
        assert record(6, worst < TWO_PI * 1e-5, f"(c) worst gap {worst:.2e}")


class TestNumerics:
    def test_c7a_gradient(self):
        rng = np.random.default_rng(701)
        worst = 0.0
        for _ in range(50):
            n, d = int(rng.integers(5, 40)), int(rng.integers(1, 3))
            data = Dataset(rng.uniform(size=(n, d)), rng.uniform(0, TWO_PI, n))
            model = ParametricModel.from_params(rng.uniform(-3, 3, d + 1))
            g = ls_gradient(model, data)
            rel = np.linalg.norm(g - central_gradient(model, data)) / max(np.linalg.norm(g), 1.0)
            worst = max(worst, rel)
        assert record(7, worst <= 1e-4, f"gradient rel err {worst:.1e}")

    def test_c7b_linear_reproduction(self):
        rng = np.random.default_rng(702)
        worst = 0.0
        for d in (1, 2):
            X = rng.uniform(size=(80, d))
            pts = rng.uniform(0.1, 0.9, (25, d))
            a_s, a_c = rng.normal(size=d), rng.normal(size=d)
            vals = np.column_stack([0.2 + X @ a_s, 0.5 + X @ a_c])
            got = LocalSmoother(X, pts, BandwidthSpec(0.35, 1)).smooth(vals)
            worst = max(worst, np.max(np.abs(got - np.column_stack([0.2 + pts @ a_s, 0.5 + pts @ a_c]))))
        assert record(7, worst <= 1e-9, f"linear reproduction {worst:.1e}")

    def test_c7c_grid_doubling(self, null_data_1d):
        model = fit_circular_ls(null_data_1d).model
        worst = 0.0
        for stat in ("T1", "T2"):
            for degree in (0, 1):
                coarse = statistic(null_data_1d, model, TestConfig.default(stat, degree, 0.35, 100, 1,
                                                                           resolution=201))[0]
                fine = statistic(null_data_1d, model, TestConfig.default(stat, degree, 0.35, 100, 1,
                                                                         resolution=402))[0]
                worst = max(worst, abs(fine - coarse) / fine)
        assert record(7, worst < 0.01, f"grid doubling change {worst:.1e}")


def _unit_grid(side):
    g = np.linspace(0.0, 1.0, side)
    a, b = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([a.ravel(), b.ravel()])


@pytest.fixture(scope="module")
def sbc_fits():
    """50 posterior means, each from a fresh field on the 10x10 unit grid."""
    loc = _unit_grid(10)
    model = SpatialModel(0.0, ExponentialCovariance(1.0, 0.3))
    out = []
    for ss in np.random.SeedSequence(801).spawn(50):
        sim, chain = (np.random.default_rng(s) for s in ss.spawn(2))
        post = mh_fit(simulate_field(model, loc, sim), loc, SpatialFitConfig(), chain)
        out.append((math.remainder(post.mu_mean, TWO_PI), post.sigma2_mean, post.a_e_mean))
    return np.array(out)


def _mu_ok(fits):
    return np.abs(fits[:, 0]) <= 0.3


def _gls_mu_rate():
    """P(|mu_hat| <= 0.3) for the GLS mean with the true covariance known."""
    C = covariance_matrix(ExponentialCovariance(1.0, 0.3), _unit_grid(10))
    one = np.ones(len(C))
    sd = math.sqrt(1.0 / (one @ np.linalg.solve(C, one)))
    return 2 * norm.cdf(0.3 / sd) - 1, sd


class TestSpatialFidelity:
    def test_c8a_pair_covariance(self):
        sampler = FieldSampler(SpatialModel(0.0, ExponentialCovariance(1.0, 0.3)), [[0.0, 0.0], [0.3, 0.0]])
        Y = sampler.latent(np.random.default_rng(802), size=10**5)
        cov = np.cov(Y.T)[0, 1]
        assert record(8, abs(cov - math.exp(-1)) <= 0.02, f"pair covariance {cov:.4f} vs {math.exp(-1):.4f}")

    def test_c8b_simulation_based_calibration(self, sbc_fits):
        ok = _mu_ok(sbc_fits) & (sbc_fits[:, 1] >= 0.5) & (sbc_fits[:, 1] <= 2.0) \
            & (sbc_fits[:, 2] >= 0.1) & (sbc_fits[:, 2] <= 0.9)
        rate = ok.mean()
        detail = (f"SBC pass {rate:.2f} (mu {_mu_ok(sbc_fits).mean():.2f}, "
                  f"sigma2 {np.mean((sbc_fits[:, 1] >= 0.5) & (sbc_fits[:, 1] <= 2)):.2f}, "
                  f"a_e {np.mean((sbc_fits[:, 2] >= 0.1) & (sbc_fits[:, 2] <= 0.9)):.2f}), target >= 0.90; "
                  f"known-covariance GLS bound for mu {_gls_mu_rate()[0]:.2f}")
        assert record(8, rate >= 0.90, detail)

    def test_mu_spread_matches_known_covariance_bound(self, sbc_fits):
        # the posterior mean of mu cannot beat the GLS estimator that knows the covariance
        bound, sd = _gls_mu_rate()
        assert sd > 0.35
        assert abs(_mu_ok(sbc_fits).mean() - bound) < 0.2
        assert np.sqrt(np.mean(sbc_fits[:, 0] ** 2)) == pytest.approx(sd, rel=0.35)


class TestReproducibility:
    def test_c9_calibrate(self, null_data_1d):
        cfg = TestConfig.default("T1", 1, 0.45, 100, 1)
        texts = []
        for threads in (1, 1, 2):
            run = calibrate(null_data_1d, [cfg], BootstrapScheme("NPCB", 40), 9, threads=threads)[0]
            texts.append(run.to_json())
        assert record(9, texts[0] == texts[1] == texts[2], "calibrate NPCB identical over reruns and threads")

    def test_c9_spatial_calibrate(self, grid_locations):
        rng = np.random.default_rng(903)
        data = Dataset(grid_locations, simulate_field(SpatialModel(0.0, ExponentialCovariance(1.0, 0.3)),
                                                      grid_locations, rng))
        cfg = TestConfig.default("T1", 1, 0.55, 100, 2, resolution=20)
        spatial = SpatialFitConfig(iterations=300, burn_in=100)
        texts = [calibrate(data, [cfg], BootstrapScheme("NPSCB", 8), 4, spatial=spatial, threads=t)[0].to_json()
                 for t in (1, 1, 2)]
        assert record(9, texts[0] == texts[1] == texts[2], "calibrate NPSCB identical")

    def test_c9_experiment(self):
        scn = Scenario(n=40, bandwidths=[0.45], statistics=["T1", "T2"], degrees=[0, 1], schemes=["PCB", "NPCB"],
                       mc=4, B=10, seed=905)
        tabs = [run_experiment(scn, threads=t).pvalues.tobytes() for t in (1, 1, 2)]
        assert record(9, tabs[0] == tabs[1] == tabs[2], "run_experiment identical")

    def test_c9_cli(self, tmp_path, null_data_1d):
        src = tmp_path / "d.csv"
        save_csv(null_data_1d, src)
        outs = []
        for i, threads in enumerate(("1", "1", "2")):
            out = tmp_path / f"o{i}.json"
            rc = main(["gof-test", "--input", str(src), "--statistic", "T2", "--h", "0.45", "--boot", "pcb",
                       "--B", "25", "--seed", "11", "--threads", threads, "--out", str(out)])
            assert rc == 0
            outs.append(out.read_bytes())
        assert json.loads(outs[0])["meta"]["seed"] == 11
        assert record(9, outs[0] == outs[1] == outs[2], "CLI gof-test output identical")
