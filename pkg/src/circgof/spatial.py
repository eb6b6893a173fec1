"""Wrapped Gaussian spatial processes with exponential covariance.

A field of angles is ``eps_i = (mu + w_i) mod 2*pi`` where ``w`` is a zero
mean Gaussian field with ``Cov(w_i, w_j) = sigma2 * exp(-|x_i - x_j| / a_e)``.

Bayesian fitting augments each observed angle with a latent winding
number ``k_i`` so that ``Y_i = eps_i + 2*pi*k_i`` is Gaussian. One sweep of
the sampler updates

* the windings by exact single-site Gibbs from their discrete conditionals,
* ``mu`` from its conjugate normal conditional,
* ``sigma2`` from its conjugate inverse-gamma conditional, truncated,
* the decay ``phi = 3 / a_e`` by random-walk Metropolis-Hastings under a
  uniform prior; the proposal scale adapts during burn-in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist, squareform
from scipy.special import gammaincc, gammainccinv

from .circular import TWO_PI, mean_direction, wrap
from .errors import ChainFailureError, DegenerateDirectionError, InvalidArgumentError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)

JITTER = 1e-10


@dataclass(frozen=True)
class ExponentialCovariance:
    sigma2: float
    a_e: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.a_e > 0):
            raise InvalidArgumentError("sigma2 and a_e must be positive")

    def __call__(self, dist):
        return self.sigma2 * np.exp(-np.asarray(dist, dtype=float) / self.a_e)


@dataclass(frozen=True)
class SpatialModel:
    mu: float
    cov: ExponentialCovariance

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma2": self.cov.sigma2, "a_e": self.cov.a_e}


@dataclass(frozen=True)
class SpatialFitConfig:
    iterations: int = 5000
    burn_in: int = 1000
    kmax: int = 2
    mu_prior_mean: float = 0.0
    mu_prior_var: float = 1.0
    a_sigma: float = 2.0
    b_sigma: float = 1.0
    sigma2_bounds: tuple[float, float] = (1e-3, 10.0)
    decay_lo: float = 0.5
    decay_hi: float = 30.0
    thin: int = 10
    target_accept: float = 0.3

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise InvalidArgumentError("burn_in must be in [0, iterations)")
        if self.kmax < 1:
            raise InvalidArgumentError("kmax must be >= 1")
        if not 0 < self.decay_lo < self.decay_hi:
            raise InvalidArgumentError("decay support must satisfy 0 < lo < hi")
        lo, hi = self.sigma2_bounds
        if not 0 < lo < hi:
            raise InvalidArgumentError("sigma2 bounds must satisfy 0 < lo < hi")

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "kmax": self.kmax,
            "priors": {
                "mu": {"mean": self.mu_prior_mean, "var": self.mu_prior_var},
                "sigma2": {"a": self.a_sigma, "b": self.b_sigma, "bounds": list(self.sigma2_bounds)},
                "decay": {"lo": self.decay_lo, "hi": self.decay_hi},
            },
            "thin": self.thin,
            "target_accept": self.target_accept,
        }


@dataclass
class PosteriorSummary:
    mu_mean: float
    sigma2_mean: float
    a_e_mean: float
    acceptance_rates: dict
    draws: dict = field(repr=False, default_factory=dict)
    chain_length: int = 0
    warnings: list = field(default_factory=list)

    def model(self) -> SpatialModel:
        return SpatialModel(self.mu_mean, ExponentialCovariance(self.sigma2_mean, self.a_e_mean))

    def to_dict(self, include_draws=True) -> dict:
        out = {
            "mu": self.mu_mean,
            "sigma2": self.sigma2_mean,
            "a_e": self.a_e_mean,
            "acceptance_rates": self.acceptance_rates,
            "chain_length": self.chain_length,
            "warnings": list(self.warnings),
        }
        if include_draws:
            out["draws"] = {k: np.asarray(v).tolist() for k, v in self.draws.items()}
        return out


def distance_matrix(locations) -> np.ndarray:
    loc = np.asarray(locations, dtype=float)
    if loc.ndim == 1:
        loc = loc[:, None]
    if not np.all(np.isfinite(loc)):
        raise InvalidArgumentError("locations must be finite")
    if loc.shape[0] == 1:
        return np.zeros((1, 1))
    # squareform of pdist is exactly symmetric
    return squareform(pdist(loc))


def covariance_matrix(cov: ExponentialCovariance, locations) -> np.ndarray:
    """``sigma2 * exp(-dist / a_e)`` between all pairs of locations."""
    return cov(distance_matrix(locations))


def _cholesky(C, sigma2):
    C = C + JITTER * sigma2 * np.eye(C.shape[0])
    try:
        return linalg.cholesky(C, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from None


class FieldSampler:
    """Draws wrapped Gaussian fields at fixed locations, reusing one Cholesky factor."""

    def __init__(self, model: SpatialModel, locations):
        self.model = model
        self.factor = _cholesky(covariance_matrix(model.cov, locations), model.cov.sigma2)

    def latent(self, rng: np.random.Generator, size=None) -> np.ndarray:
        n = self.factor.shape[0]
        if size is None:
            return self.model.mu + self.factor @ rng.standard_normal(n)
        z = rng.standard_normal((size, n))
        return self.model.mu + z @ self.factor.T

    def draw(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return wrap(self.latent(rng, size))


def simulate_field(model: SpatialModel, locations, rng: np.random.Generator, size=None):
    """One (or ``size``) wrapped Gaussian field realisations at ``locations``."""
    return FieldSampler(model, locations).draw(rng, size)


def winding_conditional(eps_i: float, cond_mean: float, cond_var: float, kmax: int) -> np.ndarray:
    """Conditional probabilities of windings ``-kmax..kmax`` at one site.

    ``cond_mean`` and ``cond_var`` describe the Gaussian conditional of the
    unwrapped value given all other sites.
    """
    ks = np.arange(-kmax, kmax + 1)
    cand = eps_i + TWO_PI * ks
    logp = -0.5 * (cand - cond_mean) ** 2 / cond_var
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()


class _Factorization:
    """Correlation matrix R(phi) with its log-determinant; the inverse is built on demand."""

    def __init__(self, D, phi):
        R = np.exp(-D * (phi / 3.0))
        R[np.diag_indices_from(R)] += JITTER
        self.chol = linalg.cho_factor(R, lower=True, check_finite=False)
        self.phi = phi
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol[0]))))
        self._inv = None

    @property
    def inv(self):
        if self._inv is None:
            self._inv = linalg.cho_solve(self.chol, np.eye(self.chol[0].shape[0]), check_finite=False)
            self.inv_one = self._inv.sum(axis=1)
            self.one_inv_one = float(self.inv_one.sum())
        return self._inv

    def quad(self, resid):
        z = linalg.solve_triangular(self.chol[0], resid, lower=True, check_finite=False)
        return float(z @ z)


def _factorize(D, phi):
    try:
        return _Factorization(D, phi)
    except (linalg.LinAlgError, ValueError):
        return None


def _loglik(fac, resid, sigma2):
    n = resid.size
    return -0.5 * (n * np.log(sigma2) + fac.logdet + fac.quad(resid) / sigma2)


def _sweep_windings(eps, k, Y, mu, Qinv_scaled, kmax, u):
    """Exact sequential Gibbs sweep over all windings.

    Conditionals for a run of sites are computed in one vectorised pass;
    only the first site whose winding changes is committed before the
    remaining sites are recomputed, which keeps the sweep exactly
    sequential while costing one pass per change.
    """
    n = eps.size
    Q = Qinv_scaled
    qd = np.diag(Q)
    r = Q @ (Y - mu)
    ks = np.arange(-kmax, kmax + 1)
    i = 0
    while i < n:
        idx = np.arange(i, n)
        cm = Y[idx] - r[idx] / qd[idx]
        cand = eps[idx, None] + TWO_PI * ks[None, :]
        logp = -0.5 * qd[idx, None] * (cand - cm[:, None]) ** 2
        logp -= logp.max(axis=1, keepdims=True)
        p = np.exp(logp)
        cdf = np.cumsum(p, axis=1)
        cdf /= cdf[:, -1:]
        pick = np.minimum(np.sum(u[idx, None] > cdf, axis=1), ks.size - 1)
        new_k = ks[pick]
        changed = np.flatnonzero(new_k != k[idx])
        if changed.size == 0:
            break
        j = idx[changed[0]]
        delta = TWO_PI * (new_k[changed[0]] - k[j])
        k[j] = new_k[changed[0]]
        Y[j] += delta
        r += Q[:, j] * delta
        i = j + 1


def _truncated_invgamma(shape, scale, lo, hi, rng):
    """Inverse-CDF draw from IG(shape, scale) restricted to [lo, hi]."""
    # IG cdf at x is the upper regularised incomplete gamma Q(shape, scale / x)
    flo, fhi = gammaincc(shape, scale / lo), gammaincc(shape, scale / hi)
    if fhi - flo < 1e-300:
        return lo if scale / (shape - 1.0) < lo else hi
    u = flo + (fhi - flo) * rng.random()
    return float(np.clip(scale / gammainccinv(shape, u), lo, hi))


def mh_fit(angles, locations, cfg: SpatialFitConfig | None, rng: np.random.Generator) -> PosteriorSummary:
    """Posterior summary of a wrapped Gaussian field fitted to ``angles``."""
    cfg = cfg or SpatialFitConfig()
    eps = np.asarray(wrap(angles), dtype=float).ravel()
    n = eps.size
    if n < 5:
        raise InvalidArgumentError("mh_fit needs at least 5 sites")
    D = distance_matrix(locations)
    if D.shape[0] != n:
        raise InvalidArgumentError("angles and locations differ in length")
    K = cfg.kmax
    s_lo, s_hi = cfg.sigma2_bounds

    # initial state: windings that put Y_i closest to the circular mean
    try:
        mu = float(mean_direction(eps))
    except DegenerateDirectionError:
        mu = 0.0
    if mu > np.pi:
        mu -= TWO_PI
    k = np.clip(np.round((mu - eps) / TWO_PI), -K, K).astype(int)
    Y = eps + TWO_PI * k
    sigma2 = float(np.clip(np.var(Y), max(s_lo, 0.05), s_hi))
    max_dist = float(D.max()) if n > 1 else 1.0
    phi = float(np.clip(9.0 / max(max_dist, 1e-12), cfg.decay_lo, cfg.decay_hi))
    fac = _factorize(D, phi)
    if fac is None:
        raise ChainFailureError("initial correlation matrix is not factorizable")

    step = 0.2 * phi
    keep = cfg.iterations - cfg.burn_in
    mu_draws = np.empty(keep)
    s2_draws = np.empty(keep)
    ae_draws = np.empty(keep)
    accepted = proposals = failures = 0
    win_acc = win_prop = 0
    post_acc = post_prop = 0
    k_changes = 0

    for it in range(cfg.iterations):
        # windings
        Q = fac.inv / sigma2
        k_before = k.copy()
        _sweep_windings(eps, k, Y, mu, Q, K, rng.random(n))
        k_changes += int(np.count_nonzero(k != k_before))
        Y = eps + TWO_PI * k  # resync against incremental drift

        # mu | Y, sigma2, phi
        prec = 1.0 / cfg.mu_prior_var + fac.one_inv_one / sigma2
        mean = (cfg.mu_prior_mean / cfg.mu_prior_var + float(fac.inv_one @ Y) / sigma2) / prec
        mu = mean + rng.standard_normal() / np.sqrt(prec)

        # sigma2 | Y, mu, phi
        resid = Y - mu
        quad = float(resid @ fac.inv @ resid)
        sigma2 = _truncated_invgamma(cfg.a_sigma + 0.5 * n, cfg.b_sigma + 0.5 * quad, s_lo, s_hi, rng)

        # decay phi by random-walk MH, uniform prior
        prop = phi + step * rng.standard_normal()
        proposals += 1
        win_prop += 1
        if it >= cfg.burn_in:
            post_prop += 1
        if cfg.decay_lo < prop < cfg.decay_hi:
            new_fac = _factorize(D, prop)
            if new_fac is None:
                failures += 1
            else:
                log_ratio = _loglik(new_fac, resid, sigma2) - _loglik(fac, resid, sigma2)
                if np.log(rng.random()) < log_ratio:
                    fac, phi = new_fac, prop
                    accepted += 1
                    win_acc += 1
                    if it >= cfg.burn_in:
                        post_acc += 1
        if proposals >= 100 and failures > 0.5 * proposals:
            raise ChainFailureError(
                f"{failures} of {proposals} decay proposals produced unfactorizable matrices"
            )

        # adapt the proposal scale during burn-in only
        if it < cfg.burn_in and win_prop == 50:
            rate = win_acc / win_prop
            step *= float(np.exp(rate - cfg.target_accept))
            step = min(step, cfg.decay_hi - cfg.decay_lo)
            win_acc = win_prop = 0

        if it >= cfg.burn_in:
            j = it - cfg.burn_in
            mu_draws[j] = mu
            s2_draws[j] = sigma2
            ae_draws[j] = 3.0 / phi

    decay_rate = post_acc / post_prop if post_prop else float("nan")
    warnings = []
    if not 0.05 <= decay_rate <= 0.95:
        msg = f"decay acceptance rate {decay_rate:.3f} outside [0.05, 0.95] after adaptation"
        warnings.append(msg)
        logger.warning(msg)
    thin = max(cfg.thin, 1)
    return PosteriorSummary(
        mu_mean=wrap(float(np.mean(mu_draws))),
        sigma2_mean=float(np.mean(s2_draws)),
        a_e_mean=float(np.mean(ae_draws)),
        acceptance_rates={
            "decay": decay_rate,
            "decay_overall": accepted / proposals,
            "winding_changes_per_sweep": k_changes / cfg.iterations,
        },
        draws={"mu": mu_draws[::thin], "sigma2": s2_draws[::thin], "a_e": ae_draws[::thin]},
        chain_length=keep,
        warnings=warnings,
    )
