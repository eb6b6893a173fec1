"""Circular least squares for the arctangent-link family.

The family is ``m(x) = beta0 + 2*atan(beta1 . x)``. Fitting minimises
``sum(1 - cos(theta_i - m(x_i)))``, which is also the von Mises
maximum-likelihood criterion for the mean direction.

Each start of the multistart schedule runs a damped Newton iteration
(eigenvalue-modified Hessian when it is indefinite) with backtracking line
search and a gradient-descent fallback when the Newton direction yields
no descent. The inner loop is compiled with numba.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .circular import RESULTANT_TOL, a1inv, wrap
from .dataset import Dataset
from .errors import InsufficientDataError, NonConvergenceError


@dataclass(frozen=True)
class ParametricModel:
    beta0: float
    beta1: tuple[float, ...]
    kappa_hat: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta0", wrap(float(self.beta0)))
        object.__setattr__(self, "beta1", tuple(float(b) for b in np.atleast_1d(self.beta1)))

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([[self.beta0], self.beta1])

    @classmethod
    def from_params(cls, params, kappa_hat=None) -> "ParametricModel":
        params = np.asarray(params, dtype=float)
        return cls(params[0], tuple(params[1:]), kappa_hat)

    def predict(self, x) -> np.ndarray:
        return predict(self, x)

    def to_dict(self) -> dict:
        return {"beta0": self.beta0, "beta1": list(self.beta1), "kappa_hat": self.kappa_hat}


@dataclass(frozen=True)
class FitConfig:
    tol_grad: float = 1e-8
    max_iter: int = 200
    n_random_starts: int = 8
    start_range: float = 3.0
    seed: int = 0


@dataclass(frozen=True)
class FitReport:
    model: ParametricModel
    objective: float
    iterations: int
    converged: bool
    starts_tried: int
    grad_norm: float = field(default=float("nan"))

    def to_dict(self) -> dict:
        return {
            **self.model.to_dict(),
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "starts_tried": self.starts_tried,
            "grad_norm": self.grad_norm,
        }


def _as_matrix(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if x.size == d else x.reshape(-1, 1)
    return x


def predict(model: ParametricModel, x):
    """``wrap(beta0 + 2*atan(beta1 . x))`` for one point or an (m, d) array."""
    b1 = np.asarray(model.beta1)
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 0 or (x_arr.ndim == 1 and x_arr.size == b1.size)
    xm = _as_matrix(x_arr, b1.size)
    with np.errstate(over="ignore"):
        out = wrap(model.beta0 + 2.0 * np.arctan(xm @ b1))
    return float(out[0]) if single else out


def ls_objective(model: ParametricModel, data: Dataset) -> float:
    """Sum of circular distances between responses and model predictions."""
    m = predict(model, data.covariates)
    return float(np.sum(1.0 - np.cos(data.responses - m)))


def _batch_eval(P, X, theta, order=2):
    """Objective, gradient and Hessian for each row of the (S, q) array P."""
    u = P[:, 1:] @ X.T  # (S, n)
    r = theta[None, :] - P[:, :1] - 2.0 * np.arctan(u)
    f = np.sum(1.0 - np.cos(r), axis=1)
    if order == 0:
        return f, None, None
    s = np.sin(r)
    inv = 1.0 / (1.0 + u * u)
    S, n = u.shape
    q = P.shape[1]
    J = np.empty((S, n, q))
    J[:, :, 0] = 1.0
    J[:, :, 1:] = 2.0 * inv[:, :, None] * X[None, :, :]
    g = -np.einsum("sn,snq->sq", s, J)
    if order == 1:
        return f, g, None
    c = np.cos(r)
    H = np.einsum("sn,snq,snr->sqr", c, J, J)
    curv = s * 4.0 * u * inv * inv
    H[:, 1:, 1:] += np.einsum("sn,nq,nr->sqr", curv, X, X)
    return f, g, H


def ls_gradient(model: ParametricModel, data: Dataset) -> np.ndarray:
    """Analytic gradient of ``ls_objective`` w.r.t. (beta0, beta1)."""
    _, g, _ = _batch_eval(model.params[None, :], data.covariates, data.responses, order=1)
    return g[0]


def ls_hessian(model: ParametricModel, data: Dataset) -> np.ndarray:
    _, _, H = _batch_eval(model.params[None, :], data.covariates, data.responses)
    return H[0]


def _starts(data: Dataset, config: FitConfig) -> np.ndarray:
    d = data.d
    rng = np.random.default_rng(config.seed)
    slopes = np.vstack(
        [np.zeros((1, d)), rng.uniform(-config.start_range, config.start_range, (config.n_random_starts, d))]
    )
    P = np.empty((slopes.shape[0], d + 1))
    P[:, 1:] = slopes
    # profile-optimal intercept for each slope start
    shifted = data.responses[None, :] - 2.0 * np.arctan(slopes @ data.covariates.T)
    ss, cc = np.sin(shifted).sum(axis=1), np.cos(shifted).sum(axis=1)
    P[:, 0] = np.where(np.hypot(ss, cc) > RESULTANT_TOL, np.mod(np.arctan2(ss, cc), 2 * np.pi), 0.0)
    return P


@njit(cache=True)
def _eval_one(p, X, theta, g, H, order):
    """Objective (and optionally gradient/Hessian into g, H) at one parameter vector."""
    n, d = X.shape
    q = d + 1
    f = 0.0
    if order > 0:
        for a in range(q):
            g[a] = 0.0
            for b in range(q):
                H[a, b] = 0.0
    jac = np.empty(q)
    for i in range(n):
        u = 0.0
        for j in range(d):
            u += p[j + 1] * X[i, j]
        r = theta[i] - p[0] - 2.0 * np.arctan(u)
        c = np.cos(r)
        f += 1.0 - c
        if order == 0:
            continue
        s = np.sin(r)
        inv = 1.0 / (1.0 + u * u)
        jac[0] = 1.0
        for j in range(d):
            jac[j + 1] = 2.0 * inv * X[i, j]
        for a in range(q):
            g[a] -= s * jac[a]
            for b in range(q):
                H[a, b] += c * jac[a] * jac[b]
        curv = s * 4.0 * u * inv * inv
        for a in range(d):
            for b in range(d):
                H[a + 1, b + 1] += curv * X[i, a] * X[i, b]
    return f


@njit(cache=True)
def _newton_start(p, X, theta, tol_grad, max_iter, f_best):
    """Damped Newton from one start.

    Returns (f, grad_norm, iterations, status) with status 1 converged,
    0 out of iterations, -1 stalled or abandoned. ``p`` is updated in place.
    """
    q = p.size
    g = np.empty(q)
    H = np.empty((q, q))
    gt = np.empty(q)
    Ht = np.empty((q, q))
    trial = np.empty(q)
    f = _eval_one(p, X, theta, g, H, 2)
    gnorm = np.sqrt(np.sum(g * g))
    window = 5
    hist = np.empty(max_iter + 1)
    hist[0] = f
    for it in range(max_iter):
        if gnorm < tol_grad:
            return f, gnorm, it, 1
        # cannot reach the best converged objective at the current rate of descent
        if it >= 2 * window and np.isfinite(f_best):
            gap = f - f_best
            rate = (hist[it - window] - hist[it]) / window
            if gap > 1e-6 * (1.0 + abs(f_best)) and rate * (max_iter - it) < gap:
                return f, gnorm, it, -1
        lam, V = np.linalg.eigh(H)
        scale = max(np.max(np.abs(lam)), 1e-12)
        floor = 1e-8 * scale
        pd = np.all(lam > floor)
        proj = V.T @ g
        direc = -(V @ (proj / np.maximum(np.abs(lam), floor)))
        slope = np.sum(g * direc)
        tol_f = 1e-12 * (1.0 + abs(f))
        step = 1.0
        ok = False
        ft = f
        for _ls in range(40):
            for a in range(q):
                trial[a] = p[a] + step * direc[a]
            ft = _eval_one(trial, X, theta, gt, Ht, 0)
            if ft <= f + 1e-4 * step * slope or (pd and step == 1.0 and ft <= f + tol_f):
                ok = True
                break
            step *= 0.5
        if not ok:
            # gradient-descent fallback
            gg = np.sum(g * g)
            step = 1.0 / max(np.sqrt(gg), 1e-300)
            for _ls in range(60):
                for a in range(q):
                    trial[a] = p[a] - step * g[a]
                ft = _eval_one(trial, X, theta, gt, Ht, 0)
                if ft < f - 1e-4 * step * gg:
                    ok = True
                    break
                step *= 0.5
        if not ok:
            return f, gnorm, it, -1
        for a in range(q):
            p[a] = trial[a]
        f = _eval_one(p, X, theta, g, H, 2)
        gnorm = np.sqrt(np.sum(g * g))
        hist[it + 1] = f
    if gnorm < tol_grad:
        return f, gnorm, max_iter, 1
    return f, gnorm, max_iter, 0


def fit_circular_ls(data: Dataset, config: FitConfig | None = None) -> FitReport:
    """Minimise the circular least-squares criterion over a multistart schedule.

    Starts are run in order; a start whose descent rate cannot close the
    gap to the best converged objective within the iteration budget is
    abandoned. Returns the lowest objective reached across starts;
    ``kappa_hat`` solves ``A1(kappa) = mean(cos(residuals))``.
    """
    config = config or FitConfig()
    X, theta = data.covariates, data.responses
    if data.n < data.d + 1:
        raise InsufficientDataError(f"need at least {data.d + 1} observations, got {data.n}")

    P = _starts(data, config)
    S = P.shape[0]
    f = np.empty(S)
    gnorm = np.empty(S)
    iters = np.zeros(S, dtype=int)
    converged = np.zeros(S, dtype=bool)
    f_best = np.inf
    Xc = np.ascontiguousarray(X)
    for k in range(S):
        fk, gk, ik, status = _newton_start(P[k], Xc, theta, config.tol_grad, config.max_iter, f_best)
        f[k], gnorm[k], iters[k] = fk, gk, ik
        converged[k] = status == 1
        if converged[k]:
            f_best = min(f_best, fk)

    best = int(np.argmin(np.where(np.isfinite(f), f, np.inf)))
    # prefer a converged start when it ties the best objective
    ties = np.flatnonzero(converged & (f <= f[best] + 1e-12 * (1.0 + abs(f[best]))))
    if ties.size:
        best = int(ties[np.argmin(f[ties])])
    resid = theta - P[best, 0] - 2.0 * np.arctan(X @ P[best, 1:])
    kappa = a1inv(float(np.mean(np.cos(resid))))
    model = ParametricModel.from_params(P[best], kappa_hat=kappa)
    report = FitReport(
        model=model,
        objective=float(f[best]),
        iterations=int(iters[best]),
        converged=bool(converged[best]),
        starts_tried=S,
        grad_norm=float(gnorm[best]),
    )
    if not converged.any():
        raise NonConvergenceError("no multistart branch reached the gradient tolerance", best=report)
    return report
