"""Kernel-type circular regression via the atan2 construction.

The sine and cosine of the responses are smoothed separately with a
degree-p local polynomial (p=0 Nadaraya-Watson, p=1 local linear) and
the estimate is ``atan2(m1_hat, m2_hat)``. For fixed covariates and
evaluation points the smoother is linear in the values being smoothed,
so :class:`LocalSmoother` precomputes the (G, n) weight matrix once and
reuses it for the data, the parametric fit and every bootstrap sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .circular import RESULTANT_TOL, wrap
from .dataset import Dataset
from .errors import EmptyNeighborhoodError, InvalidArgumentError, SingularDesignError
from .param_fit import ParametricModel, predict

RCOND_MIN = 1e-12
RIDGE_FACTOR = 1e-8

OK, EMPTY, SINGULAR = 0, 1, 2


@dataclass(frozen=True)
class KernelSpec:
    family: str = "triweight"

    def __post_init__(self):
        if self.family != "triweight":
            raise InvalidArgumentError(f"unsupported kernel {self.family!r}")

    def __call__(self, u):
        return triweight(u)


@dataclass(frozen=True)
class BandwidthSpec:
    h: float
    degree: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise InvalidArgumentError(f"bandwidth must be positive, got {self.h}")
        if self.degree not in (0, 1):
            raise InvalidArgumentError(f"degree must be 0 or 1, got {self.degree}")


@dataclass(frozen=True)
class LocalFit:
    m1_hat: float
    m2_hat: float
    m_hat: float
    effective_weight_sum: float


def triweight(u):
    """``(35/32) (1 - u^2)^3`` on ``|u| <= 1``, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 35.0 / 32.0 * (1.0 - u * u) ** 3, 0.0)


def kernel_weight(spec: KernelSpec, bw: BandwidthSpec, u) -> float:
    """Product kernel ``prod_j K(u_j / h) / h`` for one displacement vector."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float(np.prod(spec(u / bw.h) / bw.h))


def _product_weights(X, points, h, kernel):
    # (G, n, d) displacements X_i - x
    Z = X[None, :, :] - points[:, None, :]
    W = np.prod(kernel(Z / h) / h, axis=2)
    return W, Z


class LocalSmoother:
    """Linear local-polynomial smoother from covariates ``X`` to ``points``.

    ``weights`` has one row per evaluation point; ``status`` flags rows that
    are usable (0), have an empty kernel window (1), or a local design that
    stayed singular after ridge rescue (2).
    """

    def __init__(self, X, points, bw: BandwidthSpec, kernel: KernelSpec | None = None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        points = np.asarray(points, dtype=float).reshape(-1, X.shape[1])
        kernel = kernel or KernelSpec()
        self.bw = bw
        self.points = points
        W, Z = _product_weights(X, points, bw.h, kernel)
        self.weight_sum = W.sum(axis=1)
        status = np.where(self.weight_sum > 0, OK, EMPTY)
        self.ridged = np.zeros(points.shape[0], dtype=bool)
        if bw.degree == 0:
            with np.errstate(invalid="ignore", divide="ignore"):
                L = W / self.weight_sum[:, None]
        else:
            L, status = self._local_linear(W, Z, status)
        L[status != OK] = 0.0
        self.weights = L
        self.status = status

    def _local_linear(self, W, Z, status):
        G, n, d = Z.shape
        q = d + 1
        D = np.concatenate([np.ones((G, n, 1)), Z], axis=2)
        M = np.einsum("gn,gna,gnb->gab", W, D, D)
        ok = status == OK
        sv = np.linalg.svd(M[ok], compute_uv=False)
        rc = np.zeros(G)
        rc[ok] = sv[:, -1] / np.maximum(sv[:, 0], 1e-300)
        need = ok & (rc < RCOND_MIN)
        if need.any():
            lam = RIDGE_FACTOR * np.trace(M[need], axis1=1, axis2=2) / q
            M[need] += lam[:, None, None] * np.eye(q)
            sv = np.linalg.svd(M[need], compute_uv=False)
            still = sv[:, -1] / np.maximum(sv[:, 0], 1e-300) < RCOND_MIN
            idx = np.flatnonzero(need)
            status = status.copy()
            status[idx[still]] = SINGULAR
            self.ridged[idx[~still]] = True
        good = status == OK
        e1 = np.zeros(q)
        e1[0] = 1.0
        a = np.zeros((G, q))
        if good.any():
            a[good] = np.linalg.solve(M[good], np.broadcast_to(e1, (int(good.sum()), q))[..., None])[..., 0]
        L = W * np.einsum("ga,gna->gn", a, D)
        return L, status

    def smooth(self, values):
        """Apply the smoother to an (n,) or (n, k) array of values."""
        return self.weights @ np.asarray(values, dtype=float)

    def fit_angles(self, theta):
        """Return (m1_hat, m2_hat, m_hat, valid) at every evaluation point.

        ``m_hat`` is NaN where the row is unusable or the smoothed (sin, cos)
        vector vanishes relative to the row's total absolute weight.
        """
        theta = np.asarray(theta, dtype=float)
        sc = self.smooth(np.column_stack([np.sin(theta), np.cos(theta)]))
        m1, m2 = sc[:, 0], sc[:, 1]
        scale = np.abs(self.weights).sum(axis=1)
        valid = (self.status == OK) & (np.hypot(m1, m2) > RESULTANT_TOL * scale)
        m = np.full(m1.shape, np.nan)
        m[valid] = np.mod(np.arctan2(m1[valid], m2[valid]), 2 * np.pi)
        return m1, m2, m, valid


def _single_fit(X, theta, bw, x) -> LocalFit:
    X = np.asarray(X, dtype=float)
    sm = LocalSmoother(X, np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1), bw)
    if sm.status[0] == EMPTY:
        raise EmptyNeighborhoodError(f"no observations within bandwidth {bw.h} of {x}")
    if sm.status[0] == SINGULAR:
        raise SingularDesignError(f"local design at {x} is singular even after ridge rescue")
    m1, m2, m, valid = sm.fit_angles(theta)
    if not valid[0]:
        raise EmptyNeighborhoodError(f"zero resultant in local fit at {x}; direction undefined")
    return LocalFit(float(m1[0]), float(m2[0]), wrap(float(m[0])), float(sm.weight_sum[0]))


def estimate_m(data: Dataset, bw: BandwidthSpec, x) -> LocalFit:
    """Nonparametric circular regression estimate at one point ``x``."""
    return _single_fit(data.covariates, data.responses, bw, x)


def smooth_parametric(data: Dataset, model: ParametricModel, bw: BandwidthSpec, x) -> LocalFit:
    """Smoothed parametric estimate: the same smoother applied to fitted values."""
    fitted = predict(model, data.covariates)
    return _single_fit(data.covariates, np.atleast_1d(fitted), bw, x)


def _eval_truth(true_m: Callable, X: np.ndarray) -> np.ndarray:
    arg = X[:, 0] if X.shape[1] == 1 else X
    try:
        vals = np.asarray(true_m(arg), dtype=float)
        if vals.shape == (X.shape[0],):
            return vals
    except (TypeError, ValueError):
        pass
    return np.array([float(true_m(x[0] if X.shape[1] == 1 else x)) for x in X])


def case_score(data: Dataset, bw: BandwidthSpec, true_m: Callable) -> float:
    """Circular average squared error of the estimate at the design points."""
    X = data.covariates
    sm = LocalSmoother(X, X, bw)
    if np.any(sm.status == EMPTY):
        raise EmptyNeighborhoodError("empty kernel window at a design point")
    if np.any(sm.status == SINGULAR):
        raise SingularDesignError("singular local design at a design point")
    _, _, m, valid = sm.fit_angles(data.responses)
    if not valid.all():
        raise EmptyNeighborhoodError("zero resultant at a design point")
    truth = _eval_truth(true_m, X)
    return float(np.mean(1.0 - np.cos(truth - m)))


def select_bandwidth_case(
    data: Dataset, true_m: Callable, candidates: Sequence[float], degree: int = 1
) -> float:
    """Candidate bandwidth minimising CASE; ties go to the smaller bandwidth."""
    cands = sorted(float(h) for h in candidates)
    if not cands:
        raise InvalidArgumentError("no candidate bandwidths")
    best_h, best_score, last_err = None, np.inf, None
    for h in cands:
        try:
            score = case_score(data, BandwidthSpec(h, degree), true_m)
        except (EmptyNeighborhoodError, SingularDesignError) as exc:
            last_err = exc
            continue
        if score < best_score:
            best_h, best_score = h, score
    if best_h is None:
        raise last_err
    return best_h
