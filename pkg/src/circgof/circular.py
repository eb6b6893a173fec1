"""Angle arithmetic and basic circular statistics.

All angles are radians. Functions accept scalars or array-likes and
return numpy values; wrapped angles always lie in ``[0, 2*pi)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import i0e, i1e

from .errors import DegenerateDirectionError, InvalidArgumentError

TWO_PI = 2.0 * np.pi
RESULTANT_TOL = 1e-12
KAPPA_MAX = 1e6


def wrap(x):
    """Reduce angles modulo ``2*pi`` into ``[0, 2*pi)``."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("angle must be finite")
    out = np.mod(arr, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    out = np.where(out >= TWO_PI, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def circ_dist(a, b):
    """Circular distance ``1 - cos(a - b)``, in ``[0, 2]``."""
    d = 1.0 - np.cos(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if np.ndim(d) == 0:
        return float(d)
    return d


def mean_direction(angles, weights=None) -> float:
    """Mean direction ``atan2(sum sin, sum cos)`` wrapped to ``[0, 2*pi)``.

    Raises DegenerateDirectionError when both resultant components are
    within ``RESULTANT_TOL`` of zero.
    """
    theta = np.asarray(angles, dtype=float).ravel()
    if theta.size == 0:
        raise InvalidArgumentError("mean_direction needs at least one angle")
    w = np.ones_like(theta) if weights is None else np.asarray(weights, dtype=float)
    s = float(np.sum(w * np.sin(theta)))
    c = float(np.sum(w * np.cos(theta)))
    if abs(s) <= RESULTANT_TOL and abs(c) <= RESULTANT_TOL:
        raise DegenerateDirectionError("zero resultant length; mean direction undefined")
    return wrap(np.arctan2(s, c))


def resultant_length(angles) -> float:
    """Mean resultant length of a sample of angles."""
    theta = np.asarray(angles, dtype=float).ravel()
    return float(np.hypot(np.mean(np.sin(theta)), np.mean(np.cos(theta))))


def bessel_ratio(kappa):
    """A1(kappa) = I1(kappa) / I0(kappa)."""
    return i1e(kappa) / i0e(kappa)


def a1inv(rbar: float, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Invert the Bessel ratio, returning kappa with A1(kappa) = rbar.

    Newton iterations from Fisher's approximate inverse; the result is
    clipped to ``[0, KAPPA_MAX]``.
    """
    if rbar <= 0:
        return 0.0
    if rbar >= bessel_ratio(KAPPA_MAX):
        return KAPPA_MAX
    # starting value from Fisher (1993)
    if rbar < 0.53:
        k = 2 * rbar + rbar**3 + 5 * rbar**5 / 6
    elif rbar < 0.85:
        k = -0.4 + 1.39 * rbar + 0.43 / (1 - rbar)
    else:
        k = 1 / (rbar**3 - 4 * rbar**2 + 3 * rbar)
    for _ in range(max_iter):
        a = bessel_ratio(k)
        deriv = 1.0 - a / k - a * a
        if deriv <= 0:
            break
        step = (a - rbar) / deriv
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2
        if abs(k_new - k) <= tol * max(1.0, k):
            k = k_new
            break
        k = k_new
    return float(min(max(k, 0.0), KAPPA_MAX))


@dataclass(frozen=True)
class VonMisesParams:
    mu: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise InvalidArgumentError(f"kappa must be nonnegative, got {self.kappa}")
        object.__setattr__(self, "mu", wrap(self.mu))


def sample_von_mises(params: VonMisesParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. angles from vM(mu, kappa).

    Uses numpy's exact Best-Fisher sampler; kappa == 0 gives the
    circular uniform law.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    if params.kappa == 0:
        return rng.uniform(0.0, TWO_PI, size=n)
    return wrap(rng.vonmises(params.mu, params.kappa, size=n))
