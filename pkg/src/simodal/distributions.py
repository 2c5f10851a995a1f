"""Error families for modal regression: two-piece scale Student-t (ST),
two-piece scale normal (SN), and the asymmetric Laplace (ALD).

The ST density mixes a left-truncated and a right-truncated Student-t that
share their mode theta::

    f(x) = w * (2 / s_L) * f_t((x - theta) / s_L | delta)      for x < theta
         = (1 - w) * (2 / s_R) * f_t((x - theta) / s_R | delta) for x >= theta

with branch scales s_L = sigma * sqrt(w / (1 - w)) and
s_R = sigma * sqrt((1 - w) / w).  Both branches evaluate to
2 * sqrt(w (1 - w)) * f_t(0 | delta) / sigma at theta, so the density is
continuous and theta is its global mode.  w > 0.5 puts more mass below
theta (left skew); delta controls tail weight; the SN family is the
delta -> infinity limit.  Points exactly at theta are assigned to the
right branch for determinism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .numerics import (
    RngStream,
    _t_log_norm_const,
    normal_logpdf,
    sample_exponential,
    sample_student_t,
)

__all__ = [
    "STParams",
    "SNParams",
    "ALDParams",
    "st_logpdf",
    "st_pdf",
    "st_sample",
    "st_mode",
    "sn_logpdf",
    "sn_pdf",
    "sn_sample",
    "ald_logpdf",
    "ald_sample",
]

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class STParams:
    """Two-piece scale Student-t parameters (skew weight, mode, scale, dof)."""

    w: float
    theta: float
    sigma: float
    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.w) and 0.0 < self.w < 1.0):
            raise DomainError(f"ST requires 0 < w < 1, got {self.w!r}")
        if not (np.isfinite(self.theta)):
            raise DomainError(f"ST requires finite theta, got {self.theta!r}")
        if not (np.isfinite(self.sigma) and self.sigma > 0.0):
            raise DomainError(f"ST requires sigma > 0, got {self.sigma!r}")
        if not (np.isfinite(self.delta) and self.delta > 2.0):
            raise DomainError(f"ST requires delta > 2, got {self.delta!r}")


@dataclass(frozen=True)
class SNParams:
    """Two-piece scale normal parameters (delta -> infinity limit of ST)."""

    w: float
    theta: float
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.w) and 0.0 < self.w < 1.0):
            raise DomainError(f"SN requires 0 < w < 1, got {self.w!r}")
        if not np.isfinite(self.theta):
            raise DomainError(f"SN requires finite theta, got {self.theta!r}")
        if not (np.isfinite(self.sigma) and self.sigma > 0.0):
            raise DomainError(f"SN requires sigma > 0, got {self.sigma!r}")


@dataclass(frozen=True)
class ALDParams:
    """Asymmetric Laplace parameters: location mu, scale sigma, skewness p."""

    mu: float
    sigma: float
    p: float

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise DomainError(f"ALD requires finite mu, got {self.mu!r}")
        if not (np.isfinite(self.sigma) and self.sigma > 0.0):
            raise DomainError(f"ALD requires sigma > 0, got {self.sigma!r}")
        if not (np.isfinite(self.p) and 0.0 < self.p < 1.0):
            raise DomainError(f"ALD requires 0 < p < 1, got {self.p!r}")


def _branch_z(x: np.ndarray, w: float, theta: float, sigma: float) -> np.ndarray:
    """Standardized residual under the branch the point falls in.

    Left branch (x < theta) divides by s_L, right branch by s_R; returns
    z = (x - theta) / s_branch.
    """
    d = x - theta
    r_left = math.sqrt((1.0 - w) / w)
    return np.where(d < 0.0, d * r_left, d / r_left) / sigma


def st_logpdf(x, params: STParams):
    """Log density of the ST distribution; finite for all finite x."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("st_logpdf requires finite x")
    w, theta, sigma, delta = params.w, params.theta, params.sigma, params.delta
    z = _branch_z(x, w, theta, sigma)
    out = (
        math.log(2.0)
        + 0.5 * math.log(w * (1.0 - w))
        - math.log(sigma)
        + _t_log_norm_const(delta)
        - 0.5 * (delta + 1.0) * np.log1p(z * z / delta)
    )
    return float(out) if out.ndim == 0 else out


def st_pdf(x, params: STParams):
    return np.exp(st_logpdf(x, params))


def st_mode(params: STParams) -> float:
    """Global mode; the location parameter by construction."""
    return params.theta


def st_sample(rng: RngStream, params: STParams, n: int) -> np.ndarray:
    """i.i.d. ST draws via the truncated-t mixture.

    With probability w emit theta - s_L * |T|, otherwise theta + s_R * |T|,
    T ~ Student-t(delta).
    """
    if n < 1:
        raise DomainError(f"st_sample requires n >= 1, got {n!r}")
    w, theta, sigma, delta = params.w, params.theta, params.sigma, params.delta
    s_left = sigma * math.sqrt(w / (1.0 - w))
    s_right = sigma * math.sqrt((1.0 - w) / w)
    below = rng.generator.uniform(0.0, 1.0, n) < w
    mag = np.abs(sample_student_t(rng, delta, n))
    return np.where(below, theta - s_left * mag, theta + s_right * mag)


def sn_logpdf(x, params: SNParams):
    """Log density of the two-piece scale normal."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("sn_logpdf requires finite x")
    w, theta, sigma = params.w, params.theta, params.sigma
    z = _branch_z(x, w, theta, sigma)
    out = (
        math.log(2.0)
        + 0.5 * math.log(w * (1.0 - w))
        - math.log(sigma)
        + normal_logpdf(z)
    )
    return float(out) if np.ndim(out) == 0 else out


def sn_pdf(x, params: SNParams):
    return np.exp(sn_logpdf(x, params))


def sn_sample(rng: RngStream, params: SNParams, n: int) -> np.ndarray:
    """i.i.d. SN draws using half-normal magnitudes."""
    if n < 1:
        raise DomainError(f"sn_sample requires n >= 1, got {n!r}")
    w, theta, sigma = params.w, params.theta, params.sigma
    s_left = sigma * math.sqrt(w / (1.0 - w))
    s_right = sigma * math.sqrt((1.0 - w) / w)
    below = rng.generator.uniform(0.0, 1.0, n) < w
    mag = np.abs(rng.generator.standard_normal(n))
    return np.where(below, theta - s_left * mag, theta + s_right * mag)


def ald_logpdf(x, params: ALDParams):
    """Log density p(1-p)/sigma * exp(-rho_p((x - mu)/sigma)) with the
    check function rho_p(u) = u * (p - I(u < 0))."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("ald_logpdf requires finite x")
    mu, sigma, p = params.mu, params.sigma, params.p
    u = (x - mu) / sigma
    rho = u * (p - (u < 0.0))
    out = math.log(p * (1.0 - p)) - math.log(sigma) - rho
    return float(out) if out.ndim == 0 else out


def ald_sample(rng: RngStream, params: ALDParams, n: int) -> np.ndarray:
    """i.i.d. ALD draws from the two-exponential mixture.

    With probability p emit mu - Exp(rate (1-p)/sigma), otherwise
    mu + Exp(rate p/sigma); the left-tail mass is exactly p.
    """
    if n < 1:
        raise DomainError(f"ald_sample requires n >= 1, got {n!r}")
    mu, sigma, p = params.mu, params.sigma, params.p
    below = rng.generator.uniform(0.0, 1.0, n) < p
    left = sample_exponential(rng, sigma / (1.0 - p), n)
    right = sample_exponential(rng, sigma / p, n)
    return np.where(below, mu - left, mu + right)
