"""Monotone Bernstein-polynomial link.

The curve is sum_j gamma_j * B_{j,J}(t) on t in [0, 1], where the
coefficients gamma_j = gamma_0 + cumsum(exp(eta)) are strictly increasing
by construction, so the curve is nondecreasing.  The index u is mapped
affinely onto [0, 1] from a range fixed before training and clamped
outside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError

__all__ = [
    "BernsteinParams",
    "BernsteinGradients",
    "bernstein_basis",
    "bern_coefficients",
    "bern_forward",
    "bern_backward",
    "bern_to_json",
    "bern_from_json",
]

BERN_SCHEMA = "simodal-bernstein-v1"


@dataclass
class BernsteinParams:
    """Degree-J monotone curve: base level, positive-increment logs, index range."""

    degree: int
    gamma0: float
    eta: np.ndarray
    u_lo: float
    u_hi: float

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float)
        if self.degree < 1 or self.eta.shape != (self.degree,):
            raise DomainError(
                f"eta must have length degree={self.degree}, got {self.eta.shape}"
            )
        if not self.u_lo < self.u_hi:
            raise DomainError(f"requires u_lo < u_hi, got [{self.u_lo}, {self.u_hi}]")

    def copy(self) -> "BernsteinParams":
        return BernsteinParams(self.degree, self.gamma0, self.eta.copy(),
                               self.u_lo, self.u_hi)


@dataclass
class BernsteinGradients:
    dgamma0: float
    deta: np.ndarray
    dinput: np.ndarray


def bernstein_basis(t, degree: int) -> np.ndarray:
    """Basis values B_{j,J}(t) = C(J,j) t^j (1-t)^(J-j), j = 0..J.

    Scalar t gives a (J+1,) vector; a length-n array gives (n, J+1).
    The components always sum to 1.
    """
    if degree < 1:
        raise DomainError(f"degree must be >= 1, got {degree}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError("bernstein_basis requires t in [0, 1]")
    scalar = t.ndim == 0
    t = np.atleast_1d(t)[:, None]
    j = np.arange(degree + 1)
    comb = np.array([math.comb(degree, int(k)) for k in j], dtype=float)
    # 0**0 = 1 at the endpoints under numpy's power, which is what we need.
    out = comb * t ** j * (1.0 - t) ** (degree - j)
    return out[0] if scalar else out


def bern_coefficients(params: BernsteinParams) -> np.ndarray:
    """Strictly increasing coefficients gamma_j = gamma0 + cumsum(exp(eta))."""
    gam = np.empty(params.degree + 1)
    gam[0] = params.gamma0
    gam[1:] = params.gamma0 + np.cumsum(np.exp(params.eta))
    return gam


def _to_unit(params: BernsteinParams, u: np.ndarray) -> np.ndarray:
    return np.clip((u - params.u_lo) / (params.u_hi - params.u_lo), 0.0, 1.0)


def bern_forward(params: BernsteinParams, u):
    """Curve value at index u; clamped to the endpoint values outside range."""
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    t = _to_unit(params, np.atleast_1d(u))
    basis = bernstein_basis(t, params.degree)
    out = basis @ bern_coefficients(params)
    return float(out[0]) if scalar else out


def bern_backward(params: BernsteinParams, u, dL_dg) -> BernsteinGradients:
    """Exact gradients of the loss through the curve.

    deta[l] collects exp(eta_l) * sum_{j >= l} B_j contributions; the input
    gradient is zero wherever u falls in a clamped region.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    dL_dg = np.atleast_1d(np.asarray(dL_dg, dtype=float))
    if dL_dg.shape != u.shape:
        raise DataError(f"dL_dg shape {dL_dg.shape} does not match u {u.shape}")
    J = params.degree
    t = _to_unit(params, u)
    basis = bernstein_basis(t, J)                      # (n, J+1)
    weighted = basis * dL_dg[:, None]
    col = weighted.sum(axis=0)                         # (J+1,)
    dgamma0 = float(col.sum())
    # dgamma_j / deta_l = exp(eta_l) for l <= j: reverse-cumulative sum.
    tail = np.cumsum(col[::-1])[::-1]                  # sum_{j >= l} col[j]
    deta = np.exp(params.eta) * tail[1:]
    # Curve derivative in t: J * sum_j (gamma_{j+1} - gamma_j) B_{j,J-1}(t).
    inc = np.exp(params.eta)                           # gamma_{j+1} - gamma_j
    basis_lower = bernstein_basis(t, J - 1) if J > 1 else np.ones((t.size, 1))
    dg_dt = J * (basis_lower @ inc)
    inside = (u > params.u_lo) & (u < params.u_hi)
    dinput = np.where(inside, dg_dt / (params.u_hi - params.u_lo), 0.0) * dL_dg
    return BernsteinGradients(dgamma0, deta, dinput)


def bern_to_json(params: BernsteinParams) -> dict:
    return {
        "schema": BERN_SCHEMA,
        "kind": "bernstein",
        "degree": int(params.degree),
        "gamma0": float(params.gamma0),
        "eta": params.eta.tolist(),
        "u_lo": float(params.u_lo),
        "u_hi": float(params.u_hi),
    }


def bern_from_json(doc: dict) -> BernsteinParams:
    if doc.get("schema") != BERN_SCHEMA:
        raise DataError(f"unsupported bernstein schema: {doc.get('schema')!r}")
    return BernsteinParams(
        degree=int(doc["degree"]),
        gamma0=float(doc["gamma0"]),
        eta=np.asarray(doc["eta"], dtype=float),
        u_lo=float(doc["u_lo"]),
        u_hi=float(doc["u_hi"]),
    )
