"""Feed-forward network with tanh hidden layers and an identity output.

In the positive-weight configuration the effective weights are
A(k) = exp(U(k)) elementwise, which keeps them strictly positive under
unconstrained optimization, and positive weights plus monotone activations
make the scalar map u -> G(u) strictly increasing.  The same machinery
with ``positive=False`` (weights used as-is, vector input allowed) serves
as the unconstrained multivariate network for the direct-regression
baseline.

Gradients are exact reverse-mode: the exp reparameterization contributes
dL/dU = dL/dA * A, and the input gradient is propagated so callers can
chain through the index coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError
from .numerics import RngStream

__all__ = [
    "NetConfig",
    "NetParams",
    "NetGradients",
    "init_params",
    "forward",
    "forward_batch",
    "backward",
    "predict_batch",
    "net_to_json",
    "net_from_json",
]

NET_SCHEMA = "simodal-net-v1"


@dataclass(frozen=True)
class NetConfig:
    """Hidden-layer widths; scalar input and output are implied."""

    widths: tuple[int, ...] = (512, 512)

    def __post_init__(self):
        if len(self.widths) < 1:
            raise DomainError("NetConfig requires at least one hidden layer")
        if any(int(h) < 1 for h in self.widths):
            raise DomainError(f"NetConfig widths must be >= 1, got {self.widths!r}")
        object.__setattr__(self, "widths", tuple(int(h) for h in self.widths))


@dataclass
class NetParams:
    """Unconstrained weight matrices U(k) of shape (h_k, h_{k-1}) and biases."""

    U: list
    b: list
    positive: bool = True

    @property
    def input_dim(self) -> int:
        return self.U[0].shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.U)

    def weights(self) -> list:
        """Effective weight matrices A(k)."""
        if self.positive:
            return [np.exp(u) for u in self.U]
        return [u for u in self.U]

    def copy(self) -> "NetParams":
        return NetParams([u.copy() for u in self.U], [b.copy() for b in self.b], self.positive)


@dataclass
class NetGradients:
    """Loss gradients mirroring NetParams, plus the per-row input gradient."""

    dU: list
    db: list
    dinput: np.ndarray


def init_params(config: NetConfig, rng: RngStream, input_dim: int = 1,
                positive: bool = True) -> NetParams:
    """Draw initial parameters.

    Positive nets take U ~ Normal(-ln h_in, sd^2) so effective weights
    center on 1/h_in (each layer roughly averages its inputs at the
    start); unconstrained nets use Normal(0, 1/h_in) weights.  The first
    hidden layer gets a wider spread (weight-log sd 0.5, bias sd 1) so its
    units start with diverse slopes and crossing points; under plain SGD
    the crossings barely migrate, and starting them all at zero caps how
    well wiggly links can be approximated.  Deeper layers use sd 0.1.
    """
    gen = rng.generator
    dims = [int(input_dim)] + [int(h) for h in config.widths] + [1]
    U, b = [], []
    for k in range(1, len(dims)):
        h_out, h_in = dims[k], dims[k - 1]
        u_sd, b_sd = (0.5, 1.0) if k == 1 else (0.1, 0.1)
        if positive:
            u = gen.normal(-np.log(h_in), u_sd, size=(h_out, h_in))
        else:
            u = gen.normal(0.0, 1.0 / np.sqrt(h_in), size=(h_out, h_in))
        U.append(u)
        b.append(gen.normal(0.0, b_sd, size=h_out))
    return NetParams(U, b, positive)


def _forward_core(params: NetParams, x: np.ndarray):
    """Unvalidated batch forward; ``x`` must be (n, input_dim) float64."""
    A = params.weights()
    zs = [x]
    z = x
    last = len(A) - 1
    for k, (a_k, b_k) in enumerate(zip(A, params.b)):
        pre = z @ a_k.T + b_k
        z = pre if k == last else np.tanh(pre)
        zs.append(z)
    return z[:, 0], (zs, A)


def make_eval_buffers(params: NetParams, n: int) -> list:
    """Reusable per-layer output buffers for repeated cache-free forwards."""
    return [np.empty((n, u.shape[0])) for u in params.U]


def _predict_into(params: NetParams, x: np.ndarray, bufs: list) -> np.ndarray:
    """Cache-free forward writing into preallocated buffers; identical
    arithmetic to _forward_core."""
    A = params.weights()
    z = x
    last = len(A) - 1
    for k, (a_k, b_k) in enumerate(zip(A, params.b)):
        buf = bufs[k]
        np.matmul(z, a_k.T, out=buf)
        buf += b_k
        if k != last:
            np.tanh(buf, out=buf)
        z = buf
    return z[:, 0]


def forward_batch(params: NetParams, x: np.ndarray):
    """Evaluate the network on a batch; returns (outputs, cache).

    ``x`` is (n,) for scalar-input nets or (n, input_dim).  The cache
    holds per-layer post-activations and effective weights for backward.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != params.input_dim:
        raise DataError(
            f"input has {x.shape[1]} columns, network expects {params.input_dim}"
        )
    if not np.all(np.isfinite(x)):
        raise DomainError("network input must be finite")
    return _forward_core(params, x)


def forward(params: NetParams, u: float):
    """Scalar evaluation; returns (g, cache)."""
    g, cache = forward_batch(params, np.array([u], dtype=float))
    return float(g[0]), cache


def predict_batch(params: NetParams, us: np.ndarray) -> np.ndarray:
    """Elementwise forward without retaining the cache."""
    us = np.asarray(us, dtype=float)
    if us.size == 0:
        return np.zeros(0)
    g, _ = forward_batch(params, us)
    return g


def backward(params: NetParams, cache, dL_dg: np.ndarray) -> NetGradients:
    """Reverse-mode gradients for a batch.

    ``dL_dg`` holds per-row gradients of the loss with respect to the
    network output; returned dU/db are summed over the batch and dinput
    keeps one row per input.
    """
    zs, A = cache
    dL_dg = np.asarray(dL_dg, dtype=float)
    n = zs[0].shape[0]
    if dL_dg.shape != (n,):
        raise DataError(f"dL_dg must have shape ({n},), got {dL_dg.shape}")
    delta = dL_dg[:, None]
    dU = [None] * len(A)
    db = [None] * len(A)
    for k in range(len(A) - 1, -1, -1):
        z_prev = zs[k]
        dA = delta.T @ z_prev
        db[k] = delta.sum(axis=0)
        dU[k] = dA * A[k] if params.positive else dA
        dz_prev = delta @ A[k]
        if k > 0:
            delta = dz_prev * (1.0 - zs[k] ** 2)
    dinput = dz_prev[:, 0] if params.input_dim == 1 else dz_prev
    return NetGradients(dU, db, dinput)


def net_to_json(params: NetParams) -> dict:
    """Serializable document: layer shapes plus row-major weight arrays."""
    return {
        "schema": NET_SCHEMA,
        "kind": "net",
        "positive": bool(params.positive),
        "shapes": [list(u.shape) for u in params.U],
        "layers": [
            {"U": u.tolist(), "b": b.tolist()} for u, b in zip(params.U, params.b)
        ],
    }


def net_from_json(doc: dict) -> NetParams:
    if doc.get("schema") != NET_SCHEMA:
        raise DataError(f"unsupported network schema: {doc.get('schema')!r}")
    U, b = [], []
    for shape, layer in zip(doc["shapes"], doc["layers"]):
        u = np.asarray(layer["U"], dtype=float)
        if list(u.shape) != list(shape):
            raise DataError(f"layer shape mismatch: {u.shape} vs {shape}")
        U.append(u)
        b.append(np.asarray(layer["b"], dtype=float))
    return NetParams(U, b, bool(doc["positive"]))
