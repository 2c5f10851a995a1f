"""Modal-regression likelihood, analytic gradients, and the SGD trainer.

A model is a link (monotone net on the index, Bernstein curve on the
index, or an unconstrained net on the full covariate vector) paired with
an error family (two-piece scale-t, two-piece scale-normal, normal, or
symmetric-t).  The optimizer works on unconstrained parameters:

    beta  = v / ||v||      (index direction, unit L2 norm)
    w     = sigmoid(a)     in (0, 1)
    sigma = exp(b)         > 0
    delta = 2 + exp(c)     > 2

Gradients through beta use the projection Jacobian (I - beta beta^T); v is
renormalized to unit length after every update, which leaves beta and its
Jacobian unchanged while keeping the state bounded.  Minibatch gradients
are gradients of the minibatch's summed negative log-likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import bernstein as bern
from . import monotone_net as mnet
from .errors import DataError, DomainError, NumericError, TrainingError
from .numerics import RngStream, _t_log_norm_const, digamma

__all__ = [
    "Dataset",
    "ModelSpec",
    "ParamVector",
    "TrainConfig",
    "FitResult",
    "GradVector",
    "negative_log_likelihood",
    "nll_gradient",
    "sgd_fit",
    "compute_index",
    "predict_mode",
    "residuals",
    "fit_to_json",
    "fit_from_json",
]

FIT_SCHEMA = "simodal-fit-v1"

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

LINKS = ("gx-d", "gx-b", "fx")
FAMILIES = ("st", "sn", "normal", "symt")
_FAMILY_PREFIX = {"st": "st", "sn": "sn", "normal": "n", "symt": "t"}
_PREFIX_FAMILY = {v: k for k, v in _FAMILY_PREFIX.items()}


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Response vector, covariate matrix, and column metadata."""

    y: np.ndarray
    X: np.ndarray
    columns: list = None
    standardization: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.y.ndim != 1 or self.X.ndim != 2 or self.y.shape[0] != self.X.shape[0]:
            raise DataError(
                f"incompatible shapes: y {self.y.shape}, X {self.X.shape}"
            )
        if self.n < 1 or self.p < 1:
            raise DataError("dataset requires n >= 1 and p >= 1")
        if not np.all(np.isfinite(self.y)):
            row = int(np.flatnonzero(~np.isfinite(self.y))[0])
            raise DataError(f"non-finite response at row {row}")
        if not np.all(np.isfinite(self.X)):
            row, col = map(int, np.argwhere(~np.isfinite(self.X))[0])
            raise DataError(f"non-finite covariate at row {row}, column {col}")
        if self.columns is None:
            self.columns = [f"x{j + 1}" for j in range(self.p)]
        if len(self.columns) != self.p:
            raise DataError("column names do not match covariate count")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.y[idx], self.X[idx], list(self.columns),
                       dict(self.standardization))


@dataclass(frozen=True)
class ModelSpec:
    """Which link and error family to fit, plus link hyperparameters."""

    link: str = "gx-d"
    error_family: str = "st"
    widths: tuple = (512, 512)
    degree: int = 50

    def __post_init__(self):
        if self.link not in LINKS:
            raise DomainError(f"unknown link {self.link!r}; expected one of {LINKS}")
        if self.error_family not in FAMILIES:
            raise DomainError(
                f"unknown error family {self.error_family!r}; expected one of {FAMILIES}"
            )
        object.__setattr__(self, "widths", tuple(int(h) for h in self.widths))

    @property
    def tag(self) -> str:
        return f"{_FAMILY_PREFIX[self.error_family]}-{self.link}"

    @classmethod
    def from_tag(cls, tag: str, widths=(512, 512), degree: int = 50) -> "ModelSpec":
        head, _, link = tag.strip().lower().partition("-")
        if head not in _PREFIX_FAMILY or link not in LINKS:
            raise DomainError(f"unknown model tag {tag!r}")
        return cls(link=link, error_family=_PREFIX_FAMILY[head],
                   widths=widths, degree=degree)

    def active_params(self) -> list:
        """Names of the error-family parameters the fit reports."""
        return {
            "st": ["w", "sigma", "delta"],
            "sn": ["w", "sigma"],
            "normal": ["sigma"],
            "symt": ["sigma", "delta"],
        }[self.error_family]


@dataclass
class ParamVector:
    """Unconstrained optimizer state: direction v, link parameters, and the
    scalar transforms a (w-logit), b (log sigma), c (log(delta - 2))."""

    v: np.ndarray
    link: object
    a: float
    b: float
    c: float

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        if np.linalg.norm(self.v) < 1e-8:
            raise DomainError("||v|| must be at least 1e-8")

    @property
    def beta(self) -> np.ndarray:
        return self.v / np.linalg.norm(self.v)

    @property
    def w(self) -> float:
        return 1.0 / (1.0 + math.exp(-self.a))

    @property
    def sigma(self) -> float:
        return math.exp(self.b)

    @property
    def delta(self) -> float:
        return 2.0 + math.exp(self.c)

    def copy(self) -> "ParamVector":
        return ParamVector(self.v.copy(), self.link.copy(), self.a, self.b, self.c)


@dataclass
class GradVector:
    """NLL gradients mirroring ParamVector."""

    dv: np.ndarray
    dlink: object
    da: float
    db: float
    dc: float


@dataclass(frozen=True)
class TrainConfig:
    """SGD settings.  The 3e-4 default keeps the stationary noise of the
    summed-minibatch updates small enough for calibrated estimates at the
    default batch size; 1e-3 measurably biases sigma upward."""

    epochs: int = 1000
    batch: int = 128
    lr: float = 3e-4
    seed: int = 0
    starts: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1 or self.lr <= 0 or self.starts < 1:
            raise DomainError(f"invalid training config: {self!r}")


@dataclass
class FitResult:
    spec: ModelSpec
    params: ParamVector
    config: TrainConfig
    learning_curve: list
    final_nll: float
    columns: list = None
    standardization: dict = field(default_factory=dict)

    @property
    def beta(self):
        """Unit-norm index coefficients; None for the full-covariate link."""
        return None if self.spec.link == "fx" else self.params.beta

    @property
    def w(self) -> float:
        return 0.5 if self.spec.error_family in ("normal", "symt") else self.params.w

    @property
    def sigma(self) -> float:
        return self.params.sigma

    @property
    def delta(self):
        return self.params.delta if self.spec.error_family in ("st", "symt") else None

    def estimates(self) -> dict:
        out = {}
        if self.beta is not None:
            for name, val in zip(self.columns or [], self.beta):
                out[name] = float(val)
        for name in self.spec.active_params():
            out[name] = float(getattr(self, name))
        return out


# ---------------------------------------------------------------------------
# Error-family log density and gradients
# ---------------------------------------------------------------------------

def _family_terms(family: str, d: np.ndarray, w: float, sigma: float,
                  delta: float, grads: bool = True):
    """Per-row log density of the residuals and, when requested, gradients
    with respect to (theta, w, sigma, delta).

    ``d`` holds y - theta; d >= 0 is assigned to the right branch.
    """
    if family in ("st", "sn"):
        r = math.sqrt((1.0 - w) / w)
        left = d < 0.0
        z = np.where(left, d * r, d / r) / sigma
        skew_const = math.log(2.0) + 0.5 * math.log(w * (1.0 - w))
    else:
        z = d / sigma
        left = None
        skew_const = 0.0

    z2 = z * z
    if family in ("st", "symt"):
        logf = (skew_const - math.log(sigma) + _t_log_norm_const(delta)
                - 0.5 * (delta + 1.0) * np.log1p(z2 / delta))
        q = (delta + 1.0) * z / (delta + z2)
    else:
        logf = skew_const - math.log(sigma) - _HALF_LOG_2PI - 0.5 * z2
        q = z
    if not grads:
        return logf, None

    qz = q * z
    if family in ("st", "sn"):
        r_branch = np.where(left, r, 1.0 / r)
        d_theta = q * r_branch / sigma
        sign = np.where(left, 1.0, -1.0)
        d_w = ((1.0 - 2.0 * w) + sign * qz) / (2.0 * w * (1.0 - w))
    else:
        d_theta = q / sigma
        d_w = np.zeros_like(z)
    d_sigma = (qz - 1.0) / sigma
    if family in ("st", "symt"):
        dconst = (0.5 * digamma((delta + 1.0) / 2.0) - 0.5 * digamma(delta / 2.0)
                  - 0.5 / delta)
        d_delta = (dconst - 0.5 * np.log1p(z2 / delta)
                   + (delta + 1.0) * z2 / (2.0 * delta * (delta + z2)))
    else:
        d_delta = np.zeros_like(z)
    return logf, (d_theta, d_w, d_sigma, d_delta)


def _thetas(spec: ModelSpec, params: ParamVector, X: np.ndarray):
    """Per-row mode parameter theta_i, the link cache, and the index values.

    ``X`` must be a validated (n, p) float64 matrix (Dataset guarantees it).
    """
    if spec.link == "fx":
        theta, cache = mnet._forward_core(params.link, X)
        return theta, cache, None
    u = X @ params.beta
    if spec.link == "gx-d":
        theta, cache = mnet._forward_core(params.link, u[:, None])
    else:
        theta = bern.bern_forward(params.link, u)
        cache = None
    return theta, cache, u


def negative_log_likelihood(spec: ModelSpec, params: ParamVector,
                            data: Dataset) -> float:
    """Summed negative log density of the responses under the model."""
    theta, _, _ = _thetas(spec, params, data.X)
    if not np.all(np.isfinite(theta)):
        row = int(np.flatnonzero(~np.isfinite(theta))[0])
        raise NumericError(f"non-finite model mode at row {row}")
    logf, _ = _family_terms(spec.error_family, data.y - theta, params.w,
                            params.sigma, params.delta, grads=False)
    if not np.all(np.isfinite(logf)):
        row = int(np.flatnonzero(~np.isfinite(logf))[0])
        raise NumericError(f"non-finite log-likelihood at row {row}")
    return float(-np.sum(logf))


def nll_gradient(spec: ModelSpec, params: ParamVector, y: np.ndarray,
                 X: np.ndarray) -> GradVector:
    """Gradient of the summed NLL of the given rows."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if y.size == 0:
        raise DataError("nll_gradient requires a non-empty batch")
    theta, cache, u = _thetas(spec, params, X)
    logf, (d_theta, d_w, d_sigma, d_delta) = _family_terms(
        spec.error_family, y - theta, params.w, params.sigma, params.delta
    )
    if not np.all(np.isfinite(logf)):
        row = int(np.flatnonzero(~np.isfinite(logf))[0])
        raise NumericError(f"non-finite log-likelihood at row {row}")

    dL_dtheta = -d_theta  # NLL = -sum(logf)

    if spec.link in ("gx-d", "fx"):
        link_grads = mnet.backward(params.link, cache, dL_dtheta)
        dL_du = link_grads.dinput
    else:
        link_grads = bern.bern_backward(params.link, u, dL_dtheta)
        dL_du = link_grads.dinput

    if spec.link == "fx":
        dv = np.zeros_like(params.v)
    else:
        beta = params.beta
        raw = X.T @ dL_du
        dv = (raw - beta * (beta @ raw)) / np.linalg.norm(params.v)

    w, sigma, delta = params.w, params.sigma, params.delta
    family = spec.error_family
    da = float(-np.sum(d_w) * w * (1.0 - w)) if family in ("st", "sn") else 0.0
    db = float(-np.sum(d_sigma) * sigma)
    dc = float(-np.sum(d_delta) * (delta - 2.0)) if family in ("st", "symt") else 0.0
    return GradVector(dv, link_grads, da, db, dc)


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------

def _ols_direction(data: Dataset):
    """Least-squares slope of y on X (with intercept) and the residual sd;
    the standard warm start for index models."""
    Xa = np.column_stack([np.ones(data.n), data.X])
    coef, *_ = np.linalg.lstsq(Xa, data.y, rcond=None)
    v = coef[1:]
    resid = data.y - Xa @ coef
    sd = float(np.std(resid))
    if not np.isfinite(sd) or sd < 1e-3:
        sd = 1e-3
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm < 1e-10:
        v = np.ones(data.p)
    return v / np.linalg.norm(v), sd


def _init_param_vector(spec: ModelSpec, data: Dataset, rng: RngStream,
                       random_direction: bool) -> ParamVector:
    v, resid_sd = _ols_direction(data)
    if random_direction:
        v = rng.generator.standard_normal(data.p)
        v /= np.linalg.norm(v)
    if spec.link == "gx-d":
        link = mnet.init_params(mnet.NetConfig(spec.widths), rng)
    elif spec.link == "fx":
        link = mnet.init_params(mnet.NetConfig(spec.widths), rng,
                                input_dim=data.p, positive=False)
    else:
        u0 = data.X @ v
        lo, hi = float(np.min(u0)), float(np.max(u0))
        span = hi - lo if hi > lo else 1.0
        lo, hi = lo - 0.1 * span, hi + 0.1 * span
        y_range = float(np.max(data.y) - np.min(data.y))
        inc = max(y_range, 1e-3) / spec.degree
        link = bern.BernsteinParams(
            degree=spec.degree,
            gamma0=float(np.min(data.y)),
            eta=np.full(spec.degree, np.log(inc)),
            u_lo=lo,
            u_hi=hi,
        )
    return ParamVector(v=v, link=link, a=0.0, b=math.log(resid_sd), c=math.log(8.0))


def _apply_update(spec: ModelSpec, params: ParamVector, g: GradVector,
                  lr: float) -> None:
    if spec.link in ("gx-d", "fx"):
        for u_mat, du in zip(params.link.U, g.dlink.dU):
            u_mat -= lr * du
        for b_vec, db in zip(params.link.b, g.dlink.db):
            b_vec -= lr * db
    else:
        params.link.gamma0 -= lr * g.dlink.dgamma0
        params.link.eta -= lr * g.dlink.deta
    params.a -= lr * g.da
    params.b -= lr * g.db
    params.c -= lr * g.dc
    if spec.link != "fx":
        params.v -= lr * g.dv
        params.v /= np.linalg.norm(params.v)


def _fold_affine(spec: ModelSpec, params: ParamVector, shift: float,
                 scale: float) -> None:
    """Rewrite the link so theta_new = scale * theta_old + shift and bump
    sigma by the same scale.  Exact for these location-scale families, so
    training on a standardized response loses nothing."""
    link = params.link
    if spec.link == "gx-d":
        link.U[-1] += math.log(scale)
        link.b[-1] = scale * link.b[-1] + shift
    elif spec.link == "fx":
        link.U[-1] *= scale
        link.b[-1] = scale * link.b[-1] + shift
    else:
        link.gamma0 = scale * link.gamma0 + shift
        link.eta += math.log(scale)
    params.b += math.log(scale)


def _fold_covariates(spec: ModelSpec, params: ParamVector, mu: np.ndarray,
                     s: np.ndarray) -> None:
    """Rewrite everything trained on standardized covariates back to raw
    units.  The index seen in training is c * beta_raw^T x - d with c > 0,
    so the correction is an increasing affine map absorbed exactly by the
    link's input layer (or the Bernstein index range)."""
    link = params.link
    if spec.link == "fx":
        a1 = link.U[0]
        link.b[0] = link.b[0] - a1 @ (mu / s)
        link.U[0] = a1 / s[None, :]
        return
    t = params.beta / s
    c = float(np.linalg.norm(t))
    d = float(params.beta @ (mu / s))
    params.v = t / c
    if spec.link == "gx-d":
        link.b[0] = link.b[0] - d * np.exp(link.U[0][:, 0])
        link.U[0] += math.log(c)
    else:
        link.u_lo = (link.u_lo + d) / c
        link.u_hi = (link.u_hi + d) / c


def _fit_single(spec: ModelSpec, data: Dataset, config: TrainConfig,
                rng: RngStream, random_direction: bool) -> FitResult:
    # Train against a standardized response and standardized covariates so
    # every direction learns at a comparable rate and the link's initial
    # output range matches the targets; both affine maps are folded back
    # exactly afterwards, so reported estimates are in raw units.
    shift = float(np.mean(data.y))
    scale = float(np.std(data.y))
    if not np.isfinite(scale) or scale < 1e-8:
        scale = 1.0
    mu = data.X.mean(axis=0)
    s = data.X.std(axis=0)
    s = np.where(np.isfinite(s) & (s > 1e-8), s, 1.0)
    work = Dataset((data.y - shift) / scale, (data.X - mu) / s,
                   list(data.columns), dict(data.standardization))
    # -sum log f_y = -sum log f_z + n log(scale): record curve in y units.
    offset = data.n * math.log(scale)

    params = _init_param_vector(spec, work, rng, random_direction)
    curve = []
    n = work.n
    y, X = work.y, work.X
    if spec.link in ("gx-d", "fx"):
        bufs = mnet.make_eval_buffers(params.link, n)
    else:
        bufs = None

    def epoch_nll() -> float:
        if spec.link == "fx":
            theta = mnet._predict_into(params.link, X, bufs)
        elif spec.link == "gx-d":
            theta = mnet._predict_into(params.link, (X @ params.beta)[:, None], bufs)
        else:
            theta = bern.bern_forward(params.link, X @ params.beta)
        logf, _ = _family_terms(spec.error_family, y - theta, params.w,
                                params.sigma, params.delta, grads=False)
        total = float(-np.sum(logf))
        if not np.isfinite(total):
            bad = ~np.isfinite(logf)
            row = int(np.flatnonzero(bad)[0]) if bad.any() else -1
            raise NumericError(f"non-finite log-likelihood at row {row}")
        return total + offset

    # Single-threaded BLAS: faster for these small matrices and keeps the
    # reduction order fixed regardless of ambient thread settings.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"), \
            threadpool_limits(limits=1, user_api="blas"):
        for epoch in range(config.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, config.batch):
                idx = perm[start:start + config.batch]
                g = nll_gradient(spec, params, y[idx], X[idx])
                _apply_update(spec, params, g, config.lr)
            try:
                nll = epoch_nll()
            except NumericError as exc:
                raise TrainingError(
                    f"training diverged at epoch {epoch}: {exc}",
                    last_good_epoch=epoch - 1, curve=curve,
                ) from exc
            curve.append(nll)
    params = params.copy()
    _fold_covariates(spec, params, mu, s)
    _fold_affine(spec, params, shift, scale)
    return FitResult(
        spec=spec,
        params=params,
        config=config,
        learning_curve=curve,
        final_nll=curve[-1],
        columns=list(data.columns),
        standardization=dict(data.standardization),
    )


def sgd_fit(spec: ModelSpec, data: Dataset, config: TrainConfig,
            rng: RngStream) -> FitResult:
    """Minibatch SGD on the summed NLL; deterministic given (seed, data,
    config).  With ``config.starts > 1``, runs extra fits from random
    directions and keeps the lowest final NLL."""
    best = None
    for s in range(config.starts):
        fit = _fit_single(spec, data, config, rng.substream(s),
                          random_direction=(s > 0))
        if best is None or fit.final_nll < best.final_nll:
            best = fit
    return best


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def compute_index(beta: np.ndarray, x: np.ndarray):
    """Index value beta^T x; accepts a single row or a matrix of rows.

    No unit-norm check so published (rounded) coefficients can be used.
    """
    beta = np.asarray(beta, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != beta.shape[0]:
            raise DataError(f"length mismatch: beta {beta.shape[0]}, x {x.shape[0]}")
        return float(x @ beta)
    if x.shape[1] != beta.shape[0]:
        raise DataError(f"length mismatch: beta {beta.shape[0]}, x {x.shape[1]}")
    return x @ beta


def predict_mode(fit: FitResult, x: np.ndarray):
    """Predicted conditional mode at covariate row(s) x."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    theta, _, _ = _thetas(fit.spec, fit.params, X)
    return float(theta[0]) if single else theta


def residuals(fit: FitResult, data: Dataset) -> np.ndarray:
    """y - predicted mode, rowwise."""
    return data.y - predict_mode(fit, data.X)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def fit_to_json(fit: FitResult) -> dict:
    if fit.spec.link in ("gx-d", "fx"):
        link_doc = mnet.net_to_json(fit.params.link)
    else:
        link_doc = bern.bern_to_json(fit.params.link)
    return {
        "schema": FIT_SCHEMA,
        "model": fit.spec.tag,
        "widths": list(fit.spec.widths),
        "degree": int(fit.spec.degree),
        "columns": list(fit.columns) if fit.columns else None,
        "standardization": {k: list(v) for k, v in fit.standardization.items()},
        "estimates": fit.estimates(),
        "beta": None if fit.beta is None else [float(b) for b in fit.beta],
        "final_nll": float(fit.final_nll),
        "learning_curve": [float(v) for v in fit.learning_curve],
        "train": {
            "epochs": fit.config.epochs,
            "batch": fit.config.batch,
            "lr": fit.config.lr,
            "seed": fit.config.seed,
            "starts": fit.config.starts,
        },
        "params": {
            "v": [float(v) for v in fit.params.v],
            "a": float(fit.params.a),
            "b": float(fit.params.b),
            "c": float(fit.params.c),
            "link": link_doc,
        },
    }


def fit_from_json(doc: dict) -> FitResult:
    if doc.get("schema") != FIT_SCHEMA:
        raise DataError(f"unsupported fit schema: {doc.get('schema')!r}")
    spec = ModelSpec.from_tag(doc["model"], widths=tuple(doc["widths"]),
                              degree=int(doc["degree"]))
    link_doc = doc["params"]["link"]
    if link_doc.get("kind") == "net":
        link = mnet.net_from_json(link_doc)
    else:
        link = bern.bern_from_json(link_doc)
    params = ParamVector(
        v=np.asarray(doc["params"]["v"], dtype=float),
        link=link,
        a=float(doc["params"]["a"]),
        b=float(doc["params"]["b"]),
        c=float(doc["params"]["c"]),
    )
    train = doc["train"]
    config = TrainConfig(epochs=int(train["epochs"]), batch=int(train["batch"]),
                         lr=float(train["lr"]), seed=int(train["seed"]),
                         starts=int(train.get("starts", 1)))
    return FitResult(
        spec=spec,
        params=params,
        config=config,
        learning_curve=[float(v) for v in doc.get("learning_curve", [])],
        final_nll=float(doc["final_nll"]),
        columns=doc.get("columns"),
        standardization={k: tuple(v) for k, v in
                         (doc.get("standardization") or {}).items()},
    )
