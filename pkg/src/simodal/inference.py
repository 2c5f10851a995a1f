"""Parametric-bootstrap uncertainty quantification, model selection, and
diagnostics.

The bootstrap simulates responses from the fitted error law at the fitted
per-row modes and refits from scratch.  ``chained`` mode draws replicate b
from the (b-1)-th estimates (replicate 0 being the original fit), so the
replicate sequence is a random walk of estimates; ``classic`` mode always
simulates from the original fit.  Chained spread grows with B, which is
why standard-error calibration work should use classic mode.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import monotone_net as mnet
from .distributions import STParams, SNParams, st_sample, sn_sample
from .errors import DataError, DomainError, TrainingError
from .estimation import (
    Dataset,
    FitResult,
    ModelSpec,
    TrainConfig,
    predict_mode,
    residuals,
    sgd_fit,
)
from .numerics import RngStream, _t_log_norm_const, sample_student_t

__all__ = [
    "BootstrapResult",
    "CIRecord",
    "DiagnosticResult",
    "parametric_bootstrap",
    "ci_quantiles",
    "pointwise_band_g",
    "model_select",
    "kfold_cv",
    "residual_diagnostic",
    "simulate_responses",
]


@dataclass
class BootstrapResult:
    """Per-replicate estimates from Algorithm-style parametric bootstrap.

    ``betas`` is (B_ok, p) (empty for fx fits); failed replicate ids are
    kept so B accounting stays explicit.
    """

    requested_B: int
    mode: str
    fit0: FitResult
    betas: np.ndarray
    ws: np.ndarray
    sigmas: np.ndarray
    deltas: np.ndarray
    links: list
    replicate_ids: list
    failed_ids: list = field(default_factory=list)

    @property
    def B(self) -> int:
        return self.requested_B

    @property
    def n_ok(self) -> int:
        return len(self.replicate_ids)

    def parameter_draws(self) -> dict:
        """Name -> replicate vector for every reported parameter."""
        out = {}
        p = self.betas.shape[1] if self.betas.size else 0
        cols = self.fit0.columns or [f"x{j+1}" for j in range(p)]
        for j in range(p):
            out[cols[j]] = self.betas[:, j]
        for name, arr in (("w", self.ws), ("sigma", self.sigmas),
                          ("delta", self.deltas)):
            if name in self.fit0.spec.active_params():
                out[name] = arr
        return out


@dataclass
class CIRecord:
    """Quantile confidence interval for one parameter."""

    name: str
    estimate: float
    lower: float
    upper: float
    outside: bool = False  # estimate fell outside its own interval

    def __post_init__(self):
        if self.lower > self.upper:
            raise DomainError(
                f"malformed CI for {self.name}: lower {self.lower} > upper {self.upper}"
            )
        self.outside = not (self.lower <= self.estimate <= self.upper)


def simulate_responses(fit: FitResult, X: np.ndarray, rng: RngStream) -> np.ndarray:
    """Draw y from the fitted error family at the fitted per-row modes."""
    theta = predict_mode(fit, X)
    n = theta.shape[0]
    family = fit.spec.error_family
    if family == "st":
        e = st_sample(rng, STParams(fit.w, 0.0, fit.sigma, fit.delta), n)
    elif family == "sn":
        e = sn_sample(rng, SNParams(fit.w, 0.0, fit.sigma), n)
    elif family == "normal":
        e = fit.sigma * rng.generator.standard_normal(n)
    else:
        e = fit.sigma * sample_student_t(rng, fit.delta, n)
    return theta + e


def _map_by_id(fn, ids, threads: int):
    """Run fn over task ids, merging results in id order; serial and
    threaded execution produce identical output.

    The BLAS pool is pinned to one thread for the whole section before
    workers start, so the per-fit pin inside sgd_fit cannot race another
    worker's save/restore back to a multithreaded state.
    """
    if threads <= 1:
        return [fn(i) for i in ids]
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1, user_api="blas"):
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, ids))


def parametric_bootstrap(fit0: FitResult, data: Dataset, B: int,
                         config: TrainConfig, rng: RngStream,
                         mode: str = "chained", threads: int = 1) -> BootstrapResult:
    """Refit B simulated datasets; failed replicates are retried once with
    a derived sub-seed and then recorded (never silently dropped).

    Classic replicates are independent and may run on ``threads`` workers;
    chained mode is inherently sequential and ignores ``threads``.
    """
    if B < 1:
        raise DomainError(f"bootstrap requires B >= 1, got {B}")
    if mode not in ("chained", "classic"):
        raise DomainError(f"unknown bootstrap mode {mode!r}")

    def one(b: int, source: FitResult):
        sub = rng.substream(b)
        for attempt in (0, 1):
            try:
                y_b = simulate_responses(source, data.X, sub.substream(attempt))
                boot_data = Dataset(y_b, data.X, list(data.columns),
                                    dict(data.standardization))
                return sgd_fit(fit0.spec, boot_data, config,
                               sub.substream(10 + attempt))
            except TrainingError:
                continue
        return None

    if mode == "classic":
        results = _map_by_id(lambda b: one(b, fit0), range(1, B + 1), threads)
    else:
        results = []
        source = fit0
        for b in range(1, B + 1):
            fit_b = one(b, source)
            results.append(fit_b)
            if fit_b is not None:
                source = fit_b

    betas, ws, sigmas, deltas, links, ok_ids, failed = [], [], [], [], [], [], []
    for b, fit_b in zip(range(1, B + 1), results):
        if fit_b is None:
            failed.append(b)
            warnings.warn(f"bootstrap replicate {b} failed twice; recorded as failure")
            continue
        ok_ids.append(b)
        betas.append(fit_b.beta if fit_b.beta is not None else np.zeros(0))
        ws.append(fit_b.w)
        sigmas.append(fit_b.sigma)
        deltas.append(fit_b.delta if fit_b.delta is not None else np.nan)
        links.append(fit_b.params)
    return BootstrapResult(
        requested_B=B,
        mode=mode,
        fit0=fit0,
        betas=np.asarray(betas),
        ws=np.asarray(ws),
        sigmas=np.asarray(sigmas),
        deltas=np.asarray(deltas),
        links=links,
        replicate_ids=ok_ids,
        failed_ids=failed,
    )


def ci_quantiles(boot: BootstrapResult, level: float = 0.90) -> list:
    """Per-parameter empirical quantile CIs (linear interpolation between
    order statistics)."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must be in (0, 1), got {level}")
    if boot.n_ok == 0:
        raise DataError("bootstrap produced no successful replicates")
    if boot.n_ok < 20:
        warnings.warn(
            f"only {boot.n_ok} bootstrap replicates; quantile CIs are unstable"
        )
    alpha = (1.0 - level) / 2.0
    estimates = boot.fit0.estimates()
    records = []
    for name, draws in boot.parameter_draws().items():
        lo, hi = np.quantile(draws, [alpha, 1.0 - alpha], method="linear")
        records.append(CIRecord(name, float(estimates[name]), float(lo), float(hi)))
    return records


def pointwise_band_g(boot: BootstrapResult, u_grid: np.ndarray,
                     level: float = 0.90) -> dict:
    """Pointwise quantile band of the replicate link curves on a grid.

    Returns arrays (u, lower, point, upper); point is the replicate median,
    so a single replicate collapses the band onto its own curve.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    if u_grid.size == 0:
        raise DataError("pointwise_band_g requires a non-empty grid")
    if boot.n_ok == 0:
        raise DataError("bootstrap produced no successful replicates")
    if boot.fit0.spec.link == "fx":
        raise DomainError("pointwise bands require a single-index link")
    curves = np.empty((boot.n_ok, u_grid.size))
    for i, params in enumerate(boot.links):
        curves[i] = _link_curve(boot.fit0.spec, params, u_grid)
    alpha = (1.0 - level) / 2.0
    lower, point, upper = np.quantile(
        curves, [alpha, 0.5, 1.0 - alpha], axis=0, method="linear"
    )
    return {"u": u_grid, "lower": lower, "point": point, "upper": upper}


def _link_curve(spec: ModelSpec, params, u_grid: np.ndarray) -> np.ndarray:
    if spec.link == "gx-d":
        return mnet.predict_batch(params.link, u_grid)
    from .bernstein import bern_forward

    return bern_forward(params.link, u_grid)


def model_select(w_ci: CIRecord, delta_ci: CIRecord) -> str:
    """Error-family recommendation from 90% bootstrap CIs of w and delta.

    Skewness is declared when 0.5 is outside the w interval; heavy tails
    when the delta interval stays below 30.
    """
    w_skewed = not (w_ci.lower <= 0.5 <= w_ci.upper)
    heavy = delta_ci.upper < 30.0
    if w_skewed:
        return "ST" if heavy else "SN"
    return "SymmetricT" if heavy else "Normal"


def kfold_cv(spec: ModelSpec, data: Dataset, K: int, config: TrainConfig,
             rng: RngStream, threads: int = 1) -> np.ndarray:
    """Per-fold held-out MSE of the predicted mode.

    The fold partition is a seeded permutation split into K nearly equal
    disjoint parts (sizes differ by at most one); folds are independent
    tasks keyed by fold id.
    """
    if K < 2:
        raise DomainError(f"kfold_cv requires K >= 2, got {K}")
    if K > data.n:
        raise DomainError(f"K={K} exceeds n={data.n}")
    perm = rng.permutation(data.n)
    folds = np.array_split(perm, K)

    def one(k: int) -> float:
        test_idx = folds[k]
        train_idx = np.setdiff1d(perm, test_idx, assume_unique=True)
        fit = sgd_fit(spec, data.subset(train_idx), config, rng.substream(k))
        pred = predict_mode(fit, data.X[test_idx])
        return float(np.mean((data.y[test_idx] - pred) ** 2))

    return np.asarray(_map_by_id(one, range(K), threads))


@dataclass
class DiagnosticResult:
    """Residual histogram at density scale plus the theoretical error
    density at the fitted parameters."""

    bin_edges: np.ndarray
    density: np.ndarray
    curve_x: np.ndarray
    curve_y: np.ndarray

    @property
    def bin_mid_theoretical(self) -> np.ndarray:
        mids = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        return np.interp(mids, self.curve_x, self.curve_y)


def residual_diagnostic(fit: FitResult, data: Dataset, bins: int = 40) -> DiagnosticResult:
    """Histogram of fitted residuals against the theoretical density of the
    fitted error family (mode at zero), sampled on a 201-point span."""
    if bins < 2:
        raise DomainError(f"bins must be >= 2, got {bins}")
    res = residuals(fit, data)
    density, edges = np.histogram(res, bins=bins, density=True)
    lo, hi = float(edges[0]), float(edges[-1])
    xs = np.linspace(lo, hi, 201)
    curve = _error_density(fit, xs)
    return DiagnosticResult(edges, density, xs, curve)


def _error_density(fit: FitResult, xs: np.ndarray) -> np.ndarray:
    from .distributions import st_logpdf, sn_logpdf

    family = fit.spec.error_family
    if family == "st":
        return np.exp(st_logpdf(xs, STParams(fit.w, 0.0, fit.sigma, fit.delta)))
    if family == "sn":
        return np.exp(sn_logpdf(xs, SNParams(fit.w, 0.0, fit.sigma)))
    if family == "normal":
        z = xs / fit.sigma
        return np.exp(-0.5 * z * z) / (fit.sigma * math.sqrt(2.0 * math.pi))
    z = xs / fit.sigma
    return np.exp(
        _t_log_norm_const(fit.delta)
        - 0.5 * (fit.delta + 1.0) * np.log1p(z * z / fit.delta)
    ) / fit.sigma
