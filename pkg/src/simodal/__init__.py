"""Robust monotone single-index modal regression.

Fits y = g(beta^T x) + e with a positive-weight monotone network (or a
monotone Bernstein curve) for g and skewed, heavy-tailed error families,
estimating the conditional mode of the response.  Includes parametric
bootstrap uncertainty quantification, model-selection diagnostics, and a
Monte Carlo simulation harness.
"""

from .distributions import (
    ALDParams,
    SNParams,
    STParams,
    ald_logpdf,
    ald_sample,
    sn_logpdf,
    sn_sample,
    st_logpdf,
    st_mode,
    st_sample,
)
from .errors import (
    DataError,
    DomainError,
    NumericError,
    SimodalError,
    TrainingError,
)
from .estimation import (
    Dataset,
    FitResult,
    ModelSpec,
    ParamVector,
    TrainConfig,
    compute_index,
    fit_from_json,
    fit_to_json,
    negative_log_likelihood,
    nll_gradient,
    predict_mode,
    residuals,
    sgd_fit,
)
from .numerics import RngStream, integrate, ln_gamma, normal_cdf, student_t_logpdf

__version__ = "0.1.0"

__all__ = [
    "ALDParams",
    "SNParams",
    "STParams",
    "Dataset",
    "FitResult",
    "ModelSpec",
    "ParamVector",
    "RngStream",
    "TrainConfig",
    "DataError",
    "DomainError",
    "NumericError",
    "SimodalError",
    "TrainingError",
    "ald_logpdf",
    "ald_sample",
    "compute_index",
    "fit_from_json",
    "fit_to_json",
    "integrate",
    "ln_gamma",
    "negative_log_likelihood",
    "nll_gradient",
    "normal_cdf",
    "predict_mode",
    "residuals",
    "sgd_fit",
    "sn_logpdf",
    "sn_sample",
    "st_logpdf",
    "st_mode",
    "st_sample",
    "student_t_logpdf",
    "__version__",
]
