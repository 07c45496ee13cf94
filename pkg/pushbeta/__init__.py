from .distribution import (
    ExpectedLogs,
    cdf,
    entropy_neg_log,
    expected_logs,
    mean_variance,
    pdf,
    quantile,
    raw_moment,
    reflect,
    sample,
)
from .params import Direction, ParameterError, PushBetaParams
from .quadrature import QuadratureConfig, QuadratureError, QuadratureMode

__all__ = [
    "Direction",
    "ExpectedLogs",
    "ParameterError",
    "PushBetaParams",
    "QuadratureConfig",
    "QuadratureError",
    "QuadratureMode",
    "__version__",
    "cdf",
    "entropy_neg_log",
    "expected_logs",
    "mean_variance",
    "pdf",
    "quantile",
    "raw_moment",
    "reflect",
    "sample",
]
__version__ = "0.1.1"
