"""Contrast process and per-strip maximization."""
from .contrast import (  # noqa: F401
    ContrastQuery,
    AsymptoticOracleQuery,
    contrast,
    contrast_gradient,
    contrast_field,
    asymptotic_contrast,
)
from .estimator import (  # noqa: F401
    StripEstimate,
    default_bandwidth,
    bandwidth_range_check,
    estimate_strip,
    estimate_curve,
)
