"""Variance components, confidence intervals and bands, several edges."""
from .variance import (  # noqa: F401
    estimate_sigma,
    variance_components,
    oracle_components,
    asymptotic_sd_phi,
    asymptotic_sd_psi,
    asymptotic_sd_tau,
)
from .confidence import (  # noqa: F401
    pointwise_ci,
    bootstrap_sup_quantile,
    uniform_band,
    sup_statistic,
)
from .multiedge import detect_candidates, estimate_multi, bonferroni_bands  # noqa: F401
