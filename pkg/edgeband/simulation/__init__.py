"""Monte Carlo study harness."""
from .study_runner import (  # noqa: F401
    REFERENCE_TN_TABLE,
    run_study,
    rmse_sd_study,
    bias_ratio_study,
    tn_sensitivity,
    crossing_level,
    load_study_spec,
    write_report,
)
