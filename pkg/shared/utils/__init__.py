"""Utility helpers shared across edgeband components."""

from .logging import get_logger, configure_root_logger  # noqa: F401
from .metrics import (  # noqa: F401
    STRIP_ESTIMATES,
    CURVE_ESTIMATION_SECONDS,
    BOOTSTRAP_REPLICATIONS,
    STUDY_REPLICATIONS,
    API_REQUESTS,
)
