"""
Prometheus metrics definitions for edgeband components
"""
from prometheus_client import Counter, Histogram

# Estimation
STRIP_ESTIMATES = Counter(
    'edgeband_strip_estimates_total',
    'Total per-strip argmax estimates',
    ['status']
)

CURVE_ESTIMATION_SECONDS = Histogram(
    'edgeband_curve_estimation_seconds',
    'Wall time of a full curve estimate',
    buckets=[0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0]
)

# Inference
BOOTSTRAP_REPLICATIONS = Counter(
    'edgeband_bootstrap_replications_total',
    'Multiplier bootstrap replications drawn',
    ['target']
)

# Simulation harness
STUDY_REPLICATIONS = Counter(
    'edgeband_study_replications_total',
    'Monte Carlo replications by outcome',
    ['status']
)

# Service surface
API_REQUESTS = Counter(
    'edgeband_api_requests_total',
    'Requests served by the edgeband HTTP API',
    ['endpoint']
)
