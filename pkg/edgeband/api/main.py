"""
Edgeband API - jump curve estimation and confidence bands over HTTP
Stateless: every request carries its own image matrix and settings
"""
from datetime import datetime
from typing import List, Literal, Optional, Tuple

from fastapi import FastAPI, HTTPException
from fastapi.responses import Response as FastAPIResponse
from prometheus_client import CONTENT_TYPE_LATEST, generate_latest
from pydantic import BaseModel, Field, ValidationError

from edgeband.estimation.estimator import default_bandwidth, estimate_curve
from edgeband.exceptions import ConfigurationError, EdgeBandError, ImageParseError, InvalidArgumentError
from edgeband.imaging.image_model import ImageGrid
from edgeband.inference.confidence import uniform_band
from edgeband.inference.variance import estimate_sigma, variance_components
from edgeband.kernels.rotated_kernel import default_kernels
from edgeband.schemas import BandConfig, EdgeEstimate, EstimationConfig
from shared.config.settings import get_settings
from shared.utils.logging import get_logger
from shared.utils.metrics import API_REQUESTS

logger = get_logger(__name__)

app = FastAPI(
    title="Edgeband API",
    description="Jump curve estimation with point-wise and uniform confidence bands",
    version="1.0.0"
)


# Models

class EstimateRequest(BaseModel):
    """Image matrix (rows are x) and bandwidth settings"""
    values: List[List[float]]
    h: Optional[float] = None
    points_per_window: int = Field(default=100, ge=1)
    x_grid_size: int = Field(default=64, ge=1)


class BandsRequest(EstimateRequest):
    """Estimate request plus band settings"""
    alpha: float = 0.05
    t_n: Optional[float] = None
    n_bootstrap: Optional[int] = None
    target: Literal["phi", "psi", "tau"] = "phi"
    seed: Optional[int] = None
    sigma_region: Optional[Tuple[float, float, float, float]] = None


def _grid(values: List[List[float]]) -> ImageGrid:
    try:
        return ImageGrid(values=values, source="api")
    except (ValidationError, ValueError) as e:
        raise ImageParseError(f"invalid image matrix: {e}") from e


def _estimate(req: EstimateRequest) -> Tuple[ImageGrid, EdgeEstimate]:
    grid = _grid(req.values)
    h = req.h if req.h is not None else default_bandwidth(int(round(grid.n)), req.points_per_window)
    cfg = EstimationConfig(h=h, x_grid_size=req.x_grid_size)
    threads = get_settings().threads
    return grid, estimate_curve(grid, cfg, default_kernels(), threads=threads)


def _to_http(e: Exception) -> HTTPException:
    if isinstance(e, ImageParseError):
        return HTTPException(status_code=422, detail=str(e))
    if isinstance(e, (ConfigurationError, InvalidArgumentError, ValidationError)):
        return HTTPException(status_code=400, detail=str(e))
    logger.error(f"Request failed: {e}")
    return HTTPException(status_code=500, detail=str(e))


# API Endpoints

@app.get("/health")
def health_check():
    """Health check"""
    constants = default_kernels().constants
    return {
        "status": "healthy",
        "service": "edgeband",
        "timestamp": datetime.utcnow().isoformat(),
        "kernel_constants_ready": constants.k2_deriv_at_zero > 0,
    }


@app.get("/metrics")
def metrics():
    """Prometheus metrics endpoint"""
    return FastAPIResponse(content=generate_latest(), media_type=CONTENT_TYPE_LATEST)


@app.post("/api/v1/estimate")
def estimate(req: EstimateRequest):
    """
    Estimate jump location, slope and height on the default x grid

    Returns: the EdgeEstimate as JSON arrays
    """
    API_REQUESTS.labels(endpoint="estimate").inc()
    try:
        _, est = _estimate(req)
        return est.to_json_dict()
    except (EdgeBandError, ValidationError, ValueError) as e:
        raise _to_http(e)


@app.post("/api/v1/bands")
def bands(req: BandsRequest):
    """
    Point-wise intervals and a bootstrap uniform band for one target curve

    Returns: the BandResult as JSON arrays
    """
    API_REQUESTS.labels(endpoint="bands").inc()
    settings = get_settings()
    try:
        grid, est = _estimate(req)
        pair = default_kernels()
        comp = variance_components(est, pair, estimate_sigma(grid, req.sigma_region))
        kwargs = dict(
            alpha=req.alpha,
            n_bootstrap=req.n_bootstrap if req.n_bootstrap is not None else settings.n_bootstrap,
            target=req.target,
            seed=req.seed if req.seed is not None else (settings.seed or 0),
            threads=settings.threads,
        )
        cfg = BandConfig.with_fixed_t_n(req.t_n, **kwargs) if req.t_n is not None else BandConfig(**kwargs)
        band = uniform_band(grid, est, comp, cfg, pair)
        logger.info(f"[BANDS] target={band.target} q_boot={band.quantile_boot:.4f} t_n={band.t_n_used:.3f}")
        return band.to_json_dict()
    except (EdgeBandError, ValidationError, ValueError) as e:
        raise _to_http(e)


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
