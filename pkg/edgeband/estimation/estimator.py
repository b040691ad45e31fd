"""
Stage 4: Edge estimator - per-strip joint argmax of the contrast in (y, psi)

Each strip x is handled independently: an exhaustive coarse search over
y in {h, h + dy, ..., 1 - h} and psi in [-pi/2, pi/2] locates the basin of the
maximum, then a local refinement recovers sub-grid accuracy. The jump height
estimate is the contrast value at the refined argmax.
"""
from __future__ import annotations

import math
import time
from typing import NamedTuple, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import minimize, minimize_scalar

from edgeband.exceptions import ConfigurationError, InvalidArgumentError, StripEstimationError
from edgeband.imaging.image_model import ImageGrid
from edgeband.kernels.rotated_kernel import AssumptionCheck, KernelPair, default_kernels
from edgeband.estimation.contrast import contrast_field, contrast_gradient_value, contrast_value
from edgeband.schemas import EdgeEstimate, EstimationConfig
from shared.utils.logging import get_logger
from shared.utils.metrics import CURVE_ESTIMATION_SECONDS, STRIP_ESTIMATES

logger = get_logger(__name__)

HALF_PI = math.pi / 2
# far below a pixel in y and below the coarse angle step in psi
REFINE_XATOL = 1e-7
# coordinate passes stop at this relative gain; the gradient polish finishes
REFINE_RTOL = 1e-6


class StripEstimate(NamedTuple):
    phi: float
    psi: float
    tau: float
    max_value: float
    coarse_max: float


def default_bandwidth(n: int, points_per_window: int = 100) -> float:
    """
    h = sqrt(points_per_window) / (2n), clamped to [2/n, 1/4]

    The square [-h, h]^2 then holds about points_per_window design points.
    """
    if n < 16:
        raise InvalidArgumentError(f"default bandwidth needs n >= 16, got {n}")
    if points_per_window < 1:
        raise InvalidArgumentError("points_per_window must be positive")
    h = math.sqrt(points_per_window) / (2.0 * n)
    return float(min(max(h, 2.0 / n), 0.25))


def bandwidth_range_check(n: float, h: float, eta: float = 1.1, c_lower: float = 0.02,
                          c_upper: float = 1.0) -> AssumptionCheck:
    """c_lower n^-1/2 ln(n)^eta <= h <= c_upper n^-1/3."""
    if n <= 1 or h <= 0:
        raise InvalidArgumentError(f"need n > 1 and h > 0, got n={n}, h={h}")
    lower = c_lower * math.log(n) ** eta / math.sqrt(n)
    upper = c_upper * n ** (-1.0 / 3.0)
    passed = lower <= h <= upper
    return AssumptionCheck(
        name="bandwidth_range", value=h, passed=passed,
        detail=f"{lower:.4g} <= h={h:.4g} <= {upper:.4g} (n={n:g}, eta={eta:g})",
    )


def coarse_axes(grid: ImageGrid, cfg: EstimationConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Candidate y values and angles for the exhaustive search."""
    h = cfg.h
    lo, hi = h, 1.0 - h
    if cfg.y_range is not None:
        lo, hi = max(lo, cfg.y_range[0]), min(hi, cfg.y_range[1])
    if hi < lo:
        raise ConfigurationError(f"empty search region for y: [{lo}, {hi}]")
    dy = cfg.coarse_y_step if cfg.coarse_y_step is not None else 1.0 / grid.n2
    count = int(math.floor((hi - lo) / dy + 1e-9)) + 1
    ys = lo + dy * np.arange(count)
    n_psi = int(round(math.pi / cfg.coarse_psi_step)) + 1
    psis = np.linspace(-HALF_PI, HALF_PI, max(n_psi, 2))
    return ys, psis


def _refine(grid: ImageGrid, x: float, y0: float, psi0: float, cfg: EstimationConfig,
            y_bounds: Tuple[float, float], dy: float, dpsi: float, pair: KernelPair) -> Tuple[float, float, float]:
    """Coordinate-wise bounded ascent, then a gradient polish; only strict gains are kept."""
    h = cfg.h
    best_y, best_psi = y0, psi0
    best = contrast_value(grid, x, y0, psi0, h, pair)

    for _ in range(cfg.refine_iters):
        start = best

        lo, hi = max(y_bounds[0], best_y - dy), min(y_bounds[1], best_y + dy)
        if hi > lo:
            res = minimize_scalar(lambda y: -contrast_value(grid, x, y, best_psi, h, pair),
                                  bounds=(lo, hi), method="bounded", options={"xatol": REFINE_XATOL})
            if -res.fun > best:
                best, best_y = -res.fun, float(res.x)

        lo, hi = max(-HALF_PI, best_psi - dpsi), min(HALF_PI, best_psi + dpsi)
        if hi > lo:
            res = minimize_scalar(lambda p: -contrast_value(grid, x, best_y, p, h, pair),
                                  bounds=(lo, hi), method="bounded", options={"xatol": REFINE_XATOL})
            if -res.fun > best:
                best, best_psi = -res.fun, float(res.x)

        if best - start <= REFINE_RTOL * max(1.0, abs(best)):
            break

    if cfg.refine_iters > 0:
        def objective(v):
            return -contrast_value(grid, x, v[0], v[1], h, pair)

        def jac(v):
            g = contrast_gradient_value(grid, x, v[0], v[1], h, pair)
            return -np.array([g[0] / h, g[1]])

        res = minimize(objective, np.array([best_y, best_psi]), jac=jac, method="L-BFGS-B",
                       bounds=[(max(y_bounds[0], best_y - dy), min(y_bounds[1], best_y + dy)),
                               (max(-HALF_PI, best_psi - dpsi), min(HALF_PI, best_psi + dpsi))],
                       options={"gtol": 1e-9, "ftol": 1e-14, "maxiter": 100})
        if -res.fun > best:
            best, best_y, best_psi = float(-res.fun), float(res.x[0]), float(res.x[1])

    return best_y, best_psi, best


def estimate_strip(grid: ImageGrid, x: float, cfg: EstimationConfig,
                   pair: Optional[KernelPair] = None) -> StripEstimate:
    """
    Joint argmax of the contrast over (y, psi) at one x

    Coarse ties go to the smallest y, then the smallest psi.
    """
    pair = pair or default_kernels()
    ys, psis = coarse_axes(grid, cfg)
    field = contrast_field(grid, x, ys, psis, cfg.h, pair)
    k = int(np.argmax(field))  # row-major: y first, then psi
    iy, ip = divmod(k, psis.size)
    coarse_max = float(field[iy, ip])

    dy = ys[1] - ys[0] if ys.size > 1 else 1.0 / grid.n2
    dpsi = psis[1] - psis[0]
    y_bounds = (float(ys[0]), float(ys[-1]))
    phi, psi, value = _refine(grid, x, float(ys[iy]), float(psis[ip]), cfg, y_bounds, dy, dpsi, pair)

    if value <= 0:
        logger.warning(f"[ESTIMATE] non-positive jump height {value:.4g} at x={x:.4f}")
    STRIP_ESTIMATES.labels(status="ok").inc()
    return StripEstimate(phi=phi, psi=psi, tau=value, max_value=value, coarse_max=coarse_max)


def _safe_strip(grid: ImageGrid, x: float, cfg: EstimationConfig, pair: KernelPair) -> StripEstimate:
    try:
        return estimate_strip(grid, x, cfg, pair)
    except (ConfigurationError, InvalidArgumentError):
        raise
    except Exception as e:
        STRIP_ESTIMATES.labels(status="error").inc()
        raise StripEstimationError(x, e) from e


def estimate_curve(grid: ImageGrid, cfg: EstimationConfig, pair: Optional[KernelPair] = None,
                   threads: int = 1) -> EdgeEstimate:
    """Apply estimate_strip on the configured x grid; output order matches the grid."""
    pair = pair or default_kernels()
    xs = cfg.x_grid()
    started = time.perf_counter()

    if threads > 1:
        strips = Parallel(n_jobs=threads, prefer="threads")(
            delayed(_safe_strip)(grid, float(x), cfg, pair) for x in xs
        )
    else:
        strips = [_safe_strip(grid, float(x), cfg, pair) for x in xs]

    elapsed = time.perf_counter() - started
    CURVE_ESTIMATION_SECONDS.observe(elapsed)
    logger.info(f"[ESTIMATE] {len(xs)} strips on {grid.n1}x{grid.n2} grid, h={cfg.h:.4f}, {elapsed:.2f}s")

    return EdgeEstimate(
        x_grid=np.asarray(xs, dtype=float),
        phi_hat=np.array([s.phi for s in strips]),
        psi_hat=np.array([s.psi for s in strips]),
        tau_hat=np.array([s.tau for s in strips]),
        contrast_at_max=np.array([s.max_value for s in strips]),
        h=cfg.h,
        n=grid.n,
    )
