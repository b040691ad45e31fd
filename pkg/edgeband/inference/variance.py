"""
Stage 5: Variance components - noise level and plug-in asymptotic variances

For the location curve phi:
    VH_phi(x) = tau(x) cos^2 psi(x) K2'(0)
    VS_phi(x) = sin^2 psi(x) ∫∫(K1'K2)^2 + cos^2 psi(x) ∫∫(K1K2')^2
and n * phi_hat(x) has asymptotic sd sigma sqrt(VS_phi) / |VH_phi|.
For the slope, VH_psi(x) = tau(x) K2'(0) ∫y^2 K1; VS_psi and VS_tau are
kernel constants.
"""
from __future__ import annotations

import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from edgeband.exceptions import DegenerateCurvatureError, InvalidArgumentError
from edgeband.imaging.image_model import ImageGrid
from edgeband.kernels.rotated_kernel import KernelPair, default_kernels
from edgeband.schemas import EdgeEstimate, VarianceComponents
from shared.utils.logging import get_logger

logger = get_logger(__name__)

MIN_REGION_PIXELS = 100
# |VH| at or below this counts as zero; cos(-pi/2) leaves ~1e-32 behind
VH_FLOOR = 1e-12

Region = Tuple[float, float, float, float]


def estimate_sigma(grid: ImageGrid, region: Optional[Region] = None) -> float:
    """
    Difference-based noise level from horizontal neighbours

    sigma^2 = (2N)^-1 sum (Y[i1+1, i2] - Y[i1, i2])^2 over the N pairs with both
    pixels inside ``region`` = (x0, y0, x1, y1); the full image by default.
    """
    values = grid.values
    if region is not None:
        x0, y0, x1, y1 = region
        if not (x0 < x1 and y0 < y1):
            raise InvalidArgumentError(f"degenerate sigma region {region}")
        xm = (grid.x_coords >= x0) & (grid.x_coords <= x1)
        ym = (grid.y_coords >= y0) & (grid.y_coords <= y1)
        values = values[np.ix_(xm, ym)]
        if values.size < MIN_REGION_PIXELS:
            raise InvalidArgumentError(
                f"sigma region {region} holds {values.size} pixels, need at least {MIN_REGION_PIXELS}"
            )
    else:
        logger.debug("Estimating sigma on the full image")

    if values.shape[0] < 2 or values.shape[1] < 1:
        raise InvalidArgumentError("sigma region needs at least two rows of pixels")
    diffs = np.diff(values, axis=0)
    return float(math.sqrt(np.sum(diffs ** 2) / (2.0 * diffs.size)))


def variance_components(est: EdgeEstimate, pair: Optional[KernelPair] = None,
                        sigma_hat: float = 0.0) -> VarianceComponents:
    """Plug the estimates into the asymptotic variance formulas."""
    if est.size == 0:
        raise InvalidArgumentError("empty estimate")
    if sigma_hat < 0:
        raise InvalidArgumentError(f"sigma_hat must be non-negative, got {sigma_hat}")
    pair = pair or default_kernels()
    kc = pair.constants

    sin2 = np.sin(est.psi_hat) ** 2
    cos2 = np.cos(est.psi_hat) ** 2
    vh_phi = est.tau_hat * cos2 * kc.k2_deriv_at_zero
    vs_phi = sin2 * kc.int_k1p_k2_sq + cos2 * kc.int_k1_k2p_sq
    vh_psi = est.tau_hat * kc.k2_deriv_at_zero * kc.int_y2_k1

    degenerate = vanishing(vh_phi)
    if np.any(degenerate):
        logger.warning(f"VH_phi vanishes at {int(degenerate.sum())} grid points; intervals there are unbounded")

    return VarianceComponents(
        sigma_hat=float(sigma_hat),
        x_grid=est.x_grid,
        VH_phi=vh_phi,
        VS_phi=vs_phi,
        VH_psi=vh_psi,
        VS_psi=kc.vs_psi,
        VS_tau=kc.vs_tau,
        kernel_constants=kc.model_dump(),
        n=est.n,
        h=est.h,
        degenerate=degenerate,
    )


def vanishing(vh: np.ndarray) -> np.ndarray:
    """Mask of grid points where a VH component is numerically zero."""
    return np.abs(np.asarray(vh, dtype=float)) <= VH_FLOOR


def oracle_components(x_grid: Sequence[float], phi: Callable, psi: Callable, tau: Callable,
                      sigma: float, n: float, h: float,
                      pair: Optional[KernelPair] = None) -> VarianceComponents:
    """Variance components with the true curve parameters plugged in."""
    xs = np.asarray(x_grid, dtype=float)
    as_vec = lambda f: np.broadcast_to(np.asarray(f(xs), dtype=float), xs.shape).copy()  # noqa: E731
    truth = EdgeEstimate(
        x_grid=xs, phi_hat=as_vec(phi), psi_hat=as_vec(psi), tau_hat=as_vec(tau),
        contrast_at_max=as_vec(tau), h=h, n=n,
    )
    return variance_components(truth, pair, sigma)


def _index_of(components: VarianceComponents, x: float) -> int:
    k = int(np.argmin(np.abs(components.x_grid - x)))
    if abs(components.x_grid[k] - x) > 1e-9:
        raise InvalidArgumentError(f"x={x} is not on the estimation grid")
    return k


def asymptotic_sd_phi_curve(components: VarianceComponents) -> np.ndarray:
    """sigma sqrt(VS_phi) / |VH_phi| at every grid point (inf where VH_phi vanishes)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        sd = components.sigma_hat * np.sqrt(components.VS_phi) / np.abs(components.VH_phi)
    return np.where(components.degenerate, np.inf, sd)


def asymptotic_sd_phi(components: VarianceComponents, x: float) -> float:
    """Asymptotic sd of n * phi_hat(x)."""
    k = _index_of(components, x)
    if components.degenerate[k]:
        raise DegenerateCurvatureError(f"VH_phi vanishes at x={x}")
    return float(components.sigma_hat * math.sqrt(components.VS_phi[k]) / abs(components.VH_phi[k]))


def asymptotic_sd_psi(components: VarianceComponents, x: float) -> float:
    """Asymptotic sd of n h * psi_hat(x)."""
    k = _index_of(components, x)
    if vanishing(components.VH_psi[k]):
        raise DegenerateCurvatureError(f"VH_psi vanishes at x={x}")
    return float(components.sigma_hat * math.sqrt(components.VS_psi) / abs(components.VH_psi[k]))


def asymptotic_sd_tau(components: VarianceComponents) -> float:
    """Asymptotic sd of n h * tau_hat(x); the same at every x."""
    return float(components.sigma_hat * math.sqrt(components.VS_tau))
