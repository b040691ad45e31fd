"""
Stage 6: Confidence statements - point-wise intervals and multiplier-bootstrap bands

The bootstrap process for each target is a fixed linear map of i.i.d. standard
normal multipliers xi attached to the pixels:

    Z(x) = sum_j w_j(x) xi_j

with w built from the same local kernel terms as the contrast gradient. The
supremum of |Z| over the x grid calibrates the uniform band.
"""
from __future__ import annotations

import math
from typing import Callable, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import sparse
from scipy.stats import norm

from edgeband.estimation.contrast import angle_score, local_terms, location_score
from edgeband.exceptions import InvalidArgumentError
from edgeband.imaging.image_model import ImageGrid
from edgeband.inference.variance import vanishing
from edgeband.kernels.rotated_kernel import KernelPair, default_kernels
from edgeband.schemas import BandConfig, BandResult, EdgeEstimate, VarianceComponents
from shared.utils.logging import get_logger
from shared.utils.metrics import BOOTSTRAP_REPLICATIONS

logger = get_logger(__name__)

Target = str


class PointwiseInterval(NamedTuple):
    lower: np.ndarray
    upper: np.ndarray
    unbounded: np.ndarray


class ScoreOperator(NamedTuple):
    """Sparse weights mapping pixel multipliers to the score process"""
    weights: sparse.csr_matrix   # (len(x_grid), len(pixels))
    pixels: np.ndarray           # flat pixel indices owning a column


def _center(est: EdgeEstimate, target: Target) -> np.ndarray:
    if target == "phi":
        return est.phi_hat
    if target == "psi":
        return est.psi_hat
    if target == "tau":
        return est.tau_hat
    raise InvalidArgumentError(f"unknown target {target!r}")


def _scale(components: VarianceComponents, target: Target) -> Tuple[np.ndarray, np.ndarray]:
    """Half-width per unit quantile, plus the mask of unbounded points."""
    n, h, sigma = components.n, components.h, components.sigma_hat
    with np.errstate(divide="ignore", invalid="ignore"):
        if target == "phi":
            unbounded = np.asarray(components.degenerate, dtype=bool)
            half = sigma * np.sqrt(components.VS_phi) / (n * np.abs(components.VH_phi))
        elif target == "psi":
            unbounded = vanishing(components.VH_psi)
            half = sigma * math.sqrt(components.VS_psi) / (n * h * np.abs(components.VH_psi))
        elif target == "tau":
            unbounded = np.zeros(components.x_grid.shape, dtype=bool)
            half = np.full(components.x_grid.shape, sigma * math.sqrt(components.VS_tau) / (n * h))
        else:
            raise InvalidArgumentError(f"unknown target {target!r}")
    if sigma == 0:
        half = np.where(unbounded, np.inf, 0.0)
    return np.where(unbounded, np.inf, half), unbounded


def pointwise_ci(est: EdgeEstimate, components: VarianceComponents, alpha: float,
                 target: Target = "phi") -> PointwiseInterval:
    """center(x) +- normal quantile times the asymptotic sd, per x."""
    if not (0 < alpha < 1):
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    q = norm.ppf(1.0 - alpha / 2.0)
    half, unbounded = _scale(components, target)
    center = _center(est, target)
    if np.any(unbounded):
        logger.warning(f"Point-wise interval unbounded at {int(unbounded.sum())} points ({target})")
    return PointwiseInterval(lower=center - q * half, upper=center + q * half, unbounded=unbounded)


def score_operator(grid: ImageGrid, est: EdgeEstimate, components: VarianceComponents,
                   target: Target = "phi", pair: Optional[KernelPair] = None) -> ScoreOperator:
    """Assemble the normalized score weights at the estimated parameters."""
    pair = pair or default_kernels()
    n, h = est.n, est.h
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    for k in range(est.size):
        x, y, psi = float(est.x_grid[k]), float(est.phi_hat[k]), float(est.psi_hat[k])
        terms = local_terms(grid, x, y, psi, h, pair)
        if target == "phi":
            w = location_score(terms, psi) / (n * h * math.sqrt(components.VS_phi[k]))
        elif target == "psi":
            # <grad K, R d> = h * angle_score; normalized by n h^2 sqrt(VS_psi)
            w = angle_score(terms, psi, h) / (n * h * math.sqrt(components.VS_psi))
        elif target == "tau":
            w = terms.kernel / (n * h * math.sqrt(components.VS_tau))
        else:
            raise InvalidArgumentError(f"unknown target {target!r}")
        keep = w != 0
        rows.append(np.full(int(keep.sum()), k))
        cols.append(terms.flat_index[keep])
        vals.append(w[keep])

    all_cols = np.concatenate(cols) if cols else np.empty(0, dtype=int)
    pixels, compact = np.unique(all_cols, return_inverse=True)
    matrix = sparse.csr_matrix(
        (np.concatenate(vals) if vals else np.empty(0), (np.concatenate(rows) if rows else np.empty(0, dtype=int), compact)),
        shape=(est.size, pixels.size),
    )
    return ScoreOperator(weights=matrix, pixels=pixels)


def sup_from_multipliers(op: ScoreOperator, xi: np.ndarray) -> np.ndarray:
    """sup_x |Z(x)| for each column of the multiplier matrix xi (pixels x reps)."""
    z = op.weights @ xi
    if z.shape[0] == 0:
        return np.zeros(xi.shape[1])
    return np.max(np.abs(z), axis=0)


def _chunk(op: ScoreOperator, size: int, seed_seq: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    xi = rng.standard_normal((op.pixels.size, size))
    return sup_from_multipliers(op, xi)


def bootstrap_sup_samples(op: ScoreOperator, n_bootstrap: int, seed: Union[int, np.random.SeedSequence],
                          threads: int = 1, chunk_size: int = 256) -> np.ndarray:
    """Draw n_bootstrap suprema; chunk seeds are spawned so results ignore the worker count."""
    sizes = [chunk_size] * (n_bootstrap // chunk_size)
    if n_bootstrap % chunk_size:
        sizes.append(n_bootstrap % chunk_size)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(len(sizes))
    if threads > 1 and len(sizes) > 1:
        parts = Parallel(n_jobs=threads, prefer="threads")(
            delayed(_chunk)(op, s, c) for s, c in zip(sizes, children)
        )
    else:
        parts = [_chunk(op, s, c) for s, c in zip(sizes, children)]
    return np.concatenate(parts) if parts else np.empty(0)


def bootstrap_sup_quantile(grid: ImageGrid, est: EdgeEstimate, components: VarianceComponents,
                           cfg: BandConfig, pair: Optional[KernelPair] = None) -> Tuple[float, np.ndarray]:
    """(1 - alpha) quantile of the bootstrap supremum, with the raw samples."""
    op = score_operator(grid, est, components, cfg.target, pair)
    samples = bootstrap_sup_samples(op, cfg.n_bootstrap, cfg.seed, cfg.threads, cfg.chunk_size)
    BOOTSTRAP_REPLICATIONS.labels(target=cfg.target).inc(cfg.n_bootstrap)
    quantile = float(np.quantile(samples, 1.0 - cfg.alpha))
    logger.info(f"[BOOTSTRAP] target={cfg.target} reps={cfg.n_bootstrap} q_{1 - cfg.alpha:.3f}={quantile:.4f}")
    return quantile, samples


def band_from_quantile(est: EdgeEstimate, components: VarianceComponents, target: Target,
                       alpha: float, quantile: float, t_n: float) -> BandResult:
    """Uniform band center +- (1 + t_n) q sd(x), with the point-wise interval alongside."""
    half, unbounded = _scale(components, target)
    center = _center(est, target)
    pw = pointwise_ci(est, components, alpha, target)
    factor = (1.0 + t_n) * quantile
    lower = center - factor * half
    upper = center + factor * half

    nested = factor >= norm.ppf(1.0 - alpha / 2.0)
    if not nested:
        logger.warning(
            f"Uniform band narrower than point-wise intervals: (1+t_n)q={factor:.4f} < normal quantile"
        )

    return BandResult(
        target=target,
        x_grid=est.x_grid,
        center=center,
        lower=lower,
        upper=upper,
        pointwise_lower=pw.lower,
        pointwise_upper=pw.upper,
        quantile_boot=float(quantile),
        t_n_used=float(t_n),
        alpha=float(alpha),
        sigma_hat=components.sigma_hat,
        nested=bool(nested),
    )


def uniform_band(grid: ImageGrid, est: EdgeEstimate, components: VarianceComponents,
                 cfg: BandConfig, pair: Optional[KernelPair] = None) -> BandResult:
    """Bootstrap-calibrated uniform band for cfg.target."""
    quantile, _ = bootstrap_sup_quantile(grid, est, components, cfg, pair)
    t_n = cfg.resolve_t_n(est.n)
    return band_from_quantile(est, components, cfg.target, cfg.alpha, quantile, t_n)


def sup_statistic(est: EdgeEstimate, components: VarianceComponents,
                  true_curve: Union[Callable, np.ndarray]) -> float:
    """sup_x n |VH_phi (phi_hat - phi)| / (sigma sqrt(VS_phi))."""
    truth = true_curve(est.x_grid) if callable(true_curve) else np.asarray(true_curve, dtype=float)
    err = np.abs(components.VH_phi * (est.phi_hat - truth))
    if not np.any(err):
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = components.n * err / (components.sigma_hat * np.sqrt(components.VS_phi))
    return float(np.max(stat))
