"""
Stage 7: Several jump curves - candidate detection, track chaining, Bonferroni bands

Per strip the contrast is profiled over y (best angle for each y); local maxima
are thinned by greedy non-maximum suppression so selected candidates are at
least `separation` apart. Candidates are then chained across strips into
tracks, and each track is re-estimated inside a neighbourhood of its points.
"""
from __future__ import annotations

import math
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from edgeband.estimation.contrast import contrast_field
from edgeband.estimation.estimator import coarse_axes, estimate_strip
from edgeband.imaging.image_model import ImageGrid
from edgeband.inference.confidence import uniform_band
from edgeband.inference.variance import estimate_sigma
from edgeband.kernels.rotated_kernel import KernelPair, default_kernels
from edgeband.schemas import BandResult, EdgeEstimate, EstimationConfig, MultiEdgeConfig, VarianceComponents
from shared.utils.logging import get_logger

logger = get_logger(__name__)

WEAK_FACTOR = 3.0


class Candidate(NamedTuple):
    y: float
    psi: float
    contrast: float
    weak: bool


class CandidateSet(NamedTuple):
    x_grid: np.ndarray
    per_strip: List[List[Candidate]]
    threshold: float


def _local_maxima(profile: np.ndarray) -> np.ndarray:
    if profile.size == 1:
        return np.array([0])
    left = np.concatenate([[-np.inf], profile[:-1]])
    right = np.concatenate([profile[1:], [-np.inf]])
    return np.nonzero((profile > left) & (profile >= right))[0]


def suppress(ys: np.ndarray, values: np.ndarray, max_count: int, separation: float) -> List[int]:
    """Greedy non-maximum suppression; ties go to the smaller y."""
    order = sorted(range(len(ys)), key=lambda i: (-values[i], ys[i]))
    chosen: List[int] = []
    for i in order:
        if len(chosen) >= max_count:
            break
        if all(abs(ys[i] - ys[j]) >= separation for j in chosen):
            chosen.append(i)
    return chosen


def detect_candidates(grid: ImageGrid, est_cfg: EstimationConfig, cfg: MultiEdgeConfig,
                      sigma_hat: Optional[float] = None, pair: Optional[KernelPair] = None) -> CandidateSet:
    """Up to max_curves separated contrast maxima per strip, flagged weak below the noise floor."""
    pair = pair or default_kernels()
    h = est_cfg.h
    separation = cfg.separation if cfg.separation is not None else h
    if sigma_hat is None:
        sigma_hat = estimate_sigma(grid)
    threshold = WEAK_FACTOR * sigma_hat * math.sqrt(pair.constants.vs_tau) / (grid.n * h)

    ys, psis = coarse_axes(grid, est_cfg)
    xs = est_cfg.x_grid()
    per_strip: List[List[Candidate]] = []
    for x in xs:
        field = contrast_field(grid, float(x), ys, psis, h, pair)
        best_psi = np.argmax(field, axis=1)
        profile = field[np.arange(ys.size), best_psi]
        peaks = _local_maxima(profile)
        picked = suppress(ys[peaks], profile[peaks], cfg.max_curves, separation)
        strip = [
            Candidate(
                y=float(ys[peaks[i]]),
                psi=float(psis[best_psi[peaks[i]]]),
                contrast=float(profile[peaks[i]]),
                weak=bool(profile[peaks[i]] < threshold),
            )
            for i in picked
        ]
        per_strip.append(sorted(strip, key=lambda c: c.y))

    n_weak = sum(c.weak for s in per_strip for c in s)
    logger.info(f"[MULTI] {sum(len(s) for s in per_strip)} candidates on {len(xs)} strips, {n_weak} weak "
                f"(floor {threshold:.4g})")
    return CandidateSet(x_grid=np.asarray(xs), per_strip=per_strip, threshold=threshold)


def chain_tracks(candidates: CandidateSet, tolerance: float) -> List[Dict[int, float]]:
    """
    Nearest-neighbour chaining of strong candidates across consecutive strips.

    Returns one {strip index: y} mapping per track, ordered by first appearance.
    """
    tracks: List[Dict[int, float]] = []
    last: List[float] = []
    for k, strip in enumerate(candidates.per_strip):
        ys = sorted(c.y for c in strip if not c.weak)
        pairs = sorted(
            ((abs(y - last[t]), t, y) for t in range(len(tracks)) for y in ys if abs(y - last[t]) < tolerance),
        )
        used_tracks, used_ys = set(), set()
        for _, t, y in pairs:
            if t in used_tracks or y in used_ys:
                continue
            tracks[t][k] = y
            last[t] = y
            used_tracks.add(t)
            used_ys.add(y)
        for y in ys:
            if y not in used_ys:
                tracks.append({k: y})
                last.append(y)
    return tracks


def estimate_multi(grid: ImageGrid, candidates: CandidateSet, est_cfg: EstimationConfig,
                   cfg: MultiEdgeConfig, pair: Optional[KernelPair] = None) -> List[EdgeEstimate]:
    """Restricted strip maximization around every sufficiently complete track."""
    pair = pair or default_kernels()
    h = est_cfg.h
    delta = cfg.separation if cfg.separation is not None else h
    xs = candidates.x_grid
    tracks = chain_tracks(candidates, 2.0 * h)

    estimates: List[EdgeEstimate] = []
    for t, track in enumerate(tracks):
        coverage = len(track) / len(xs)
        if coverage < cfg.min_coverage:
            logger.warning(f"[MULTI] discarding track {t}: covers {coverage:.0%} of the grid")
            continue
        idx = np.array(sorted(track))
        centers = np.interp(np.arange(len(xs)), idx, [track[i] for i in idx])
        strips = []
        for k, x in enumerate(xs):
            local = est_cfg.model_copy(update={"y_range": (centers[k] - delta, centers[k] + delta),
                                               "x_points": None})
            strips.append(estimate_strip(grid, float(x), local, pair))
        estimates.append(EdgeEstimate(
            x_grid=np.asarray(xs, dtype=float),
            phi_hat=np.array([s.phi for s in strips]),
            psi_hat=np.array([s.psi for s in strips]),
            tau_hat=np.array([s.tau for s in strips]),
            contrast_at_max=np.array([s.max_value for s in strips]),
            h=h,
            n=grid.n,
        ))

    estimates.sort(key=lambda e: float(np.mean(e.phi_hat)))
    logger.info(f"[MULTI] {len(estimates)} of {len(tracks)} tracks estimated")
    return estimates


def bonferroni_bands(grid: ImageGrid, estimates: Sequence[EdgeEstimate],
                     components_list: Sequence[VarianceComponents], cfg: MultiEdgeConfig,
                     pair: Optional[KernelPair] = None) -> List[BandResult]:
    """Uniform band per track at level alpha / J."""
    J = len(estimates)
    if J == 0:
        return []
    base = cfg.band
    per_track_alpha = base.alpha / J
    bands = []
    for j, (est, comp) in enumerate(zip(estimates, components_list)):
        band_cfg = base.model_copy(update={"alpha": per_track_alpha, "seed": base.seed + j})
        bands.append(uniform_band(grid, est, comp, band_cfg, pair))
    return bands
