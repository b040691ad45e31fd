"""
Stage 8: Monte Carlo study runner - coverage, width, sd-RMSE, bias ratio and t_n curves

Every replication generates a scene, estimates the curve, computes variance
components and draws one set of bootstrap suprema; all alpha levels of a cell
are derived from that single pass. Coverage is always measured against the
true curve. Replications draw from independent SeedSequence children, so the
report does not depend on the worker count.
"""
from __future__ import annotations

import json
import math
import time
import warnings
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
import yaml
from joblib import Parallel, delayed
from scipy.stats import norm

from edgeband.estimation.estimator import default_bandwidth, estimate_curve
from edgeband.imaging.image_model import (
    SCENARIO_CURVES, generate, jump_height, multi_edge_scene, simulation_scene,
)
from edgeband.inference.confidence import (
    band_from_quantile, bootstrap_sup_samples, pointwise_ci, score_operator, sup_statistic,
)
from edgeband.inference.multiedge import detect_candidates, estimate_multi
from edgeband.inference.variance import (
    asymptotic_sd_phi_curve, estimate_sigma, oracle_components, variance_components,
)
from edgeband.kernels.rotated_kernel import KernelPair, default_kernels
from edgeband.schemas import (
    EdgeEstimate, EstimationConfig, MultiEdgeConfig, StudyCell, StudyReport, StudySpec,
    VarianceComponents,
)
from shared.utils.logging import get_logger
from shared.utils.metrics import STUDY_REPLICATIONS

logger = get_logger(__name__)

# tuned t_n for the reference study grid, by (scenario, n, sigma_tilde)
REFERENCE_TN_TABLE: Dict[str, float] = {
    StudySpec.tn_key("phi1", 128, 0.5): 0.37,
    StudySpec.tn_key("phi1", 196, 0.5): 0.34,
    StudySpec.tn_key("phi1", 256, 0.5): 0.335,
    StudySpec.tn_key("phi1", 128, 0.9): 0.07,
    StudySpec.tn_key("phi1", 196, 0.9): 0.001,
    StudySpec.tn_key("phi1", 256, 0.9): 0.0,
    StudySpec.tn_key("phi2", 128, 0.5): 0.4,
    StudySpec.tn_key("phi2", 196, 0.5): 0.37,
    StudySpec.tn_key("phi2", 256, 0.5): 0.25,
    StudySpec.tn_key("phi2", 128, 0.9): 0.14,
    StudySpec.tn_key("phi2", 196, 0.9): 0.1,
    StudySpec.tn_key("phi2", 256, 0.9): 0.06,
}

TABLE_X_POINTS = [0.040, 0.142, 0.347, 0.449, 0.653, 0.858]

MULTI_BANDWIDTH = 0.15
MAX_FAILURE_RATE = 0.05
DEFAULT_LEVELS = np.round(np.linspace(0.01, 0.99, 99), 2)


class Replication(NamedTuple):
    estimates: List[EdgeEstimate]
    components: List[VarianceComponents]
    sup_samples: List[np.ndarray]
    truth: List[np.ndarray]


class ReplicationOutcome(NamedTuple):
    result: Optional[Replication]
    error: Optional[str]


def resolve_t_n(spec: StudySpec, n: int, sigma_tilde: float) -> float:
    """Study override, then the reference table, then 1/sqrt(ln n)."""
    key = StudySpec.tn_key(spec.scenario, n, sigma_tilde)
    if key in spec.t_n_table:
        return float(spec.t_n_table[key])
    if key in REFERENCE_TN_TABLE:
        return REFERENCE_TN_TABLE[key]
    return 1.0 / math.sqrt(math.log(n))


def _cell_seed(spec: StudySpec, n: int, sigma_tilde: float) -> np.random.SeedSequence:
    return np.random.SeedSequence([spec.seed, n, int(round(sigma_tilde * 1e6))])


def _single_curve_rep(spec: StudySpec, n: int, sigma_tilde: float, child: np.random.SeedSequence,
                      pair: KernelPair, x_points: Optional[Sequence[float]] = None,
                      bootstrap: bool = True) -> Replication:
    noise_seq, boot_seq = child.spawn(2)
    scene = simulation_scene(spec.scenario, sigma_tilde)
    grid = generate(scene, n, rng=np.random.default_rng(noise_seq))
    h = default_bandwidth(n, spec.points_per_window)
    cfg = EstimationConfig(h=h, x_grid_size=spec.x_grid_size,
                           x_points=list(x_points) if x_points is not None else None)
    est = estimate_curve(grid, cfg, pair)
    comp = variance_components(est, pair, estimate_sigma(grid))
    samples = np.empty(0)
    if bootstrap and spec.n_bootstrap > 0:
        op = score_operator(grid, est, comp, "phi", pair)
        samples = bootstrap_sup_samples(op, spec.n_bootstrap, boot_seq)
    truth = np.asarray(scene.curves[0].phi(est.x_grid), dtype=float)
    return Replication([est], [comp], [samples], [truth])


def _multi_rep(spec: StudySpec, n: int, sigma_tilde: float, child: np.random.SeedSequence,
               pair: KernelPair) -> Replication:
    noise_seq, boot_seq = child.spawn(2)
    scene = multi_edge_scene(sigma=sigma_tilde)
    grid = generate(scene, n, rng=np.random.default_rng(noise_seq))
    est_cfg = EstimationConfig(h=MULTI_BANDWIDTH, x_grid_size=spec.x_grid_size)
    multi_cfg = MultiEdgeConfig(max_curves=len(scene.curves))
    sigma_hat = estimate_sigma(grid)
    candidates = detect_candidates(grid, est_cfg, multi_cfg, sigma_hat, pair)
    estimates = estimate_multi(grid, candidates, est_cfg, multi_cfg, pair)
    comps = [variance_components(e, pair, sigma_hat) for e in estimates]
    samples = []
    for e, c in zip(estimates, comps):
        op = score_operator(grid, e, c, "phi", pair)
        samples.append(bootstrap_sup_samples(op, spec.n_bootstrap, boot_seq.spawn(1)[0]))
    truth = [np.asarray(curve.phi(est_cfg.x_grid()), dtype=float) for curve in scene.curves]
    return Replication(estimates, comps, samples, truth)


def _run_rep(spec: StudySpec, n: int, sigma_tilde: float, child: np.random.SeedSequence,
             pair: KernelPair, **kwargs) -> ReplicationOutcome:
    try:
        if spec.scenario == "multi":
            result = _multi_rep(spec, n, sigma_tilde, child, pair)
        else:
            result = _single_curve_rep(spec, n, sigma_tilde, child, pair, **kwargs)
        return ReplicationOutcome(result, None)
    except Exception as e:
        logger.warning(f"[STUDY] replication failed (n={n}, sigma={sigma_tilde}): {e}")
        return ReplicationOutcome(None, f"{type(e).__name__}: {e}")


def run_replications(spec: StudySpec, n: int, sigma_tilde: float, pair: Optional[KernelPair] = None,
                     **kwargs) -> List[ReplicationOutcome]:
    """All replications of one (n, sigma_tilde) cell, in seed order; workers are processes."""
    pair = pair or default_kernels()
    children = _cell_seed(spec, n, sigma_tilde).spawn(spec.reps)
    if spec.threads > 1 and spec.reps > 1:
        outcomes = Parallel(n_jobs=spec.threads)(
            delayed(_run_rep)(spec, n, sigma_tilde, c, pair, **kwargs) for c in children
        )
    else:
        outcomes = [_run_rep(spec, n, sigma_tilde, c, pair, **kwargs) for c in children]
    # counted here so process workers do not lose the increments
    for o in outcomes:
        STUDY_REPLICATIONS.labels(status="ok" if o.error is None else "error").inc()
    return outcomes


def _bias_sd_ratio(phi_hats: np.ndarray, truth: np.ndarray) -> np.ndarray:
    if phi_hats.shape[0] < 2:
        return np.full(truth.shape, np.nan)
    sd = phi_hats.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.abs(phi_hats.mean(axis=0) - truth) / sd


def _finite_or_nan(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return np.where(np.isfinite(values), values, np.nan)


def _column_mean(rows: List[np.ndarray], size: int) -> np.ndarray:
    """Per-x mean over replications, skipping NaN entries (unbounded intervals)."""
    if not rows:
        return np.full(size, np.nan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(np.vstack(rows), axis=0)


def oracle_sd_curve(spec: StudySpec, n: int, sigma_tilde: float, x_points: Sequence[float],
                    pair: Optional[KernelPair] = None) -> np.ndarray:
    """Asymptotic sd of n * phi_hat with the true curve and noise plugged in."""
    pair = pair or default_kernels()
    if spec.scenario not in SCENARIO_CURVES:
        raise ValueError(f"sd study needs a single-curve scenario, got {spec.scenario}")
    phi, psi = SCENARIO_CURVES[spec.scenario]
    noise_sd = simulation_scene(spec.scenario, sigma_tilde).noise.sd
    h = default_bandwidth(n, spec.points_per_window)
    return asymptotic_sd_phi_curve(oracle_components(x_points, phi, psi, jump_height, noise_sd, n, h, pair))


def _rmse_by_x(estimates: List[np.ndarray], true_sd: np.ndarray) -> np.ndarray:
    if not estimates:
        return np.full(true_sd.shape, np.nan)
    err = _finite_or_nan(np.vstack(estimates)) - true_sd
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.sqrt(np.nanmean(err ** 2, axis=0))


def _aggregate(spec: StudySpec, n: int, sigma_tilde: float, alpha: float,
               outcomes: List[ReplicationOutcome], x_grid: np.ndarray,
               true_sd: Optional[np.ndarray] = None) -> StudyCell:
    ok = [o.result for o in outcomes if o.result is not None]
    errors = [o.error for o in outcomes if o.error is not None]
    failed = len(outcomes) > 0 and len(errors) > MAX_FAILURE_RATE * len(outcomes)
    t_n = resolve_t_n(spec, n, sigma_tilde)
    n_curves = 2 if spec.scenario == "multi" else 1

    pw_hits, pw_widths, unif_hits, unif_widths, phis, sds = [], [], [], [], [], []
    unbounded_points = 0
    for rep in ok:
        if len(rep.estimates) != n_curves:
            # a missed curve counts as non-coverage
            unif_hits.append(False)
            continue
        rep_alpha = alpha / n_curves
        hits_all = True
        for est, comp, samples, truth in zip(rep.estimates, rep.components, rep.sup_samples, rep.truth):
            pw = pointwise_ci(est, comp, alpha)
            pw_hits.append((pw.lower <= truth) & (truth <= pw.upper))
            # unbounded intervals cover trivially and stay out of the width means
            pw_widths.append(_finite_or_nan(pw.upper - pw.lower))
            unbounded_points += int(pw.unbounded.sum())
            q = float(np.quantile(samples, 1.0 - rep_alpha)) if samples.size else norm.ppf(1 - rep_alpha / 2)
            band = band_from_quantile(est, comp, "phi", rep_alpha, q, t_n)
            hits_all &= bool(np.all((band.lower <= truth) & (truth <= band.upper)))
            unif_widths.append(_finite_or_nan(band.width))
            phis.append(est.phi_hat)
            sds.append(asymptotic_sd_phi_curve(comp))
        unif_hits.append(hits_all)
    if unbounded_points:
        logger.warning(f"[STUDY] {unbounded_points} unbounded intervals left out of the width means "
                       f"(n={n}, sigma={sigma_tilde}, alpha={alpha})")

    size = x_grid.size
    pw_by_x = _column_mean(pw_hits, size)
    pw_w_by_x = _column_mean(pw_widths, size)
    un_w_by_x = _column_mean(unif_widths, size)
    if n_curves == 1 and phis:
        truth = ok[0].truth[0]
        ratio = _bias_sd_ratio(np.vstack(phis), truth)
    else:
        ratio = np.full(size, np.nan)
    rmse = _rmse_by_x(sds, true_sd) if true_sd is not None else np.full(size, np.nan)

    return StudyCell(
        scenario=spec.scenario, n=n, sigma_tilde=sigma_tilde, alpha=alpha, t_n=t_n,
        reps_ok=len(ok), reps_failed=len(errors), failed=failed,
        coverage_pointwise=float(np.nanmean(pw_by_x)) if pw_hits else float("nan"),
        width_pointwise=float(np.nanmean(pw_w_by_x)) if np.any(np.isfinite(pw_w_by_x)) else float("nan"),
        coverage_uniform=float(np.mean(unif_hits)) if unif_hits else float("nan"),
        width_uniform=float(np.nanmean(un_w_by_x)) if np.any(np.isfinite(un_w_by_x)) else float("nan"),
        x_grid=x_grid,
        coverage_pointwise_by_x=pw_by_x,
        width_pointwise_by_x=pw_w_by_x,
        width_uniform_by_x=un_w_by_x,
        bias_sd_ratio_by_x=ratio,
        rmse_sd_by_x=rmse,
        errors=errors,
    )


def _study_x_grid(spec: StudySpec, n: int) -> np.ndarray:
    h = MULTI_BANDWIDTH if spec.scenario == "multi" else default_bandwidth(n, spec.points_per_window)
    return EstimationConfig(h=h, x_grid_size=spec.x_grid_size).x_grid()


def run_study(spec: StudySpec, pair: Optional[KernelPair] = None) -> StudyReport:
    """Every (n, sigma_tilde, alpha) cell of the study grid."""
    pair = pair or default_kernels()
    started = time.perf_counter()
    cells: List[StudyCell] = []
    for n, sigma_tilde in product(spec.n_list, spec.sigma_tilde_list):
        outcomes = run_replications(spec, n, sigma_tilde, pair)
        x_grid = _study_x_grid(spec, n)
        true_sd = oracle_sd_curve(spec, n, sigma_tilde, x_grid, pair) if spec.scenario in SCENARIO_CURVES else None
        for alpha in spec.alpha_list:
            cell = _aggregate(spec, n, sigma_tilde, alpha, outcomes, x_grid, true_sd)
            cells.append(cell)
            status = "FAILED" if cell.failed else "ok"
            logger.info(
                f"[STUDY] {spec.scenario} n={n} sigma={sigma_tilde} alpha={alpha}: "
                f"pw cov {cell.coverage_pointwise:.3f} width {cell.width_pointwise:.4f} | "
                f"unif cov {cell.coverage_uniform:.3f} width {cell.width_uniform:.4f} ({status})"
            )
    runtime = time.perf_counter() - started
    return StudyReport(cells=cells, metadata={
        "spec": spec.model_dump(),
        "seed": spec.seed,
        "runtime_seconds": runtime,
    })


def rmse_sd_study(spec: StudySpec, x_points: Sequence[float] = TABLE_X_POINTS,
                  plug_in: str = "estimate", pair: Optional[KernelPair] = None) -> pd.DataFrame:
    """
    RMSE of the estimated asymptotic sd of n*phi_hat at fixed x points

    ``plug_in="true"`` substitutes the true tau, psi and sigma, which yields zero
    error and checks the bookkeeping. Points outside [h, 1-h] for a given n
    cannot be estimated; they are reported with ``failed=True`` and NaN rmse.
    """
    pair = pair or default_kernels()
    if spec.scenario not in SCENARIO_CURVES:
        raise ValueError(f"sd study needs a single-curve scenario, got {spec.scenario}")
    columns = ["scenario", "n", "sigma_tilde", "x", "true_sd", "rmse", "failed"]
    x_points = np.asarray(x_points, dtype=float)
    rows = []
    for n, sigma_tilde in product(spec.n_list, spec.sigma_tilde_list):
        true_sd = oracle_sd_curve(spec, n, sigma_tilde, x_points, pair)
        h = default_bandwidth(n, spec.points_per_window)
        inside = (x_points >= h) & (x_points <= 1.0 - h)
        if not np.all(inside):
            logger.warning(f"[STUDY] x points {x_points[~inside].tolist()} lie outside [h, 1-h] "
                           f"for n={n} (h={h:.4f}); reported as failed")
        rmse = np.full(x_points.shape, np.nan)
        if np.any(inside):
            if plug_in == "true":
                estimates = [true_sd[inside]] * max(spec.reps, 1)
            else:
                outcomes = run_replications(spec, n, sigma_tilde, pair, x_points=x_points[inside].tolist(),
                                            bootstrap=False)
                estimates = [asymptotic_sd_phi_curve(o.result.components[0]) for o in outcomes
                             if o.result is not None]
                if not estimates:
                    logger.warning(f"[STUDY] every replication failed for n={n}, sigma={sigma_tilde}")
            rmse[inside] = _rmse_by_x(estimates, true_sd[inside])
        for x, r, s, ok in zip(x_points, rmse, true_sd, inside):
            rows.append({"scenario": spec.scenario, "n": n, "sigma_tilde": sigma_tilde, "x": float(x),
                         "true_sd": float(s), "rmse": float(r), "failed": bool(not ok or math.isnan(r))})
    return pd.DataFrame(rows, columns=columns)


def bias_ratio_study(spec: StudySpec, pair: Optional[KernelPair] = None) -> pd.DataFrame:
    """|mean(phi_hat) - phi| / sd(phi_hat) per x, for every (n, sigma_tilde)."""
    single_alpha = spec.model_copy(update={"alpha_list": spec.alpha_list[:1], "n_bootstrap": 0})
    report = run_study(single_alpha, pair)
    rows = []
    for cell in report.cells:
        for x, r in zip(cell.x_grid, cell.bias_sd_ratio_by_x):
            rows.append({"scenario": cell.scenario, "n": cell.n, "sigma_tilde": cell.sigma_tilde,
                         "x": float(x), "ratio": float(r)})
    return pd.DataFrame(rows, columns=["scenario", "n", "sigma_tilde", "x", "ratio"])


def tn_sensitivity(spec: StudySpec, levels: Sequence[float] = DEFAULT_LEVELS,
                   pair: Optional[KernelPair] = None) -> pd.DataFrame:
    """
    Empirical quantiles of the sup statistic against the bootstrap quantiles

    The bootstrap curve is the per-level mean of each replication's bootstrap
    quantile curve. One block of rows per (n, sigma_tilde).
    """
    pair = pair or default_kernels()
    columns = ["scenario", "n", "sigma_tilde", "level", "empirical", "bootstrap"]
    if spec.reps == 0:
        return pd.DataFrame(columns=columns)
    levels = np.asarray(levels, dtype=float)
    rows = []
    for n, sigma_tilde in product(spec.n_list, spec.sigma_tilde_list):
        outcomes = [o.result for o in run_replications(spec, n, sigma_tilde, pair) if o.result is not None]
        if not outcomes:
            continue
        stats = np.array([sup_statistic(r.estimates[0], r.components[0], r.truth[0]) for r in outcomes])
        boot = np.mean([np.quantile(r.sup_samples[0], levels) for r in outcomes], axis=0)
        empirical = np.quantile(stats, levels)
        for lv, e, b in zip(levels, empirical, boot):
            rows.append({"scenario": spec.scenario, "n": n, "sigma_tilde": sigma_tilde,
                         "level": float(lv), "empirical": float(e), "bootstrap": float(b)})
    return pd.DataFrame(rows, columns=columns)


def crossing_level(curves: pd.DataFrame) -> Optional[float]:
    """First level at which the bootstrap curve moves from below to at-or-above the empirical one."""
    if curves.empty:
        return None
    ordered = curves.sort_values("level")
    diff = (ordered["bootstrap"] - ordered["empirical"]).to_numpy()
    levels = ordered["level"].to_numpy()
    for k in range(1, diff.size):
        if diff[k - 1] < 0 <= diff[k]:
            return float(levels[k])
    return None


# --- I/O ---------------------------------------------------------------------

def load_study_spec(path: Union[str, Path]) -> StudySpec:
    """Read a StudySpec from YAML."""
    with open(path, "r") as f:
        data = yaml.safe_load(f) or {}
    return StudySpec(**data)


def write_report(report: StudyReport, csv_path: Optional[Union[str, Path]] = None,
                 json_path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """CSV has one row per cell and x; JSON nests the same data per cell."""
    payload = report.to_json_dict()
    if csv_path is not None:
        report.to_frame().to_csv(csv_path, index=False, float_format="%.9g")
    if json_path is not None:
        with open(json_path, "w") as f:
            json.dump(payload, f, indent=2)
    return payload
