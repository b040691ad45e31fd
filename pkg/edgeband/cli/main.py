"""
Command-line front end - estimate, bands, multi, simulate, checks

Exit codes:
    0  success
    1  runtime failure
    2  unreadable or unparsable input (missing file, malformed PGM/CSV/YAML)
    3  invalid configuration (bad flag values, inconsistent settings)
"""
from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
import yaml
from pydantic import ValidationError

from edgeband.estimation.estimator import bandwidth_range_check, default_bandwidth, estimate_curve
from edgeband.exceptions import ConfigurationError, EdgeBandError, ImageParseError, InvalidArgumentError
from edgeband.imaging.image_model import ImageGrid, noise_moment_check
from edgeband.imaging.loader import load_image
from edgeband.inference.confidence import uniform_band
from edgeband.inference.multiedge import bonferroni_bands, detect_candidates, estimate_multi
from edgeband.inference.variance import estimate_sigma, variance_components
from edgeband.kernels.rotated_kernel import check_moment_assumption, default_kernels, kernel_assumption_report
from edgeband.schemas import (
    BandResult, EdgeEstimate, EstimationConfig, MultiEdgeConfig, NoiseSpec, RunConfig, StudySpec,
)
from edgeband.simulation.study_runner import load_study_spec, run_study, write_report
from shared.config.settings import get_settings
from shared.utils.logging import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_PARSE = 2
EXIT_CONFIG = 3

FLOAT_FORMAT = "%.9g"

PathLike = Union[str, Path]


# --- CSV artifacts -----------------------------------------------------------

def write_frame_csv(frame: pd.DataFrame, path: Optional[PathLike], meta: Dict[str, Any]) -> str:
    """Write ``# key=value`` header lines then the table; stdout when path is None."""
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}={FLOAT_FORMAT % value if isinstance(value, float) else value}\n")
    frame.to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    text = buf.getvalue()
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def read_frame_csv(path: PathLike) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Inverse of write_frame_csv."""
    meta: Dict[str, str] = {}
    with open(path, "r") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
    return pd.read_csv(path, comment="#"), meta


def read_estimate_csv(path: PathLike) -> EdgeEstimate:
    """Re-read the output of ``edgeband estimate``."""
    frame, meta = read_frame_csv(path)
    try:
        return EdgeEstimate(
            x_grid=frame["x"].to_numpy(dtype=float),
            phi_hat=frame["phi_hat"].to_numpy(dtype=float),
            psi_hat=frame["psi_hat"].to_numpy(dtype=float),
            tau_hat=frame["tau_hat"].to_numpy(dtype=float),
            contrast_at_max=frame["contrast"].to_numpy(dtype=float),
            h=float(meta["h"]),
            n=float(meta["n"]),
        )
    except KeyError as e:
        raise ImageParseError(f"estimate CSV lacks {e}", str(path), None) from e


def _write_json(payload: Any, path: Optional[PathLike]) -> None:
    if path is None:
        return
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)


# --- pipeline steps ----------------------------------------------------------

def _load(cfg: RunConfig) -> ImageGrid:
    return load_image(cfg.input, cfg.fmt)


def _bandwidth(grid: ImageGrid, cfg: RunConfig) -> float:
    if cfg.h is not None:
        return cfg.h
    h = default_bandwidth(int(round(grid.n)), cfg.points_per_window)
    logger.info(f"Default bandwidth h={h:.5f} ({cfg.points_per_window} points per window)")
    return h


def _estimate(grid: ImageGrid, cfg: RunConfig) -> EdgeEstimate:
    est_cfg = EstimationConfig(h=_bandwidth(grid, cfg))
    return estimate_curve(grid, est_cfg, default_kernels(), threads=cfg.threads)


def cmd_estimate(cfg: RunConfig) -> EdgeEstimate:
    """Estimate phi, psi and tau on the default x grid."""
    grid = _load(cfg)
    est = _estimate(grid, cfg)
    write_frame_csv(est.to_frame(), cfg.out, {"h": est.h, "n": float(est.n)})
    _write_json(est.to_json_dict(), cfg.json_out)
    return est


def _band_meta(band: BandResult) -> Dict[str, Any]:
    return {
        "target": band.target,
        "q_boot": band.quantile_boot,
        "t_n": band.t_n_used,
        "alpha": band.alpha,
        "sigma_hat": band.sigma_hat,
    }


def cmd_bands(cfg: RunConfig) -> BandResult:
    """Point-wise intervals and a uniform band for cfg.target."""
    grid = _load(cfg)
    est = _estimate(grid, cfg)
    pair = default_kernels()
    comp = variance_components(est, pair, estimate_sigma(grid, cfg.sigma_region))
    band = uniform_band(grid, est, comp, cfg.band_config(), pair)
    write_frame_csv(band.to_frame(), cfg.out, _band_meta(band))
    _write_json(band.to_json_dict(), cfg.json_out)
    return band


def cmd_multi(cfg: RunConfig) -> List[BandResult]:
    """Detect several edges and attach Bonferroni-corrected bands."""
    grid = _load(cfg)
    pair = default_kernels()
    est_cfg = EstimationConfig(h=_bandwidth(grid, cfg))
    multi_cfg = MultiEdgeConfig(max_curves=cfg.max_curves, band=cfg.band_config(target="phi"))
    sigma_hat = estimate_sigma(grid, cfg.sigma_region)
    candidates = detect_candidates(grid, est_cfg, multi_cfg, sigma_hat, pair)
    estimates = estimate_multi(grid, candidates, est_cfg, multi_cfg, pair)
    comps = [variance_components(e, pair, sigma_hat) for e in estimates]
    bands = bonferroni_bands(grid, estimates, comps, multi_cfg, pair)

    frames = [b.to_frame().assign(curve=j)[["curve", "x", "center", "pw_lo", "pw_hi", "unif_lo", "unif_hi"]]
              for j, b in enumerate(bands)]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["curve", "x", "center", "pw_lo", "pw_hi", "unif_lo", "unif_hi"])
    meta: Dict[str, Any] = {"curves": len(bands), "alpha": multi_cfg.band.alpha, "sigma_hat": sigma_hat}
    for j, b in enumerate(bands):
        meta[f"q_boot_{j}"] = b.quantile_boot
        meta[f"t_n_{j}"] = b.t_n_used
    write_frame_csv(frame, cfg.out, meta)
    _write_json({"bands": [b.to_json_dict() for b in bands]}, cfg.json_out)
    return bands


def cmd_simulate(cfg: RunConfig):
    """Run a Monte Carlo study from a YAML spec (desk-scale defaults otherwise)."""
    spec = load_study_spec(cfg.study) if cfg.study else StudySpec()
    update = {"threads": cfg.threads}
    if cfg.seed_given or not cfg.study:
        update["seed"] = cfg.seed
    spec = spec.model_copy(update=update)
    report = run_study(spec)
    if cfg.out is None:
        sys.stdout.write(report.to_frame().to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))
    write_report(report, cfg.out, cfg.json_out)
    return report


def cmd_checks(cfg: RunConfig) -> bool:
    """Print kernel, moment, bandwidth and noise checks; True when all pass."""
    pair = default_kernels()
    checks = list(kernel_assumption_report(pair))
    n = cfg.n if cfg.n is not None else 128
    h = cfg.h if cfg.h is not None else default_bandwidth(n, cfg.points_per_window)
    checks.append(bandwidth_range_check(n, h, eta=cfg.eta))
    checks.append(noise_moment_check(NoiseSpec(family="student_t", scale=1.0, df=cfg.df)))

    print("Edgeband assumption checks")
    print("=" * 40)
    for check in checks:
        mark = "✅" if check.passed else "❌"
        detail = f" - {check.detail}" if check.detail else ""
        print(f"{mark} {check.name}: {check.value:.6g}{detail}")

    moment = check_moment_assumption(pair)
    print(f"{'✅' if moment.satisfied else '❌'} odd kernel first moment: {moment.message}")

    print("\nKernel constants")
    for key, value in pair.constants.model_dump().items():
        print(f"  {key} = {value:.10g}")
    return all(c.passed for c in checks) and moment.satisfied


COMMANDS = {
    "estimate": cmd_estimate,
    "bands": cmd_bands,
    "multi": cmd_multi,
    "simulate": cmd_simulate,
    "checks": cmd_checks,
}


# --- argument parsing --------------------------------------------------------

def parse_region(text: str) -> Tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected x0,y0,x1,y1, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric region {text!r}") from None


def parse_tn(text: str) -> Optional[float]:
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--tn expects a number or 'auto', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="image file (PGM P2/P5 or CSV)")
    common.add_argument("--format", dest="fmt", choices=["pgm", "csv"], help="input format (default: from suffix)")
    common.add_argument("--h", type=float, help="bandwidth (default: from --points-per-window)")
    common.add_argument("--points-per-window", type=int, default=100)
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--tn", type=parse_tn, default=None, help="band correction t_n, or 'auto'")
    common.add_argument("--bootstrap", type=int, default=None, help="bootstrap replications")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: $EDGEBAND_SEED or 0)")
    common.add_argument("--sigma-region", type=parse_region, default=None, metavar="x0,y0,x1,y1")
    common.add_argument("--target", choices=["phi", "psi", "tau"], default="phi")
    common.add_argument("--out", help="CSV output path (default: stdout)")
    common.add_argument("--json", dest="json_out", help="JSON output path")
    common.add_argument("--threads", type=int, default=None)

    parser = argparse.ArgumentParser(
        prog="edgeband",
        description="Jump curve estimation with confidence bands for noisy images",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("estimate", parents=[common], help="estimate jump location, slope and height")
    sub.add_parser("bands", parents=[common], help="point-wise intervals and uniform band")
    multi = sub.add_parser("multi", parents=[common], help="several edges with Bonferroni bands")
    multi.add_argument("--max-curves", type=int, default=2)
    simulate = sub.add_parser("simulate", parents=[common], help="Monte Carlo coverage study")
    simulate.add_argument("--study", help="YAML study specification")
    checks = sub.add_parser("checks", parents=[common], help="kernel and tuning assumption report")
    checks.add_argument("--n", type=int, default=None, help="image side length (default 128)")
    checks.add_argument("--eta", type=float, default=1.1)
    checks.add_argument("--df", type=int, default=10, help="t noise degrees of freedom")
    return parser


def to_run_config(args: argparse.Namespace) -> RunConfig:
    settings = get_settings()
    values = {
        "subcommand": args.subcommand,
        "input": args.input,
        "fmt": args.fmt,
        "h": args.h,
        "points_per_window": args.points_per_window,
        "alpha": args.alpha,
        "t_n": args.tn,
        "n_bootstrap": args.bootstrap if args.bootstrap is not None else settings.n_bootstrap,
        "seed": args.seed if args.seed is not None else (settings.seed or 0),
        "seed_given": args.seed is not None or settings.seed is not None,
        "target": args.target,
        "sigma_region": args.sigma_region,
        "out": args.out,
        "json_out": args.json_out,
        "threads": args.threads if args.threads is not None else settings.threads,
    }
    for extra in ("study", "max_curves", "n", "eta", "df"):
        if hasattr(args, extra):
            values[extra] = getattr(args, extra)
    return RunConfig(**values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = to_run_config(args)
        result = COMMANDS[cfg.subcommand](cfg)
        if cfg.subcommand == "checks" and result is False:
            logger.warning("Some assumption checks failed")
        return EXIT_OK
    except (FileNotFoundError, ImageParseError, yaml.YAMLError) as e:
        logger.error(f"Input error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigurationError, InvalidArgumentError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EdgeBandError as e:
        logger.error(f"Run failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
