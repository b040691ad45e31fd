"""
Data models - configuration objects and results exchanged between stages
"""
import math
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from edgeband.exceptions import ConfigurationError


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, BaseModel):
        return {k: _jsonable(v) for k, v in dict(value).items()}
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class ArrayModel(BaseModel):
    """Frozen model that may carry numpy arrays"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    def to_json_dict(self) -> Dict[str, Any]:
        return _jsonable(self)


# --- configuration -----------------------------------------------------------

class NoiseSpec(BaseModel):
    """Additive noise: scale * N(0,1) or scale * t_df"""
    model_config = ConfigDict(frozen=True)

    family: Literal["gaussian", "student_t"] = "student_t"
    scale: float = Field(default=0.0, ge=0.0)
    df: int = Field(default=10, gt=0)
    seed: int = Field(default=0, ge=0)

    @property
    def sd(self) -> float:
        """Standard deviation of one noise draw."""
        if self.family == "gaussian":
            return self.scale
        if self.df <= 2:
            return math.inf
        return self.scale * math.sqrt(self.df / (self.df - 2.0))


class EstimationConfig(BaseModel):
    """
    Per-strip maximization settings

    ``interval`` defaults to [max(2h, 0.04), min(1-2h, 0.96)]; ``x_points``
    overrides the equispaced evaluation grid and must lie in [h, 1-h].
    """
    model_config = ConfigDict(frozen=True)

    h: float
    interval: Optional[Tuple[float, float]] = None
    x_grid_size: int = 64
    x_points: Optional[List[float]] = None
    coarse_y_step: Optional[float] = None
    coarse_psi_step: float = math.pi / 64
    refine_iters: int = 30
    y_range: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def _check(self) -> "EstimationConfig":
        if not (self.h > 0):
            raise ConfigurationError(f"bandwidth h must be positive, got {self.h}")
        if self.h > 0.5:
            raise ConfigurationError(f"empty search region: h={self.h} > 1/2")
        if self.x_grid_size < 1:
            raise ConfigurationError("x_grid_size must be at least 1")
        if self.coarse_y_step is not None and not self.coarse_y_step > 0:
            raise ConfigurationError("coarse_y_step must be positive")
        if not self.coarse_psi_step > 0:
            raise ConfigurationError("coarse_psi_step must be positive")
        if self.refine_iters < 0:
            raise ConfigurationError("refine_iters must be non-negative")
        lo, hi = self.resolved_interval
        tol = 1e-12
        if not (self.h - tol <= lo <= hi <= 1.0 - self.h + tol):
            raise ConfigurationError(f"interval [{lo}, {hi}] is not inside [h, 1-h] for h={self.h}")
        if self.x_points is not None:
            if len(self.x_points) == 0:
                raise ConfigurationError("x_points must not be empty")
            bad = [x for x in self.x_points if not (self.h - tol <= x <= 1.0 - self.h + tol)]
            if bad:
                raise ConfigurationError(f"x_points outside [h, 1-h]: {bad}")
        return self

    @property
    def resolved_interval(self) -> Tuple[float, float]:
        if self.interval is not None:
            return float(self.interval[0]), float(self.interval[1])
        return max(2 * self.h, 0.04), min(1 - 2 * self.h, 0.96)

    def x_grid(self) -> np.ndarray:
        if self.x_points is not None:
            return np.asarray(self.x_points, dtype=float)
        lo, hi = self.resolved_interval
        return np.linspace(lo, hi, self.x_grid_size)


TnPolicy = Literal["fixed", "inv_sqrt_log"]


class BandConfig(BaseModel):
    """Bootstrap band settings"""
    model_config = ConfigDict(frozen=True)

    alpha: float = 0.05
    n_bootstrap: int = 4000
    t_n: Optional[float] = None
    t_n_policy: TnPolicy = "inv_sqrt_log"
    target: Literal["phi", "psi", "tau"] = "phi"
    seed: int = 0
    threads: int = 1
    chunk_size: int = 256

    @model_validator(mode="after")
    def _check(self) -> "BandConfig":
        if not (0.0 < self.alpha < 1.0):
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_bootstrap < 500:
            raise ConfigurationError(f"n_bootstrap must be >= 500, got {self.n_bootstrap}")
        if self.t_n_policy == "fixed" and (self.t_n is None or self.t_n < 0):
            raise ConfigurationError("fixed t_n policy requires t_n >= 0")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        if self.threads < 1 or self.chunk_size < 1:
            raise ConfigurationError("threads and chunk_size must be positive")
        return self

    def resolve_t_n(self, n: float) -> float:
        if self.t_n_policy == "fixed":
            return float(self.t_n)
        return 1.0 / math.sqrt(math.log(n))

    @classmethod
    def with_fixed_t_n(cls, t_n: float, **kwargs) -> "BandConfig":
        return cls(t_n=t_n, t_n_policy="fixed", **kwargs)


class MultiEdgeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_curves: int = 2
    separation: Optional[float] = None   # defaults to h
    band: BandConfig = BandConfig()
    min_coverage: float = 0.75

    @model_validator(mode="after")
    def _check(self) -> "MultiEdgeConfig":
        if self.max_curves < 1:
            raise ConfigurationError("max_curves must be >= 1")
        if self.separation is not None and not self.separation > 0:
            raise ConfigurationError("separation must be positive")
        return self


Subcommand = Literal["estimate", "bands", "multi", "simulate", "checks"]


class RunConfig(BaseModel):
    """One command-line invocation after flag parsing"""
    model_config = ConfigDict(frozen=True)

    subcommand: Subcommand
    input: Optional[str] = None
    fmt: Optional[Literal["pgm", "csv"]] = None
    h: Optional[float] = None
    points_per_window: int = 100
    alpha: Optional[float] = None
    t_n: Optional[float] = None          # None selects the 1/sqrt(ln n) policy
    n_bootstrap: int = 4000
    seed: int = 0
    seed_given: bool = False
    target: Literal["phi", "psi", "tau"] = "phi"
    sigma_region: Optional[Tuple[float, float, float, float]] = None
    out: Optional[str] = None
    json_out: Optional[str] = None
    threads: int = 1
    study: Optional[str] = None
    max_curves: int = 2
    n: Optional[int] = None
    eta: float = 1.1
    df: int = 10

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        if self.subcommand in ("estimate", "bands", "multi") and not self.input:
            raise ConfigurationError(f"{self.subcommand} requires --input")
        if self.subcommand in ("bands", "multi") and self.alpha is None:
            raise ConfigurationError(f"{self.subcommand} requires --alpha")
        if self.h is not None and not self.h > 0:
            raise ConfigurationError(f"--h must be positive, got {self.h}")
        if self.points_per_window < 1:
            raise ConfigurationError("--points-per-window must be positive")
        if self.t_n is not None and self.t_n < 0:
            raise ConfigurationError("--tn must be non-negative")
        if self.threads < 1:
            raise ConfigurationError("--threads must be positive")
        if self.seed < 0:
            raise ConfigurationError("--seed must be non-negative")
        return self

    def band_config(self, **overrides) -> BandConfig:
        kwargs = dict(alpha=self.alpha if self.alpha is not None else 0.05, n_bootstrap=self.n_bootstrap,
                      target=self.target, seed=self.seed, threads=self.threads)
        kwargs.update(overrides)
        if self.t_n is not None:
            return BandConfig.with_fixed_t_n(self.t_n, **kwargs)
        return BandConfig(**kwargs)


# --- results -----------------------------------------------------------------

class EdgeEstimate(ArrayModel):
    """Per-x estimates of jump location, slope and height"""
    x_grid: np.ndarray
    phi_hat: np.ndarray
    psi_hat: np.ndarray
    tau_hat: np.ndarray
    contrast_at_max: np.ndarray
    h: float
    n: float

    @property
    def size(self) -> int:
        return int(self.x_grid.shape[0])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "x": self.x_grid,
            "phi_hat": self.phi_hat,
            "psi_hat": self.psi_hat,
            "tau_hat": self.tau_hat,
            "contrast": self.contrast_at_max,
        })


class VarianceComponents(ArrayModel):
    """Noise level and plug-in variance components on the estimate's grid"""
    sigma_hat: float
    x_grid: np.ndarray
    VH_phi: np.ndarray
    VS_phi: np.ndarray
    VH_psi: np.ndarray
    VS_psi: float
    VS_tau: float
    kernel_constants: Dict[str, float]
    n: float
    h: float
    degenerate: np.ndarray


class BandResult(ArrayModel):
    """Point-wise intervals and a uniform band for one target curve"""
    target: Literal["phi", "psi", "tau"]
    x_grid: np.ndarray
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    pointwise_lower: np.ndarray
    pointwise_upper: np.ndarray
    quantile_boot: float
    t_n_used: float
    alpha: float
    sigma_hat: float
    nested: bool

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def pointwise_width(self) -> np.ndarray:
        return self.pointwise_upper - self.pointwise_lower

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "x": self.x_grid,
            "center": self.center,
            "pw_lo": self.pointwise_lower,
            "pw_hi": self.pointwise_upper,
            "unif_lo": self.lower,
            "unif_hi": self.upper,
        })


class StudySpec(BaseModel):
    """Monte Carlo study grid"""
    model_config = ConfigDict(frozen=True)

    scenario: Literal["phi1", "phi2", "multi"] = "phi1"
    n_list: List[int] = [64, 128]
    sigma_tilde_list: List[float] = [0.5]
    alpha_list: List[float] = [0.05]
    reps: int = 100
    n_bootstrap: int = 2000
    t_n_table: Dict[str, float] = {}
    seed: int = 0
    threads: int = 1
    points_per_window: int = 100
    x_grid_size: int = 64

    @model_validator(mode="after")
    def _check(self) -> "StudySpec":
        if self.reps < 0:
            raise ConfigurationError("reps must be >= 0")
        if any(n < 32 for n in self.n_list):
            raise ConfigurationError(f"all n must be >= 32, got {self.n_list}")
        if any(not (0 < a < 1) for a in self.alpha_list):
            raise ConfigurationError("alpha values must lie in (0, 1)")
        if any(s < 0 for s in self.sigma_tilde_list):
            raise ConfigurationError("noise levels must be non-negative")
        return self

    @staticmethod
    def tn_key(scenario: str, n: int, sigma_tilde: float) -> str:
        return f"{scenario}:{n}:{sigma_tilde:g}"


class StudyCell(ArrayModel):
    """Aggregates for one (n, sigma_tilde, alpha) cell"""
    scenario: str
    n: int
    sigma_tilde: float
    alpha: float
    t_n: float
    reps_ok: int
    reps_failed: int
    failed: bool
    coverage_pointwise: float
    width_pointwise: float
    coverage_uniform: float
    width_uniform: float
    x_grid: np.ndarray
    coverage_pointwise_by_x: np.ndarray
    width_pointwise_by_x: np.ndarray
    width_uniform_by_x: np.ndarray
    bias_sd_ratio_by_x: np.ndarray
    # RMSE of the plug-in sd of n*phi_hat against its true-parameter value; NaN for multi
    rmse_sd_by_x: np.ndarray
    errors: List[str] = []


class StudyReport(ArrayModel):
    cells: List[StudyCell]
    metadata: Dict[str, Any]

    def to_frame(self) -> pd.DataFrame:
        """One row per cell and x."""
        rows = []
        for cell in self.cells:
            for k, x in enumerate(cell.x_grid):
                rows.append({
                    "scenario": cell.scenario,
                    "n": cell.n,
                    "sigma_tilde": cell.sigma_tilde,
                    "alpha": cell.alpha,
                    "t_n": cell.t_n,
                    "x": float(x),
                    "coverage_pointwise": float(cell.coverage_pointwise_by_x[k]),
                    "width_pointwise": float(cell.width_pointwise_by_x[k]),
                    "width_uniform": float(cell.width_uniform_by_x[k]),
                    "bias_sd_ratio": float(cell.bias_sd_ratio_by_x[k]),
                    "rmse_sd": float(cell.rmse_sd_by_x[k]),
                    "coverage_uniform_cell": cell.coverage_uniform,
                    "failed": cell.failed,
                })
        return pd.DataFrame(rows)
