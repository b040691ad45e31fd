"""
Stage 2: Image model - gridded observations and synthetic boundary-fragment scenes

Design convention: the observation at array index [j1, j2] sits at
(x, y) = ((j1 + 1) / n1, (j2 + 1) / n2). The first axis is the horizontal
coordinate x along which the jump curve y = phi(x) is parametrized.
"""
from __future__ import annotations

import math
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.spatial.distance import cdist

from edgeband.exceptions import InvalidArgumentError, SceneValidationError
from edgeband.kernels.rotated_kernel import AssumptionCheck
from edgeband.schemas import NoiseSpec
from shared.utils.logging import get_logger

logger = get_logger(__name__)

MIN_SIDE = 8


class ImageGrid(BaseModel):
    """Immutable n1 x n2 observation matrix on the regular design"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    source: str = "memory"

    @field_validator("values", mode="before")
    @classmethod
    def _freeze(cls, v: np.ndarray) -> np.ndarray:
        arr = np.array(v, dtype=float, copy=True)
        if arr.ndim != 2 or min(arr.shape) < 2:
            raise ValueError(f"image must be a 2-D matrix with both sides >= 2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        arr.setflags(write=False)
        return arr

    @property
    def n1(self) -> int:
        return int(self.values.shape[0])

    @property
    def n2(self) -> int:
        return int(self.values.shape[1])

    @property
    def is_square(self) -> bool:
        return self.n1 == self.n2

    @property
    def n(self) -> float:
        """Effective side length sqrt(n1 * n2); equals n for square grids."""
        return math.sqrt(self.n1 * self.n2)

    @property
    def pixel_weight(self) -> float:
        return 1.0 / (self.n1 * self.n2)

    @property
    def x_coords(self) -> np.ndarray:
        return np.arange(1, self.n1 + 1) / self.n1

    @property
    def y_coords(self) -> np.ndarray:
        return np.arange(1, self.n2 + 1) / self.n2


class JumpCurve(BaseModel):
    """One jump curve y = phi(x) of height tau(x); psi is the slope angle if known"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    phi: Callable
    tau: Callable
    psi: Optional[Callable] = None
    name: str = "curve"


def _zero_surface(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


class SeparationReport(BaseModel):
    min_distance: float
    rho_max: float
    separated: bool


class SceneSpec(BaseModel):
    """Smooth surface plus jump curves plus noise"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    smooth: Callable = _zero_surface
    curves: List[JumpCurve]
    noise: NoiseSpec = NoiseSpec()

    def validate_on(self, xs: np.ndarray) -> None:
        for k, curve in enumerate(self.curves):
            tau = np.broadcast_to(np.asarray(curve.tau(xs), dtype=float), xs.shape)
            phi = np.broadcast_to(np.asarray(curve.phi(xs), dtype=float), xs.shape)
            if np.any(tau <= 0):
                raise SceneValidationError(f"jump height of curve {k} ({curve.name}) is not strictly positive")
            if np.any((phi <= 0) | (phi >= 1)):
                raise SceneValidationError(f"curve {k} ({curve.name}) leaves the open unit interval")

    def separation(self, grid_points: int = 512) -> SeparationReport:
        """Smallest distance between the graphs of distinct curves."""
        if len(self.curves) < 2:
            return SeparationReport(min_distance=math.inf, rho_max=math.inf, separated=True)
        xs = np.linspace(0.0, 1.0, grid_points)
        graphs = [np.column_stack([xs, np.broadcast_to(c.phi(xs), xs.shape)]) for c in self.curves]
        best = math.inf
        for i in range(len(graphs)):
            for j in range(i + 1, len(graphs)):
                best = min(best, float(cdist(graphs[i], graphs[j]).min()))
        return SeparationReport(min_distance=best, rho_max=best / 2.0, separated=best > 0)


def _draw_noise(noise: NoiseSpec, shape, rng: np.random.Generator) -> np.ndarray:
    if noise.scale == 0:
        return np.zeros(shape)
    if noise.family == "gaussian":
        return noise.scale * rng.standard_normal(shape)
    return noise.scale * rng.standard_t(noise.df, size=shape)


def generate(spec: SceneSpec, n: int, rng: Optional[np.random.Generator] = None) -> ImageGrid:
    """
    Sample Y = m + sum_k tau_k(x) 1{y <= phi_k(x)} + noise on the n x n design.

    Without an explicit generator the stream is seeded from ``spec.noise.seed``.
    """
    if n < MIN_SIDE:
        raise InvalidArgumentError(f"side length must be >= {MIN_SIDE}, got {n}")
    coords = np.arange(1, n + 1) / n
    spec.validate_on(coords)
    if len(spec.curves) > 1:
        report = spec.separation()
        logger.info(f"[SCENE] curve separation: min distance {report.min_distance:.4f}")

    X, Yc = np.meshgrid(coords, coords, indexing="ij")
    values = np.broadcast_to(np.asarray(spec.smooth(X, Yc), dtype=float), X.shape).copy()
    for curve in spec.curves:
        phi = np.broadcast_to(np.asarray(curve.phi(coords), dtype=float), coords.shape)
        tau = np.broadcast_to(np.asarray(curve.tau(coords), dtype=float), coords.shape)
        values += tau[:, None] * (Yc <= phi[:, None])

    rng = rng if rng is not None else np.random.default_rng(spec.noise.seed)
    values += _draw_noise(spec.noise, values.shape, rng)
    return ImageGrid(values=values, source=f"synthetic(n={n})")


# --- simulation scenes -------------------------------------------------------

def smooth_trend(x, y):
    return np.sin(y ** 2) * np.cos((x - 0.5) ** 2)


def jump_height(x):
    return 0.3 * np.sin(10.0 * np.asarray(x)) ** 2 + 0.5


def phi_linear(x):
    return 0.25 + np.asarray(x) / 2.0


def psi_linear(x):
    return np.full(np.shape(x), math.atan(0.5)) if np.ndim(x) else math.atan(0.5)


def phi_parabola(x):
    return -(np.asarray(x) - 0.5) ** 2 + 0.6


def psi_parabola(x):
    return np.arctan(-2.0 * (np.asarray(x) - 0.5))


SCENARIO_CURVES = {
    "phi1": (phi_linear, psi_linear),
    "phi2": (phi_parabola, psi_parabola),
}


def simulation_scene(scenario: str, sigma_tilde: float, seed: int = 0, df: int = 10) -> SceneSpec:
    """Single-curve simulation scene with t_df noise of scale sigma_tilde."""
    if scenario not in SCENARIO_CURVES:
        raise InvalidArgumentError(f"unknown scenario {scenario!r}; expected one of {sorted(SCENARIO_CURVES)}")
    phi, psi = SCENARIO_CURVES[scenario]
    return SceneSpec(
        smooth=smooth_trend,
        curves=[JumpCurve(phi=phi, tau=jump_height, psi=psi, name=scenario)],
        noise=NoiseSpec(family="student_t", scale=sigma_tilde, df=df, seed=seed),
    )


MULTI_OFFSET = 21.0 / 50.0
MULTI_HEIGHT = 1.5


def multi_edge_scene(sigma: float = 0.1, seed: int = 0) -> SceneSpec:
    """Two parallel parabolic edges of constant height over the smooth trend m."""
    def lower(x):
        return -(np.asarray(x) - 0.5) ** 2 + MULTI_OFFSET

    def upper(x):
        return lower(x) + MULTI_OFFSET

    def height(x):
        return np.full(np.shape(x), MULTI_HEIGHT) if np.ndim(x) else MULTI_HEIGHT

    return SceneSpec(
        smooth=smooth_trend,
        curves=[
            JumpCurve(phi=lower, tau=height, psi=psi_parabola, name="lower"),
            JumpCurve(phi=upper, tau=height, psi=psi_parabola, name="upper"),
        ],
        noise=NoiseSpec(family="gaussian", scale=sigma, seed=seed),
    )


def noise_moment_check(noise: NoiseSpec, order: int = 5) -> AssumptionCheck:
    """Whether the noise has a finite moment of the given order (t_df needs df > order)."""
    if noise.family == "gaussian" or noise.scale == 0:
        return AssumptionCheck(name=f"noise_moment_{order}", value=math.inf, passed=True,
                               detail=f"{noise.family} noise has all moments")
    passed = noise.df > order
    return AssumptionCheck(
        name=f"noise_moment_{order}", value=float(noise.df), passed=passed,
        detail=f"t_{noise.df} noise: E|e|^{order} {'finite' if passed else 'infinite'}",
    )
