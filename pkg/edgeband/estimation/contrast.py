"""
Stage 3: Contrast process - weighted sums of observations against the rotated kernel

    M(x, y, psi) = (n1 n2)^-1 sum Y[j1, j2] K(h^-1 R_{-psi}((x, y) - x_j)) / h^2

Only pixels within h*sqrt(2) of the query point in each coordinate can carry
kernel mass, so every evaluation walks that bounding box and nothing else.
The same local terms feed the gradient and the bootstrap score weights.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from edgeband.exceptions import InvalidArgumentError
from edgeband.imaging.image_model import ImageGrid, SceneSpec
from edgeband.kernels.rotated_kernel import KernelPair, default_kernels, rotated_coordinates

SQRT2 = math.sqrt(2.0)
ORACLE_NODES = 401


class ContrastQuery(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    psi: float
    h: float

    @model_validator(mode="after")
    def _check(self) -> "ContrastQuery":
        if not (0.0 < self.h < 0.5):
            raise InvalidArgumentError(f"bandwidth must lie in (0, 1/2), got {self.h}")
        if not (-math.pi / 2 - 1e-12 <= self.psi <= math.pi / 2 + 1e-12):
            raise InvalidArgumentError(f"angle {self.psi} outside [-pi/2, pi/2]")
        return self


class LocalTerms(NamedTuple):
    """Pixels in the support box of one query, with their kernel quantities"""
    flat_index: np.ndarray   # raveled indices into grid.values
    y_obs: np.ndarray
    kernel: np.ndarray       # K(u)
    grad1: np.ndarray        # K1'(u1) K2(u2)
    grad2: np.ndarray        # K1(u1) K2'(u2)
    d1: np.ndarray
    d2: np.ndarray


def _support_slice(coords_count: int, center: float, radius: float) -> Tuple[int, int]:
    lo = max(int(math.ceil((center - radius) * coords_count)) - 1, 0)
    hi = min(int(math.floor((center + radius) * coords_count)), coords_count)
    return lo, max(lo, hi)


def local_terms(grid: ImageGrid, x: float, y: float, psi: float, h: float,
                pair: Optional[KernelPair] = None, with_gradient: bool = True) -> LocalTerms:
    pair = pair or default_kernels()
    r = h * SQRT2
    a0, a1 = _support_slice(grid.n1, x, r)
    b0, b1 = _support_slice(grid.n2, y, r)
    rows = np.arange(a0, a1)
    cols = np.arange(b0, b1)
    d1 = (x - (rows + 1) / grid.n1)[:, None] * np.ones((1, cols.size))
    d2 = np.ones((rows.size, 1)) * (y - (cols + 1) / grid.n2)[None, :]
    u1, u2 = rotated_coordinates(d1, d2, psi, h)

    k1, k2 = pair.k1.eval(u1), pair.k2.eval(u2)
    if with_gradient:
        g1 = pair.k1.deriv1(u1) * k2
        g2 = k1 * pair.k2.deriv1(u2)
    else:
        g1 = g2 = np.zeros_like(u1)
    flat = (rows[:, None] * grid.n2 + cols[None, :]).ravel()
    return LocalTerms(
        flat_index=flat,
        y_obs=grid.values[a0:a1, b0:b1].ravel(),
        kernel=(k1 * k2).ravel(),
        grad1=np.asarray(g1).ravel(),
        grad2=np.asarray(g2).ravel(),
        d1=d1.ravel(),
        d2=d2.ravel(),
    )


def location_score(terms: LocalTerms, psi: float) -> np.ndarray:
    """<grad K(u), (sin psi, cos psi)> per pixel."""
    return terms.grad1 * math.sin(psi) + terms.grad2 * math.cos(psi)


def angle_score(terms: LocalTerms, psi: float, h: float) -> np.ndarray:
    """<grad K(u), R_{3pi/2 - psi} d / h> per pixel; this is d u / d psi paired with grad K."""
    c, s = math.cos(psi), math.sin(psi)
    r1 = (-s * terms.d1 + c * terms.d2) / h
    r2 = (-c * terms.d1 - s * terms.d2) / h
    return terms.grad1 * r1 + terms.grad2 * r2


def contrast_value(grid: ImageGrid, x: float, y: float, psi: float, h: float,
                   pair: Optional[KernelPair] = None) -> float:
    terms = local_terms(grid, x, y, psi, h, pair, with_gradient=False)
    return float(grid.pixel_weight * np.dot(terms.y_obs, terms.kernel) / (h * h))


def contrast(grid: ImageGrid, q: ContrastQuery, pair: Optional[KernelPair] = None) -> float:
    """Empirical contrast at the query point and angle."""
    return contrast_value(grid, q.x, q.y, q.psi, q.h, pair)


def contrast_gradient_value(grid: ImageGrid, x: float, y: float, psi: float, h: float,
                            pair: Optional[KernelPair] = None) -> np.ndarray:
    terms = local_terms(grid, x, y, psi, h, pair)
    scale = grid.pixel_weight / (h * h)
    dw = scale * np.dot(terms.y_obs, location_score(terms, psi))
    dpsi = scale * np.dot(terms.y_obs, angle_score(terms, psi, h))
    return np.array([dw, dpsi])


def contrast_gradient(grid: ImageGrid, q: ContrastQuery, pair: Optional[KernelPair] = None) -> np.ndarray:
    """(d/dw, d/dpsi) of the contrast, with y = y0 + h w."""
    return contrast_gradient_value(grid, q.x, q.y, q.psi, q.h, pair)


def contrast_field(grid: ImageGrid, x: float, ys: np.ndarray, psis: np.ndarray, h: float,
                   pair: Optional[KernelPair] = None) -> np.ndarray:
    """
    Contrast on the product grid ys x psis at fixed x, shape (len(ys), len(psis)).

    Each y gets its own column window of fixed width; pixels outside the image
    are zero-padded.
    """
    pair = pair or default_kernels()
    ys = np.asarray(ys, dtype=float)
    psis = np.asarray(psis, dtype=float)
    r = h * SQRT2
    a0, a1 = _support_slice(grid.n1, x, r)
    rows = np.arange(a0, a1)
    if rows.size == 0 or ys.size == 0:
        return np.zeros((ys.size, psis.size))

    width = int(math.ceil(2 * r * grid.n2)) + 3
    start = np.ceil((ys - r) * grid.n2).astype(int) - 1
    cols = start[:, None] + np.arange(width)[None, :]
    valid = (cols >= 0) & (cols < grid.n2)
    safe = np.clip(cols, 0, grid.n2 - 1)

    y_win = grid.values[rows][:, safe] * valid[None, :, :]
    d1 = (x - (rows + 1) / grid.n1)[:, None, None]
    d2 = (ys[:, None] - (safe + 1) / grid.n2)[None, :, :]

    out = np.empty((ys.size, psis.size))
    for k, psi in enumerate(psis):
        u1, u2 = rotated_coordinates(d1, d2, psi, h)
        out[:, k] = np.sum(y_win * pair.evaluate(u1, u2), axis=(0, 2))
    return out * (grid.pixel_weight / (h * h))


# --- asymptotic oracle -------------------------------------------------------

class AsymptoticOracleQuery(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    w: float
    psi: float
    x: float
    scene: SceneSpec

    @model_validator(mode="after")
    def _single_curve(self) -> "AsymptoticOracleQuery":
        if len(self.scene.curves) != 1:
            raise InvalidArgumentError("the asymptotic oracle needs a scene with exactly one jump curve")
        return self


def _true_angle(scene: SceneSpec, x: float) -> float:
    curve = scene.curves[0]
    if curve.psi is not None:
        return float(curve.psi(x))
    eps = 1e-6
    slope = (float(curve.phi(x + eps)) - float(curve.phi(x - eps))) / (2 * eps)
    return math.atan(slope)


def asymptotic_contrast_value(w: float, psi: float, psi_true: float, tau: float,
                              pair: Optional[KernelPair] = None) -> float:
    """
    -tau * int K1(y) Kbar2(a y + b) dy with a = tan(psi_true - psi) and
    b = w cos(psi_true) / cos(psi_true - psi).

    When the kernel orientation is reversed (|psi_true - psi| > pi/2) the
    half-plane flips and so does the sign.
    """
    pair = pair or default_kernels()
    delta = psi_true - psi
    cos_d = math.cos(delta)
    if abs(abs(delta) - math.pi / 2) < 1e-12 or cos_d == 0.0:
        return 0.0
    a = math.tan(delta)
    b = w * math.cos(psi_true) / cos_d
    nodes, weights = _oracle_rule()
    integral = float(np.sum(weights * pair.k1.eval(nodes) * pair.k2_cumulative(a * nodes + b)))
    return -math.copysign(1.0, cos_d) * tau * integral


def asymptotic_contrast(q: AsymptoticOracleQuery, pair: Optional[KernelPair] = None) -> float:
    """Limit of the rescaled contrast for a noiseless single-curve scene."""
    curve = q.scene.curves[0]
    tau = float(curve.tau(q.x))
    return asymptotic_contrast_value(q.w, q.psi, _true_angle(q.scene, q.x), tau, pair)


@lru_cache(maxsize=1)
def _oracle_rule() -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(ORACLE_NODES)
