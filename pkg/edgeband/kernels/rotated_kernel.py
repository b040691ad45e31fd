"""
Stage 1: Rotated difference kernels - bump kernels, rotation and product kernel

K1 is an even bump, K2 an odd bump times a cubic. Both have support [-1, 1]
and analytic derivatives up to third order. The product K(z1, z2) = K1(z1)K2(z2)
is rotated by psi and scaled by h when it is laid over the design.
"""
from __future__ import annotations

import math
import warnings
from functools import cached_property, lru_cache
from typing import Callable, List, Literal, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import integrate
from scipy.integrate import IntegrationWarning
from scipy.interpolate import PchipInterpolator

from edgeband.exceptions import ConfigurationError, InvalidArgumentError
from shared.utils.logging import get_logger

logger = get_logger(__name__)

ArrayLike = Union[float, np.ndarray]

SUPPORT_EDGE = 1.0 - 1e-14
QUAD_EPSABS = 1e-10
CUMULATIVE_TABLE_POINTS = 4097
TENSOR_NODES = 512


def _bump_derivatives(x: np.ndarray, order: int = 3) -> List[np.ndarray]:
    """exp(-1/(1-x^2)) and its derivatives up to ``order`` (at most 3) on |x| < 1."""
    t = 1.0 / (1.0 - x * x)
    g = np.exp(-t)
    out = [g]
    if order == 0:
        return out
    # s = -t
    s1 = -2.0 * x * t * t
    out.append(g * s1)
    if order == 1:
        return out
    s2 = -(2.0 * t * t + 8.0 * x * x * t ** 3)
    out.append(g * (s1 * s1 + s2))
    if order == 2:
        return out
    s3 = -(24.0 * x * t ** 3 + 48.0 * x ** 3 * t ** 4)
    out.append(g * (s1 ** 3 + 3.0 * s1 * s2 + s3))
    return out


def _quad(func: Callable[[float], float], a: float, b: float, what: str) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = integrate.quad(func, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSABS, limit=200)
        except IntegrationWarning as e:
            raise ConfigurationError(f"quadrature for {what} did not converge: {e}") from e
    return float(value)


class Kernel1D:
    """
    Univariate kernel c * p(x) * exp(-1/(1-x^2)) on [-1, 1]

    The polynomial factor fixes the parity: an even p gives an even kernel, an
    odd p an odd one.
    """

    def __init__(self, poly: Polynomial, constant: float, parity: Literal["even", "odd"], name: str = ""):
        self.poly = poly
        self.normalizing_constant = float(constant)
        self.parity = parity
        self.name = name
        self.support = (-1.0, 1.0)
        self._dpoly = [poly.deriv(k) for k in range(1, 4)]

    def _derivs(self, x: ArrayLike, order: int) -> ArrayLike:
        arr = np.asarray(x, dtype=float)
        inside = np.abs(arr) < SUPPORT_EDGE
        xs = np.where(inside, arr, 0.0)
        g = _bump_derivatives(xs, order)
        p = [self.poly(xs)] + [dp(xs) for dp in self._dpoly[:order]]
        binom = [math.comb(order, k) for k in range(order + 1)]
        value = sum(binom[k] * p[order - k] * g[k] for k in range(order + 1))
        out = np.where(inside, self.normalizing_constant * value, 0.0)
        return float(out) if out.ndim == 0 else out

    def eval(self, x: ArrayLike) -> ArrayLike:
        return self._derivs(x, 0)

    def deriv1(self, x: ArrayLike) -> ArrayLike:
        return self._derivs(x, 1)

    def deriv2(self, x: ArrayLike) -> ArrayLike:
        return self._derivs(x, 2)

    def deriv3(self, x: ArrayLike) -> ArrayLike:
        return self._derivs(x, 3)

    __call__ = eval

    def __repr__(self) -> str:
        return f"Kernel1D(name={self.name!r}, parity={self.parity}, C={self.normalizing_constant:.10g})"


class KernelConstants(BaseModel):
    """Kernel integrals entering the variance formulas"""
    model_config = ConfigDict(frozen=True)

    k2_deriv_at_zero: float
    int_k1p_k2_sq: float       # ∫∫ (K1' K2)^2
    int_k1_k2p_sq: float       # ∫∫ (K1 K2')^2
    int_y2_k1: float           # ∫ y^2 K1(y) dy
    vs_psi: float              # ∫∫ (K1 K2' z1 - K1' K2 z2)^2
    vs_tau: float              # ∫∫ K^2


class AssumptionCheck(BaseModel):
    name: str
    value: float
    passed: bool
    detail: str = ""


class MomentReport(BaseModel):
    """Result of the odd-kernel first-moment check"""
    moment: float
    tolerance: float
    satisfied: bool
    rate_guarantees_available: bool
    message: str


class KernelPair:
    """Even kernel K1 and odd kernel K2 forming the product kernel K1(z1)K2(z2)"""

    def __init__(self, k1: Kernel1D, k2: Kernel1D):
        if k1.parity != "even" or k2.parity != "odd":
            raise ConfigurationError("KernelPair needs an even k1 and an odd k2")
        self.k1 = k1
        self.k2 = k2

    def evaluate(self, z1: ArrayLike, z2: ArrayLike) -> ArrayLike:
        return self.k1.eval(z1) * self.k2.eval(z2)

    def gradient(self, z1: ArrayLike, z2: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
        a1 = self.k1.eval(z1)
        b2 = self.k2.eval(z2)
        return self.k1.deriv1(z1) * b2, a1 * self.k2.deriv1(z2)

    @cached_property
    def constants(self) -> KernelConstants:
        k1, k2 = self.k1, self.k2
        nodes, weights = np.polynomial.legendre.leggauss(TENSOR_NODES)
        z1 = nodes[:, None]
        z2 = nodes[None, :]
        w2d = weights[:, None] * weights[None, :]

        K1, K2 = k1.eval(z1), k2.eval(z2)
        dK1, dK2 = k1.deriv1(z1), k2.deriv1(z2)
        vs_psi = float(np.sum(w2d * (K1 * dK2 * z1 - dK1 * K2 * z2) ** 2))
        vs_tau = float(np.sum(w2d * (K1 * K2) ** 2))

        c = KernelConstants(
            k2_deriv_at_zero=float(k2.deriv1(0.0)),
            int_k1p_k2_sq=_quad(lambda t: k1.deriv1(t) ** 2, -1, 1, "∫K1'^2") * _quad(lambda t: k2.eval(t) ** 2, -1, 1, "∫K2^2"),
            int_k1_k2p_sq=_quad(lambda t: k1.eval(t) ** 2, -1, 1, "∫K1^2") * _quad(lambda t: k2.deriv1(t) ** 2, -1, 1, "∫K2'^2"),
            int_y2_k1=_quad(lambda t: t * t * k1.eval(t), -1, 1, "∫y^2 K1"),
            vs_psi=vs_psi,
            vs_tau=vs_tau,
        )
        logger.debug(f"Kernel constants: {c.model_dump()}")
        return c

    @cached_property
    def _k2_cumulative(self) -> PchipInterpolator:
        grid = np.linspace(-1.0, 1.0, CUMULATIVE_TABLE_POINTS)
        cum = integrate.cumulative_trapezoid(self.k2.eval(grid), grid, initial=0.0)
        return PchipInterpolator(grid, cum, extrapolate=False)

    def k2_cumulative(self, y: ArrayLike) -> ArrayLike:
        """K̄2(y) = ∫_{-1}^{y} K2, zero outside (-1, 1)."""
        arr = np.asarray(y, dtype=float)
        inside = np.abs(arr) < 1.0
        out = np.where(inside, self._k2_cumulative(np.clip(arr, -1.0, 1.0)), 0.0)
        return float(out) if out.ndim == 0 else out


def _bump_constant(poly: Polynomial, a: float, b: float, what: str) -> float:
    integral = _quad(lambda t: float(poly(t)) * math.exp(-1.0 / (1.0 - t * t)) if abs(t) < SUPPORT_EDGE else 0.0, a, b, what)
    if integral == 0.0:
        raise ConfigurationError(f"{what} integrates to zero, cannot normalize")
    return 1.0 / integral


def make_default_kernels() -> KernelPair:
    """
    Build the simulation kernels

    K1(x) = C1 exp{-(1-x^2)^-1}, K2(x) = C2 exp{-(1-x^2)^-1}(x^3 - x), with C1 making
    ∫K1 = 1 and C2 making ∫_0^1 K2 = 1 (C2 < 0 because x^3 - x < 0 on (0, 1)).
    """
    even = Polynomial([1.0])
    odd = Polynomial([0.0, -1.0, 0.0, 1.0])
    c1 = _bump_constant(even, -1.0, 1.0, "K1")
    c2 = _bump_constant(odd, 0.0, 1.0, "K2")
    logger.info(f"Kernel constants computed: C1={c1:.10g}, C2={c2:.10g}")
    return KernelPair(Kernel1D(even, c1, "even", "bump"), Kernel1D(odd, c2, "odd", "cubic-bump"))


@lru_cache(maxsize=1)
def default_kernels() -> KernelPair:
    """Shared, immutable default kernel pair."""
    return make_default_kernels()


class RotationAngle(BaseModel):
    """An edge angle in [-pi/2, pi/2]"""
    model_config = ConfigDict(frozen=True)

    psi: float

    @field_validator("psi")
    @classmethod
    def _in_range(cls, v: float) -> float:
        if not (-math.pi / 2 - 1e-12 <= v <= math.pi / 2 + 1e-12):
            raise ValueError(f"rotation angle {v} outside [-pi/2, pi/2]")
        return float(v)


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotation_matrix(psi: Union[float, RotationAngle]) -> np.ndarray:
    """Return [[cos psi, -sin psi], [sin psi, cos psi]]."""
    angle = psi if isinstance(psi, RotationAngle) else RotationAngle(psi=psi)
    return _rotation(angle.psi)


def rotated_coordinates(d1: ArrayLike, d2: ArrayLike, psi: float, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """h^-1 R_{-psi} (d1, d2)."""
    c, s = math.cos(psi), math.sin(psi)
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    return (c * d1 + s * d2) / h, (-s * d1 + c * d2) / h


def rotated_kernel(z, psi: Union[float, RotationAngle], h: float, pair: KernelPair = None) -> float:
    """K(h^-1 R_{-psi} z) / h^2."""
    if h <= 0:
        raise InvalidArgumentError(f"bandwidth must be positive, got {h}")
    psi_val = psi.psi if isinstance(psi, RotationAngle) else RotationAngle(psi=psi).psi
    pair = pair or default_kernels()
    z = np.asarray(z, dtype=float)
    u1, u2 = rotated_coordinates(z[0], z[1], psi_val, h)
    return float(pair.evaluate(u1, u2)) / (h * h)


def kernel_gradient(z, pair: KernelPair = None) -> np.ndarray:
    """(K1'(z1)K2(z2), K1(z1)K2'(z2)); zero outside [-1, 1]^2."""
    pair = pair or default_kernels()
    z = np.asarray(z, dtype=float)
    g1, g2 = pair.gradient(z[0], z[1])
    return np.array([float(g1), float(g2)])


def check_moment_assumption(pair: KernelPair, tolerance: float = 1e-8) -> MomentReport:
    """Report ∫_0^1 x K2(x) dx; a nonzero value voids the psi/tau rate guarantees."""
    moment = _quad(lambda t: t * pair.k2.eval(t), 0.0, 1.0, "∫x K2")
    ok = abs(moment) < tolerance
    if ok:
        message = f"∫_0^1 x K2 = {moment:.3e} vanishes; psi/tau rates available"
    else:
        message = f"∫_0^1 x K2 = {moment:.6g} is nonzero; psi/tau rate guarantees unavailable"
        logger.warning(message)
    return MomentReport(moment=moment, tolerance=tolerance, satisfied=ok,
                        rate_guarantees_available=ok, message=message)


def kernel_assumption_report(pair: KernelPair, tolerance: float = 1e-8) -> List[AssumptionCheck]:
    """Numerical checks of normalization, parity, boundary behaviour and K2'(0) > 0."""
    checks: List[AssumptionCheck] = []
    k1, k2 = pair.k1, pair.k2

    int_k1 = _quad(k1.eval, -1.0, 1.0, "∫K1")
    checks.append(AssumptionCheck(name="int_K1_eq_1", value=int_k1, passed=abs(int_k1 - 1.0) < tolerance))
    int_k2 = _quad(k2.eval, 0.0, 1.0, "∫_0^1 K2")
    checks.append(AssumptionCheck(name="int_0_1_K2_eq_1", value=int_k2, passed=abs(int_k2 - 1.0) < tolerance))

    xs = np.linspace(-1.0, 1.0, 2001)
    even_err = float(np.max(np.abs(k1.eval(xs) - k1.eval(-xs))))
    odd_err = float(np.max(np.abs(k2.eval(xs) + k2.eval(-xs))))
    checks.append(AssumptionCheck(name="K1_even", value=even_err, passed=even_err < tolerance))
    checks.append(AssumptionCheck(name="K2_odd", value=odd_err, passed=odd_err < tolerance))

    for label, kern in (("K1", k1), ("K2", k2)):
        for j, f in enumerate((kern.eval, kern.deriv1, kern.deriv2)):
            worst = max(abs(f(1.0)), abs(f(-1.0)))
            checks.append(AssumptionCheck(name=f"{label}_d{j}_boundary_zero", value=worst, passed=worst < tolerance))

    interior = np.linspace(-0.999, 0.999, 999)
    k1_min = float(np.min(k1.eval(interior)))
    checks.append(AssumptionCheck(name="K1_positive_interior", value=k1_min, passed=k1_min > 0.0))
    k2_zero = float(k2.eval(0.0))
    checks.append(AssumptionCheck(name="K2_at_zero", value=k2_zero, passed=abs(k2_zero) < tolerance))
    slope = float(k2.deriv1(0.0))
    checks.append(AssumptionCheck(name="K2_deriv_at_zero_positive", value=slope, passed=slope > 0.0))
    return checks
