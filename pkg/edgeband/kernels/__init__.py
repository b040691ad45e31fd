"""Rotated difference kernels."""
from .rotated_kernel import (  # noqa: F401
    Kernel1D,
    KernelPair,
    KernelConstants,
    RotationAngle,
    MomentReport,
    AssumptionCheck,
    make_default_kernels,
    default_kernels,
    rotation_matrix,
    rotated_kernel,
    rotated_coordinates,
    kernel_gradient,
    check_moment_assumption,
    kernel_assumption_report,
)
