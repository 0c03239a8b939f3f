"""Numerical laboratory for the coagulation equation with fast sedimentation.

The evolving density ``H(y, v, t)`` lives on a tensor grid in position ``y``
and particle volume ``v``.  Transport pulls every volume row towards the curve
``y = v**alpha`` at rate ``1/epsilon`` while coagulation merges particles that
share a position.
"""

from .errors import ConfigError, DomainError, StabilityError, StiffnessError
from .kernels import (
    ConstantKernel,
    RainKernel,
    ScaledKernel,
    SumKernel,
    TruncatedKernel,
    check_structural_assumptions,
    eval_kernel,
    truncate,
)
from .grid import Field2D, Grid2D, Params, derived_constants, init_field, moment_k, total_mass

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConstantKernel",
    "DomainError",
    "Field2D",
    "Grid2D",
    "Params",
    "RainKernel",
    "ScaledKernel",
    "StabilityError",
    "StiffnessError",
    "SumKernel",
    "TruncatedKernel",
    "check_structural_assumptions",
    "derived_constants",
    "eval_kernel",
    "init_field",
    "moment_k",
    "total_mass",
    "truncate",
]
