"""Desk-scale numerical laboratory for semilinear damped waves with
spatially growing damping c(t,x) = a0 <x>^(-alpha) (1+t)^(-beta)."""

from critwave.core import (
    DampingSpec,
    Profile,
    ProblemSpec,
    critical_exponent,
    damping_coefficient,
    initial_mass_functional,
    lifespan_exponent,
)

__all__ = [
    "DampingSpec",
    "Profile",
    "ProblemSpec",
    "critical_exponent",
    "damping_coefficient",
    "initial_mass_functional",
    "lifespan_exponent",
]
__version__ = "0.1.0"
