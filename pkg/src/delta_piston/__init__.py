"""Free piston in a pressureless gas: exact, ODE and sticky-particle solvers.

The piston path doubles as the delta shock of the singular Riemann problem,
so the package also reconstructs the measure solution and checks it.
"""

from .closed_form import ClosedFormDomainError, solve, zero_mass_velocity
from .measure import (
    DeltaWeights,
    MeasureField,
    TestFunction,
    delta_weights,
    entropy_check,
    piston_forces,
    sample,
    weak_residual_cauchy,
    weak_residual_ibvp,
)
from .ode import IntegratorConfig, integrate
from .particles import convergence_study, discretize, run, simulate
from .problem import CaseId, RiemannSetup, classify, galilean_shift, reflect
from .trajectory import Trajectory, VacuumRecord

__all__ = [
    "CaseId",
    "ClosedFormDomainError",
    "DeltaWeights",
    "IntegratorConfig",
    "MeasureField",
    "RiemannSetup",
    "TestFunction",
    "Trajectory",
    "VacuumRecord",
    "classify",
    "convergence_study",
    "delta_weights",
    "discretize",
    "entropy_check",
    "galilean_shift",
    "integrate",
    "piston_forces",
    "reflect",
    "run",
    "sample",
    "simulate",
    "solve",
    "weak_residual_cauchy",
    "weak_residual_ibvp",
    "zero_mass_velocity",
]
