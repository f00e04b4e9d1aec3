"""Simulation of continuous-time quantum error correction.

Modules
-------
qstate       density matrices, Kraus maps, Pauli strings
codes        trivial and three-qubit bit-flip codes
dynamics     generators, weak maps, stochastic terms and feedback
integrators  RK4, Euler-Maruyama, weak-step repetition, ensembles
analytic     closed-form reference solutions
scenarios    named oracle-vs-numerics runs used by the command line
"""

from . import analytic, codes, dynamics, integrators, numerics, qstate
from .codes import CodeSpec, bitflip_code, trivial_code
from .integrators import SimConfig, TrajectoryRecord
from .numerics import DomainError, NumericGuardError, StabilityError
from .qstate import DensityMatrix, KrausMap, PauliString

__version__ = "0.1.0"

__all__ = [
    "analytic",
    "codes",
    "dynamics",
    "integrators",
    "numerics",
    "qstate",
    "CodeSpec",
    "bitflip_code",
    "trivial_code",
    "SimConfig",
    "TrajectoryRecord",
    "DomainError",
    "NumericGuardError",
    "StabilityError",
    "DensityMatrix",
    "KrausMap",
    "PauliString",
]
