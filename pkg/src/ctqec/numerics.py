"""Global numerical tolerances and the package's exception types.

Every tolerance used for state validation lives here so that it can be
changed in one place::

    from ctqec import numerics
    with numerics.override(min_eigenvalue=-1e-7):
        ...
"""

from __future__ import annotations

import contextlib
import dataclasses
from dataclasses import dataclass


class DomainError(ValueError):
    """Raised when an argument lies outside an operation's domain."""


class NumericGuardError(RuntimeError):
    """Raised when a simulated state leaves the physically admissible set."""


class StabilityError(DomainError):
    """Raised when ``dt * max_rate`` exceeds the hard stability limit."""


@dataclass(frozen=True)
class Tolerances:
    hermiticity: float = 1e-12
    trace: float = 1e-10
    min_eigenvalue: float = -1e-9
    completeness: float = 1e-10
    sign_zero: float = 1e-12
    factorization: float = 1e-9
    # trajectories of stochastic integrators are rougher
    stochastic_min_eigenvalue: float = -1e-6
    stability_warn: float = 0.05
    stability_error: float = 0.5


_current = Tolerances()


def get() -> Tolerances:
    return _current


def set_tolerances(**changes: float) -> Tolerances:
    """Replace selected tolerances globally and return the previous set."""
    global _current
    previous = _current
    _current = dataclasses.replace(_current, **changes)
    return previous


@contextlib.contextmanager
def override(**changes: float):
    previous = set_tolerances(**changes)
    try:
        yield _current
    finally:
        set_tolerances(**dataclasses.asdict(previous))
