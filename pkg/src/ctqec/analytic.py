"""Closed-form reference solutions for the jump-correction models.

Conventions: ``r = kappa / lam`` for Markovian bit flips at rate ``lam``
per qubit, ``R = kappa / gamma`` for a qubit coupled to a bath qubit with
``H = gamma X (x) X``. All functions accept scalar or array ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .numerics import DomainError
from .qstate import as_matrix, projector


@dataclass(frozen=True)
class OracleResult:
    """A named scalar function of time with its parameters."""

    name: str
    parameters: dict = field(default_factory=dict)
    fn: Callable = field(default=None, repr=False)

    def __call__(self, t):
        return self.fn(t)


def _rates(*values):
    for v in values:
        if v < 0:
            raise DomainError(f"rates must be non-negative, got {v}")


def markov_1q_equilibrium(kappa: float, lam: float) -> float:
    """``1 - lam / (kappa + 2 lam)``, i.e. ``1 - 1/(2 + r)``."""
    _rates(kappa, lam)
    if kappa + lam == 0:
        return 1.0
    return 1.0 - lam / (kappa + 2 * lam)


def markov_1q_alpha(t, kappa: float, lam: float):
    """Fidelity with ``|0>`` under bit flips plus jump correction, from ``alpha(0) = 1``."""
    a_star = markov_1q_equilibrium(kappa, lam)
    return (1 - a_star) * np.exp(-(kappa + 2 * lam) * np.asarray(t, dtype=float)) + a_star


def markov_3q_rate_matrix(kappa: float, lam: float) -> np.ndarray:
    """Rate matrix of the weights ``(a, b, c, d)`` of no, one, two and three flips."""
    _rates(kappa, lam)
    return np.array([
        [-3 * lam, lam + kappa, 0.0, 0.0],
        [3 * lam, -(3 * lam + kappa), 2 * lam, 0.0],
        [0.0, 2 * lam, -(3 * lam + kappa), 3 * lam],
        [0.0, 0.0, lam + kappa, -3 * lam],
    ])


def markov_3q_ode_rhs(a, b, c, d, kappa: float, lam: float) -> np.ndarray:
    return markov_3q_rate_matrix(kappa, lam) @ np.array([a, b, c, d], dtype=float)


def markov_3q_solution(t, kappa: float, lam: float, y0=(1.0, 0.0, 0.0, 0.0)) -> np.ndarray:
    """``(a, b, c, d)`` at each time via the matrix exponential; shape ``(len(t), 4)``."""
    m = markov_3q_rate_matrix(kappa, lam)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    y0 = np.asarray(y0, dtype=float)
    return np.array([expm(m * s) @ y0 for s in ts])


def markov_3q_outside_weight(t, kappa: float, lam: float):
    """``b + c = 3/(4 + r) (1 - exp(-(4 + r) lam t))``."""
    _rates(kappa, lam)
    rate = kappa + 4 * lam
    if rate == 0:
        return np.zeros_like(np.asarray(t, dtype=float))
    return 3 * lam / rate * (1 - np.exp(-rate * np.asarray(t, dtype=float)))


def markov_3q_codespace_decay(t, kappa: float, lam: float):
    """Large-``r`` approximation ``(a, d)``: an effective bit flip at rate ``6 lam / r``."""
    _rates(kappa, lam)
    if kappa == 0:
        raise DomainError("the approximation needs kappa > 0")
    e = np.exp(-12 * lam * lam / kappa * np.asarray(t, dtype=float))
    return (1 + e) / 2, (1 - e) / 2


def nonmarkov_1q_equilibrium(kappa: float, gamma: float) -> float:
    """``(2 + R^2) / (4 + R^2)``."""
    _rates(kappa, gamma)
    return (2 * gamma**2 + kappa**2) / (4 * gamma**2 + kappa**2)


def nonmarkov_1q_alpha(t, kappa: float, gamma: float):
    """Fidelity of a qubit coupled to a bath qubit in ``I/2``, with jump correction."""
    _rates(kappa, gamma)
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    t = np.asarray(t, dtype=float)
    den = 4 * gamma**2 + kappa**2
    osc = (kappa * gamma / den) * np.sin(2 * gamma * t) + (2 * gamma**2 / den) * np.cos(2 * gamma * t)
    return (2 * gamma**2 + kappa**2) / den + np.exp(-kappa * t) * osc


def nonmarkov_1q_beta(t, kappa: float, gamma: float):
    """The correlation parameter, from ``d alpha/dt = kappa (1 - alpha) - 2 gamma beta``."""
    t = np.asarray(t, dtype=float)
    alpha = nonmarkov_1q_alpha(t, kappa, gamma)
    dalpha = -gamma * np.exp(-kappa * t) * np.sin(2 * gamma * t)
    return (kappa * (1 - alpha) - dalpha) / (2 * gamma)


def nonmarkov_1q_ode_rhs(alpha, beta, kappa: float, gamma: float) -> np.ndarray:
    return np.array([
        kappa * (1 - alpha) - 2 * gamma * beta,
        gamma * (2 * alpha - 1) - kappa * beta,
    ])


def nonmarkov_3q_fidelity_approx(t, kappa: float, gamma: float, order: int = 2):
    """Perturbative codeword fidelity for ``R >> 1``.

    Order 2 gives ``(1 + cos(24 gamma t / R^2)) / 2``; order 4 multiplies the
    cosine by ``exp(-144 gamma t / R^3)``.
    """
    _rates(kappa, gamma)
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    if order not in (2, 4):
        raise DomainError(f"order must be 2 or 4, got {order}")
    big_r = kappa / gamma
    t = np.asarray(t, dtype=float)
    c = np.cos(24 * gamma * t / big_r**2)
    if order == 4:
        c = c * np.exp(-144 * gamma * t / big_r**3)
    return (1 + c) / 2


def nonmarkov_3q_rates(kappa: float, gamma: float) -> tuple[float, float]:
    """Predicted ``(omega, Gamma)`` of the order-4 approximation."""
    big_r = kappa / gamma
    return 24 * gamma / big_r**2, 144 * gamma / big_r**3


def zeno_coefficient(h_total, rho_bath, psi0) -> float:
    """Short-time coefficient ``C`` in ``alpha(t) = 1 - C t^2``.

    ``C = Tr(H^2 P (x) rho_B) - Tr(H (P (x) I) H (P (x) rho_B))`` with
    ``P = |psi0><psi0|``; the system factor comes first.
    """
    h = as_matrix(h_total)
    rb = as_matrix(rho_bath)
    p = projector(psi0)
    if h.shape[0] != p.shape[0] * rb.shape[0]:
        raise DomainError("Hamiltonian dimension does not match system and bath")
    start = np.kron(p, rb)
    keep = np.kron(p, np.eye(rb.shape[0]))
    c = np.trace(h @ h @ start) - np.trace(h @ keep @ h @ start)
    return float(np.real(c))


def zeno_equilibrium(kappa: float, c: float) -> float:
    """``1 - 4 C / kappa^2``."""
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    return 1.0 - 4.0 * c / kappa**2


def error_rate(fidelity, dt: float) -> np.ndarray:
    """``Lambda = -dF/dt`` by second-order central differences."""
    f = np.asarray(fidelity, dtype=float)
    if len(f) < 3:
        raise DomainError("need at least three samples")
    return -np.gradient(f, dt, edge_order=2)


def oracle(name: str, **params) -> OracleResult:
    """Look up a time-dependent oracle by name with bound parameters."""
    table = {
        "markov_1q_alpha": lambda t: markov_1q_alpha(t, params["kappa"], params["lam"]),
        "markov_3q_outside_weight": lambda t: markov_3q_outside_weight(t, params["kappa"], params["lam"]),
        "nonmarkov_1q_alpha": lambda t: nonmarkov_1q_alpha(t, params["kappa"], params["gamma"]),
        "nonmarkov_3q_fidelity_approx": lambda t: nonmarkov_3q_fidelity_approx(
            t, params["kappa"], params["gamma"], params.get("order", 4)),
    }
    if name not in table:
        raise DomainError(f"unknown oracle {name!r}")
    return OracleResult(name, dict(params), table[name])


__all__ = [
    "OracleResult",
    "oracle",
    "markov_1q_alpha",
    "markov_1q_equilibrium",
    "markov_3q_rate_matrix",
    "markov_3q_ode_rhs",
    "markov_3q_solution",
    "markov_3q_outside_weight",
    "markov_3q_codespace_decay",
    "nonmarkov_1q_alpha",
    "nonmarkov_1q_beta",
    "nonmarkov_1q_equilibrium",
    "nonmarkov_1q_ode_rhs",
    "nonmarkov_3q_fidelity_approx",
    "nonmarkov_3q_rates",
    "zeno_coefficient",
    "zeno_equilibrium",
    "error_rate",
]
