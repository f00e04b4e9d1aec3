"""Generators and single-step maps for continuous-time error correction.

Generators (``LindbladGenerator``, ``JumpCorrection``) expose ``apply(rho)``
returning ``d rho / dt`` and ``superoperator()`` returning the matrix of the
same linear map on row-major vectorised states; the integrators only rely on
these two methods.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from . import numerics
from .codes import CodeSpec, syndrome_ops
from .numerics import DomainError
from .qstate import (
    I2,
    X,
    Y,
    Z,
    DensityMatrix,
    KrausMap,
    as_matrix,
    dagger,
    embed,
    ket,
    projector,
    psd_sqrt,
    tensor_all,
)


def _spre(a, sparse: bool):
    d = a.shape[0]
    if sparse:
        return sp.kron(sp.csr_matrix(a), sp.identity(d, format="csr"), format="csr")
    return np.kron(a, np.eye(d))


def _spost(a, sparse: bool):
    d = a.shape[0]
    if sparse:
        return sp.kron(sp.identity(d, format="csr"), sp.csr_matrix(a.T), format="csr")
    return np.kron(np.eye(d), a.T)


def _sprepost(a, b, sparse: bool):
    if sparse:
        return sp.kron(sp.csr_matrix(a), sp.csr_matrix(b.T), format="csr")
    return np.kron(a, b.T)


@dataclass(frozen=True)
class LindbladGenerator:
    """``-i[H, rho] + sum_j rate_j (L rho L^+ - {L^+ L, rho}/2)``."""

    hamiltonian: np.ndarray
    channels: tuple[tuple[float, np.ndarray], ...] = ()

    def __post_init__(self):
        h = np.array(self.hamiltonian, dtype=complex)
        h.flags.writeable = False
        chans = []
        for rate, op in self.channels:
            if rate < 0:
                raise DomainError(f"negative rate {rate}")
            op = np.array(op, dtype=complex)
            if op.shape != h.shape:
                raise DomainError(f"jump operator shape {op.shape} != {h.shape}")
            op.flags.writeable = False
            chans.append((float(rate), op))
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "channels", tuple(chans))

    @classmethod
    def zero(cls, d: int) -> "LindbladGenerator":
        return cls(np.zeros((d, d)))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def max_rate(self) -> float:
        rates = [r for r, _ in self.channels]
        return max(rates + [float(np.max(np.abs(np.linalg.eigvalsh(self.hamiltonian))))])

    def apply(self, rho) -> np.ndarray:
        rho = as_matrix(rho)
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for rate, l in self.channels:
            ld = dagger(l)
            ldl = ld @ l
            out = out + rate * (l @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl))
        return out

    def superoperator(self, sparse: bool = False):
        h = self.hamiltonian
        s = -1j * (_spre(h, sparse) - _spost(h, sparse))
        for rate, l in self.channels:
            ldl = dagger(l) @ l
            s = s + rate * (
                _sprepost(l, dagger(l), sparse)
                - 0.5 * _spre(ldl, sparse)
                - 0.5 * _spost(ldl, sparse)
            )
        return s

    def __add__(self, other: "LindbladGenerator") -> "LindbladGenerator":
        return LindbladGenerator(
            self.hamiltonian + other.hamiltonian, self.channels + other.channels
        )


@dataclass(frozen=True)
class JumpCorrection:
    """Quantum-jump correction generator ``kappa (R(rho) - rho)``."""

    recovery: KrausMap
    kappa: float

    def __post_init__(self):
        if self.kappa < 0:
            raise DomainError(f"negative correction rate {self.kappa}")

    @property
    def dim(self) -> int:
        return self.recovery.in_dim

    @property
    def max_rate(self) -> float:
        return self.kappa

    def jump(self, rho) -> np.ndarray:
        """``J(rho) = R(rho) - rho`` (without the rate)."""
        rho = as_matrix(rho)
        return self.recovery.apply(rho) - rho

    def apply(self, rho) -> np.ndarray:
        return self.kappa * self.jump(rho)

    def superoperator(self, sparse: bool = False):
        d = self.dim
        if sparse:
            s = sum(_sprepost(k, dagger(k), True) for k in self.recovery.ops)
            return self.kappa * (s - sp.identity(d * d, format="csr"))
        return self.kappa * (self.recovery.superoperator() - np.eye(d * d))

    def extend(self, d_env: int) -> "JumpCorrection":
        """Correction acting on the system factor of a system (x) bath state."""
        return JumpCorrection(self.recovery.extend(d_env), self.kappa)


def lindblad_apply(gen: LindbladGenerator, rho) -> np.ndarray:
    """``d rho/dt`` under ``gen``; accepts a single state or a stack."""
    return gen.apply(rho)


def bitflip_lindblad(n: int, rates: Sequence[float]) -> LindbladGenerator:
    """Independent bit flips, ``sum_j rate_j (X_j rho X_j - rho)``."""
    if n not in (1, 3):
        raise DomainError(f"bit-flip noise is provided for 1 or 3 qubits, got {n}")
    rates = list(rates)
    if len(rates) != n:
        raise DomainError(f"expected {n} rates, got {len(rates)}")
    d = 2**n
    return LindbladGenerator(
        np.zeros((d, d)), tuple((r, embed(X, j, n)) for j, r in enumerate(rates))
    )


def joint_bath_generator(gamma: float, n_pairs: int) -> LindbladGenerator:
    """``H = gamma sum_i X_i^S X_i^B``; system qubits come before bath qubits."""
    if n_pairs not in (1, 3):
        raise DomainError(f"n_pairs must be 1 or 3, got {n_pairs}")
    n = 2 * n_pairs
    h = sum(gamma * embed(X, i, n) @ embed(X, n_pairs + i, n) for i in range(n_pairs))
    return LindbladGenerator(h)


def strong_recovery(code: CodeSpec) -> KrausMap:
    """Full error-correcting operation: syndrome projection plus Pauli fix."""
    if code.name == "trivial":
        zero, one = ket("0"), ket("1")
        return KrausMap((np.outer(zero, zero), np.outer(zero, one)))
    if code.name == "bitflip3":
        from .codes import syndrome_projectors

        projs = syndrome_projectors(code)
        return KrausMap(tuple(code.corrections[s].matrix() @ p for s, p in projs.items()))
    raise DomainError(f"no recovery defined for code {code.name!r}")


def epsilon_prime(eps: float) -> float:
    """Rotation strength that keeps ``|0>`` fixed: ``(1 - sqrt(1 - eps^2)) / eps``."""
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    return (1.0 - np.sqrt(1.0 - eps * eps)) / eps


def weak_jump_map(eps: float) -> KrausMap:
    """Weak X measurement followed by an outcome-dependent Y rotation.

    Kraus operators ``(I +- i eps' Y)/sqrt(1 + eps'^2) sqrt((I +- eps X)/2)``.
    """
    ep = epsilon_prime(eps)
    norm = np.sqrt(1.0 + ep * ep)
    ops = []
    for s in (1, -1):
        rot = (I2 + s * 1j * ep * Y) / norm
        ops.append(rot @ psd_sqrt((I2 + s * eps * X) / 2))
    return KrausMap(tuple(ops))


def subspace_weak_jump_map(code: CodeSpec, j: int, eps: float, encoded: bool = False) -> KrausMap:
    """The weak jump map on span{|0_s>, |j_s>}, trivial on the complement."""
    ops_ = syndrome_ops(code)
    xs, ys = (ops_.x, ops_.y) if encoded else (ops_.xp, ops_.yp)
    phi = np.arctan(epsilon_prime(eps))
    eye = np.eye(code.dim)
    ops = []
    for s in (1, -1):
        m = psd_sqrt((eye + s * eps * xs[j]) / 2)
        ops.append(expm(1j * s * phi * ys[j]) @ m)
    return KrausMap(tuple(ops))


@dataclass(frozen=True)
class AncillaMeasurement:
    """Measurement on a system qubit induced by an ancilla coupling."""

    ops: tuple[np.ndarray, np.ndarray]
    eps: float

    def probabilities(self, rho) -> np.ndarray:
        rho = as_matrix(rho)
        return np.array([np.real(np.trace(m @ rho @ dagger(m))) for m in self.ops])


def weak_x_measurement_via_ancilla(eps: float) -> AncillaMeasurement:
    """Ancilla in ``|+>``, unitary ``exp(i eps/2 X (x) Y)``, ancilla read in Z.

    Outcome 0 is the ``+`` result. The induced operators are exactly
    ``sqrt((I +- sin(eps) X) / 2)``.
    """
    u = expm(1j * eps / 2 * np.kron(X, Y))
    plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
    ops = []
    for a in (0, 1):
        bra = np.zeros(2)
        bra[a] = 1.0
        ops.append(np.kron(I2, bra[None, :]) @ u @ np.kron(I2, plus[:, None]))
    return AncillaMeasurement(tuple(ops), eps)


@dataclass(frozen=True)
class WeakMeasurement:
    m_plus: np.ndarray
    m_minus: np.ndarray
    eps: float

    @property
    def ops(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.m_plus, self.m_minus)

    def completeness_residual(self) -> float:
        s = sum(dagger(m) @ m for m in self.ops)
        return float(np.max(np.abs(s - np.eye(s.shape[0]))))

    def probabilities(self, rho) -> np.ndarray:
        rho = as_matrix(rho)
        return np.array([np.real(np.trace(m @ rho @ dagger(m))) for m in self.ops])

    def update(self, rho, outcome: int) -> np.ndarray:
        """Post-measurement state for outcome ``+1`` or ``-1``."""
        m = self.m_plus if outcome > 0 else self.m_minus
        out = m @ as_matrix(rho) @ dagger(m)
        return out / np.real(np.trace(out))

    def average(self, rho) -> np.ndarray:
        rho = as_matrix(rho)
        return sum(m @ rho @ dagger(m) for m in self.ops)


def z_walk_operator(x: float) -> np.ndarray:
    """``M^Z(x) = sqrt((I + tanh(x) Z) / 2)``."""
    return psd_sqrt((I2 + np.tanh(x) * Z) / 2)


def weak_z_measurement(eps: float) -> WeakMeasurement:
    """``M^Z_+-(eps) = sqrt((I +- tanh(eps) Z) / 2)``; outcomes move x by +-eps."""
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    return WeakMeasurement(z_walk_operator(eps), z_walk_operator(-eps), eps)


def z_walk_state(rho0, x: float) -> np.ndarray:
    """State reached from ``rho0`` at walk coordinate ``x``."""
    m = z_walk_operator(x)
    out = m @ as_matrix(rho0) @ m
    return out / np.real(np.trace(out))


def adl_superops(a, rho) -> tuple[np.ndarray, np.ndarray]:
    """``(D[A](rho), F[A](rho))`` for a matrix or a stack of matrices."""
    a = np.asarray(a, dtype=complex)
    rho = as_matrix(rho)
    ad = dagger(a)
    ada = ad @ a
    d_term = a @ rho @ ad - 0.5 * (ada @ rho + rho @ ada)
    inn = a @ rho + rho @ ad
    tr = np.trace(inn, axis1=-2, axis2=-1)
    f_term = inn - rho * np.asarray(tr)[..., None, None]
    return d_term, f_term


def adl_drift(noise: LindbladGenerator, measured: Sequence, kappa: float) -> LindbladGenerator:
    """Noise plus the ``kappa/4 D[M_l]`` back-action of each measured operator."""
    return LindbladGenerator(
        noise.hamiltonian, noise.channels + tuple((kappa / 4, m) for m in measured)
    )


@dataclass(frozen=True)
class FeedbackLaw:
    """Bang-bang Hamiltonian feedback maximising the code-space fidelity gain.

    ``estimate0`` is the controller's initial state estimate; ``None`` means
    the controller starts from the true initial state.
    """

    hamiltonians: tuple[np.ndarray, ...]
    strength: float
    code_projector: np.ndarray
    estimate0: np.ndarray | None = None
    _generators: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        hs = tuple(np.asarray(h, dtype=complex) for h in self.hamiltonians)
        object.__setattr__(self, "hamiltonians", hs)
        p = np.asarray(self.code_projector, dtype=complex)
        # d Tr(P rho)/dt under -i s [H, rho] equals s * Tr(-i [P, H] rho)
        gens = np.stack([-1j * (p @ h - h @ p) for h in hs]) if hs else np.zeros((0,) + p.shape)
        object.__setattr__(self, "_generators", gens)

    def gains(self, rho) -> np.ndarray:
        """Real rates ``Tr(-i [P_code, H_r] rho)``; last axis indexes ``r``."""
        rho = as_matrix(rho)
        return np.real(np.einsum("rij,...ji->...r", self._generators, rho))


def adl_feedback(law: FeedbackLaw, rho_estimate) -> np.ndarray:
    """Feedback strengths ``lambda * sgn(...)`` with ``sgn`` zero near ties."""
    g = law.gains(rho_estimate)
    s = np.where(np.abs(g) < numerics.get().sign_zero, 0.0, np.sign(g))
    return law.strength * s


def _ancilla_y(j: int, n: int) -> np.ndarray:
    return embed(Y, j, n)


def simultaneous_syndrome_kraus(code: CodeSpec, eps: float, encoded: bool = False):
    """Outcome-resolved Kraus operators of the simultaneous syndrome step.

    Every non-trivial syndrome qubit is coupled to its own ``|+>`` ancilla
    through ``exp(i eps/2 sum_j X_j (x) Y^a_j)``; the ancillas are measured in
    Z and the feedback ``exp(i phi sum_j xi_j Y_j)`` with ``tan(phi) = eps'``
    is applied. Returns a list of ``(xi, K)`` with ``xi`` a tuple of +-1.
    """
    ops_ = syndrome_ops(code)
    xs, ys = (ops_.x, ops_.y) if encoded else (ops_.xp, ops_.yp)
    labels = sorted(xs)
    na = len(labels)
    h = sum(np.kron(xs[j], _ancilla_y(i, na)) for i, j in enumerate(labels))
    u = expm(1j * eps / 2 * h)
    plus = tensor_all(*([np.array([1, 1], dtype=complex) / np.sqrt(2)] * na))
    eye = np.eye(code.dim)
    inject = np.kron(eye, plus[:, None])
    phi = np.arctan(epsilon_prime(eps))
    out = []
    for bits in itertools.product((0, 1), repeat=na):
        bra = tensor_all(*[np.eye(2)[b] for b in bits])
        k = np.kron(eye, bra[None, :]) @ u @ inject
        xi = tuple(1 if b == 0 else -1 for b in bits)
        fb = expm(1j * phi * sum(s * ys[j] for s, j in zip(xi, labels)))
        out.append((xi, fb @ k))
    return out


def simultaneous_syndrome_step(code: CodeSpec, rho, eps: float, rng: np.random.Generator,
                               encoded: bool = False):
    """Sample one outcome of the simultaneous step; return ``(xi, post_state)``."""
    rho = as_matrix(rho)
    branches = simultaneous_syndrome_kraus(code, eps, encoded)
    states = [k @ rho @ dagger(k) for _, k in branches]
    probs = np.array([np.real(np.trace(s)) for s in states])
    idx = rng.choice(len(branches), p=probs / probs.sum())
    return branches[idx][0], DensityMatrix(states[idx] / probs[idx])


def averaged_simultaneous_step(code: CodeSpec, rho, eps: float, encoded: bool = False) -> DensityMatrix:
    return DensityMatrix(averaged_simultaneous_map(code, eps, encoded).apply(as_matrix(rho)))


def averaged_simultaneous_map(code: CodeSpec, eps: float, encoded: bool = False) -> KrausMap:
    return KrausMap(tuple(k for _, k in simultaneous_syndrome_kraus(code, eps, encoded)))


def sequential_subspace_map(code: CodeSpec, eps: float, encoded: bool = False) -> KrausMap:
    """Composition of the per-syndrome weak jump maps (syndrome 1 first)."""
    total = KrausMap.identity(code.dim)
    for j in range(1, code.syndrome_dim):
        total = subspace_weak_jump_map(code, j, eps, encoded).compose(total)
    return total


def weak_quantum_jump_map(code: CodeSpec, eps: float) -> np.ndarray:
    """Superoperator of ``rho -> (1 - eps^2) rho + eps^2 R(rho)``."""
    r = strong_recovery(code).superoperator()
    return (1 - eps * eps) * np.eye(code.dim**2) + eps * eps * r


def bath_pair_basis(rho0_system, n_pairs: int):
    """Operator basis spanning the joint system-bath evolution.

    Elements are ``X^a rho0 X^b (x) prod_i X_i^{a_i + b_i} / 2`` over all bit
    strings ``a``, ``b`` of length ``n_pairs``; bath qubits follow the system.
    Returns ``(labels, operators, phases)`` where ``phases`` are the factors
    ``(-i)^{|a|} i^{|b|}`` relating basis coefficients to real amplitudes.
    """
    rho0 = as_matrix(rho0_system)
    labels, ops, phases = [], [], []
    for bits in itertools.product((0, 1), repeat=2 * n_pairs):
        a, b = bits[:n_pairs], bits[n_pairs:]
        xa = tensor_all(*[X if v else I2 for v in a])
        xb = tensor_all(*[X if v else I2 for v in b])
        bath = tensor_all(*[(X if (u + v) % 2 else I2) / 2 for u, v in zip(a, b)])
        labels.append(bits)
        ops.append(np.kron(xa @ rho0 @ xb, bath))
        phases.append((-1j) ** sum(a) * (1j) ** sum(b))
    return labels, ops, np.array(phases)


def nonmarkov_1q_state(alpha: float, beta: float) -> np.ndarray:
    """Joint state ``(alpha|0><0| + (1-alpha)|1><1|) (x) I/2 - beta Y (x) X/2``."""
    sys_part = np.diag([alpha, 1 - alpha]).astype(complex)
    return np.kron(sys_part, I2 / 2) - beta * np.kron(Y, X / 2)


def bitflip_channel(gamma: float, dt: float, n: int = 1) -> KrausMap:
    """Exact propagator of independent bit-flip noise over a time ``dt``."""
    p = (1 - np.exp(-2 * gamma * dt)) / 2
    single = KrausMap((np.sqrt(1 - p) * I2, np.sqrt(p) * X))
    total = single
    for _ in range(n - 1):
        total = KrausMap(tuple(np.kron(a, b) for a in total.ops for b in single.ops))
    return total


__all__ = [
    "LindbladGenerator",
    "lindblad_apply",
    "JumpCorrection",
    "WeakMeasurement",
    "AncillaMeasurement",
    "FeedbackLaw",
    "bitflip_lindblad",
    "joint_bath_generator",
    "strong_recovery",
    "epsilon_prime",
    "weak_jump_map",
    "subspace_weak_jump_map",
    "weak_x_measurement_via_ancilla",
    "weak_z_measurement",
    "z_walk_operator",
    "z_walk_state",
    "adl_superops",
    "adl_drift",
    "adl_feedback",
    "simultaneous_syndrome_kraus",
    "simultaneous_syndrome_step",
    "averaged_simultaneous_step",
    "averaged_simultaneous_map",
    "sequential_subspace_map",
    "weak_quantum_jump_map",
    "bath_pair_basis",
    "nonmarkov_1q_state",
    "bitflip_channel",
    "projector",
]
