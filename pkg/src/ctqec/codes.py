"""The single-qubit trivial code and the three-qubit bit-flip code.

Both codes are described in two bases. In the original (physical) basis the
bit-flip code has stabilizer generators ``IZZ`` and ``ZZI`` and codewords
``|000>``, ``|111>``. The encoded basis is reached with the unitary
``U = U_c CX(0,1) CX(0,2)``; there qubit 0 carries the logical information
and qubits 1-2 form the syndrome factor, with the code space equal to
``H_A (x) |00>``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import numerics
from .numerics import DomainError
from .qstate import (
    I2,
    X,
    DensityMatrix,
    KrausMap,
    PauliString,
    as_matrix,
    dagger,
    ket,
    partial_trace,
    projector,
    tensor_all,
)

P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)


def cnot(control: int, target: int, n_qubits: int) -> np.ndarray:
    """Controlled-NOT on ``n_qubits`` qubits (0-based indices)."""
    if control == target:
        raise DomainError("control and target must differ")
    off = [I2] * n_qubits
    on = [I2] * n_qubits
    off[control] = P0
    on[control] = P1
    on[target] = X
    return tensor_all(*off) + tensor_all(*on)


@dataclass(frozen=True)
class CodeSpec:
    """A stabilizer code and its encoded-basis structure.

    ``syndrome_index[j]`` is the computational index, inside the syndrome
    factor of the encoded basis, of the abstract syndrome state ``|j_s>``.
    ``corrections`` maps a tuple of stabilizer eigenvalues to the Pauli
    operator that undoes the corresponding error.
    """

    name: str
    n_qubits: int
    stabilizers: tuple[PauliString, ...]
    logical_zero: np.ndarray
    logical_one: np.ndarray | None
    code_projector: np.ndarray
    basis_unitary: np.ndarray
    logical_dim: int
    syndrome_dim: int
    syndrome_index: tuple[int, ...]
    corrections: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def n_syndromes(self) -> int:
        """Number of non-trivial syndromes."""
        return self.syndrome_dim - 1

    def encoded_basis_vector(self, logical: int, syndrome: int) -> np.ndarray:
        """``|logical>_A (x) |syndrome_s>`` in encoded coordinates."""
        v = np.zeros(self.dim, dtype=complex)
        v[logical * self.syndrome_dim + self.syndrome_index[syndrome]] = 1.0
        return v

    def syndrome_projector_encoded(self, j: int) -> np.ndarray:
        s = np.zeros((self.syndrome_dim, self.syndrome_dim), dtype=complex)
        s[self.syndrome_index[j], self.syndrome_index[j]] = 1.0
        return np.kron(np.eye(self.logical_dim), s)

    def to_encoded(self, op) -> np.ndarray:
        u = self.basis_unitary
        return u @ np.asarray(op) @ dagger(u)

    def to_original(self, op) -> np.ndarray:
        u = self.basis_unitary
        return dagger(u) @ np.asarray(op) @ u


def trivial_code() -> CodeSpec:
    """``|0>`` as a code with stabilizer ``Z`` and no logical freedom."""
    return CodeSpec(
        name="trivial",
        n_qubits=1,
        stabilizers=(PauliString("Z"),),
        logical_zero=ket("0"),
        logical_one=None,
        code_projector=projector(ket("0")),
        basis_unitary=np.eye(2, dtype=complex),
        logical_dim=1,
        syndrome_dim=2,
        syndrome_index=(0, 1),
        corrections={(1,): PauliString("I"), (-1,): PauliString("X")},
    )


def correcting_unitary_bitflip() -> np.ndarray:
    """``U_c = X (x) |11><11| + I (x) (I - |11><11|)``."""
    p11 = np.kron(P1, P1)
    return np.kron(X, p11) + np.kron(I2, np.eye(4) - p11)


def bitflip_code() -> CodeSpec:
    zero, one = ket("000"), ket("111")
    u = correcting_unitary_bitflip() @ cnot(0, 1, 3) @ cnot(0, 2, 3)
    return CodeSpec(
        name="bitflip3",
        n_qubits=3,
        stabilizers=(PauliString("IZZ"), PauliString("ZZI")),
        logical_zero=zero,
        logical_one=one,
        code_projector=projector(zero) + projector(one),
        basis_unitary=u,
        logical_dim=2,
        syndrome_dim=4,
        # |1_s> = |10>, |2_s> = |01>, |3_s> = |11> on the syndrome factor
        syndrome_index=(0, 2, 1, 3),
        corrections={
            (1, 1): PauliString("III"),
            (1, -1): PauliString("XII"),
            (-1, -1): PauliString("IXI"),
            (-1, 1): PauliString("IIX"),
        },
    )


def syndrome_projectors(code: CodeSpec) -> dict[tuple[int, ...], np.ndarray]:
    """Projectors onto the joint eigenspaces of the stabilizer generators."""
    eye = np.eye(code.dim)
    out = {}
    for signs in itertools.product((1, -1), repeat=len(code.stabilizers)):
        p = eye
        for s, g in zip(signs, code.stabilizers):
            p = p @ (eye + s * g.matrix()) / 2
        out[signs] = p
    return out


def transform_errors(code: CodeSpec, errors: Sequence) -> list[np.ndarray]:
    """Error operators in the encoded basis, ``U E U^dagger``."""
    out = []
    for e in errors:
        e = np.asarray(e.matrix() if isinstance(e, PauliString) else e)
        if e.shape != (code.dim, code.dim):
            raise DomainError(f"error of shape {e.shape} on a {code.dim}-dim code")
        out.append(code.to_encoded(e))
    return out


def inverse_transform_errors(code: CodeSpec, errors: Sequence) -> list[np.ndarray]:
    out = []
    for e in errors:
        e = np.asarray(e)
        if e.shape != (code.dim, code.dim):
            raise DomainError(f"error of shape {e.shape} on a {code.dim}-dim code")
        out.append(code.to_original(e))
    return out


@dataclass(frozen=True)
class SyndromeOps:
    """Ladder operators of the abstract syndrome qubits.

    ``x[j]`` and ``y[j]`` act on span{|0_s>, |j_s>} as Pauli X and Y and vanish
    on the complement; ``xp``/``yp`` are the same operators in the original
    basis. ``complement[j]`` (encoded) projects onto the other syndromes.
    """

    x: dict[int, np.ndarray]
    y: dict[int, np.ndarray]
    xp: dict[int, np.ndarray]
    yp: dict[int, np.ndarray]
    complement: dict[int, np.ndarray]
    complement_p: dict[int, np.ndarray]
    subspace: dict[int, np.ndarray]
    subspace_p: dict[int, np.ndarray]


def syndrome_ops(code: CodeSpec) -> SyndromeOps:
    if code.name != "bitflip3":
        raise DomainError(f"syndrome qubits are defined for the bit-flip code, not {code.name!r}")
    d = code.syndrome_dim
    eye_a = np.eye(code.logical_dim)

    def unit(i, j):
        m = np.zeros((d, d), dtype=complex)
        m[code.syndrome_index[i], code.syndrome_index[j]] = 1.0
        return m

    x, y, comp, sub = {}, {}, {}, {}
    for j in range(1, d):
        x[j] = np.kron(eye_a, unit(j, 0) + unit(0, j))
        y[j] = np.kron(eye_a, 1j * unit(j, 0) - 1j * unit(0, j))
        sub[j] = np.kron(eye_a, unit(0, 0) + unit(j, j))
        comp[j] = np.kron(eye_a, sum(unit(k, k) for k in range(1, d) if k != j))
    back = code.to_original
    return SyndromeOps(
        x=x,
        y=y,
        xp={j: back(m) for j, m in x.items()},
        yp={j: back(m) for j, m in y.items()},
        complement=comp,
        complement_p={j: back(m) for j, m in comp.items()},
        subspace=sub,
        subspace_p={j: back(m) for j, m in sub.items()},
    )


class Recoverability(NamedTuple):
    recoverable: bool
    unitary: np.ndarray
    residual: float


def check_unitarily_recoverable(kraus: KrausMap | Sequence, code: CodeSpec) -> Recoverability:
    """Test whether every Kraus operator factorises on the code space.

    In the encoded basis each operator, restricted to ``H_A (x) |0_s>``, must
    equal ``I_A (x) c`` for some map ``c`` into the syndrome factor. The best
    such ``c`` is the partial trace over the logical index divided by
    ``dim H_A``; the residual of that fit decides the answer.
    """
    ops = kraus.ops if isinstance(kraus, KrausMap) else tuple(np.asarray(k) for k in kraus)
    la, ds = code.logical_dim, code.syndrome_dim
    basis = np.stack([code.encoded_basis_vector(a, 0) for a in range(la)], axis=1)
    worst = 0.0
    for m in ops:
        if m.shape != (code.dim, code.dim):
            raise DomainError(f"Kraus operator of shape {m.shape} on a {code.dim}-dim code")
        t = (code.to_encoded(m) @ basis).reshape(la, ds, la)
        c = np.einsum("asa->s", t) / la
        fit = np.einsum("ab,s->asb", np.eye(la), c)
        worst = max(worst, float(np.max(np.abs(t - fit))))
    ok = worst < numerics.get().factorization
    return Recoverability(ok, code.basis_unitary, worst)


def _system_state(rho, n_qubits: int) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        if rho.dim == 2**n_qubits:
            return rho.data
        return partial_trace(rho, range(n_qubits)).data
    m = as_matrix(rho)
    d = 2**n_qubits
    if m.shape[0] == d:
        return m
    rest = m.shape[0] // d
    return np.einsum("ajbj->ab", m.reshape(d, rest, d, rest))


def code_space_fidelity(rho, code: CodeSpec) -> float:
    """``Tr(P_code rho)``; joint system-bath states are reduced first."""
    m = _system_state(rho, code.n_qubits)
    return float(np.real(np.trace(code.code_projector @ m)))


def codeword_fidelity(rho, psi_bar) -> float:
    psi_bar = np.asarray(psi_bar, dtype=complex)
    n = int(round(np.log2(psi_bar.size)))
    m = _system_state(rho, n)
    return float(np.real(psi_bar.conj() @ m @ psi_bar))


def logical_reduced_state(rho, code: CodeSpec) -> np.ndarray:
    """State of the logical factor ``rho^A`` after moving to the encoded basis."""
    m = code.to_encoded(_system_state(rho, code.n_qubits))
    la, ds = code.logical_dim, code.syndrome_dim
    return np.einsum("asbs->ab", m.reshape(la, ds, la, ds))
