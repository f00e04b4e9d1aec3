"""Dense linear algebra for multi-qubit density operators.

Conventions
-----------
* The leftmost tensor factor is the most significant index, so the operator
  written ``XII`` acts with ``X`` on qubit 0 and ``np.kron(X, np.kron(I, I))``
  is its matrix.
* Subsystem indices are 0-based.
* Superoperators act on row-major vectorised matrices:
  ``vec(A @ rho @ B) == np.kron(A, B.T) @ vec(rho)`` with ``vec = ravel``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import numerics
from .numerics import DomainError

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=complex, copy=True)
    arr.flags.writeable = False
    return arr


def tensor(a, b) -> np.ndarray:
    """Kronecker product with ``a`` as the most significant factor."""
    return np.kron(np.asarray(a), np.asarray(b))


def tensor_all(*ops) -> np.ndarray:
    return reduce(tensor, ops)


def ket(bits: str | Sequence[int]) -> np.ndarray:
    """Computational basis vector, e.g. ``ket("010")``."""
    bits = [int(b) for b in bits]
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int("".join(map(str, bits)), 2) if bits else 0] = 1.0
    return v


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def embed(op, position: int, n_qubits: int) -> np.ndarray:
    """Single-qubit ``op`` acting on qubit ``position`` of ``n_qubits``."""
    ops = [I2] * n_qubits
    ops[position] = np.asarray(op, dtype=complex)
    return tensor_all(*ops)


def dagger(a) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def commutator(a, b) -> np.ndarray:
    return a @ b - b @ a


def psd_sqrt(a) -> np.ndarray:
    """Square root of a Hermitian positive-semidefinite matrix."""
    w, v = np.linalg.eigh(np.asarray(a, dtype=complex))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


@dataclass(frozen=True)
class DensityMatrix:
    """A density operator together with its tensor-factor dimensions.

    Construction only checks shapes; use :func:`check_density` for the
    physical invariants (the object may legitimately hold an unnormalised
    operator, for instance while diagnosing an integrator).
    """

    data: np.ndarray
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise DomainError(f"density matrix must be square, got {data.shape}")
        dims = tuple(int(d) for d in self.dims) or _qubit_dims(data.shape[0])
        if any(d < 2 for d in dims) or int(np.prod(dims)) != data.shape[0]:
            raise DomainError(f"dims {dims} incompatible with shape {data.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_ket(cls, psi, dims: Sequence[int] = ()) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls(projector(psi / np.linalg.norm(psi)), tuple(dims))

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> "DensityMatrix":
        d = int(np.prod(dims))
        return cls(np.eye(d) / d, tuple(dims))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def expect(self, op) -> float:
        return float(np.real(np.trace(np.asarray(op) @ self.data)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)


def _qubit_dims(d: int) -> tuple[int, ...]:
    n = int(round(np.log2(d)))
    if 2**n == d and n > 0:
        return (2,) * n
    return (d,)


def as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.data
    return np.asarray(rho, dtype=complex)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the subsystems listed in ``keep`` (0-based)."""
    dims = rho.dims
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if not keep or any(k < 0 or k >= n for k in keep):
        raise DomainError(f"invalid subsystem set {keep} for dims {dims}")
    t = rho.data.reshape(dims + dims)
    row = list(range(n))
    # traced factors share the row label; kept factors get a fresh column label
    col = [n + k if k in keep else k for k in range(n)]
    out = keep + [n + k for k in keep]
    reduced = np.einsum(t, row + col, out)
    d = int(np.prod([dims[k] for k in keep]))
    return DensityMatrix(reduced.reshape(d, d), tuple(dims[k] for k in keep))


@dataclass(frozen=True)
class KrausMap:
    """Completely positive map given by its Kraus operators."""

    ops: tuple[np.ndarray, ...]
    in_dim: int = field(init=False)
    out_dim: int = field(init=False)

    def __post_init__(self):
        ops = tuple(_frozen(k) for k in self.ops)
        if not ops:
            raise DomainError("a Kraus map needs at least one operator")
        shape = ops[0].shape
        if any(k.shape != shape or k.ndim != 2 for k in ops):
            raise DomainError("Kraus operators must be matrices of equal shape")
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "out_dim", shape[0])
        object.__setattr__(self, "in_dim", shape[1])

    @classmethod
    def identity(cls, d: int) -> "KrausMap":
        return cls((np.eye(d),))

    @classmethod
    def unitary(cls, u) -> "KrausMap":
        return cls((u,))

    def completeness_residual(self) -> float:
        s = sum(dagger(k) @ k for k in self.ops)
        return float(np.max(np.abs(s - np.eye(self.in_dim))))

    @property
    def is_cptp(self) -> bool:
        return self.completeness_residual() <= numerics.get().completeness

    def superoperator(self) -> np.ndarray:
        return sum(np.kron(k, k.conj()) for k in self.ops)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Apply to a bare matrix or a stack of matrices."""
        return sum(k @ rho @ dagger(k) for k in self.ops)

    def compose(self, first: "KrausMap") -> "KrausMap":
        """The map ``self o first`` (``first`` acts first)."""
        return KrausMap(tuple(a @ b for a in self.ops for b in first.ops))

    def extend(self, d_env: int) -> "KrausMap":
        """``self`` tensored with the identity channel on a trailing factor."""
        eye = np.eye(d_env)
        return KrausMap(tuple(np.kron(k, eye) for k in self.ops))

    def conjugated(self, u) -> "KrausMap":
        """Kraus operators ``u K u^dagger``."""
        u = np.asarray(u)
        return KrausMap(tuple(u @ k @ dagger(u) for k in self.ops))


def apply_kraus(kmap: KrausMap, rho: DensityMatrix) -> DensityMatrix:
    if kmap.in_dim != rho.dim:
        raise DomainError(f"map acts on dimension {kmap.in_dim}, state has {rho.dim}")
    dims = rho.dims if kmap.out_dim == kmap.in_dim else ()
    return DensityMatrix(kmap.apply(rho.data), dims)


def state_fidelity(rho, psi) -> float:
    """Overlap ``<psi|rho|psi>`` with a normalised pure state."""
    psi = np.asarray(psi, dtype=complex)
    return float(np.real(psi.conj() @ as_matrix(rho) @ psi))


class DensityDiagnostics(NamedTuple):
    hermiticity_residual: float
    trace_residual: float
    min_eigenvalue: float

    def ok(self, min_eigenvalue: float | None = None) -> bool:
        tol = numerics.get()
        floor = tol.min_eigenvalue if min_eigenvalue is None else min_eigenvalue
        return (
            self.hermiticity_residual <= tol.hermiticity
            and self.trace_residual <= tol.trace
            and self.min_eigenvalue >= floor
        )


def check_density(rho) -> DensityDiagnostics:
    m = as_matrix(rho)
    herm = float(np.max(np.abs(m - m.conj().T)))
    tr = float(abs(np.trace(m) - 1.0))
    lam = float(np.min(np.linalg.eigvalsh(0.5 * (m + m.conj().T))))
    return DensityDiagnostics(herm, tr, lam)


_PRODUCT = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}


@dataclass(frozen=True)
class PauliString:
    """A tensor product of Pauli operators with a scalar prefactor."""

    symbols: str
    coefficient: complex = 1.0

    def __post_init__(self):
        if not self.symbols or set(self.symbols) - set("IXYZ"):
            raise DomainError(f"invalid Pauli string {self.symbols!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.symbols)

    def matrix(self) -> np.ndarray:
        return self.coefficient * tensor_all(*(PAULI[s] for s in self.symbols))

    def __mul__(self, other):
        if isinstance(other, PauliString):
            if other.n_qubits != self.n_qubits:
                raise DomainError("Pauli strings of different length")
            phase = self.coefficient * other.coefficient
            out = []
            for a, b in zip(self.symbols, other.symbols):
                p, s = _PRODUCT[a, b]
                phase *= p
                out.append(s)
            return PauliString("".join(out), phase)
        return PauliString(self.symbols, self.coefficient * other)

    __rmul__ = __mul__

    def __neg__(self):
        return PauliString(self.symbols, -self.coefficient)

    def commutes_with(self, other: "PauliString") -> bool:
        anti = sum(
            a != "I" and b != "I" and a != b for a, b in zip(self.symbols, other.symbols)
        )
        return anti % 2 == 0

    def __str__(self):
        c = self.coefficient
        prefix = "" if c == 1 else "-" if c == -1 else f"({c})"
        return prefix + self.symbols


def pauli(symbols: str) -> np.ndarray:
    """Matrix of a Pauli string such as ``"XZZ"``."""
    return PauliString(symbols).matrix()


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random full-rank (or given rank) density matrix, Ginibre construction."""
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
