"""Fixed-step time evolution of master equations, SDEs and weak-map sequences.

All integrators re-hermitize and renormalize the state after every step and
keep track of the size of that correction; nothing clips eigenvalues.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from . import numerics
from .dynamics import FeedbackLaw, LindbladGenerator, WeakMeasurement, adl_feedback, adl_superops
from .numerics import DomainError, NumericGuardError, StabilityError
from .qstate import DensityMatrix, KrausMap, as_matrix

_DENSE_LIMIT = 256


class StabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Parameters shared by every integrator.

    ``dt=None`` selects ``0.01 / max(kappa, lam, gamma)``;
    ``filter_time_constant=None`` selects ``1 / kappa``.
    """

    scenario: str = ""
    kappa: float = 0.0
    lam: float = 0.0
    gamma: float = 0.0
    dt: float | None = None
    t_max: float = 1.0
    n_traj: int = 1
    seed: int = 0
    store_stride: int = 1
    filter_time_constant: float | None = None

    def __post_init__(self):
        for name in ("kappa", "lam", "gamma"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.t_max < 0:
            raise DomainError("t_max must be non-negative")
        if self.dt is not None and self.dt <= 0:
            raise DomainError("dt must be positive")
        if self.n_traj < 1:
            raise DomainError("n_traj must be at least 1")
        if self.store_stride < 1:
            raise DomainError("store_stride must be at least 1")
        if self.filter_time_constant is not None and self.filter_time_constant <= 0:
            raise DomainError("filter_time_constant must be positive")

    @property
    def max_rate(self) -> float:
        return max(self.kappa, self.lam, self.gamma)

    @property
    def step(self) -> float:
        if self.dt is not None:
            return self.dt
        if self.max_rate == 0:
            return self.t_max / 1000 if self.t_max > 0 else 1.0
        return 0.01 / self.max_rate

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.step))

    @property
    def tau_filter(self) -> float:
        if self.filter_time_constant is not None:
            return self.filter_time_constant
        return 1.0 / self.kappa if self.kappa > 0 else self.t_max

    def check_stability(self, rate: float | None = None) -> float:
        """Return ``dt * rate``; warn above the soft limit, raise above the hard one."""
        rate = self.max_rate if rate is None else max(rate, self.max_rate)
        h = self.step * rate
        tol = numerics.get()
        if h > tol.stability_error:
            raise StabilityError(f"dt * max_rate = {h:.3g} exceeds {tol.stability_error}")
        if h > tol.stability_warn:
            warnings.warn(f"dt * max_rate = {h:.3g} is above {tol.stability_warn}",
                          StabilityWarning, stacklevel=3)
        return h


@dataclass(frozen=True)
class TrajectoryRecord:
    """Stored samples of one run.

    ``states`` has shape ``(n_stored, d, d)``; ``wiener_increments`` has one
    row per step and one column per measured channel.
    """

    times: np.ndarray
    states: np.ndarray
    wiener_increments: np.ndarray | None = None
    x_path: np.ndarray | None = None
    current_estimate: np.ndarray | None = None
    max_correction: float = 0.0
    stopped_at: float | None = None

    def __len__(self):
        return len(self.times)

    def density(self, i: int = -1) -> DensityMatrix:
        return DensityMatrix(self.states[i])

    def expect(self, op) -> np.ndarray:
        """``Tr(op rho(t))`` for every stored state."""
        return np.real(np.einsum("ij,tji->t", np.asarray(op), self.states))

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _total_superoperator(generators, d, sparse):
    total = None
    for g in generators:
        if g.dim != d:
            raise DomainError(f"generator acts on dimension {g.dim}, state has {d}")
        s = g.superoperator(sparse=sparse)
        total = s if total is None else total + s
    if total is None:
        total = sp.csr_matrix((d * d, d * d)) if sparse else np.zeros((d * d, d * d))
    return total


def rk4_step_matrix(superop, h: float) -> np.ndarray:
    """``I + hL + (hL)^2/2 + (hL)^3/6 + (hL)^4/24``, one classic RK4 step of a linear ODE."""
    a = h * np.asarray(superop)
    n = a.shape[0]
    out = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, 5):
        term = term @ a / k
        out = out + term
    return out


def _stored_indices(n_steps, stride):
    idx = list(range(0, n_steps + 1, stride))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return idx


def hermitian_basis(d: int) -> np.ndarray:
    """Columns are ``vec(E_k)`` for a Hilbert-Schmidt orthonormal Hermitian basis.

    Diagonal units come first, then ``(e_ij + e_ji)/sqrt2`` and
    ``i(e_ji - e_ij)/sqrt2`` for ``i < j``. Coordinates of a Hermitian
    operator in this basis are real.
    """
    cols = []
    for i in range(d):
        m = np.zeros((d, d), dtype=complex)
        m[i, i] = 1.0
        cols.append(m.ravel())
    r = 1 / math.sqrt(2)
    for i in range(d):
        for j in range(i + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[i, j] = m[j, i] = r
            cols.append(m.ravel())
            m = np.zeros((d, d), dtype=complex)
            m[i, j], m[j, i] = -1j * r, 1j * r
            cols.append(m.ravel())
    return np.array(cols).T


def evolve_deterministic(generators: Sequence, rho0, config: SimConfig) -> TrajectoryRecord:
    """Classic RK4 on ``d rho/dt = sum_g g(rho)`` with a fixed step.

    For ``d^2 <= 256`` the RK4 propagator of the (linear, autonomous)
    generator is precomputed and expressed in a real Hermitian operator
    basis; taking its real part is exactly the per-step re-hermitization.
    Larger systems evaluate the four stages with a sparse superoperator and
    re-hermitize explicitly. ``max_correction`` bounds the per-step change
    made by re-hermitization plus trace renormalization.
    """
    rho = np.array(as_matrix(rho0), dtype=complex)
    d = rho.shape[0]
    rate = max([getattr(g, "max_rate", 0.0) for g in generators] + [0.0])
    config.check_stability(rate)
    h = config.step
    n = config.n_steps
    keep = set(_stored_indices(n, config.store_stride))
    times, states = [0.0], [rho.copy()]
    worst = 0.0
    if d * d <= _DENSE_LIMIT:
        basis = hermitian_basis(d)
        t = basis.conj().T @ rk4_step_matrix(_total_superoperator(generators, d, False), h) @ basis
        worst = float(np.abs(t.imag).max())
        t = np.ascontiguousarray(t.real)
        # the first d basis elements are the diagonal units, so the trace is r[:d].sum()
        u = np.zeros(d * d)
        u[:d] = 1.0
        stored = np.empty((len(keep), d * d))
        r = np.real(basis.conj().T @ rho.ravel())
        r = r / (u @ r)
        stored[0] = r
        row = 1
        stride = config.store_stride
        for k in range(1, n + 1):
            r = t @ r
            tr = u @ r
            r /= tr
            if abs(tr - 1.0) > worst:
                worst = abs(tr - 1.0)
            if k % stride == 0 or k == n:
                stored[row] = r
                row += 1
        if not np.all(np.isfinite(stored)):
            raise NumericGuardError("non-finite state during deterministic evolution")
        times = np.array(_stored_indices(n, stride), dtype=float) * h
        states = (stored @ basis.T).reshape(-1, d, d)
        return TrajectoryRecord(times, states, max_correction=worst)

    s = _total_superoperator(generators, d, sparse=True)
    for k in range(1, n + 1):
        v = rho.ravel()
        k1 = s @ v
        k2 = s @ (v + 0.5 * h * k1)
        k3 = s @ (v + 0.5 * h * k2)
        k4 = s @ (v + h * k3)
        m = (v + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)).reshape(d, d)
        herm = 0.5 * (m + m.conj().T)
        tr = herm.trace().real
        rho = herm / tr
        worst = max(worst, abs(tr - 1.0), float(np.abs(m - herm).max()))
        if k in keep:
            if not np.all(np.isfinite(rho)):
                raise NumericGuardError(f"non-finite state at step {k}")
            times.append(k * h)
            states.append(rho.copy())
    return TrajectoryRecord(np.array(times), np.array(states), max_correction=worst)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``index``.

    The 128-bit Philox key is ``(index << 64) | (seed mod 2^64)``, so streams
    depend only on ``(seed, index)`` and not on scheduling.
    """
    key = (int(index) << 64) | (int(seed) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))


def wiener_increments(seed: int, indices, n_steps: int, n_channels: int, dt: float) -> np.ndarray:
    """Increments of shape ``(len(indices), n_steps, n_channels)``, Normal(0, dt)."""
    out = np.empty((len(indices), n_steps, n_channels))
    for row, i in enumerate(indices):
        out[row] = trajectory_rng(seed, i).standard_normal((n_steps, n_channels))
    return out * math.sqrt(dt)


class SdeBatch(NamedTuple):
    times: np.ndarray
    states: np.ndarray  # (B, n_stored, d, d)
    x: np.ndarray  # (B, n_stored, n_channels)
    max_correction: float


def _expect_h(ops, rho):
    # <M_l> for Hermitian M_l over a stack of states; shape (..., n_channels)
    return np.real(np.einsum("lij,...ji->...l", ops, rho))


def _normalize(m):
    herm = 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))
    tr = np.real(np.trace(herm, axis1=-2, axis2=-1))
    return herm / tr[..., None, None], np.max(np.abs(tr - 1.0), initial=0.0)


def sde_batch(drift: LindbladGenerator, diffusion_ops: Sequence, feedback: FeedbackLaw | None,
              rho0, config: SimConfig, increments: np.ndarray) -> SdeBatch:
    """Euler-Maruyama for a batch of trajectories with given Wiener increments.

    Step: ``rho += drift(rho) dt + sum_l sqrt(kappa)/2 F[M_l](rho) dW_l
    - i sum_r s_r [H_r, rho] dt`` with ``s_r`` from the feedback law applied
    to the controller's estimate. The estimate follows the same equation
    driven by the innovation ``dW + sqrt(kappa) (<M>_true - <M>_est) dt``.
    The record ``x`` integrates ``dx_l = kappa <M_l> dt + sqrt(kappa) dW_l``.
    """
    ops = np.array([np.asarray(m, dtype=complex) for m in diffusion_ops]).reshape(
        -1, drift.dim, drift.dim)
    b, n, n_ch = increments.shape
    if n_ch != len(ops):
        raise DomainError(f"{len(ops)} channels but increments have {n_ch} columns")
    if n != config.n_steps:
        raise DomainError(f"expected {config.n_steps} steps of increments, got {n}")
    kappa = config.kappa
    rate = max(drift.max_rate, kappa, feedback.strength if feedback else 0.0)
    config.check_stability(rate)
    dt = config.step
    sq = math.sqrt(kappa)
    floor = numerics.get().stochastic_min_eigenvalue

    rho = np.broadcast_to(as_matrix(rho0), (b, drift.dim, drift.dim)).astype(complex)
    track = feedback is not None and feedback.estimate0 is not None
    est = np.broadcast_to(feedback.estimate0, rho.shape).astype(complex) if track else rho
    hs = np.array(feedback.hamiltonians) if feedback is not None and feedback.hamiltonians else None

    def rhs(state, dw, strengths):
        out = drift.apply(state) * dt
        for l in range(n_ch):
            _, f = adl_superops(ops[l], state)
            out = out + (0.5 * sq) * f * dw[:, l, None, None]
        if strengths is not None:
            hf = np.einsum("br,rij->bij", strengths, hs)
            out = out - 1j * dt * (hf @ state - state @ hf)
        return out

    keep = _stored_indices(n, config.store_stride)
    keep_set = set(keep)
    x = np.zeros((b, n_ch))
    xs, states = [x.copy()], [rho.copy()]
    worst = 0.0
    for k in range(n):
        dw = increments[:, k, :]
        m_true = _expect_h(ops, rho)
        strengths = adl_feedback(feedback, est) if hs is not None else None
        new = rho + rhs(rho, dw, strengths)
        if track:
            dw_est = dw + sq * (m_true - _expect_h(ops, est)) * dt
            est, _ = _normalize(est + rhs(est, dw_est, strengths))
        x = x + kappa * m_true * dt + sq * dw
        rho, corr = _normalize(new)
        if not track:
            est = rho
        worst = max(worst, corr)
        if k + 1 in keep_set:
            if not np.all(np.isfinite(rho)):
                raise NumericGuardError(f"non-finite state at step {k + 1}")
            lam_min = np.linalg.eigvalsh(rho)[..., 0].min()
            if lam_min < floor:
                raise NumericGuardError(
                    f"minimum eigenvalue {lam_min:.3g} below {floor} at t = {(k + 1) * dt:.6g}")
            xs.append(x.copy())
            states.append(rho.copy())
    times = np.array(keep, dtype=float) * dt
    return SdeBatch(times, np.stack(states, axis=1), np.stack(xs, axis=1), worst)


def evolve_sde(drift: LindbladGenerator, diffusion_ops: Sequence, feedback: FeedbackLaw | None,
               rho0, config: SimConfig, rng: np.random.Generator | None = None,
               dW: np.ndarray | None = None) -> TrajectoryRecord:
    """One Euler-Maruyama trajectory; pass ``dW`` to reuse Brownian increments."""
    n_ch = len(diffusion_ops)
    if dW is None:
        if rng is None:
            rng = trajectory_rng(config.seed, 0)
        dW = rng.standard_normal((config.n_steps, n_ch)) * math.sqrt(config.step)
    dW = np.asarray(dW, dtype=float).reshape(config.n_steps, n_ch)
    res = sde_batch(drift, diffusion_ops, feedback, rho0, config, dW[None])
    x = res.x[0]
    cur = None
    if n_ch and config.kappa > 0:
        cur = measurement_current(x[:, 0], res.times, config.tau_filter)
    return TrajectoryRecord(res.times, res.states[0], dW, x, cur, res.max_correction)


def measurement_current(x_path, times, tau: float) -> np.ndarray:
    """Exponential moving average of ``dx/dt`` with time constant ``tau``."""
    if tau <= 0:
        raise DomainError("filter time constant must be positive")
    x = np.asarray(x_path, dtype=float)
    t = np.asarray(times, dtype=float)
    out = np.zeros_like(x)
    for k in range(1, len(x)):
        h = t[k] - t[k - 1]
        a = math.exp(-h / tau)
        out[k] = a * out[k - 1] + (1 - a) * (x[k] - x[k - 1]) / h
    return out


def evolve_weak_steps(step, rho0, config: SimConfig, rng: np.random.Generator | None = None,
                      noise: KrausMap | None = None, x_stop: float | None = None) -> TrajectoryRecord:
    """Repeat a finite-strength map ``config.n_steps`` times.

    ``step`` is either a ``KrausMap`` (deterministic, outcome-averaged) or a
    ``WeakMeasurement`` whose outcomes are sampled with ``rng``; in the latter
    case ``x`` moves by ``+-eps`` per outcome and the run stops once
    ``|x| >= x_stop``. ``noise``, if given, acts before each step.
    """
    rho = np.array(as_matrix(rho0), dtype=complex)
    n = config.n_steps
    h = config.step
    keep = set(_stored_indices(n, config.store_stride))
    times, states, xs = [0.0], [rho.copy()], [0.0]
    sampled = isinstance(step, WeakMeasurement)
    if sampled and rng is None:
        rng = trajectory_rng(config.seed, 0)
    x = 0.0
    worst = 0.0
    stopped = None
    for k in range(1, n + 1):
        if noise is not None:
            rho = noise.apply(rho)
        if sampled:
            p_plus = np.real(np.trace(step.m_plus @ rho @ step.m_plus.conj().T))
            outcome = 1 if rng.random() < p_plus else -1
            m = step.m_plus if outcome > 0 else step.m_minus
            rho = m @ rho @ m.conj().T
            x += outcome * step.eps
        else:
            rho = step.apply(rho)
        herm = 0.5 * (rho + rho.conj().T)
        tr = herm.trace().real
        worst = max(worst, abs(tr - 1.0) if not sampled else 0.0)
        rho = herm / tr
        done = x_stop is not None and abs(x) >= x_stop
        if k in keep or done:
            times.append(k * h)
            states.append(rho.copy())
            xs.append(x)
        if done:
            stopped = k * h
            break
    return TrajectoryRecord(np.array(times), np.array(states), x_path=np.array(xs),
                            max_correction=worst, stopped_at=stopped)


class EnsembleResult(NamedTuple):
    mean: np.ndarray
    stderr: np.ndarray
    n: int


def _chunk_stats(values):
    n = values.shape[0]
    mean = values.mean(axis=0)
    m2 = ((values - mean) ** 2).sum(axis=0)
    return n, mean, m2


def _combine(a, b):
    na, ma, qa = a
    nb, mb, qb = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), qa + qb + delta**2 * (na * nb / n)


def ensemble_average(config: SimConfig, factory: Callable[[np.ndarray], np.ndarray],
                     chunk_size: int = 256, n_workers: int = 1) -> EnsembleResult:
    """Mean and standard error over ``config.n_traj`` trajectories.

    ``factory(indices)`` returns observables of shape
    ``(len(indices), n_times, n_obs)`` for the given trajectory indices and
    must draw randomness only from ``trajectory_rng(config.seed, i)``.
    Chunks are formed and combined in index order, so the result does not
    depend on ``n_workers``.
    """
    if chunk_size < 1:
        raise DomainError("chunk_size must be positive")
    chunks = [np.arange(s, min(s + chunk_size, config.n_traj))
              for s in range(0, config.n_traj, chunk_size)]

    def work(idx):
        return _chunk_stats(np.asarray(factory(idx), dtype=float))

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            stats = list(pool.map(work, chunks))
    else:
        stats = [work(c) for c in chunks]
    total = stats[0]
    for s in stats[1:]:
        total = _combine(total, s)
    n, mean, m2 = total
    if n > 1:
        stderr = np.sqrt(m2 / (n - 1) / n)
    else:
        stderr = np.full_like(mean, np.nan)
    return EnsembleResult(mean, stderr, n)


def sde_factory(drift: LindbladGenerator, diffusion_ops: Sequence, feedback: FeedbackLaw | None,
                rho0, config: SimConfig, observables: Sequence) -> Callable[[np.ndarray], np.ndarray]:
    """Factory for ``ensemble_average`` returning ``Tr(O rho)`` at stored times."""
    obs = np.array([np.asarray(o, dtype=complex) for o in observables])

    def factory(indices):
        inc = wiener_increments(config.seed, indices, config.n_steps, len(diffusion_ops), config.step)
        res = sde_batch(drift, diffusion_ops, feedback, rho0, config, inc)
        return np.real(np.einsum("oij,btji->bto", obs, res.states))

    return factory


@dataclass(frozen=True)
class ReducedGenerator:
    """A linear generator restricted to an invariant operator subspace.

    ``matrix[:, j]`` holds the basis coefficients of ``L(B_j)``;
    ``closure_residual`` measures how far ``L(B_j)`` leaves the span.
    """

    matrix: np.ndarray
    basis: tuple = field(repr=False)
    closure_residual: float

    def propagate(self, c0, times) -> np.ndarray:
        """Coefficients at uniformly spaced ``times`` (exact exponential)."""
        times = np.asarray(times, dtype=float)
        c = np.asarray(c0, dtype=complex)
        out = np.empty((len(times), len(c)), dtype=complex)
        out[0] = c
        if len(times) > 1:
            h = times[1] - times[0]
            if not np.allclose(np.diff(times), h, rtol=1e-9, atol=0):
                raise DomainError("times must be uniformly spaced")
            step = expm(self.matrix * h)
            for k in range(1, len(times)):
                c = step @ c
                out[k] = c
        return out

    def operator(self, c) -> np.ndarray:
        return np.tensordot(np.asarray(c), np.asarray(self.basis), axes=1)


def reduce_generator(apply: Callable[[np.ndarray], np.ndarray], basis: Sequence) -> ReducedGenerator:
    """Project ``apply`` onto a Hilbert-Schmidt orthogonal operator basis."""
    b = np.array([np.asarray(x, dtype=complex).ravel() for x in basis]).T
    gram = b.conj().T @ b
    off = gram - np.diag(np.diag(gram))
    if np.abs(off).max(initial=0.0) > 1e-12 * np.abs(np.diag(gram)).max():
        raise DomainError("basis is not Hilbert-Schmidt orthogonal")
    norms = np.real(np.diag(gram))
    g = np.empty((b.shape[1], b.shape[1]), dtype=complex)
    worst = 0.0
    shape = np.asarray(basis[0]).shape
    for j in range(b.shape[1]):
        out = apply(b[:, j].reshape(shape)).ravel()
        c = (b.conj().T @ out) / norms
        worst = max(worst, float(np.abs(b @ c - out).max()))
        g[:, j] = c
    return ReducedGenerator(g, tuple(np.asarray(x) for x in basis), worst)


__all__ = [
    "SimConfig",
    "StabilityWarning",
    "TrajectoryRecord",
    "EnsembleResult",
    "ReducedGenerator",
    "rk4_step_matrix",
    "hermitian_basis",
    "evolve_deterministic",
    "evolve_sde",
    "sde_batch",
    "sde_factory",
    "evolve_weak_steps",
    "ensemble_average",
    "measurement_current",
    "trajectory_rng",
    "wiener_increments",
    "reduce_generator",
]
