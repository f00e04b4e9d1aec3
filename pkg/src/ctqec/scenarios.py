"""Named simulation scenarios comparing numerics with closed-form oracles.

Each scenario takes a :class:`SimConfig` plus a dict of scenario-specific
options and returns a :class:`ScenarioReport` whose rows are written to CSV
by the command-line front end.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import find_peaks

from . import analytic
from .codes import bitflip_code, code_space_fidelity, logical_reduced_state, trivial_code
from .dynamics import (
    FeedbackLaw,
    JumpCorrection,
    adl_drift,
    bath_pair_basis,
    bitflip_channel,
    bitflip_lindblad,
    joint_bath_generator,
    strong_recovery,
    weak_jump_map,
)
from .integrators import (
    SimConfig,
    ensemble_average,
    evolve_deterministic,
    reduce_generator,
    sde_factory,
    evolve_weak_steps,
)
from .numerics import DomainError, NumericGuardError
from .qstate import I2, X, Z, embed, ket, partial_trace, pauli, projector, DensityMatrix


@dataclass
class ScenarioReport:
    scenario: str
    config: dict
    columns: tuple[str, ...]
    rows: np.ndarray
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.rows.size and self.rows.shape[1] != len(self.columns):
            raise ValueError("row width does not match the header")
        if not np.all(np.isfinite(self.rows)):
            raise NumericGuardError(f"non-finite values in {self.scenario} output")

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def write_csv(self, fh, extra: dict | None = None, header: bool = True) -> None:
        """Comma-separated values, 17 significant digits, LF line endings."""
        extra = extra or {}
        if header:
            fh.write(",".join(list(extra) + list(self.columns)) + "\n")
        prefix = "".join(f"{_fmt(v)}," for v in extra.values())
        for row in self.rows:
            fh.write(prefix + ",".join(_fmt(v) for v in row) + "\n")

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _fmt(v) -> str:
    return "%.17g" % float(v)


def _alpha_rows(t, alpha, oracle):
    return np.column_stack([t, alpha, oracle, np.abs(alpha - oracle)])


def markov_1q(cfg: SimConfig, opts: dict) -> ScenarioReport:
    gens = [bitflip_lindblad(1, [cfg.lam]),
            JumpCorrection(strong_recovery(trivial_code()), cfg.kappa)]
    rec = evolve_deterministic(gens, projector(ket("0")), cfg)
    alpha = rec.states[:, 0, 0].real
    oracle = analytic.markov_1q_alpha(rec.times, cfg.kappa, cfg.lam)
    summary = {
        "max_abs_error": float(np.abs(alpha - oracle).max()),
        "equilibrium_numeric": float(alpha[-1]),
        "equilibrium_oracle": analytic.markov_1q_equilibrium(cfg.kappa, cfg.lam),
        "max_step_correction": rec.max_correction,
    }
    return ScenarioReport("markov-1q", {}, ("t", "alpha", "alpha_oracle", "abs_error"),
                          _alpha_rows(rec.times, alpha, oracle), summary)


def flip_weights(states, n_qubits: int = 3) -> np.ndarray:
    """Populations grouped by Hamming weight, for runs started in ``|0...0>``."""
    pops = np.real(np.einsum("tii->ti", states))
    weight = np.array([bin(i).count("1") for i in range(2**n_qubits)])
    return np.stack([pops[:, weight == w].sum(axis=1) for w in range(n_qubits + 1)], axis=1)


def drift_diagnostic(times, states, code=None) -> np.ndarray:
    """Columns ``(drift, 1 - alpha, sqrt(alpha (1 - alpha)))`` per stored time.

    ``drift`` is the trace norm of the change of the logical reduced state
    divided by the time step (zero at the first sample).
    """
    code = code or bitflip_code()
    rho_a = np.array([logical_reduced_state(s, code) for s in states])
    alpha = np.array([code_space_fidelity(s, code) for s in states])
    drift = np.zeros(len(times))
    for k in range(1, len(times)):
        diff = rho_a[k] - rho_a[k - 1]
        diff = 0.5 * (diff + diff.conj().T)
        drift[k] = np.abs(np.linalg.eigvalsh(diff)).sum() / (times[k] - times[k - 1])
    one_minus = np.clip(1 - alpha, 0.0, None)
    return np.column_stack([drift, one_minus, np.sqrt(np.clip(alpha, 0, None) * one_minus)])


def markov_3q(cfg: SimConfig, opts: dict) -> ScenarioReport:
    code = bitflip_code()
    gens = [bitflip_lindblad(3, [cfg.lam] * 3), JumpCorrection(strong_recovery(code), cfg.kappa)]
    rec = evolve_deterministic(gens, projector(code.logical_zero), cfg)
    w = flip_weights(rec.states)
    outside = w[:, 1] + w[:, 2]
    oracle = analytic.markov_3q_outside_weight(rec.times, cfg.kappa, cfg.lam)
    ode = analytic.markov_3q_solution(rec.times, cfg.kappa, cfg.lam)
    diag = drift_diagnostic(rec.times, rec.states, code)
    rows = np.column_stack([rec.times, w, outside, oracle, np.abs(outside - oracle),
                            np.abs(w - ode).max(axis=1), diag])
    cols = ("t", "a", "b", "c", "d", "outside_weight", "outside_oracle", "abs_error",
            "ode_abs_error", "drift", "one_minus_alpha", "sqrt_alpha_one_minus_alpha")
    summary = {
        "max_abs_error": float(np.abs(outside - oracle).max()),
        "max_ode_error": float(np.abs(w - ode).max()),
        "outside_weight_final": float(outside[-1]),
        "outside_weight_limit": 3 * cfg.lam / (cfg.kappa + 4 * cfg.lam) if cfg.kappa + cfg.lam else 0.0,
        "mean_drift": float(diag[1:, 0].mean()) if len(diag) > 1 else 0.0,
    }
    return ScenarioReport("markov-3q", {}, cols, rows, summary)


def count_local_maxima(y, t=None, t_max=None, prominence: float = 1e-7) -> int:
    """Interior local maxima (revivals) with at least the given prominence."""
    y = np.asarray(y)
    if t is not None and t_max is not None:
        y = y[np.asarray(t) <= t_max]
    return len(find_peaks(y, prominence=prominence)[0])


def nonmarkov_1q(cfg: SimConfig, opts: dict) -> ScenarioReport:
    gens = [joint_bath_generator(cfg.gamma, 1),
            JumpCorrection(strong_recovery(trivial_code()), cfg.kappa).extend(2)]
    rho0 = np.kron(projector(ket("0")), I2 / 2)
    rec = evolve_deterministic(gens, rho0, cfg)
    alpha = np.array([code_space_fidelity(s, trivial_code()) for s in rec.states])
    oracle = analytic.nonmarkov_1q_alpha(rec.times, cfg.kappa, cfg.gamma)
    n_max = count_local_maxima(alpha)
    n_early = count_local_maxima(alpha, cfg.gamma * rec.times, 5.0)
    summary = {
        "max_abs_error": float(np.abs(alpha - oracle).max()),
        "equilibrium_numeric": float(alpha[-1]),
        "equilibrium_oracle": analytic.nonmarkov_1q_equilibrium(cfg.kappa, cfg.gamma),
        "local_maxima": n_max,
        "local_maxima_before_gt5": n_early,
        "partial_recurrences": int(n_max >= 2),
    }
    return ScenarioReport("nonmarkov-1q", {}, ("t", "alpha", "alpha_oracle", "abs_error"),
                          _alpha_rows(rec.times, alpha, oracle), summary)


def nonmarkov_3q_generators(kappa: float, gamma: float):
    code = bitflip_code()
    return [joint_bath_generator(gamma, 3), JumpCorrection(strong_recovery(code), kappa).extend(8)]


def nonmarkov_3q_reduced(kappa: float, gamma: float):
    """Generator restricted to the 64-element pair basis, started from ``|000>``."""
    gens = nonmarkov_3q_generators(kappa, gamma)
    _, ops, _ = bath_pair_basis(projector(ket("000")), 3)

    def apply(rho):
        return sum(g.apply(rho) for g in gens)

    return reduce_generator(apply, ops)


def fit_damped_cosine(t, y, omega0: float, decay0: float):
    """Least-squares fit of ``A + B exp(-Gamma t) cos(omega t + phi)``.

    Returns ``(omega, Gamma)`` and the full parameter vector.
    """
    def model(t, a, b, g, w, ph):
        return a + b * np.exp(-g * t) * np.cos(w * t + ph)

    p, _ = curve_fit(model, t, y, p0=[0.5, 0.5, decay0, omega0, 0.0], maxfev=20000)
    return abs(p[3]), p[2], p


def short_time_dip(red, gamma: float, window: float = 2.0, n: int = 400) -> float:
    """Largest ``1 - C_000,000`` for ``gamma t <= window`` on a fine grid."""
    times = np.linspace(0.0, window / gamma, n + 1)
    c0 = np.zeros(red.matrix.shape[0], dtype=complex)
    c0[0] = 1.0
    return float(1 - red.propagate(c0, times)[:, 0].real.min())


def nonmarkov_3q(cfg: SimConfig, opts: dict) -> ScenarioReport:
    """Codeword fidelity ``C_000,000`` by exact propagation on the pair basis.

    The output grid has spacing ``dt``; the propagation itself is exact, so
    ``dt`` is not subject to the integrator stability guard. The fitted
    frequency and decay are reported when ``fit_start`` < ``t_max``.
    """
    red = nonmarkov_3q_reduced(cfg.kappa, cfg.gamma)
    h = cfg.dt if cfg.dt is not None else cfg.t_max / 1000
    n = int(round(cfg.t_max / h))
    times = np.arange(n + 1) * h
    c0 = np.zeros(red.matrix.shape[0], dtype=complex)
    c0[0] = 1.0
    coeffs = red.propagate(c0, times)
    c000 = coeffs[:, 0].real
    o2 = analytic.nonmarkov_3q_fidelity_approx(times, cfg.kappa, cfg.gamma, 2)
    o4 = analytic.nonmarkov_3q_fidelity_approx(times, cfg.kappa, cfg.gamma, 4)
    # system states for the drift diagnostic
    sys_ops = np.array([partial_trace(DensityMatrix(b), [0, 1, 2]).data for b in red.basis])
    stride = max(1, int(opts.get("drift_stride", 1)))
    sys_states = np.tensordot(coeffs[::stride], sys_ops, axes=1)
    diag = np.zeros((len(times), 3))
    diag[::stride] = drift_diagnostic(times[::stride], sys_states)
    rows = np.column_stack([times, c000, o2, o4, np.abs(c000 - o4), diag])
    cols = ("t", "c000", "approx_order2", "approx_order4", "abs_error_order4",
            "drift", "one_minus_alpha", "sqrt_alpha_one_minus_alpha")
    w_pred, g_pred = analytic.nonmarkov_3q_rates(cfg.kappa, cfg.gamma)
    summary = {
        "closure_residual": red.closure_residual,
        "max_imag_c000": float(np.abs(coeffs[:, 0].imag).max()),
        "omega_predicted": w_pred,
        "decay_predicted": g_pred,
        "short_time_dip": short_time_dip(red, cfg.gamma),
    }
    fit_start = float(opts.get("fit_start", 5.0 / cfg.gamma))
    mask = times >= fit_start
    if mask.sum() > 10 and cfg.gamma * cfg.t_max > 2 * np.pi / w_pred * cfg.gamma:
        w, g, _ = fit_damped_cosine(times[mask], c000[mask], w_pred, g_pred)
        summary.update(omega_fitted=float(w), decay_fitted=float(g))
    return ScenarioReport("nonmarkov-3q", {}, cols, rows, summary)


def adl_setup(cfg: SimConfig, opts: dict):
    """Drift, measured operators, feedback law and initial state of the SDE scenario."""
    n = int(opts.get("n_qubits", 1))
    strength = float(opts.get("feedback_strength", 0.0))
    if n == 1:
        code = trivial_code()
        measured = [Z]
        hams = [X]
        est0 = None
    elif n == 3:
        code = bitflip_code()
        measured = [pauli("IZZ"), pauli("ZZI")]
        hams = [embed(X, j, 3) for j in range(3)]
        # logical factor of the estimate starts maximally mixed
        est0 = code.code_projector / 2
    else:
        raise DomainError(f"n_qubits must be 1 or 3, got {n}")
    noise = bitflip_lindblad(n, [cfg.lam] * n)
    drift = adl_drift(noise, measured, cfg.kappa)
    law = FeedbackLaw(tuple(hams), strength, code.code_projector, est0) if strength > 0 else None
    # optional rotation exp(-i theta X/2) of qubit 0 gives the start state coherence
    theta = float(opts.get("initial_rotation", 0.0))
    rot = embed(np.cos(theta / 2) * I2 - 1j * np.sin(theta / 2) * X, 0, n)
    psi = rot @ code.logical_zero
    return code, drift, measured, law, projector(psi)


def adl_sme(cfg: SimConfig, opts: dict) -> ScenarioReport:
    code, drift, measured, law, rho0 = adl_setup(cfg, opts)
    obs = [code.code_projector, measured[0]]
    factory = sde_factory(drift, measured, law, rho0, cfg, obs)
    res = ensemble_average(cfg, factory, chunk_size=int(opts.get("chunk_size", 256)),
                           n_workers=int(opts.get("n_workers", 1)))
    times = np.array(sorted(set(range(0, cfg.n_steps + 1, cfg.store_stride)) | {cfg.n_steps})) * cfg.step
    det = evolve_deterministic([drift], rho0, cfg)
    f_det = det.expect(code.code_projector)
    stderr = np.nan_to_num(res.stderr, nan=0.0)
    rows = np.column_stack([times, res.mean[:, 0], stderr[:, 0], f_det,
                            res.mean[:, 1], stderr[:, 1]])
    cols = ("t", "fidelity_mean", "fidelity_stderr", "fidelity_no_feedback_oracle",
            "stabilizer_mean", "stabilizer_stderr")
    summary = {
        "n_traj": res.n,
        "fidelity_final": float(res.mean[-1, 0]),
        "no_feedback_final": float(f_det[-1]),
    }
    if law is None:
        # the initial row has no spread beyond roundoff
        z = np.abs(res.mean[1:, 0] - f_det[1:]) / np.where(stderr[1:, 0] > 0, stderr[1:, 0], np.inf)
        summary["max_z_score_vs_oracle"] = float(z.max(initial=0.0))
    return ScenarioReport("adl-sme", {}, cols, rows, summary)


def jump_weakmeas(cfg: SimConfig, opts: dict) -> ScenarioReport:
    """Repeated weak measurement plus feedback against the jump master equation."""
    h = cfg.step
    eps = np.sqrt(cfg.kappa * h)
    noise = bitflip_channel(cfg.lam, h) if cfg.lam > 0 else None
    rec = evolve_weak_steps(weak_jump_map(eps), projector(ket("0")), cfg, noise=noise)
    alpha = rec.states[:, 0, 0].real
    oracle = analytic.markov_1q_alpha(rec.times, cfg.kappa, cfg.lam)
    summary = {"eps": float(eps), "max_abs_error": float(np.abs(alpha - oracle).max()),
               "equilibrium_numeric": float(alpha[-1]),
               "equilibrium_oracle": analytic.markov_1q_equilibrium(cfg.kappa, cfg.lam)}
    return ScenarioReport("jump-weakmeas", {}, ("t", "alpha", "alpha_oracle", "abs_error"),
                          _alpha_rows(rec.times, alpha, oracle), summary)


def zeno_probe(cfg: SimConfig, opts: dict) -> ScenarioReport:
    """Short-time fidelity loss of a qubit coupled to a bath qubit."""
    gens = [joint_bath_generator(cfg.gamma, 1)]
    if cfg.kappa > 0:
        gens.append(JumpCorrection(strong_recovery(trivial_code()), cfg.kappa).extend(2))
    rho_b = I2 / 2
    rec = evolve_deterministic(gens, np.kron(projector(ket("0")), rho_b), cfg)
    loss = 1 - np.array([code_space_fidelity(s, trivial_code()) for s in rec.states])
    c = analytic.zeno_coefficient(gens[0].hamiltonian, rho_b, ket("0"))
    fitted = float(np.polyfit(rec.times, loss, 2)[0])
    rows = np.column_stack([rec.times, loss, c * rec.times**2])
    summary = {"zeno_coefficient": c, "fitted_quadratic": fitted,
               "relative_error": abs(fitted - c) / c if c else abs(fitted)}
    if cfg.kappa > 0:
        summary["zeno_equilibrium"] = analytic.zeno_equilibrium(cfg.kappa, c)
        summary["exact_equilibrium"] = analytic.nonmarkov_1q_equilibrium(cfg.kappa, cfg.gamma)
    return ScenarioReport("zeno-probe", {}, ("t", "one_minus_alpha", "zeno_quadratic"), rows, summary)


SCENARIOS = {
    "markov-1q": markov_1q,
    "markov-3q": markov_3q,
    "nonmarkov-1q": nonmarkov_1q,
    "nonmarkov-3q": nonmarkov_3q,
    "adl-sme": adl_sme,
    "jump-weakmeas": jump_weakmeas,
    "zeno-probe": zeno_probe,
}

# options beyond SimConfig fields, per scenario
EXTRA_OPTIONS = {
    "nonmarkov-3q": {"fit_start", "drift_stride"},
    "adl-sme": {"n_qubits", "feedback_strength", "initial_rotation", "chunk_size", "n_workers"},
}



def run(name: str, cfg: SimConfig, opts: dict | None = None) -> ScenarioReport:
    if name not in SCENARIOS:
        raise KeyError(name)
    opts = dict(opts or {})
    unknown = set(opts) - EXTRA_OPTIONS.get(name, set())
    if unknown:
        raise DomainError(f"unknown option(s) for {name}: {', '.join(sorted(unknown))}")
    start = time.perf_counter()
    report = SCENARIOS[name](cfg, opts)
    report.wall_time = time.perf_counter() - start
    report.config = {**_config_echo(cfg), **opts}
    return report


def _config_echo(cfg: SimConfig) -> dict:
    return {"kappa": cfg.kappa, "lambda": cfg.lam, "gamma": cfg.gamma, "dt": cfg.step,
            "t_max": cfg.t_max, "n_traj": cfg.n_traj, "seed": cfg.seed,
            "store_stride": cfg.store_stride, "filter_time_constant": cfg.tau_filter}
