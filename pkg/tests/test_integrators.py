import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from ctqec.analytic import markov_1q_alpha, nonmarkov_3q_fidelity_approx
from ctqec.codes import bitflip_code, trivial_code
from ctqec.dynamics import (
    FeedbackLaw,
    JumpCorrection,
    LindbladGenerator,
    adl_drift,
    bitflip_channel,
    bitflip_lindblad,
    strong_recovery,
    weak_jump_map,
    weak_z_measurement,
)
from ctqec.integrators import (
    SimConfig,
    StabilityWarning,
    ensemble_average,
    evolve_deterministic,
    evolve_sde,
    evolve_weak_steps,
    hermitian_basis,
    measurement_current,
    reduce_generator,
    rk4_step_matrix,
    sde_batch,
    sde_factory,
    trajectory_rng,
    wiener_increments,
)
from ctqec.numerics import DomainError, NumericGuardError, StabilityError
from ctqec.qstate import I2, X, Z, ket, projector, random_density
from ctqec.scenarios import nonmarkov_3q_generators, nonmarkov_3q_reduced

P0 = projector(ket("0"))
P1 = projector(ket("1"))
quiet = pytest.mark.filterwarnings("ignore::ctqec.integrators.StabilityWarning")


def markov_1q_gens(kappa, lam):
    return [bitflip_lindblad(1, [lam]), JumpCorrection(strong_recovery(trivial_code()), kappa)]


def test_config_validation_and_defaults():
    cfg = SimConfig(kappa=8, lam=1)
    assert cfg.step == pytest.approx(0.01 / 8)
    assert cfg.tau_filter == pytest.approx(1 / 8)
    for bad in ({"kappa": -1}, {"dt": 0}, {"n_traj": 0}, {"store_stride": 0}):
        with pytest.raises(DomainError):
            SimConfig(**bad)


def test_stability_guard():
    with pytest.warns(StabilityWarning):
        SimConfig(kappa=1, dt=0.1).check_stability()
    with pytest.raises(StabilityError):
        SimConfig(kappa=1, dt=0.6).check_stability()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert SimConfig(kappa=1, dt=0.01).check_stability() == pytest.approx(0.01)
    with pytest.raises(StabilityError):
        evolve_deterministic(markov_1q_gens(10, 1), P1, SimConfig(kappa=10, lam=1, dt=0.1))


def test_hermitian_basis_orthonormal():
    for d in (2, 4):
        b = hermitian_basis(d)
        np.testing.assert_allclose(b.conj().T @ b, np.eye(d * d), atol=1e-14)
        for col in b.T:
            m = col.reshape(d, d)
            np.testing.assert_allclose(m, m.conj().T, atol=1e-15)


def test_rk4_step_matrix_matches_series():
    s = bitflip_lindblad(1, [1.0]).superoperator()
    h = 0.1
    hs = h * s
    want = np.eye(4) + hs + hs @ hs / 2 + hs @ hs @ hs / 6 + hs @ hs @ hs @ hs / 24
    np.testing.assert_allclose(rk4_step_matrix(s, h), want, atol=1e-15)


def test_zero_generator_leaves_state_unchanged():
    rho = random_density(2, np.random.default_rng(0))
    rec = evolve_deterministic([LindbladGenerator.zero(2)], rho, SimConfig(dt=0.1, t_max=1))
    for s in rec.states:
        np.testing.assert_allclose(s, rho, atol=1e-15)


def test_stride_and_final_time():
    rec = evolve_deterministic(markov_1q_gens(1, 1), P0, SimConfig(kappa=1, lam=1, t_max=1, store_stride=30))
    assert rec.times[-1] == pytest.approx(1.0)
    assert rec.times[1] == pytest.approx(30 * 0.01)
    assert len(rec) == len(rec.states)


@quiet
def test_rk4_is_fourth_order():
    kappa, lam, t = 1.0, 0.5, 2.0
    errs = []
    for dt in (0.1, 0.05, 0.025):
        rec = evolve_deterministic(markov_1q_gens(kappa, lam), P0, SimConfig(kappa=kappa, lam=lam, dt=dt, t_max=t))
        errs.append(np.abs(rec.expect(P0) - markov_1q_alpha(rec.times, kappa, lam)).max())
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(16, rel=0.15)


def test_correction_stays_small():
    rec = evolve_deterministic(markov_1q_gens(8, 1), P1, SimConfig(kappa=8, lam=1, t_max=5))
    assert rec.max_correction < 1e-10
    for s in rec.states:
        assert np.linalg.eigvalsh(s)[0] > -1e-12


def test_sparse_path_matches_exact_exponential():
    # 3 qubits plus 3 bath qubits: d^2 = 4096 uses the sparse stages
    gens = nonmarkov_3q_generators(10.0, 1.0)
    cfg = SimConfig(kappa=10, gamma=1, dt=0.002, t_max=1.0, store_stride=100)
    rho0 = np.kron(projector(ket("000")), np.eye(8) / 8)
    rec = evolve_deterministic(gens, rho0, cfg)
    red = nonmarkov_3q_reduced(10.0, 1.0)
    assert red.closure_residual < 1e-12
    c0 = np.zeros(64, dtype=complex)
    c0[0] = 1.0
    # the first pair-basis element is the initial state
    np.testing.assert_allclose(red.operator(c0), rho0, atol=1e-15)
    cs = red.propagate(c0, rec.times)
    for c, s in zip(cs, rec.states):
        np.testing.assert_allclose(red.operator(c), s, atol=1e-9)


def test_reduced_generator_on_small_example():
    gen = bitflip_lindblad(1, [0.7])
    basis = [I2 / np.sqrt(2), Z / np.sqrt(2)]
    red = reduce_generator(gen.apply, basis)
    assert red.closure_residual < 1e-15
    np.testing.assert_allclose(red.matrix, np.diag([0, -1.4]), atol=1e-15)
    with pytest.raises(DomainError):
        reduce_generator(gen.apply, [I2, I2 + Z])
    with pytest.raises(DomainError):
        red.propagate([1, 0], [0.0, 0.1, 0.3])


def test_nonmarkov_3q_approximation_at_high_ratio():
    kappa, gamma = 200.0, 1.0
    red = nonmarkov_3q_reduced(kappa, gamma)
    t = np.linspace(0, 2000, 201)
    c0 = np.zeros(64, dtype=complex)
    c0[0] = 1
    c = red.propagate(c0, t)[:, 0].real
    approx = nonmarkov_3q_fidelity_approx(t, kappa, gamma, order=4)
    assert np.abs(c - approx).max() < 0.01


def test_sde_zero_diffusion_matches_deterministic():
    kappa, lam = 2.0, 0.3
    lower = np.outer(ket("0"), ket("1"))
    drift = bitflip_lindblad(1, [lam]) + LindbladGenerator(np.zeros((2, 2)), ((kappa, lower),))
    cfg = SimConfig(kappa=kappa, lam=lam, dt=0.001, t_max=0.5, store_stride=50)
    rho0 = np.diag([0.3, 0.7]).astype(complex)
    rec = evolve_sde(drift, [], None, rho0, cfg)
    det = evolve_deterministic([drift], rho0, cfg)
    # Euler vs RK4 at the same step: first-order agreement
    assert np.abs(rec.expect(P0) - det.expect(P0)).max() < 5e-3


def test_sde_uses_given_increments_and_rng_streams():
    kappa = 1.0
    drift = adl_drift(bitflip_lindblad(1, [0.2]), [Z], kappa)
    cfg = SimConfig(kappa=kappa, lam=0.2, dt=0.01, t_max=1, seed=5)
    rho0 = np.diag([0.8, 0.2]).astype(complex)
    a = evolve_sde(drift, [Z], None, rho0, cfg)
    b = evolve_sde(drift, [Z], None, rho0, cfg, dW=a.wiener_increments)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.wiener_increments,
                                  wiener_increments(5, [0], cfg.n_steps, 1, cfg.step)[0])
    r1 = trajectory_rng(5, 3).standard_normal(4)
    r2 = trajectory_rng(5, 3).standard_normal(4)
    np.testing.assert_array_equal(r1, r2)
    assert not np.array_equal(r1, trajectory_rng(5, 4).standard_normal(4))
    assert not np.array_equal(r1, trajectory_rng(6, 3).standard_normal(4))


def test_sde_increment_shape_checked():
    drift = adl_drift(bitflip_lindblad(1, [0.2]), [Z], 1.0)
    cfg = SimConfig(kappa=1, lam=0.2, dt=0.01, t_max=1)
    with pytest.raises(DomainError):
        sde_batch(drift, [Z], None, P0, cfg, np.zeros((1, cfg.n_steps, 2)))
    with pytest.raises(DomainError):
        sde_batch(drift, [Z], None, P0, cfg, np.zeros((1, cfg.n_steps + 1, 1)))


def test_sde_eigenvalue_guard():
    # a coherent start at large kappa dt drives Euler-Maruyama below the floor
    kappa = 4.0
    drift = adl_drift(bitflip_lindblad(1, [0.1]), [Z], kappa)
    cfg = SimConfig(kappa=kappa, lam=0.1, dt=0.01, t_max=5, store_stride=1)
    plus = projector((ket("0") + ket("1")) / np.sqrt(2))
    with pytest.raises(NumericGuardError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StabilityWarning)
            for seed in range(20):
                evolve_sde(drift, [Z], None, plus, cfg, rng=np.random.default_rng(seed))


def test_measurement_record_mean_for_eigenstate():
    kappa = 4.0
    drift = adl_drift(LindbladGenerator.zero(2), [Z], kappa)
    cfg = SimConfig(kappa=kappa, dt=0.01, t_max=100, store_stride=100, seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StabilityWarning)
        rec = evolve_sde(drift, [Z], None, P0, cfg)
    assert rec.x_path[-1, 0] / 100 == pytest.approx(kappa, rel=0.05)
    late = rec.current_estimate[len(rec.times) // 2:]
    assert late.mean() == pytest.approx(kappa, rel=0.1)
    np.testing.assert_allclose(rec.states[-1], P0, atol=1e-12)


def test_eigenstate_current_ensemble():
    # time-averaged current over [5/kappa, 10/kappa] from |0><0|
    kappa, n_traj = 4.0, 200
    drift = adl_drift(LindbladGenerator.zero(2), [Z], kappa)
    cfg = SimConfig(kappa=kappa, dt=0.0025, t_max=10 / kappa)
    inc = wiener_increments(17, np.arange(n_traj), cfg.n_steps, 1, cfg.step)
    res = sde_batch(drift, [Z], None, P0, cfg, inc)
    window = (res.times >= 5 / kappa) & (res.times <= 10 / kappa)
    means = [measurement_current(x[:, 0], res.times, cfg.tau_filter)[window].mean() for x in res.x]
    se = np.std(means, ddof=1) / np.sqrt(n_traj)
    assert abs(np.mean(means) - kappa) < 3 * se


def test_measurement_current_filter():
    t = np.linspace(0, 10, 1001)
    x = 3.0 * t
    np.testing.assert_array_equal(measurement_current(np.full_like(t, 2.0), t, tau=0.5), 0)
    cur = measurement_current(x, t, tau=0.5)
    assert cur[0] == 0
    assert cur[-1] == pytest.approx(3.0, rel=1e-6)
    k = np.searchsorted(t, 0.5)
    assert cur[k] == pytest.approx(3.0 * (1 - np.exp(-1)), rel=1e-2)
    with pytest.raises(DomainError):
        measurement_current(x, t, tau=0)


def make_adl_factory(cfg, feedback=None):
    drift = adl_drift(bitflip_lindblad(1, [cfg.lam]), [Z], cfg.kappa)
    law = FeedbackLaw((X,), feedback, P0) if feedback else None
    rho0 = np.diag([0.8, 0.2]).astype(complex)
    return sde_factory(drift, [Z], law, rho0, cfg, [P0]), drift, rho0


def test_ensemble_independent_of_workers_and_chunking():
    cfg = SimConfig(kappa=1, lam=0.5, dt=0.01, t_max=0.5, n_traj=23, seed=3, store_stride=10)
    f, _, _ = make_adl_factory(cfg)
    a = ensemble_average(cfg, f, chunk_size=7, n_workers=1)
    b = ensemble_average(cfg, f, chunk_size=7, n_workers=3)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.stderr, b.stderr)
    c = ensemble_average(cfg, f, chunk_size=23)
    np.testing.assert_allclose(a.mean, c.mean, atol=1e-14)
    np.testing.assert_allclose(a.stderr, c.stderr, atol=1e-14)
    other = SimConfig(kappa=1, lam=0.5, dt=0.01, t_max=0.5, n_traj=23, seed=4, store_stride=10)
    d = ensemble_average(other, make_adl_factory(other)[0], chunk_size=7)
    assert not np.allclose(a.mean[1:], d.mean[1:])


def test_ensemble_stderr_edge_cases():
    cfg = SimConfig(kappa=1, lam=0.5, dt=0.01, t_max=0.1, n_traj=1)
    f, _, _ = make_adl_factory(cfg)
    res = ensemble_average(cfg, f)
    assert res.n == 1 and np.all(np.isnan(res.stderr))

    def constant(idx):
        return np.ones((len(idx), 3, 1))

    res = ensemble_average(SimConfig(n_traj=10), constant, chunk_size=3)
    np.testing.assert_array_equal(res.stderr, 0)
    np.testing.assert_array_equal(res.mean, 1)


def test_unconditioned_ensemble_matches_master_equation():
    cfg = SimConfig(kappa=1, lam=0.5, dt=0.01, t_max=1, n_traj=400, seed=7, store_stride=20)
    f, drift, rho0 = make_adl_factory(cfg)
    res = ensemble_average(cfg, f, chunk_size=100)
    det = evolve_deterministic([drift], rho0, cfg).expect(P0)
    z = np.abs(res.mean[1:, 0] - det[1:]) / res.stderr[1:, 0]
    assert z.max() < 4


def test_weak_z_sampler_stops_near_eigenstate():
    eps = 0.1
    cfg = SimConfig(dt=1.0, t_max=100000, seed=2)
    rec = evolve_weak_steps(weak_z_measurement(eps), I2 / 2, cfg, x_stop=5.0)
    assert rec.stopped_at is not None
    p = rec.final[0, 0].real if rec.x_path[-1] > 0 else rec.final[1, 1].real
    assert p > 0.9999
    assert abs(rec.x_path[-1]) == pytest.approx(5.0, abs=eps)


def test_weak_z_sampler_drifts_towards_initial_eigenstate():
    eps = 0.1
    cfg = SimConfig(dt=1.0, t_max=400)
    finals = [evolve_weak_steps(weak_z_measurement(eps), P0, cfg, rng=np.random.default_rng(s)).x_path[-1]
              for s in range(20)]
    # the walk has drift tanh(eps) * eps per step
    assert np.mean(finals) == pytest.approx(400 * eps * np.tanh(eps), rel=0.1)


@quiet
def test_weak_jump_repetition_converges_at_first_order():
    kappa, lam, t = 8.0, 1.0, 1.0
    errs = []
    for dt in (0.0025, 0.00125, 0.000625):
        cfg = SimConfig(kappa=kappa, lam=lam, dt=dt, t_max=t)
        step = weak_jump_map(np.sqrt(kappa * dt))
        rec = evolve_weak_steps(step, P0, cfg, noise=bitflip_channel(lam, dt))
        errs.append(np.abs(rec.expect(P0) - markov_1q_alpha(rec.times, kappa, lam)).max())
    assert errs[0] / errs[1] == pytest.approx(2, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(2, rel=0.15)


def test_weak_kraus_steps_are_cptp_on_three_qubits():
    code = bitflip_code()
    from ctqec.dynamics import weak_quantum_jump_map
    sup = weak_quantum_jump_map(code, 0.1)
    rho = random_density(8, np.random.default_rng(1))
    out = (sup @ rho.ravel()).reshape(8, 8)
    assert abs(np.trace(out) - 1) < 1e-12
    assert np.linalg.eigvalsh(out)[0] > -1e-12
    exact = expm(JumpCorrection(strong_recovery(code), 1.0).superoperator() * 0.01)
    assert np.abs(exact @ rho.ravel() - sup @ rho.ravel()).max() < 1e-3
