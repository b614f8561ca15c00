import numpy as np
import pytest
from scipy import stats

from qmarkov import linalg
from qmarkov.chain import atom_expectation, stationary_expectation, xy_model
from qmarkov.fisher import classical_fisher, clt_parameters
from qmarkov.trajectory import (
    MeanInverter,
    NonMonotoneError,
    SpectralMeasurement,
    TrajectoryConfig,
    clt_experiment,
    clt_statistic,
    estimate_theta,
    measure_step,
    mse_experiment,
    run_ensemble,
    run_trajectory,
)

from conftest import random_model


def test_decoupled_measurement():
    a, b = 0.6, 0.8
    m = xy_model(a, b, 0.0, 0.0)
    rho = np.array([[0.7, 0.2j], [-0.2j, 0.3]])
    meas = SpectralMeasurement.build(m, 0.0, linalg.SIGMA_Z)
    p = dict(zip(meas.values, meas.probabilities(rho)))
    assert p[1.0] == pytest.approx(a * a, abs=1e-12)
    for draw in (0.1, 0.9):
        out, post = measure_step(rho, m, 0.0, linalg.SIGMA_Z, draw)
        assert out in (-1.0, 1.0)
        np.testing.assert_allclose(post, rho, atol=1e-12)


def test_one_step_law_from_ground_state(bench):
    # U maps |1>|0> to cos|1>|0> + sin|0>|1> and leaves |0>|0> fixed
    a, b, theta = 0.6, 0.8, bench.theta0
    p_plus = a * a + b * b * np.sin(theta) ** 2
    meas = SpectralMeasurement.build(bench, theta, linalg.SIGMA_Z)
    p = dict(zip(meas.values, meas.probabilities(np.diag([1.0, 0.0]))))
    assert p[1.0] == pytest.approx(p_plus, abs=1e-12)
    assert p[-1.0] == pytest.approx(1 - p_plus, abs=1e-12)


def test_probabilities_and_posteriors_normalized(rng):
    m = random_model(rng, d=3, k=2)
    a = linalg.random_hermitian(3, rng)
    meas = SpectralMeasurement.build(m, m.theta0, a)
    for _ in range(50):
        rho = linalg.random_density(2, rng)
        assert meas.probabilities(rho).sum() == pytest.approx(1.0, abs=1e-12)
        out, post = measure_step(rho, m, m.theta0, a, rng.random())
        assert np.trace(post) == pytest.approx(1.0, abs=1e-12)
        assert np.min(np.abs(np.linalg.eigvalsh(a) - out)) < 1e-12


def test_degenerate_eigenvalues_merged(rng):
    m = random_model(rng, d=3, k=2)
    a = np.diag([1.0, 1.0, -2.0])
    meas = SpectralMeasurement.build(m, m.theta0, a)
    assert sorted(meas.values) == [-2.0, 1.0]
    rho = linalg.random_density(2, rng)
    assert meas.probabilities(rho).sum() == pytest.approx(1.0, abs=1e-12)


def test_run_trajectory_deterministic(bench):
    cfg = TrajectoryConfig(bench, linalg.SIGMA_X, 300, n_trajectories=5, master_seed=99)
    r1, r2 = run_trajectory(cfg, 3), run_trajectory(cfg, 3)
    np.testing.assert_array_equal(r1.outcomes, r2.outcomes)
    ens = run_ensemble(TrajectoryConfig(bench, linalg.SIGMA_X, 300, 5, 99, keep_outcomes=True))
    np.testing.assert_array_equal(ens.record(3).outcomes, r1.outcomes)
    other = run_trajectory(TrajectoryConfig(bench, linalg.SIGMA_X, 300, 5, 100), 3)
    assert not np.array_equal(other.outcomes, r1.outcomes)
    assert abs(r1.time_average) <= 1.0


def test_spectral_shift(bench):
    cfg = TrajectoryConfig(bench, linalg.SIGMA_Z, 200, master_seed=1)
    shifted = TrajectoryConfig(bench, linalg.SIGMA_Z + 0.5 * np.eye(2), 200, master_seed=1)
    r, s = run_trajectory(cfg), run_trajectory(shifted)
    np.testing.assert_array_equal(s.outcomes, r.outcomes + 0.5)


def test_time_average_converges(bench):
    a = linalg.SIGMA_Z
    n = 20000
    rec = run_trajectory(TrajectoryConfig(bench, a, n, master_seed=7))
    sigma = np.sqrt(clt_parameters(bench, a).sigma2)
    target = stationary_expectation(bench, linalg.kron(a, np.eye(2))).real
    assert abs(rec.time_average - target) < 3 * sigma / np.sqrt(n)


def test_ergodic_state_average(bench):
    cfg = TrajectoryConfig(bench, linalg.SIGMA_X, 100000, master_seed=11, initial_state=np.array([0.0, 1.0]))
    ens = run_ensemble(cfg)
    assert linalg.trace_norm(ens.mean_states[0] - bench.stationary_state()) < 0.02


def test_stationary_one_step_chi_square(bench):
    a = linalg.SIGMA_X
    cfg = TrajectoryConfig(bench, a, 1, n_trajectories=20000, master_seed=5, keep_outcomes=True)
    ens = run_ensemble(cfg)
    meas = SpectralMeasurement.build(bench, bench.theta0, a)
    p = meas.probabilities(bench.stationary_state())
    counts = np.bincount(ens.outcome_indices[:, 0], minlength=len(p))
    assert stats.chisquare(counts, p * counts.sum()).pvalue > 0.01


def test_estimate_fixed_point(bench):
    a = linalg.SIGMA_X
    bracket = (bench.theta0 - 0.3, bench.theta0 + 0.3)
    est = estimate_theta(bench, a, atom_expectation(bench, a), bracket)
    assert est.theta == pytest.approx(bench.theta0, abs=1e-10)
    assert not est.clamped


def test_estimate_first_order(bench):
    a = linalg.SIGMA_X
    inv = MeanInverter(bench, a, (bench.theta0 - 0.3, bench.theta0 + 0.3))
    mu = clt_parameters(bench, a).mu
    ref = atom_expectation(bench, a)
    for delta in (1e-3, -1e-3):
        est = inv(ref + delta)
        assert est.theta == pytest.approx(bench.theta0 + delta / mu, abs=1e-5)


def test_estimate_out_of_range_clamped(bench):
    bracket = (bench.theta0 - 0.1, bench.theta0 + 0.1)
    est = estimate_theta(bench, linalg.SIGMA_X, 5.0, bracket)
    assert est.clamped and est.theta in bracket


def test_non_monotone_bracket_rejected(bench):
    # <sigma_x>_theta has a minimum at theta = pi
    with pytest.raises(NonMonotoneError):
        MeanInverter(bench, linalg.SIGMA_X, (2.6, 3.7))


def test_clt_null_small(bench):
    rep = clt_experiment(TrajectoryConfig(bench, linalg.SIGMA_X, 400, 300, master_seed=3))
    assert rep.mean_ok
    assert abs(rep.mean) < 4 * rep.mean_se


def test_clt_scale_equivariance(bench):
    base = TrajectoryConfig(bench, linalg.SIGMA_X, 200, 50, master_seed=8, u=1.0)
    double = TrajectoryConfig(bench, 2 * linalg.SIGMA_X, 200, 50, master_seed=8, u=1.0)
    z1 = clt_statistic(run_ensemble(base)) / np.sqrt(clt_parameters(bench, linalg.SIGMA_X).sigma2)
    z2 = clt_statistic(run_ensemble(double)) / np.sqrt(clt_parameters(bench, 2 * linalg.SIGMA_X).sigma2)
    np.testing.assert_allclose(z1, z2, rtol=1e-9, atol=1e-12)


def test_mse_target_is_inverse_fisher(bench):
    cfg = TrajectoryConfig(bench, linalg.SIGMA_X, 200, 20, master_seed=2)
    rep = mse_experiment(cfg, (bench.theta0 - 0.4, bench.theta0 + 0.4))
    assert rep.target == 1.0 / classical_fisher(bench, linalg.SIGMA_X)
