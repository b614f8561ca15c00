import numpy as np
import pytest

from qmarkov import linalg
from qmarkov.chain import xy_model
from qmarkov.fisher import quantum_fisher
from qmarkov.overlap import (
    brute_force_overlap,
    drive_operator,
    fit_phase_coefficient,
    iid_sanity_overlap,
    lan_check,
    nonergodic_reduced_dynamics,
    nonergodic_scaled_overlap,
    output_state,
    overlap,
    qfi_curve,
    qfi_finite_n,
)

from conftest import random_model

ZERO = np.array([1.0, 0.0])


def brute_force_qfi(model, phi, n, h=1e-5):
    p = output_state(model, phi, n, model.theta0)
    dp = (output_state(model, phi, n, model.theta0 + h) - output_state(model, phi, n, model.theta0 - h)) / (2 * h)
    return 4 * (np.vdot(dp, dp) - abs(np.vdot(p, dp)) ** 2).real


def test_diagonal_overlap_is_one(bench, rng):
    for n in (0, 1, 7, 100, 1000):
        assert overlap(bench, None, n, 0.3, 0.3) == pytest.approx(1.0, abs=1e-12)
    assert overlap(bench, linalg.random_state(2, rng), 0, 0.1, 0.9) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_overlap_matches_brute_force(bench, rng, n):
    phi = linalg.random_state(2, rng)
    for tl, tr in [(0.2, 0.9), (bench.theta0, bench.theta0 + 0.1)]:
        assert overlap(bench, phi, n, tl, tr) == pytest.approx(brute_force_overlap(bench, phi, n, tl, tr), abs=1e-12)


def test_overlap_brute_force_random_model(rng):
    m = random_model(rng, d=2, k=3)
    phi = linalg.random_state(3, rng)
    for n in (1, 4):
        assert overlap(m, phi, n, 0.1, 0.5) == pytest.approx(brute_force_overlap(m, phi, n, 0.1, 0.5), abs=1e-12)


def test_overlap_cauchy_schwarz(rng):
    m = random_model(rng)
    for _ in range(20):
        tl, tr = rng.uniform(-2, 2, 2)
        n = int(rng.integers(1, 200))
        assert abs(overlap(m, linalg.random_density(3, rng), n, tl, tr)) <= 1 + 1e-10


@pytest.mark.parametrize("n", [1, 3, 10])
def test_quadratic_qfi_at_zero_coupling(balanced_zero, n):
    assert qfi_finite_n(balanced_zero, ZERO, n) == pytest.approx(n * (n + 1), rel=1e-6)


def test_quadratic_qfi_brute_force_oracle(balanced_zero):
    for n in (2, 5):
        assert brute_force_qfi(balanced_zero, ZERO, n) == pytest.approx(n * (n + 1), rel=1e-6)


def test_single_step_qfi_is_input_variance(rng):
    m = random_model(rng, k=2)
    phi = linalg.random_state(2, rng)
    state = np.kron(m.psi, phi)
    h = m.hamiltonian
    var = np.vdot(state, h @ h @ state).real - np.vdot(state, h @ state).real ** 2
    assert qfi_finite_n(m, phi, 1) == pytest.approx(4 * var, rel=1e-7)


def test_finite_n_qfi_brute_force(bench):
    for n in (3, 6):
        assert qfi_finite_n(bench, ZERO, n) == pytest.approx(brute_force_qfi(bench, ZERO, n), rel=1e-6)


def test_qfi_per_atom_approaches_limit(bench):
    f = quantum_fisher(bench).F
    curve = qfi_curve(bench, None, [10, 50, 200, 1000])
    per_atom = curve.per_atom
    assert np.all(np.diff(per_atom) > 0)
    assert np.all(per_atom < f)
    assert abs(per_atom[-1] - f) / f < 0.005


def test_qfi_phase_invariance():
    vals = [qfi_finite_n(xy_model(0.6, 0.8, f, np.arccos(0.5)), ZERO, 20) for f in (0.0, 0.7, 2.0, 4.4)]
    assert np.ptp(vals) < 1e-8 * max(vals)


def test_zero_coupling_per_atom_grows_linearly(balanced_zero):
    curve = qfi_curve(balanced_zero, ZERO, range(1, 9))
    np.testing.assert_allclose(curve.per_atom, np.arange(2, 10), rtol=1e-6)


def test_lan_trivial_and_conjugate(bench):
    same = lan_check(bench, None, 0.7, 0.7, [50, 500])
    np.testing.assert_allclose(same.overlap, 1.0, atol=1e-12)
    np.testing.assert_allclose(same.target, 1.0)
    uv = lan_check(bench, None, 1.0, -0.5, [300]).overlap
    vu = lan_check(bench, None, -0.5, 1.0, [300]).overlap
    np.testing.assert_allclose(uv, np.conj(vu), atol=1e-12)


def test_lan_modulus_converges(bench):
    tab = lan_check(bench, None, 1.0, 0.0, [200, 2000, 20000])
    err = tab.modulus_error
    assert err[1] < 0.01
    # O(n^-1/2): a tenfold increase in n shrinks the error by about sqrt(10)
    assert err[0] / err[2] == pytest.approx(10.0, rel=0.05)


def test_lan_phase_random_model(rng):
    # a non-XY chain where the phase constant is nonzero
    m = random_model(np.random.default_rng(5), k=2)
    fit = fit_phase_coefficient(m, None, 200000)
    assert abs(fit.a_formula) > 0.05
    assert fit.a_fit == pytest.approx(fit.a_formula, rel=0.01)


def test_iid_sanity():
    psi = np.array([1.0, 1.0]) / np.sqrt(2)
    tab = iid_sanity_overlap(linalg.SIGMA_Z, psi, 1.5, -0.5, [10, 100, 1000, 10000])
    assert tab.F == pytest.approx(4.0)
    assert tab.target == pytest.approx(np.exp(-2.0))
    # closed-form scalar oracle: cos(delta/sqrt(n))^n
    np.testing.assert_allclose(tab.overlap, np.cos(2.0 / np.sqrt(tab.n)) ** tab.n, rtol=1e-10)
    ratio = tab.error[:-1] / tab.error[1:]
    np.testing.assert_allclose(ratio, 10.0, rtol=0.05)
    same = iid_sanity_overlap(linalg.SIGMA_Z, psi, 0.4, 0.4, [5, 50])
    np.testing.assert_allclose(same.overlap, 1.0)


def test_iid_rejects_uncentered():
    with pytest.raises(ValueError):
        iid_sanity_overlap(linalg.SIGMA_Z, np.array([1.0, 0.0]), 1.0, 0.0, [10])


def test_drive_operator_balanced(balanced_zero):
    kk = drive_operator(balanced_zero)
    np.testing.assert_allclose(kk, 0.5j * (linalg.SIGMA_MINUS - linalg.SIGMA_PLUS), atol=1e-15)


def test_nonergodic_overlap(balanced_zero):
    same = nonergodic_scaled_overlap(balanced_zero, ZERO, 1.2, 1.2, [10, 100])
    np.testing.assert_allclose(same.overlap, 1.0, atol=1e-12)
    assert same.target == pytest.approx(1.0)
    for u in np.linspace(-2, 2, 5):
        for v in np.linspace(-2, 2, 5):
            tab = nonergodic_scaled_overlap(balanced_zero, ZERO, u, v, [1000])
            assert tab.target == pytest.approx(np.cos((u - v) / 2), abs=1e-14)
            assert tab.error[0] < 1e-2


def test_nonergodic_overlap_decays_like_inverse_n(balanced_zero):
    tab = nonergodic_scaled_overlap(balanced_zero, ZERO, 1.5, -0.5, [100, 1000, 10000])
    assert tab.error[0] / tab.error[1] == pytest.approx(10, rel=0.1)


def test_nonergodic_reduced_dynamics(balanced_zero):
    still = nonergodic_reduced_dynamics(balanced_zero, ZERO, 0.0, [1, 10, 100])
    assert np.all(still.error < 1e-12)
    tab = nonergodic_reduced_dynamics(balanced_zero, ZERO, 1.5, [10, 100, 1000])
    assert tab.error[-1] < 1e-2
    assert np.all(np.diff(tab.error) < 0)
    assert np.all(np.diff(tab.purity) > 0)
    assert tab.purity[-1] > 0.99
