import numpy as np
import pytest

from qmarkov import linalg
from qmarkov.chain import NotMixingError, SuperOperator, heisenberg_map, vec
from qmarkov.fisher import clt_parameters, quantum_fisher
from qmarkov.perturbation import (
    CenteringError,
    MapExpansion,
    center,
    characteristic_expansion,
    lambda_second_order,
    leading_eigen_expansion,
    overlap_expansion,
    restricted_inverse_apply,
    spot_check_contraction,
    verify_iterated_limit,
)

from conftest import random_model


def _centered_random(rho, rng, k=2, hermitian=False):
    y = linalg.random_hermitian(k, rng) if hermitian else rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    return center(rho, y)


def test_restricted_inverse_zero(bench):
    x = restricted_inverse_apply(heisenberg_map(bench), bench.stationary_state(), np.zeros((2, 2)))
    assert np.max(np.abs(x)) < 1e-15


def test_restricted_inverse_rank_one_map(rng):
    rho = linalg.random_density(3, rng)
    t0 = SuperOperator(3, np.outer(vec(np.eye(3)), vec(rho.T)))  # X -> Tr(rho X) 1
    y = _centered_random(rho, rng, k=3)
    np.testing.assert_allclose(restricted_inverse_apply(t0, rho, y), y, atol=1e-12)


def test_restricted_inverse_residual_xy(bench, rng):
    t0, rho = heisenberg_map(bench), bench.stationary_state()
    for _ in range(20):
        y = _centered_random(rho, rng)
        x = restricted_inverse_apply(t0, rho, y)
        assert np.max(np.abs(x - t0(x) - y)) < 1e-12
        assert abs(np.trace(rho @ x)) < 1e-10


def test_restricted_inverse_linear_and_hermitian(bench, rng):
    t0, rho = heisenberg_map(bench), bench.stationary_state()
    y1, y2 = _centered_random(rho, rng), _centered_random(rho, rng)
    a, b = 0.7 - 0.2j, -1.3
    lhs = restricted_inverse_apply(t0, rho, a * y1 + b * y2)
    rhs = a * restricted_inverse_apply(t0, rho, y1) + b * restricted_inverse_apply(t0, rho, y2)
    assert np.max(np.abs(lhs - rhs)) < 1e-11
    yh = _centered_random(rho, rng, hermitian=True)
    assert linalg.is_hermitian(restricted_inverse_apply(t0, rho, yh), 1e-12)


def test_restricted_inverse_errors(bench, balanced_zero):
    rho = bench.stationary_state()
    with pytest.raises(CenteringError):
        restricted_inverse_apply(heisenberg_map(bench), rho, np.eye(2))
    with pytest.raises(NotMixingError):
        restricted_inverse_apply(heisenberg_map(balanced_zero), rho, np.zeros((2, 2)))


def test_lambda_trivial_cases(bench):
    rho = bench.stationary_state()
    t0 = heisenberg_map(bench)
    zero = SuperOperator.zero(2)
    assert lambda_second_order(MapExpansion(t0, zero, zero), rho) == 0
    _, ex = overlap_expansion(bench.centered(), 0.8, 0.8)
    assert abs(lambda_second_order(ex, rho)) < 1e-12


def test_lambda_requires_centered_first_order(bench):
    # uncentered H gives T1(1) = i (u - v) K with nonzero stationary mean
    _, ex = overlap_expansion(bench.with_theta(bench.theta0), 1.0, 0.0)
    rho = bench.stationary_state()
    k_mean = np.trace(rho @ ex.T1(np.eye(2)))
    if abs(k_mean) > 1e-8:
        with pytest.raises(CenteringError):
            lambda_second_order(ex, rho)


def test_overlap_lambda_matches_fisher(bench):
    m = bench.centered()
    q = quantum_fisher(m)
    for u, v in [(1.0, 0.0), (0.5, -1.5), (2.0, 1.0)]:
        _, ex = overlap_expansion(m, u, v)
        lam = lambda_second_order(ex, m.stationary_state())
        assert lam.real == pytest.approx(-q.F * (u - v) ** 2 / 8, rel=1e-10)
        assert lam.imag == pytest.approx(q.phase_coefficient * (u * u - v * v), abs=1e-10)


def test_overlap_lambda_phase_random_model(rng):
    m = random_model(rng, k=2).centered()
    q = quantum_fisher(m)
    u, v = 1.3, -0.4
    _, ex = overlap_expansion(m, u, v)
    lam = lambda_second_order(ex, m.stationary_state())
    assert abs(q.phase_coefficient) > 1e-3
    assert lam == pytest.approx(-q.F * (u - v) ** 2 / 8 + 1j * q.phase_coefficient * (u * u - v * v), rel=1e-10)


def test_lambda_invariant_under_null_t2_shift(bench, rng):
    m = bench.centered()
    rho = m.stationary_state()
    _, ex = overlap_expansion(m, 1.0, -0.5)
    # Z(X) = Tr(X) * Y with Tr(rho Y) = 0 has Tr(rho Z(1)) = 0
    y = _centered_random(rho, rng)
    z = SuperOperator(2, np.outer(vec(y), vec(np.eye(2))))
    shifted = MapExpansion(ex.T0, ex.T1, ex.T2 + z)
    assert abs(lambda_second_order(shifted, rho) - lambda_second_order(ex, rho)) < 1e-12


def test_constant_family_limit(bench):
    t0 = heisenberg_map(bench)
    zero = SuperOperator.zero(2)
    tab = verify_iterated_limit(lambda n: t0, MapExpansion(t0, zero, zero), bench.stationary_state(), [10, 100, 1000])
    assert tab.lam == 0
    assert np.all(tab.error < 1e-12)
    fit = leading_eigen_expansion(lambda n: t0, [100, 1000, 10000])
    assert abs(fit.lambda2) < 1e-10
    np.testing.assert_allclose(fit.eigenvalues, 1.0, atol=1e-12)


def test_characteristic_family_matches_clt(bench):
    a = clt_parameters(bench, linalg.SIGMA_X).A_centered
    par = clt_parameters(bench, a)
    rho = bench.stationary_state()
    for u, t in [(0.0, 0.3), (1.0, 0.5)]:
        fam, ex = characteristic_expansion(bench, a, u, t)
        lam = lambda_second_order(ex, rho)
        assert lam == pytest.approx(1j * par.mu * u * t - par.sigma2 * t * t / 2, rel=1e-9, abs=1e-12)
        tab = verify_iterated_limit(fam, ex, rho, [1000, 4000, 16000])
        assert tab.error[-1] < 0.02
        assert tab.error[-1] < tab.error[0]


def test_overlap_family_decay(bench):
    m = bench.centered()
    fam, ex = overlap_expansion(m, 1.0, 0.0)
    ns = [100, 300, 1000, 3000, 10000]
    tab = verify_iterated_limit(fam, ex, m.stationary_state(), ns)
    assert tab.error[-1] < 5 * tab.fit_constant * ns[-1] ** -0.5
    assert tab.decay_exponent == pytest.approx(-0.5, abs=0.05)
    assert np.all(tab.consistency * np.array(ns) ** 1.5 < 1.0)


def test_inconsistent_family_rejected(bench):
    m = bench.centered()
    fam, ex = overlap_expansion(m, 1.0, 0.0)
    wrong = MapExpansion(ex.T0, 2 * ex.T1, ex.T2)
    with pytest.raises(ValueError):
        verify_iterated_limit(fam, wrong, m.stationary_state(), [100, 1000, 10000])


def test_leading_eigen_fit_matches_second_order(bench):
    m = bench.centered()
    fam, ex = overlap_expansion(m, 1.0, -1.0)
    lam = lambda_second_order(ex, m.stationary_state())
    fit = leading_eigen_expansion(fam, [1000, 3000, 10**4, 3 * 10**4, 10**5, 10**6])
    assert abs(fit.lambda2 - lam) < 0.02 * abs(lam)
    assert abs(fit.lambda1) < 1e-3


def test_families_are_contractions(bench):
    m = bench.centered()
    fam, _ = overlap_expansion(m, 1.0, -0.5)
    assert spot_check_contraction(fam, [10, 100, 1000])
