"""Second-order perturbation of mixing contraction families.

For ``T(n) = T0 + T1/sqrt(n) + T2/n + O(n^-3/2)`` with ``T0`` unital and
mixing, ``T(n)^n[1] -> exp(lam) 1`` where ``lam`` is the second-order
coefficient of the leading eigenvalue of ``T(n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import linalg
from .chain import ChainModel, NotMixingError, SuperOperator, conditional_map, heisenberg_map, transfer_map, vec, unvec
from .constants import CENTERING_TOL, SPECTRAL_TOL

Family = Callable[[int], SuperOperator]


class CenteringError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MapExpansion:
    T0: SuperOperator
    T1: SuperOperator
    T2: SuperOperator

    def truncated(self, n: int) -> SuperOperator:
        s = np.sqrt(n)
        return SuperOperator(self.T0.k, self.T0.matrix + self.T1.matrix / s + self.T2.matrix / n)


def pairing(rho_st: np.ndarray, a, b) -> complex:
    """``<a, b>_st = Tr(rho_st a^dagger b)``."""
    return complex(np.trace(rho_st @ linalg.dagger(np.asarray(a)) @ np.asarray(b)))


def center(rho_st: np.ndarray, y) -> np.ndarray:
    """Project ``y`` onto the complement of the identity under the
    stationary pairing."""
    y = np.asarray(y, dtype=complex)
    return y - np.trace(rho_st @ y) * np.eye(y.shape[0])


def _is_mixing_map(t0: SuperOperator, tol: float = 1e-9) -> bool:
    w = np.linalg.eigvals(t0.matrix)
    near = np.abs(w - 1.0) < tol
    return near.sum() == 1 and bool(np.all(np.abs(w[~near]) < 1 - tol))


def restricted_inverse_apply(t0: SuperOperator, rho_st: np.ndarray, y) -> np.ndarray:
    """Solve ``(Id - T0) x = y`` on the complement of the identity.

    ``y`` must already be centered, ``Tr(rho_st y) = 0``; the returned ``x``
    satisfies ``Tr(rho_st x) = 0``.
    """
    k = t0.k
    y = np.asarray(y, dtype=complex)
    mean = np.trace(rho_st @ y)
    if abs(mean) > CENTERING_TOL:
        raise CenteringError(f"argument is not centered: Tr(rho_st y) = {mean:.3e}")
    if not _is_mixing_map(t0):
        raise NotMixingError("the restricted inverse of Id - T0")
    y = center(rho_st, y)
    # bordered system: (Id - T0) x = y together with Tr(rho_st x) = 0
    m = np.eye(k * k) - t0.matrix
    border = vec(rho_st.T)[None, :]
    a = np.vstack([m, border])
    rhs = np.concatenate([vec(y), [0.0]])
    x = np.linalg.lstsq(a, rhs, rcond=None)[0]
    return center(rho_st, unvec(x, k))


def lambda_second_order(expansion: MapExpansion, rho_st: np.ndarray) -> complex:
    k = expansion.T0.k
    one = np.eye(k, dtype=complex)
    t1_one = expansion.T1(one)
    if abs(np.trace(rho_st @ t1_one)) > CENTERING_TOL:
        raise CenteringError("first-order term does not vanish on the identity")
    x1 = restricted_inverse_apply(expansion.T0, rho_st, t1_one)
    return complex(np.trace(rho_st @ (expansion.T2(one) + expansion.T1(x1))))


def overlap_expansion(model: ChainModel, u: float, v: float) -> tuple[Family, MapExpansion]:
    """Family ``X -> <psi| U_{theta0+u/sqrt n}^dagger (1 (x) X) U_{theta0+v/sqrt n} |psi>``
    and its expansion around ``theta0``."""
    h = model.hamiltonian
    eye_a = np.eye(model.d)
    h2 = h @ h

    def lift(x):
        return linalg.kron(eye_a, x)

    t0 = heisenberg_map(model)
    t1 = conditional_map(model, lambda x: 1j * (u * h @ lift(x) - v * lift(x) @ h))
    t2 = conditional_map(
        model,
        lambda x: -0.5 * (u * u * h2 @ lift(x) + v * v * lift(x) @ h2) + u * v * h @ lift(x) @ h,
    )

    def family(n: int) -> SuperOperator:
        s = np.sqrt(n)
        return transfer_map(model, model.theta0 + u / s, model.theta0 + v / s)

    return family, MapExpansion(t0, t1, t2)


def characteristic_expansion(model: ChainModel, a, u: float, t: float) -> tuple[Family, MapExpansion]:
    """Family whose n-th power generates the characteristic function of
    ``sqrt(n) * mean(A)`` at coupling ``theta0 + u/sqrt(n)``; ``a`` must be
    centered."""
    h = model.hamiltonian
    eye_a = np.eye(model.d)
    a = linalg.as_matrix(a)
    a2 = a @ a

    def lift(x):
        return linalg.kron(eye_a, x)

    def comm(p, q):
        return p @ q - q @ p

    t0 = heisenberg_map(model)
    t1 = conditional_map(model, lambda x: 1j * (u * comm(h, lift(x)) + t * linalg.kron(a, x)))
    t2 = conditional_map(
        model,
        lambda x: -0.5 * u * u * comm(h, comm(h, lift(x)))
        - 0.5 * t * t * linalg.kron(a2, x)
        - u * t * comm(h, linalg.kron(a, x)),
    )
    u0 = model.unitary()
    u0d = linalg.dagger(u0)

    def family(n: int) -> SuperOperator:
        s = np.sqrt(n)
        w = linalg.expm_hermitian(h, -u / s)  # exp(+i u H / sqrt n)
        wd = linalg.dagger(w)
        ea = linalg.expm_hermitian(a, -t / s)
        return SuperOperator.from_function(
            lambda x: linalg.conditional_expectation(
                u0d @ w @ linalg.kron(ea, x) @ wd @ u0, model.psi
            ),
            model.k,
        )

    return family, MapExpansion(t0, t1, t2)


def _loglog_fit(ns, errs, fixed_slope: float | None = None):
    """Least-squares fit of ``log err = log C + p log n``; returns (p, C, R^2)."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(errs, dtype=float))
    if fixed_slope is None:
        p, logc = np.polyfit(x, y, 1)
    else:
        p = fixed_slope
        logc = float(np.mean(y - p * x))
    resid = y - (logc + p * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(p), float(np.exp(logc)), r2


@dataclass(frozen=True, eq=False)
class IteratedLimitTable:
    n: np.ndarray
    values: list[np.ndarray]
    error: np.ndarray
    lam: complex
    consistency: np.ndarray
    decay_exponent: float
    fit_constant: float
    r2_free: float
    r2_half: float


def check_consistency(family: Family, expansion: MapExpansion, n_list: Sequence[int]) -> np.ndarray:
    """``||T(n) - T0 - T1/sqrt(n) - T2/n||`` for each n; O(n^-3/2) when the
    expansion matches the family."""
    return np.array(
        [np.linalg.norm(family(n).matrix - expansion.truncated(n).matrix, 2) for n in n_list]
    )


def verify_iterated_limit(
    family: Family,
    expansion: MapExpansion,
    rho_st: np.ndarray,
    n_list: Sequence[int],
    check: bool = True,
) -> IteratedLimitTable:
    n_list = np.asarray(sorted(n_list), dtype=int)
    k = expansion.T0.k
    lam = lambda_second_order(expansion, rho_st)
    cons = check_consistency(family, expansion, n_list)
    if check and len(n_list) >= 2:
        bound = cons * n_list**1.5
        # the scaled remainder must stay bounded; allow slack for the smallest n
        if bound[-1] > 10 * max(bound[0], 1e-12) and cons[-1] > 1e-12:
            raise ValueError("family is inconsistent with the supplied expansion")
    target = np.exp(lam) * np.eye(k)
    values, errs = [], []
    for n in n_list:
        tn = family(int(n))
        val = unvec(np.linalg.matrix_power(tn.matrix, int(n)) @ vec(np.eye(k)), k)
        values.append(val)
        errs.append(np.linalg.norm(val - target, 2))
    errs = np.array(errs)
    half = n_list >= np.median(n_list)
    good = half & (errs > 0)
    if good.sum() >= 2:
        p, _, r2_free = _loglog_fit(n_list[good], errs[good])
    else:
        p, r2_free = float("nan"), float("nan")
    pos = errs > 0
    if pos.sum() >= 2:
        _, c_half, r2_half = _loglog_fit(n_list[pos], errs[pos], fixed_slope=-0.5)
    else:
        c_half, r2_half = 0.0, float("nan")
    return IteratedLimitTable(n_list, values, errs, lam, cons, p, c_half, r2_free, r2_half)


def leading_eigenvalue(t: SuperOperator) -> complex:
    w = np.linalg.eigvals(t.matrix)
    order = np.argsort(-np.abs(w))
    if len(w) > 1 and abs(w[order[0]]) - abs(w[order[1]]) < 1e-6:
        raise ValueError("leading eigenvalue is not separated")
    return complex(w[order[0]])


@dataclass(frozen=True, eq=False)
class EigenExpansionFit:
    n: np.ndarray
    eigenvalues: np.ndarray
    lambda0: complex
    lambda1: complex
    lambda2: complex


def leading_eigen_expansion(family: Family, n_list: Sequence[int]) -> EigenExpansionFit:
    """Leading eigenvalue of each ``T(n)`` and a least-squares fit of
    ``lam(n) = l0 + l1/sqrt(n) + l2/n + l3/n^1.5 + l4/n^2``."""
    ns = np.asarray(sorted(n_list), dtype=float)
    lam = np.array([leading_eigenvalue(family(int(n))) for n in ns])
    basis = np.column_stack([ns**0, ns**-0.5, ns**-1.0, ns**-1.5, ns**-2.0])
    ncoef = min(basis.shape[1], len(ns))
    coef = np.linalg.lstsq(basis[:, :ncoef], lam, rcond=None)[0]
    coef = np.concatenate([coef, np.zeros(5 - ncoef)])
    return EigenExpansionFit(ns.astype(int), lam, complex(coef[0]), complex(coef[1]), complex(coef[2]))


def spot_check_contraction(family: Family, n_list: Sequence[int], tol: float = SPECTRAL_TOL) -> bool:
    return all(family(int(n)).norm() <= 1.0 + tol for n in n_list)
