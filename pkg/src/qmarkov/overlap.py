"""Exact inner products of output states via transfer-map iteration.

``<psi^n_l | psi^n_r> = Tr(rho T^n[1])`` with ``T(X) = <psi| U_l^dagger (1 (x) X) U_r |psi>``,
at cost polynomial in k rather than exponential in n.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linalg
from .chain import ChainModel, NotMixingError, schrodinger_map, transfer_map, unvec, vec
from .fisher import quantum_fisher


@dataclass(frozen=True)
class OverlapResult:
    n: int
    value: complex

    @property
    def modulus(self) -> float:
        return abs(self.value)

    @property
    def phase(self) -> float:
        return float(np.angle(self.value))


def initial_density(model: ChainModel, state=None) -> np.ndarray:
    """Pure vector, density matrix, or (default) the stationary state."""
    if state is None:
        if not model.is_mixing:
            raise NotMixingError("defaulting to the stationary initial state")
        return model.stationary_state()
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        if state.shape != (model.k,):
            raise linalg.DimensionError(f"system state has shape {state.shape}")
        return linalg.projector(state)
    if state.shape != (model.k, model.k):
        raise linalg.DimensionError(f"system state has shape {state.shape}")
    return state


def overlap(model: ChainModel, state, n: int, theta_left: float, theta_right: float) -> complex:
    if n < 0:
        raise ValueError("n must be non-negative")
    rho = initial_density(model, state)
    if n == 0:
        return complex(np.trace(rho))
    t = transfer_map(model, theta_left, theta_right)
    x = unvec(np.linalg.matrix_power(t.matrix, n) @ vec(np.eye(model.k)), model.k)
    return complex(np.trace(rho @ x))


def overlap_result(model: ChainModel, state, n: int, theta_left: float, theta_right: float) -> OverlapResult:
    return OverlapResult(n, overlap(model, state, n, theta_left, theta_right))


def brute_force_overlap(model: ChainModel, phi, n: int, theta_left: float, theta_right: float) -> complex:
    """Overlap from explicitly assembled d^n * k state vectors (small n only)."""
    return complex(np.vdot(output_state(model, phi, n, theta_left), output_state(model, phi, n, theta_right)))


def output_state(model: ChainModel, phi, n: int, theta: float) -> np.ndarray:
    """Joint state of n output atoms and the system, atoms ordered by arrival."""
    if n > 10:
        raise ValueError("explicit output states are limited to n <= 10")
    d, k = model.d, model.k
    u = model.unitary(theta).reshape(d, k, d, k)
    v = np.asarray(phi, dtype=complex).reshape(1, k)
    for _ in range(n):
        # (old atoms, system) -> (old atoms, new atom, system)
        v = np.einsum("asbt,b,ot->oas", u, model.psi, v).reshape(-1, k)
    return v.reshape(-1)


def _f(model, rho, n, theta0, u, v):
    return overlap(model, rho, n, theta0 + u, theta0 + v)


def _qfi_stencil(model, rho, n, theta0, h):
    f = lambda u, v: _f(model, rho, n, theta0, u, v)
    duv = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h)
    dv = (f(0.0, h) - f(0.0, -h)) / (2 * h)
    du = (f(h, 0.0) - f(-h, 0.0)) / (2 * h)
    return 4.0 * (duv - du * dv).real


def qfi_finite_n(model: ChainModel, state, n: int, theta0: float | None = None, h: float = 1e-3) -> float:
    """Quantum Fisher information of the n-atom output (plus system) state.

    Central differences of ``f(u, v) = <psi^n_{theta0+u}|psi^n_{theta0+v}>``
    at steps h and h/2, combined by one Richardson step.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    theta0 = model.theta0 if theta0 is None else theta0
    rho = initial_density(model.with_theta(theta0), state)
    coarse = _qfi_stencil(model, rho, n, theta0, h)
    fine = _qfi_stencil(model, rho, n, theta0, h / 2)
    return (4 * fine - coarse) / 3


@dataclass(frozen=True, eq=False)
class QfiCurve:
    n: np.ndarray
    F_n: np.ndarray

    @property
    def per_atom(self) -> np.ndarray:
        return self.F_n / self.n


def qfi_curve(model: ChainModel, state, n_list: Sequence[int], h: float = 1e-3) -> QfiCurve:
    ns = np.asarray(list(n_list), dtype=int)
    return QfiCurve(ns, np.array([qfi_finite_n(model, state, int(n), h=h) for n in ns]))


# -- local asymptotic normality ---------------------------------------------


@dataclass(frozen=True, eq=False)
class LanTable:
    u: float
    v: float
    n: np.ndarray
    overlap: np.ndarray
    target: np.ndarray
    F: float
    a: float

    @property
    def modulus_error(self) -> np.ndarray:
        return np.abs(np.abs(self.overlap) - np.abs(self.target)) / np.abs(self.target)

    @property
    def phase_error(self) -> np.ndarray:
        return np.abs(np.angle(self.overlap / self.target))


def lan_check(model: ChainModel, state, u: float, v: float, n_list: Sequence[int]) -> LanTable:
    """Overlaps at ``theta0 + u/sqrt(n)`` vs ``theta0 + v/sqrt(n)`` against the
    coherent-state limit ``exp(i a (u^2 - v^2)) exp(-F (u - v)^2 / 8)``."""
    if not model.is_mixing:
        raise NotMixingError("the local asymptotic normality check")
    m = model.centered()
    q = quantum_fisher(m)
    rho = initial_density(m, state)
    ns = np.asarray(list(n_list), dtype=int)
    ov = np.array(
        [overlap(m, rho, int(n), m.theta0 + u / np.sqrt(n), m.theta0 + v / np.sqrt(n)) for n in ns]
    )
    target = np.exp(1j * q.phase_coefficient * (u * u - v * v)) * np.exp(-q.F * (u - v) ** 2 / 8)
    return LanTable(u, v, ns, ov, np.full(len(ns), target), q.F, q.phase_coefficient)


DEFAULT_PHASE_DESIGN = ((1.0, 0.0), (0.0, 1.0), (1.0, -0.5), (2.0, 1.0), (0.5, 1.5), (-1.0, 0.5))


@dataclass(frozen=True)
class PhaseFit:
    a_fit: float
    a_formula: float
    n: int

    @property
    def discrepancy(self) -> float:
        return abs(self.a_fit - self.a_formula)


def fit_phase_coefficient(model: ChainModel, state, n: int, design=DEFAULT_PHASE_DESIGN) -> PhaseFit:
    """Least-squares ``a`` from ``arg <u|v> = a (u^2 - v^2)`` over a (u, v)
    design, next to the value from the quantum Fisher computation."""
    m = model.centered()
    rho = initial_density(m, state)
    s = np.sqrt(n)
    x, y = [], []
    for u, v in design:
        ov = overlap(m, rho, n, m.theta0 + u / s, m.theta0 + v / s)
        x.append(u * u - v * v)
        y.append(np.angle(ov))
    x, y = np.array(x), np.array(y)
    a_fit = float(x @ y / (x @ x))
    return PhaseFit(a_fit, quantum_fisher(m).phase_coefficient, n)


@dataclass(frozen=True, eq=False)
class IidTable:
    n: np.ndarray
    overlap: np.ndarray
    target: float
    F: float

    @property
    def error(self) -> np.ndarray:
        return np.abs(self.overlap - self.target)


def iid_sanity_overlap(j, psi, u: float, v: float, n_list: Sequence[int]) -> IidTable:
    """Overlaps of ``n`` independent copies of ``exp(-i theta J) psi`` at
    ``theta = u/sqrt(n)`` and ``v/sqrt(n)``, as a chain with a one-dimensional
    system."""
    j = linalg.as_matrix(j)
    psi = np.asarray(psi, dtype=complex)
    mean = np.vdot(psi, j @ psi)
    if abs(mean) > 1e-10:
        raise ValueError(f"generator is not centered in the input state: <J> = {mean:.3e}")
    chain = ChainModel(len(psi), 1, j, psi, 0.0)
    one = np.ones((1, 1), dtype=complex)
    f = 4 * np.vdot(psi, j @ j @ psi).real
    ns = np.asarray(list(n_list), dtype=int)
    ov = np.array([overlap(chain, one, int(n), u / np.sqrt(n), v / np.sqrt(n)) for n in ns])
    return IidTable(ns, ov, float(np.exp(-(u - v) ** 2 * f / 8)), f)


# -- non-ergodic scaling theta = u/n ------------------------------------------


def drive_operator(model: ChainModel) -> np.ndarray:
    """``K = <psi| H |psi>`` on the system."""
    return linalg.hermitize(linalg.conditional_expectation(model.hamiltonian, model.psi))


@dataclass(frozen=True, eq=False)
class NonergodicOverlapTable:
    n: np.ndarray
    overlap: np.ndarray
    target: complex

    @property
    def error(self) -> np.ndarray:
        return np.abs(self.overlap - self.target)


def nonergodic_scaled_overlap(model: ChainModel, phi, u: float, v: float, n_list: Sequence[int]) -> NonergodicOverlapTable:
    """Overlaps at ``theta = u/n`` and ``v/n`` against ``<phi| exp(i (u - v) K) |phi>``."""
    rho = initial_density(model, phi)
    kk = drive_operator(model)
    target = complex(np.trace(rho @ linalg.expm_hermitian(kk, -(u - v))))
    ns = np.asarray(list(n_list), dtype=int)
    ov = np.array([overlap(model, rho, int(n), u / n, v / n) for n in ns])
    return NonergodicOverlapTable(ns, ov, target)


@dataclass(frozen=True, eq=False)
class ReducedDynamicsTable:
    n: np.ndarray
    error: np.ndarray
    purity: np.ndarray
    target: np.ndarray


def nonergodic_reduced_dynamics(model: ChainModel, rho0, u: float, n_list: Sequence[int]) -> ReducedDynamicsTable:
    """System state after n steps at ``theta = u/n`` against the unitary
    rotation ``exp(-i u K) rho0 exp(i u K)``."""
    rho0 = initial_density(model, rho0)
    kk = drive_operator(model)
    w = linalg.expm_hermitian(kk, u)
    target = w @ rho0 @ linalg.dagger(w)
    ns = np.asarray(list(n_list), dtype=int)
    errs, pur = [], []
    for n in ns:
        t = schrodinger_map(model, u / n)
        rho = unvec(np.linalg.matrix_power(t.matrix, int(n)) @ vec(rho0), model.k)
        errs.append(linalg.trace_norm(rho - target))
        pur.append(np.trace(rho @ rho).real)
    return ReducedDynamicsTable(ns, np.array(errs), np.array(pur), target)
