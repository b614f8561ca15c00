"""Classical Fisher information of repeated single-atom measurements and the
asymptotic quantum Fisher information per atom."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import linalg
from .chain import ChainModel, NotMixingError, heisenberg_map, stationary_expectation
from .perturbation import restricted_inverse_apply

log = logging.getLogger(__name__)

REPORTED_F = 5.03  # externally reported XY value at c=0.5, b=0.8, f=0; not reproduced here


@dataclass(frozen=True, eq=False)
class CltParameters:
    mu: float
    sigma2: float
    B: np.ndarray
    A_centered: np.ndarray


@dataclass(frozen=True, eq=False)
class QfiResult:
    F: float
    K: np.ndarray
    correction: float
    phase_coefficient: float
    h_mean: float


def _require_mixing(model: ChainModel, what: str) -> np.ndarray:
    if not model.is_mixing:
        raise NotMixingError(what)
    return model.stationary_state()


def center_atom_observable(model: ChainModel, a) -> np.ndarray:
    a = linalg.as_matrix(a)
    mean = stationary_expectation(model, linalg.kron(a, np.eye(model.k))).real
    return a - mean * np.eye(model.d)


def correction_operator(model: ChainModel, a) -> np.ndarray:
    """``B = (Id - T0)^{-1} <psi| U^dagger (A (x) 1) U |psi>`` for centered A."""
    rho = _require_mixing(model, "the correction operator")
    a_c = center_atom_observable(model, a)
    u = model.unitary()
    y = linalg.conditional_expectation(
        linalg.dagger(u) @ linalg.kron(a_c, np.eye(model.k)) @ u, model.psi
    )
    return linalg.hermitize(restricted_inverse_apply(heisenberg_map(model), rho, y))


def _clip_variance(s2: float) -> float:
    if s2 < 0:
        if s2 < -1e-10:
            log.warning("asymptotic variance %.3e is negative beyond roundoff", s2)
        return 0.0
    return s2


def clt_parameters(model: ChainModel, a) -> CltParameters:
    """Drift ``mu`` and asymptotic variance ``sigma2`` of ``sqrt(n) * mean(A)``."""
    _require_mixing(model, "the CLT parameters")
    a_c = center_atom_observable(model, a)
    b = correction_operator(model, a_c)
    h = model.hamiltonian
    eye_a, eye_s = np.eye(model.d), np.eye(model.k)
    g = linalg.kron(a_c, eye_s) + linalg.kron(eye_a, b)
    mu = 1j * stationary_expectation(model, h @ g - g @ h)
    s2 = stationary_expectation(model, linalg.kron(a_c @ a_c, eye_s)) + 2 * stationary_expectation(
        model, linalg.kron(a_c, b)
    )
    return CltParameters(float(mu.real), _clip_variance(float(s2.real)), b, a_c)


def classical_fisher(model: ChainModel, a, tol: float = 1e-12) -> float:
    """``mu(A)^2 / sigma^2(A)``; inf when the variance vanishes with nonzero drift."""
    p = clt_parameters(model, a)
    if p.sigma2 <= tol:
        if abs(p.mu) <= 1e-10:
            raise ValueError("classical Fisher information undefined: mu and sigma^2 both vanish")
        log.warning("sigma^2 vanishes with nonzero mu; reporting infinite Fisher information")
        return float("inf")
    return p.mu**2 / p.sigma2


def quantum_fisher(model: ChainModel) -> QfiResult:
    """Asymptotic quantum Fisher information per atom at ``theta0``."""
    rho = _require_mixing(model, "the quantum Fisher information")
    h_mean = stationary_expectation(model, model.hamiltonian).real
    h = model.hamiltonian - h_mean * np.eye(model.d * model.k)
    kk = linalg.conditional_expectation(h, model.psi)
    r = restricted_inverse_apply(heisenberg_map(model), rho, kk)
    lifted = linalg.kron(np.eye(model.d), r)
    h2 = stationary_expectation(model, h @ h).real
    hr = stationary_expectation(model, h @ lifted)
    anti = stationary_expectation(model, h @ lifted + lifted @ h).real
    f = 4.0 * (h2 + anti)
    if f < 0:
        if f < -1e-10:
            log.warning("quantum Fisher information %.3e is negative beyond roundoff", f)
        f = 0.0
    return QfiResult(f, linalg.hermitize(kk), anti, float(-hr.imag), h_mean)


def xy_closed_form_fisher(a: float, b: float, c: float) -> float:
    """``16 a^4 b^4 / ((1 - c)(1 - c + 4 a^2 b^2 c))`` for the XY chain."""
    if abs(a * a + b * b - 1.0) > 1e-10:
        raise ValueError("a^2 + b^2 must equal 1")
    if c == 1.0:
        raise ValueError("closed form diverges at c = 1 (non-mixing chain)")
    ab2 = a * a * b * b
    return 16 * ab2 * ab2 / ((1 - c) * (1 - c + 4 * ab2 * c))


def xy_closed_form_eigenvalues(a: float, b: float, c: float) -> np.ndarray:
    """Transition-map spectrum of the XY chain in closed form."""
    disc = np.sqrt(complex(c * c * (1 - c) ** 2 - 16 * a * a * b * b * c * (1 - c * c)))
    return np.array([1.0, c, (c * (c + 1) + disc) / 2, (c * (c + 1) - disc) / 2], dtype=complex)


# -- observable scans ------------------------------------------------------


def fibonacci_sphere(n: int) -> np.ndarray:
    """Spherical Fibonacci lattice, ``n`` unit vectors of shape (n, 3)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


@dataclass(frozen=True, eq=False)
class FisherForm:
    """Drift and variance as linear/quadratic forms in the coefficients of
    ``A = sum_j c_j basis[j]``."""

    mu: np.ndarray
    sigma: np.ndarray

    def evaluate(self, coeffs) -> tuple[np.ndarray, np.ndarray]:
        c = np.atleast_2d(coeffs)
        mu = c @ self.mu
        s2 = np.einsum("ni,ij,nj->n", c, self.sigma, c)
        return mu, s2

    def fisher(self, coeffs) -> np.ndarray:
        mu, s2 = self.evaluate(coeffs)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s2 > 1e-12, mu * mu / np.where(s2 > 1e-12, s2, 1.0), 0.0)
        return out


def fisher_form(model: ChainModel, basis) -> FisherForm:
    _require_mixing(model, "an observable scan")
    h = model.hamiltonian
    eye_a, eye_s = np.eye(model.d), np.eye(model.k)
    cent = [center_atom_observable(model, b) for b in basis]
    bs = [correction_operator(model, a) for a in cent]
    mu = []
    for a_c, b in zip(cent, bs):
        g = linalg.kron(a_c, eye_s) + linalg.kron(eye_a, b)
        mu.append((1j * stationary_expectation(model, h @ g - g @ h)).real)
    m = len(basis)
    s = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            s[i, j] = (
                stationary_expectation(model, linalg.kron(cent[i] @ cent[j], eye_s))
                + 2 * stationary_expectation(model, linalg.kron(cent[i], bs[j]))
            ).real
    return FisherForm(np.array(mu), 0.5 * (s + s.T))


def _angles_to_direction(polar: float, azimuth: float) -> np.ndarray:
    return np.array(
        [np.sin(polar) * np.cos(azimuth), np.sin(polar) * np.sin(azimuth), np.cos(polar)]
    )


def _coordinate_shrink(fn, x0, step: float, tol: float, max_iter: int = 10000):
    """Maximize ``fn`` by compass search, halving the step on failure."""
    x = np.array(x0, dtype=float)
    fx = fn(x)
    it = 0
    while step > tol and it < max_iter:
        moved = False
        for i in range(len(x)):
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[i] += sgn * step
                fy = fn(y)
                if fy > fx:
                    x, fx, moved = y, fy, True
                    break
        if not moved:
            step *= 0.5
        it += 1
    return x, fx


@dataclass(frozen=True, eq=False)
class ScanResult:
    directions: np.ndarray
    values: np.ndarray
    best_direction: np.ndarray
    best_value: float
    grid_best_value: float
    quantum_fisher: float


def scan_observables(model: ChainModel, resolution: int = 2000, refine_tol: float = 1e-5) -> ScanResult:
    """Classical Fisher information of spin measurements ``n . sigma`` over a
    Fibonacci lattice on the Bloch sphere, with local refinement of the best
    direction."""
    if model.d != 2:
        raise ValueError("Bloch-sphere scan requires two-level atoms")
    form = fisher_form(model, [linalg.SIGMA_X, linalg.SIGMA_Y, linalg.SIGMA_Z])
    dirs = fibonacci_sphere(resolution)
    vals = form.fisher(dirs)
    i0 = int(np.argmax(vals))
    n0 = dirs[i0]
    start = [np.arccos(np.clip(n0[2], -1, 1)), np.arctan2(n0[1], n0[0])]
    spacing = np.sqrt(4 * np.pi / resolution)
    x, fx = _coordinate_shrink(
        lambda ang: float(form.fisher(_angles_to_direction(*ang))[0]), start, spacing, refine_tol
    )
    return ScanResult(
        directions=dirs,
        values=vals,
        best_direction=_angles_to_direction(*x),
        best_value=max(fx, float(vals[i0])),
        grid_best_value=float(vals[i0]),
        quantum_fisher=quantum_fisher(model).F,
    )
