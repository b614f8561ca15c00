"""Quantum Markov chain: atoms in state psi interact one at a time with a
k-level system through U = exp(-i theta H).

Superoperators act on column-stacked operators: ``vec(X)[m + k * n] = X[m, n]``,
so ``vec(A X B) = (B^T (x) A) vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np

from . import linalg
from .constants import ALGEBRAIC_TOL, MIXING_TOL, RANK_TOL, VALIDATION_TOL


class NotMixingError(ValueError):
    """Raised by operations that need a unique attracting stationary state."""

    def __init__(self, what: str = "this operation"):
        super().__init__(
            f"{what} requires a mixing chain: the transition map must have a single "
            "eigenvalue 1 with every other eigenvalue strictly inside the unit circle"
        )


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=complex).reshape(-1, order="F")


def unvec(v: np.ndarray, k: int) -> np.ndarray:
    return np.asarray(v).reshape(k, k, order="F")


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """Linear map on k x k matrices stored as a k^2 x k^2 matrix."""

    k: int
    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.shape != (self.k**2, self.k**2):
            raise linalg.DimensionError(f"superoperator matrix has shape {self.matrix.shape}")

    def __call__(self, x) -> np.ndarray:
        return unvec(self.matrix @ vec(x), self.k)

    def __add__(self, other: SuperOperator) -> SuperOperator:
        return SuperOperator(self.k, self.matrix + other.matrix)

    def __sub__(self, other: SuperOperator) -> SuperOperator:
        return SuperOperator(self.k, self.matrix - other.matrix)

    def __rmul__(self, c) -> SuperOperator:
        return SuperOperator(self.k, c * self.matrix)

    def __matmul__(self, other: SuperOperator) -> SuperOperator:
        return SuperOperator(self.k, self.matrix @ other.matrix)

    def power_apply(self, x, n: int) -> np.ndarray:
        v = vec(x)
        for _ in range(n):
            v = self.matrix @ v
        return unvec(v, self.k)

    def norm(self) -> float:
        """Operator norm induced by the spectral norm on matrices, estimated on
        the operator basis plus a fixed batch of random unitaries (lower bound)."""
        rng = np.random.default_rng(0)
        probes = [linalg.random_unitary(self.k, rng) for _ in range(32)]
        probes.append(np.eye(self.k))
        return max(np.linalg.norm(self(p), 2) for p in probes)

    @classmethod
    def identity(cls, k: int) -> SuperOperator:
        return cls(k, np.eye(k * k, dtype=complex))

    @classmethod
    def zero(cls, k: int) -> SuperOperator:
        return cls(k, np.zeros((k * k, k * k), dtype=complex))

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], k: int) -> SuperOperator:
        cols = []
        for j in range(k * k):
            e = np.zeros(k * k, dtype=complex)
            e[j] = 1.0
            cols.append(vec(fn(unvec(e, k))))
        return cls(k, np.column_stack(cols))

    @classmethod
    def from_sandwich(cls, lefts, rights) -> SuperOperator:
        """Map ``X -> sum_i lefts[i]^dagger X rights[i]``."""
        k = lefts[0].shape[0]
        m = sum(np.kron(r.T, linalg.dagger(l)) for l, r in zip(lefts, rights))
        return cls(k, np.asarray(m, dtype=complex))


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Hamiltonian ``H`` on C^d (x) C^k (atom first), atom input ``psi`` and
    coupling ``theta0``."""

    d: int
    k: int
    hamiltonian: np.ndarray
    psi: np.ndarray
    theta0: float

    def __post_init__(self):
        h = linalg.as_matrix(self.hamiltonian)
        psi = np.asarray(self.psi, dtype=complex)
        if h.shape != (self.d * self.k, self.d * self.k):
            raise linalg.DimensionError(
                f"hamiltonian has shape {h.shape}, expected {(self.d * self.k,) * 2}"
            )
        if psi.shape != (self.d,):
            raise linalg.DimensionError(f"input state has shape {psi.shape}, expected ({self.d},)")
        if not linalg.is_hermitian(h, VALIDATION_TOL):
            raise ValueError("hamiltonian is not Hermitian")
        if abs(np.linalg.norm(psi) - 1.0) > VALIDATION_TOL:
            raise ValueError(f"input state has norm {np.linalg.norm(psi)!r}, expected 1")
        h.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "theta0", float(self.theta0))

    def with_theta(self, theta: float) -> ChainModel:
        return replace(self, theta0=theta)

    def unitary(self, theta: float | None = None) -> np.ndarray:
        theta = self.theta0 if theta is None else theta
        return linalg.expm_hermitian(self.hamiltonian, theta)

    def kraus(self, theta: float | None = None) -> list[np.ndarray]:
        """``K_i = (<i| (x) 1) U (|psi> (x) 1)`` for each atom basis state."""
        u = self.unitary(theta).reshape(self.d, self.k, self.d, self.k)
        # contract the input atom index with psi
        w = np.einsum("imjn,j->imn", u, self.psi)
        return [w[i] for i in range(self.d)]

    @cached_property
    def spectral(self) -> SpectralReport:
        return spectral_report(self)

    @property
    def is_mixing(self) -> bool:
        return self.spectral.mixing

    def stationary_state(self) -> np.ndarray:
        rep = self.spectral
        if not rep.mixing:
            raise NotMixingError("the stationary state")
        return rep.stationary_state

    def centered(self) -> ChainModel:
        """Same chain with H shifted by its stationary mean; U changes by a
        global phase only."""
        h_mean = stationary_expectation(self, self.hamiltonian).real
        return replace(self, hamiltonian=self.hamiltonian - h_mean * np.eye(self.d * self.k))


def xy_hamiltonian() -> np.ndarray:
    """``H = i(sigma_+ (x) sigma_- - sigma_- (x) sigma_+)``, atom first."""
    return 1j * (
        linalg.kron(linalg.SIGMA_PLUS, linalg.SIGMA_MINUS)
        - linalg.kron(linalg.SIGMA_MINUS, linalg.SIGMA_PLUS)
    )


def xy_model(a: float, b: float, f: float, theta0: float) -> ChainModel:
    """Two-level atoms in ``a|0> + b e^{if}|1>`` coupled to a qubit by the XY
    exchange Hamiltonian."""
    if abs(a * a + b * b - 1.0) > VALIDATION_TOL:
        raise ValueError(f"a^2 + b^2 = {a * a + b * b!r}, expected 1")
    psi = np.array([a, b * np.exp(1j * f)], dtype=complex)
    return ChainModel(2, 2, xy_hamiltonian(), psi, theta0)


def xy_benchmark() -> ChainModel:
    """a = 0.6, b = 0.8, f = 0, cos(theta0) = 0.5."""
    return xy_model(0.6, 0.8, 0.0, np.arccos(0.5))


def schrodinger_map(model: ChainModel, theta: float | None = None) -> SuperOperator:
    """``rho -> Tr_atom(U (|psi><psi| (x) rho) U^dagger)``."""
    ks = model.kraus(theta)
    return SuperOperator(model.k, sum(np.kron(kr.conj(), kr) for kr in ks))


def heisenberg_map(model: ChainModel, theta: float | None = None) -> SuperOperator:
    """``X -> <psi| U^dagger (1 (x) X) U |psi>``, the unital dual of the
    Schrodinger map."""
    ks = model.kraus(theta)
    return SuperOperator.from_sandwich(ks, ks)


def transfer_map(model: ChainModel, theta_left: float, theta_right: float) -> SuperOperator:
    """``X -> <psi| U_left^dagger (1 (x) X) U_right |psi>``."""
    return SuperOperator.from_sandwich(model.kraus(theta_left), model.kraus(theta_right))


def conditional_map(model: ChainModel, y_of_x: Callable[[np.ndarray], np.ndarray]) -> SuperOperator:
    """Superoperator ``X -> <psi| U^dagger Y(X) U |psi>`` for a linear
    composite-operator valued ``Y(X)``."""
    u = model.unitary()
    ud = linalg.dagger(u)
    return SuperOperator.from_function(
        lambda x: linalg.conditional_expectation(ud @ y_of_x(x) @ u, model.psi), model.k
    )


@dataclass(frozen=True, eq=False)
class SpectralReport:
    eigenvalues: np.ndarray
    lambda2: complex
    gap: float
    mixing: bool
    stationary_state: np.ndarray
    degenerate: bool = False
    fixed_space_dim: int = field(default=1)

    def as_dict(self) -> dict:
        return {
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "lambda2": [self.lambda2.real, self.lambda2.imag],
            "gap": self.gap,
            "mixing": self.mixing,
            "degenerate": self.degenerate,
            "fixed_space_dim": self.fixed_space_dim,
            "stationary_state": {
                "re": self.stationary_state.real.tolist(),
                "im": self.stationary_state.imag.tolist(),
            },
        }


def _normalize_state(rho: np.ndarray) -> np.ndarray:
    rho = linalg.hermitize(rho)
    tr = np.trace(rho).real
    if tr < 0:
        rho = -rho
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    rho = (v * w) @ linalg.dagger(v)
    return rho / np.trace(rho).real


def fixed_space_dimension(model: ChainModel, tol: float = RANK_TOL) -> int:
    m = schrodinger_map(model).matrix - np.eye(model.k**2)
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s < tol))


def spectral_report(model: ChainModel) -> SpectralReport:
    t_star = schrodinger_map(model)
    w, v = linalg.eig(t_star.matrix)
    order = np.lexsort((-w.real, -np.round(np.abs(w), 12)))
    w, v = w[order], v[:, order]
    near_one = np.abs(w - 1.0) < MIXING_TOL
    n_one = int(near_one.sum())
    others = np.abs(w[~near_one])
    mixing = n_one == 1 and bool(np.all(others < 1.0 - MIXING_TOL))
    lam2 = complex(w[1]) if len(w) > 1 else 0j
    k = model.k
    if mixing:
        # fixed point from the bordered system (T_* - 1) v = 0, Tr v = 1
        a = np.vstack([t_star.matrix - np.eye(k * k), vec(np.eye(k))[None, :]])
        rhs = np.zeros(k * k + 1, dtype=complex)
        rhs[-1] = 1.0
        sol = np.linalg.lstsq(a, rhs, rcond=None)[0]
        rho = _normalize_state(unvec(sol, k))
    else:
        idx = int(np.argmin(np.abs(w - 1.0)))
        rho = _normalize_state(unvec(v[:, idx], k))
    rho.setflags(write=False)
    return SpectralReport(
        eigenvalues=w,
        lambda2=lam2,
        gap=1.0 - abs(lam2),
        mixing=mixing,
        stationary_state=rho,
        degenerate=n_one > 1,
        fixed_space_dim=fixed_space_dimension(model),
    )


def stationary_expectation(model: ChainModel, x) -> complex:
    """``Tr((|psi><psi| (x) rho_st) U^dagger X U)`` at ``theta0``."""
    rho = model.stationary_state()
    u = model.unitary()
    state = linalg.kron(linalg.projector(model.psi), rho)
    return complex(np.trace(state @ linalg.dagger(u) @ linalg.as_matrix(x) @ u))


def system_expectation(model: ChainModel, x) -> complex:
    """Stationary expectation of ``1 (x) x``."""
    return stationary_expectation(model, linalg.kron(np.eye(model.d), x))


def atom_expectation(model: ChainModel, a, theta: float | None = None) -> float:
    """Stationary mean of an outgoing-atom observable ``a``, optionally at
    another coupling ``theta``."""
    m = model if theta is None else model.with_theta(theta)
    return stationary_expectation(m, linalg.kron(a, np.eye(m.k))).real


@dataclass(frozen=True, eq=False)
class ConvergenceTable:
    n: np.ndarray
    distance: np.ndarray
    slope: float
    log_abs_lambda2: float


def convergence_diagnostics(
    model: ChainModel,
    rho0,
    n_max: int,
    fit_range: tuple[int, int] = (20, 100),
    floor: float = 1e-13,
) -> ConvergenceTable:
    """Trace distance of ``T_*^n(rho0)`` to the stationary state for
    ``n = 0..n_max`` and the least-squares slope of its logarithm.

    Points below ``floor`` are excluded from the fit (roundoff plateau).
    """
    rho_st = model.stationary_state()
    t_star = schrodinger_map(model)
    v = vec(rho0)
    dist = np.empty(n_max + 1)
    for n in range(n_max + 1):
        dist[n] = linalg.trace_norm(unvec(v, model.k) - rho_st)
        v = t_star.matrix @ v
    ns = np.arange(n_max + 1)
    sel = (ns >= fit_range[0]) & (ns <= fit_range[1]) & (dist > floor)
    slope = float(np.polyfit(ns[sel], np.log(dist[sel]), 1)[0]) if sel.sum() >= 2 else float("-inf")
    lam2 = abs(model.spectral.lambda2)
    return ConvergenceTable(ns, dist, slope, float(np.log(lam2)) if lam2 > 0 else float("-inf"))
