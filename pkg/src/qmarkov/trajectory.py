"""Monte Carlo simulation of projective measurements on the outgoing atoms.

Each trajectory draws its uniforms from its own counter-based stream keyed by
``(master_seed, index)``, so a record does not depend on how trajectories are
batched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from . import linalg
from .chain import ChainModel, atom_expectation
from .constants import DEGENERACY_TOL, PROBABILITY_FLOOR
from .fisher import classical_fisher, clt_parameters


@dataclass(frozen=True, eq=False)
class SpectralMeasurement:
    """Eigenvalues of A (degenerate ones merged) with the Kraus operators
    ``(<e| (x) 1) U (|psi> (x) 1)`` of each eigenspace."""

    values: np.ndarray
    kraus: np.ndarray  # shape (n_outcomes, max_rank, k, k), zero padded

    @classmethod
    def build(cls, model: ChainModel, theta: float, a) -> SpectralMeasurement:
        a = linalg.as_matrix(a)
        if not linalg.is_hermitian(a, 1e-10):
            raise ValueError("measured observable must be Hermitian")
        w, v = np.linalg.eigh(linalg.hermitize(a))
        groups: list[list[int]] = []
        for i in range(len(w)):
            if groups and abs(w[i] - w[groups[-1][0]]) < DEGENERACY_TOL:
                groups[-1].append(i)
            else:
                groups.append([i])
        ks = np.stack(model.kraus(theta))  # (d, k, k), indexed by atom basis state
        rank = max(len(g) for g in groups)
        out = np.zeros((len(groups), rank, model.k, model.k), dtype=complex)
        for gi, g in enumerate(groups):
            for r, i in enumerate(g):
                out[gi, r] = np.einsum("j,jmn->mn", v[:, i].conj(), ks)
        values = np.array([np.mean(w[g]) for g in groups])
        return cls(values, out)

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        """Outcome probabilities for a batch of states of shape (..., k, k)."""
        m = self.kraus
        p = np.einsum("orab,...bc,orac->...o", m, rho, m.conj())
        return p.real

    def posterior(self, rho: np.ndarray, outcome: np.ndarray) -> np.ndarray:
        """Unnormalized post-measurement states for a batch with one outcome each."""
        m = self.kraus[outcome]  # (..., r, k, k)
        return np.einsum("...rab,...bc,...rdc->...ad", m, rho, m.conj())


def measure_step(rho, model: ChainModel, theta: float, a, draw: float) -> tuple[float, np.ndarray]:
    """One interaction followed by a projective measurement of A on the atom."""
    meas = SpectralMeasurement.build(model, theta, a)
    rho = np.asarray(rho, dtype=complex)
    p = meas.probabilities(rho)
    idx = _select(np.cumsum(p)[None, :], np.array([draw]))[0]
    post = meas.posterior(rho, idx)
    return float(meas.values[idx]), _renormalize(post, p[idx])


def _select(cum: np.ndarray, draws: np.ndarray) -> np.ndarray:
    cum = cum / cum[..., -1:]
    idx = np.sum(draws[:, None] >= cum, axis=-1)
    return np.minimum(idx, cum.shape[-1] - 1)


def _renormalize(post: np.ndarray, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    # guard against a pathological draw landing on a vanishing outcome
    tr = np.einsum("...ii->...", post).real
    denom = np.where(tr > PROBABILITY_FLOOR, tr, np.maximum(p, PROBABILITY_FLOOR))
    out = post / denom[..., None, None]
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(trajectory_seed(master_seed, index)))


@dataclass(frozen=True, eq=False)
class TrajectoryConfig:
    model: ChainModel
    observable: np.ndarray
    n_steps: int
    n_trajectories: int = 1
    master_seed: int = 0
    u: float = 0.0
    initial_state: np.ndarray | None = None
    keep_outcomes: bool = False

    def __post_init__(self):
        if self.n_steps < 1 or self.n_trajectories < 1:
            raise ValueError("n_steps and n_trajectories must be positive")
        object.__setattr__(self, "observable", linalg.as_matrix(self.observable))

    @property
    def theta0(self) -> float:
        return self.model.theta0

    @property
    def theta(self) -> float:
        """True coupling ``theta0 + u/sqrt(n)``."""
        return self.model.theta0 + self.u / np.sqrt(self.n_steps)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    outcomes: np.ndarray
    time_average: float
    final_state: np.ndarray


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    config: TrajectoryConfig
    indices: np.ndarray
    time_averages: np.ndarray
    final_states: np.ndarray
    mean_states: np.ndarray
    outcome_values: np.ndarray
    outcome_indices: np.ndarray | None = field(default=None)

    def record(self, i: int) -> TrajectoryRecord:
        if self.outcome_indices is None:
            raise ValueError("outcomes were not kept; set keep_outcomes=True")
        return TrajectoryRecord(
            self.outcome_values[self.outcome_indices[i]],
            float(self.time_averages[i]),
            self.final_states[i],
        )


def _initial_states(config: TrajectoryConfig, theta: float, count: int) -> np.ndarray:
    k = config.model.k
    if config.initial_state is None:
        rho = config.model.with_theta(theta).stationary_state()
    else:
        rho = np.asarray(config.initial_state, dtype=complex)
        if rho.ndim == 1:
            rho = linalg.projector(rho)
    if rho.shape != (k, k):
        raise linalg.DimensionError(f"initial state has shape {rho.shape}")
    return np.broadcast_to(rho, (count, k, k)).copy()


def run_ensemble(config: TrajectoryConfig, indices: Sequence[int] | None = None) -> TrajectoryEnsemble:
    """Simulate the trajectories ``indices`` (default: all) side by side."""
    idx = np.arange(config.n_trajectories) if indices is None else np.asarray(indices, dtype=int)
    theta = config.theta
    meas = SpectralMeasurement.build(config.model, theta, config.observable)
    n = config.n_steps
    draws = np.stack([trajectory_rng(config.master_seed, i).random(n) for i in idx])
    rho = _initial_states(config, theta, len(idx))
    sums = np.zeros(len(idx))
    mean_rho = np.zeros_like(rho)
    outcomes = np.empty((len(idx), n), dtype=np.int16) if config.keep_outcomes else None
    for step in range(n):
        p = meas.probabilities(rho)
        o = _select(np.cumsum(p, axis=-1), draws[:, step])
        rho = _renormalize(meas.posterior(rho, o), np.take_along_axis(p, o[:, None], 1)[:, 0])
        mean_rho += rho
        sums += meas.values[o]
        if outcomes is not None:
            outcomes[:, step] = o
    return TrajectoryEnsemble(config, idx, sums / n, rho, mean_rho / n, meas.values, outcomes)


def run_trajectory(config: TrajectoryConfig, index: int = 0) -> TrajectoryRecord:
    cfg = config if config.keep_outcomes else _with(config, keep_outcomes=True)
    return run_ensemble(cfg, [index]).record(0)


def _with(config: TrajectoryConfig, **changes) -> TrajectoryConfig:
    from dataclasses import replace

    return replace(config, **changes)


# -- estimation ---------------------------------------------------------------


class NonMonotoneError(ValueError):
    pass


@dataclass(frozen=True)
class Estimate:
    theta: float
    clamped: bool = False


class MeanInverter:
    """Inverts ``theta -> <A (x) 1>_theta`` on a bracket where it is strictly
    monotone (checked on a sample grid at construction)."""

    def __init__(self, model: ChainModel, a, bracket: tuple[float, float], samples: int = 65):
        self.model = model
        self.a = linalg.as_matrix(a)
        lo, hi = bracket
        grid = np.linspace(lo, hi, samples)
        vals = np.array([self.mean(t) for t in grid])
        diffs = np.diff(vals)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise NonMonotoneError(f"stationary mean is not monotone on [{lo}, {hi}]")
        self.bracket = (lo, hi)
        self.range = (vals[0], vals[-1])

    def mean(self, theta: float) -> float:
        return atom_expectation(self.model, self.a, theta)

    def __call__(self, value: float, xtol: float = 1e-10) -> Estimate:
        lo, hi = self.bracket
        v_lo, v_hi = self.range
        if not min(v_lo, v_hi) <= value <= max(v_lo, v_hi):
            nearer_lo = abs(value - v_lo) < abs(value - v_hi)
            return Estimate(lo if nearer_lo else hi, clamped=True)
        root = optimize.brentq(lambda t: self.mean(t) - value, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
        return Estimate(float(root))


def estimate_theta(model: ChainModel, a, mean_value: float, bracket: tuple[float, float]) -> Estimate:
    """Moment estimator: the coupling whose stationary mean of A equals the
    observed time average."""
    return MeanInverter(model, a, bracket)(mean_value)


# -- experiments --------------------------------------------------------------


@dataclass(frozen=True)
class CltReport:
    n_steps: int
    n_trajectories: int
    u: float
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    mu: float
    sigma2: float
    ks_statistic: float
    ks_pvalue: float
    mean_ok: bool
    variance_ok: bool
    ks_ok: bool

    @property
    def passed(self) -> bool:
        return self.mean_ok and self.variance_ok and self.ks_ok


def clt_statistic(ensemble: TrajectoryEnsemble) -> np.ndarray:
    """``sqrt(n) (mean(A) - <A>_theta0)`` per trajectory."""
    cfg = ensemble.config
    ref = atom_expectation(cfg.model, cfg.observable)
    return np.sqrt(cfg.n_steps) * (ensemble.time_averages - ref)


def clt_experiment(
    config: TrajectoryConfig,
    mean_se_tol: float = 4.0,
    variance_rtol: float = 0.10,
    ks_level: float = 0.01,
) -> CltReport:
    """Compare the simulated law of the rescaled time average with
    ``N(mu u, sigma^2)``."""
    par = clt_parameters(config.model, config.observable)
    ens = run_ensemble(config)
    z = clt_statistic(ens)
    n_t = len(z)
    mean = float(z.mean())
    var = float(z.var(ddof=1))
    mean_se = float(np.sqrt(var / n_t))
    var_se = var * float(np.sqrt(2.0 / (n_t - 1))) if n_t > 1 else float("inf")
    sd = np.sqrt(par.sigma2)
    ks = stats.kstest(z, stats.norm(loc=par.mu * config.u, scale=sd).cdf)
    return CltReport(
        n_steps=config.n_steps,
        n_trajectories=n_t,
        u=config.u,
        mean=mean,
        mean_se=mean_se,
        variance=var,
        variance_se=var_se,
        mu=par.mu,
        sigma2=par.sigma2,
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        mean_ok=abs(mean - par.mu * config.u) <= mean_se_tol * mean_se,
        variance_ok=abs(var - par.sigma2) <= variance_rtol * par.sigma2,
        ks_ok=bool(ks.pvalue > ks_level),
    )


@dataclass(frozen=True)
class MseReport:
    n_steps: int
    n_trajectories: int
    scaled_mse: float
    scaled_mse_se: float
    target: float
    n_clamped: int

    @property
    def z_score(self) -> float:
        return (self.scaled_mse - self.target) / self.scaled_mse_se


def mse_experiment(config: TrajectoryConfig, bracket: tuple[float, float]) -> MseReport:
    """Rescaled mean square error ``n E[(theta_hat - theta)^2]`` against
    ``sigma^2(A) / mu(A)^2``."""
    inverter = MeanInverter(config.model, config.observable, bracket)
    ens = run_ensemble(config)
    ests = [inverter(float(m)) for m in ens.time_averages]
    theta_hat = np.array([e.theta for e in ests])
    sq = config.n_steps * (theta_hat - config.theta) ** 2
    return MseReport(
        n_steps=config.n_steps,
        n_trajectories=len(sq),
        scaled_mse=float(sq.mean()),
        scaled_mse_se=float(sq.std(ddof=1) / np.sqrt(len(sq))),
        target=1.0 / classical_fisher(config.model, config.observable),
        n_clamped=sum(e.clamped for e in ests),
    )
