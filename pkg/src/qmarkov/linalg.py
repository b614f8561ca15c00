"""Dense complex linear algebra on atom (x) system spaces.

Tensor ordering is atom first, system second throughout the package: an
operator on C^d (x) C^k has composite index ``i * k + m`` for atom index ``i``
and system index ``m``.
"""

from __future__ import annotations

import numpy as np

from .constants import ALGEBRAIC_TOL, SPECTRAL_TOL

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# |0> is the ground state: sigma_minus |0> = 0.
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)


class DimensionError(ValueError):
    pass


class EigenSolverError(RuntimeError):
    pass


def as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("matrix has non-finite entries")
    return x


def dagger(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def is_hermitian(x, tol: float = ALGEBRAIC_TOL) -> bool:
    x = np.asarray(x)
    return x.shape[0] == x.shape[1] and np.max(np.abs(x - dagger(x)), initial=0.0) <= tol


def hermitize(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + dagger(x))


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def kron(a, b) -> np.ndarray:
    """Kronecker product with block ``(i, j)`` equal to ``a[i, j] * b``."""
    return np.kron(as_matrix(a), as_matrix(b))


def _split(x: np.ndarray, d: int, k: int) -> np.ndarray:
    if x.shape != (d * k, d * k):
        raise DimensionError(f"operator of shape {x.shape} does not act on C^{d} (x) C^{k}")
    return x.reshape(d, k, d, k)


def partial_trace_atom(x, d: int, k: int) -> np.ndarray:
    """Trace out the atom factor: ``out[m, n] = sum_i x[(i, m), (i, n)]``."""
    return np.einsum("imin->mn", _split(as_matrix(x), d, k))


def conditional_expectation(y, psi) -> np.ndarray:
    """Partial inner product ``<psi| y |psi>`` over the atom factor.

    ``out[m, n] = sum_{i,j} conj(psi_i) y[(i, m), (j, n)] psi_j``.
    """
    psi = np.asarray(psi, dtype=complex)
    y = as_matrix(y)
    d = psi.shape[0]
    if y.shape[0] % d:
        raise DimensionError(f"operator of size {y.shape[0]} has no atom factor of size {d}")
    k = y.shape[0] // d
    return np.einsum("i,imjn,j->mn", psi.conj(), _split(y, d, k), psi)


def expm_hermitian(h, t: float) -> np.ndarray:
    """``exp(-i t h)`` for Hermitian ``h`` via its eigendecomposition."""
    h = as_matrix(h)
    if not is_hermitian(h):
        raise ValueError("expm_hermitian requires a Hermitian matrix")
    if t == 0:
        return np.eye(h.shape[0], dtype=complex)
    w, v = np.linalg.eigh(hermitize(h))
    return (v * np.exp(-1j * t * w)) @ dagger(v)


def trace_norm(x) -> float:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError("trace_norm requires a square matrix")
    return float(np.sum(np.linalg.svd(x, compute_uv=False)))


def eig(x, tol: float = SPECTRAL_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and right eigenvectors (columns), with a residual check.

    Raises EigenSolverError when LAPACK fails to converge or a returned pair
    has residual above ``tol * ||x||``.
    """
    x = as_matrix(x)
    if x.shape[0] != x.shape[1]:
        raise DimensionError("eig requires a square matrix")
    try:
        w, v = np.linalg.eig(x)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(str(exc)) from exc
    scale = max(np.linalg.norm(x, 2), 1.0)
    resid = np.linalg.norm(x @ v - v * w, axis=0)
    if np.any(resid > tol * scale):
        raise EigenSolverError(f"eigenpair residual {resid.max():.3e} exceeds tolerance")
    return w, v


def bloch_observable(n) -> np.ndarray:
    """Spin observable ``n . sigma`` for a (not necessarily unit) 3-vector."""
    nx, ny, nz = n
    return nx * SIGMA_X + ny * SIGMA_Y + nz * SIGMA_Z


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return hermitize(z)


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    z = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = z @ dagger(z)
    return rho / np.trace(rho).real
