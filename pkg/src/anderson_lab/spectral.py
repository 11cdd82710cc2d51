"""Eigendecomposition, resolvent blocks, Schatten quasi-norms and eigenvalue counting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla

from .config import ModelConfig
from .mc import EstimatorResult, mc_expectation
from .model import Hamiltonian, build_hamiltonian

DEFAULT_EIG_TOL = 1e-10


class EigensolverError(RuntimeError):
    """The eigensolver output failed its orthonormality or reconstruction check."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class SpectrumProximityError(ValueError):
    """A real spectral parameter sits within tolerance of an eigenvalue."""


class DegeneracyError(ValueError):
    """An energy sits within eig_tol of an eigenvalue (refused in strict mode)."""


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Ascending eigenvalues with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    def matrix(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T

    def lowest(self, n: int) -> np.ndarray:
        return self.eigenvectors[:, :n]

    def projection_below(self, E: float) -> np.ndarray:
        """Spectral projection onto eigenvalues in the closed half-line (-inf, E]."""
        n = int(np.searchsorted(self.eigenvalues, E, side="right"))
        v = self.eigenvectors[:, :n]
        return v @ v.T


@dataclass(frozen=True, eq=False)
class LocalBlock:
    """Rectangular block ``M[a, b]`` with its row (``a``) and column (``b``) site indices."""

    a: np.ndarray
    b: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.shape != (len(self.a), len(self.b)):
            raise ValueError("block shape does not match its site sets")


class Counted(NamedTuple):
    value: int
    degenerate: bool


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first clearly nonzero component is positive."""
    mags = np.abs(vectors)
    first = np.argmax(mags > 1e-8 * mags.max(axis=0, keepdims=True), axis=0)
    signs = np.sign(vectors[first, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _as_array(H) -> np.ndarray:
    return H.matrix if isinstance(H, Hamiltonian) else np.asarray(H)


def _bandwidth(a: np.ndarray) -> int:
    nz = np.nonzero(a)
    return int(np.max(np.abs(nz[0] - nz[1]))) if nz[0].size else 0


def eig(H, eig_tol: float = DEFAULT_EIG_TOL, check: bool = True) -> SpectralData:
    """Full symmetric eigendecomposition (tridiagonal LAPACK path when possible)."""
    a = _as_array(H)
    if a.shape[0] != a.shape[1] or not np.array_equal(a, a.T):
        raise ValueError("eig requires a symmetric matrix")
    n = a.shape[0]
    if n > 1 and _bandwidth(a) <= 1:
        w, v = sla.eigh_tridiagonal(np.diag(a).copy(), np.diag(a, 1).copy())
    else:
        w, v = sla.eigh(a)
    order = np.argsort(w, kind="stable")
    w, v = w[order], fix_signs(v[:, order])
    if check:
        ortho = float(np.max(np.abs(v.T @ v - np.eye(n)))) if n else 0.0
        if ortho > eig_tol:
            raise EigensolverError("eigenvectors not orthonormal", ortho)
        scale = max(1.0, float(np.max(np.abs(a)))) if n else 1.0
        recon = float(np.max(np.abs((v * w) @ v.T - a))) if n else 0.0
        if recon > eig_tol * scale:
            raise EigensolverError("eigendecomposition does not reconstruct the matrix", recon)
    w.setflags(write=False)
    v.setflags(write=False)
    return SpectralData(w, v)


def eigenvalues(H) -> np.ndarray:
    """Ascending eigenvalues only."""
    a = _as_array(H)
    if a.shape[0] > 1 and _bandwidth(a) <= 1:
        return sla.eigvalsh_tridiagonal(np.diag(a).copy(), np.diag(a, 1).copy())
    return sla.eigvalsh(a)


def _sites(x, n: int) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(x, dtype=int))
    if idx.ndim != 1 or np.any(idx < 0) or np.any(idx >= n):
        raise ValueError("site indices out of range")
    return idx


def resolvent_block(H, z: complex, a: Sequence[int], b: Sequence[int],
                    eig_tol: float = DEFAULT_EIG_TOL) -> LocalBlock:
    """Block ``[(H - z)^{-1}]_{a,b}`` from one factorization and ``|b|`` solves.

    ``a`` and ``b`` are matrix indices. Banded matrices use a banded solver.
    """
    mat = _as_array(H)
    n = mat.shape[0]
    a, b = _sites(a, n), _sites(b, n)
    z = complex(z)
    if z.imag == 0.0:
        evals = eigenvalues(mat)
        if np.min(np.abs(evals - z.real)) <= eig_tol:
            raise SpectrumProximityError(f"z={z.real} lies within eig_tol of an eigenvalue")
        z = z.real
    rhs = np.zeros((n, len(b)), dtype=np.result_type(mat, z))
    rhs[b, np.arange(len(b))] = 1.0
    bw = _bandwidth(mat)
    if 4 * bw < n:
        ab = np.zeros((2 * bw + 1, n), dtype=rhs.dtype)
        shifted = mat - z * np.eye(n)
        for k in range(-bw, bw + 1):
            ab[bw - k, max(k, 0):n + min(k, 0)] = np.diagonal(shifted, k)
        sol = sla.solve_banded((bw, bw), ab, rhs, check_finite=False)
    else:
        lu = sla.lu_factor(mat - z * np.eye(n), check_finite=False)
        sol = sla.lu_solve(lu, rhs, check_finite=False)
    return LocalBlock(a, b, sol[a])


def _block_matrix(M) -> np.ndarray:
    return M.matrix if isinstance(M, LocalBlock) else np.asarray(M)


def singular_values(M) -> np.ndarray:
    m = _block_matrix(M)
    if m.size == 0:
        return np.zeros(0)
    return np.linalg.svd(m, compute_uv=False)


def significant_singular_values(M) -> np.ndarray:
    """Singular values above the numerical-rank threshold ``s_max * max(shape) * eps``.

    Rounding leaves singular values of order ``eps * s_max`` where the exact
    ones vanish; raised to a small power ``p`` they would dominate a quasi-norm.
    """
    s = singular_values(M)
    if s.size == 0:
        return s
    cut = s[0] * max(_block_matrix(M).shape) * np.finfo(float).eps
    return s[s > cut]


def operator_norm(M) -> float:
    """Largest singular value (0 for an empty block)."""
    s = singular_values(M)
    return float(s[0]) if s.size else 0.0


def schatten_norm(M, p: float) -> float:
    """``(sum_n s_n^p)^(1/p)`` over the significant singular values; ``p = inf`` is the operator norm."""
    if not p > 0:
        raise ValueError("Schatten exponent must be positive")
    if np.isinf(p):
        return operator_norm(M)
    s = significant_singular_values(M)
    if s.size == 0:
        return 0.0
    # scale out the largest value to avoid overflow for small p
    top = s[0]
    return float(top * np.sum((s / top) ** p) ** (1.0 / p))


def counting_function(spec: SpectralData, E: float, eig_tol: float = DEFAULT_EIG_TOL) -> Counted:
    """Number of eigenvalues in (-inf, E]; flags E within ``eig_tol`` of an eigenvalue."""
    ev = spec.eigenvalues
    count = int(np.searchsorted(ev, E, side="right"))
    degenerate = bool(ev.size and np.min(np.abs(ev - E)) <= eig_tol)
    return Counted(count, degenerate)


def ids_estimate(config: ModelConfig, energies: Sequence[float], n_realizations: int,
                 seed: int | None = None) -> EstimatorResult:
    """Disorder average of ``N_L(E) / L^d`` on an energy grid."""
    grid = np.asarray(energies, dtype=float)

    def ids(cfg, omega):
        ev = eigenvalues(build_hamiltonian(cfg, omega))
        return np.searchsorted(ev, grid, side="right") / cfg.n_sites

    return mc_expectation(ids, config, n_realizations, seed=seed, name="integrated_density_of_states")
