"""Random projection pairs and self-contained property suites for the matrix identities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from scipy.stats import ortho_group

from .overlap import overlap_fredholm, overlap_matrix_det
from .shift import projection_power_identities
from .spectral import SpectralData, significant_singular_values, singular_values

# slack for comparing two floating-point sums of singular values
INEQUALITY_RTOL = 1e-12


def random_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0 if rng.random() < 0.5 else -1.0]])
    return ortho_group.rvs(dim, random_state=rng)


def random_projection(rng: np.random.Generator, dim: int, rank: int) -> Tuple[np.ndarray, np.ndarray]:
    """Haar-distributed rank-``rank`` orthogonal projection and an orthonormal basis of its range."""
    U = random_orthogonal(rng, dim)[:, :rank]
    P = U @ U.T
    return 0.5 * (P + P.T), U


def random_projection_pair(rng: np.random.Generator, dim: int, rank_p: int | None = None,
                           rank_q: int | None = None):
    """Independent Haar projections; ranks default to independent uniform draws in [0, dim]."""
    rp = int(rng.integers(0, dim + 1)) if rank_p is None else rank_p
    rq = int(rng.integers(0, dim + 1)) if rank_q is None else rank_q
    P, U = random_projection(rng, dim, rp)
    Q, V = random_projection(rng, dim, rq)
    return P, Q, U, V


def _as_spectral(U: np.ndarray) -> SpectralData:
    # eigenbasis whose lowest len(U.T) vectors span range(U); eigenvalues are placeholders
    dim, k = U.shape
    full, _ = np.linalg.qr(np.hstack([U, np.eye(dim)]))
    full = np.hstack([U, full[:, k:dim]])
    return SpectralData(np.concatenate([np.zeros(k), np.ones(dim - k)]), full)


def random_matrix(rng: np.random.Generator, shape: Tuple[int, int], spread: float = 4.0) -> np.ndarray:
    """Gaussian matrix with singular values rescaled over ``spread`` decades."""
    u = random_orthogonal(rng, shape[0])
    v = random_orthogonal(rng, shape[1])
    k = min(shape)
    s = 10.0 ** rng.uniform(-spread, 0.0, k)
    S = np.zeros(shape)
    S[np.arange(k), np.arange(k)] = s
    return u @ S @ v.T


def schatten_power(M, p: float) -> float:
    """``sum_n s_n^p`` (the p-th power of the Schatten quasi-norm)."""
    return float(np.sum(significant_singular_values(M) ** p))


def quasi_triangle(A, B, p: float) -> Tuple[float, float]:
    """``(||A+B||_p^p, ||A||_p^p + ||B||_p^p)``; the first is at most the second for p <= 1."""
    return schatten_power(np.asarray(A) + np.asarray(B), p), schatten_power(A, p) + schatten_power(B, p)


def interpolation(A, p: float, eps: float) -> Tuple[float, float]:
    """``(||A||_p^p, ||A||^eps ||A||_{p-eps}^{p-eps})`` for ``0 < eps < p``."""
    if not 0 < eps < p:
        raise ValueError("need 0 < eps < p")
    s = singular_values(A)
    top = float(s[0]) if s.size else 0.0
    return schatten_power(A, p), top ** eps * schatten_power(A, p - eps)


@dataclass
class SuiteResult:
    name: str
    trials: int
    checks: int = 0
    violations: int = 0
    max_residual: float = 0.0
    details: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> Dict:
        return {"name": self.name, "trials": self.trials, "checks": self.checks, "violations": self.violations,
                "max_residual": self.max_residual, "passed": self.passed, **self.details}


def projection_suite(rng: np.random.Generator, dim: int, trials: int, powers=(1, 2, 3, 4),
                     tol: float = 1e-11) -> SuiteResult:
    """Odd/even power identities for ``P - Q`` on random projection pairs of dimension ``dim``."""
    out = SuiteResult("projection-power-identities", trials, details={"tol": tol, "powers": list(powers)})
    for _ in range(trials):
        P, Q, _, _ = random_projection_pair(rng, dim)
        for n in powers:
            r = max(projection_power_identities(P, Q, n))
            out.checks += 1
            out.max_residual = max(out.max_residual, r)
            out.violations += r > tol
    return out


def determinant_suite(rng: np.random.Generator, dim: int, trials: int, rtol: float = 1e-9) -> SuiteResult:
    """Slater determinant against the three Fredholm forms on random equal-rank pairs.

    Also records the smallest singular value of the overlap matrix, which
    controls how much rounding in ``P`` and ``Q`` the Fredholm forms amplify.
    """
    out = SuiteResult("overlap-four-way", trials, details={"rtol": rtol})
    worst_sigma = []
    for _ in range(trials):
        rank = int(rng.integers(1, dim + 1))
        P, Q, U, V = random_projection_pair(rng, dim, rank, rank)
        ref = overlap_matrix_det(_as_spectral(U), _as_spectral(V), rank)
        forms = overlap_fredholm(P, Q)
        err = max(abs(f.value - ref.value) / max(ref.value, np.finfo(float).tiny) for f in forms)
        out.checks += 1
        out.max_residual = max(out.max_residual, err)
        if err > rtol:
            out.violations += 1
            worst_sigma.append(float(singular_values(U.T @ V)[-1]))
    out.details["sigma_min_of_failures"] = sorted(worst_sigma)
    return out


def quasinorm_suite(rng: np.random.Generator, dim: int, trials: int, ps=(0.25, 0.5, 1.0),
                    eps_fracs=(0.1, 0.25, 0.5, 0.75, 0.9)) -> SuiteResult:
    """Adapted triangle inequality and the interpolation bound on random matrices."""
    out = SuiteResult("schatten-quasinorm", trials, details={"rtol": INEQUALITY_RTOL, "p": list(ps),
                                                             "eps_fractions": list(eps_fracs)})
    for _ in range(trials):
        shape = (int(rng.integers(1, dim + 1)), int(rng.integers(1, dim + 1)))
        A, B = random_matrix(rng, shape), random_matrix(rng, shape)
        for p in ps:
            lhs, rhs = quasi_triangle(A, B, p)
            out.checks += 1
            out.violations += lhs > rhs * (1 + INEQUALITY_RTOL)
            out.max_residual = max(out.max_residual, (lhs - rhs) / rhs)
            for frac in eps_fracs:
                lhs, rhs = interpolation(A, p, frac * p)
                out.checks += 1
                out.violations += lhs > rhs * (1 + INEQUALITY_RTOL)
                out.max_residual = max(out.max_residual, (lhs - rhs) / rhs)
    return out
