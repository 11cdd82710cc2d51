"""Ground-state overlaps of two Fermi seas: Slater determinants and Fredholm determinants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .shift import DEFAULT_KERNEL_TOL, ShiftOperator, check_projection
from .spectral import DEFAULT_EIG_TOL, SpectralData, counting_function

DEFAULT_ZERO_THRESHOLD = 1e-300

MATRIX_DET = "matrix-det"
FREDHOLM_PQ = "fredholm-PQ"
FREDHOLM_PQCP = "fredholm-PQ^cP"
FREDHOLM_PCQPC = "fredholm-P^cQP^c"


class RankMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class OverlapResult:
    value: float
    log_value: float
    N: int
    method: str
    zero_flag: bool
    degenerate: bool = False

    def as_dict(self):
        return {"value": self.value, "log_value": self.log_value, "N": self.N, "method": self.method,
                "zero_flag": self.zero_flag, "degenerate": self.degenerate}


def _result(log_value: float, N: int, method: str, zero_threshold: float, degenerate=False,
            force_zero=False) -> OverlapResult:
    zero = force_zero or log_value < math.log(zero_threshold)
    value = 0.0 if zero else math.exp(log_value)
    return OverlapResult(value, log_value, N, method, bool(zero), degenerate)


def _splits_cluster(ev: np.ndarray, N: int, eig_tol: float) -> bool:
    return 0 < N < ev.size and ev[N] - ev[N - 1] < eig_tol


def overlap_matrix_det(specA: SpectralData, specB: SpectralData, N: int,
                       zero_threshold: float = DEFAULT_ZERO_THRESHOLD,
                       eig_tol: float = DEFAULT_EIG_TOL) -> OverlapResult:
    """``|det <phi_j, psi_k>|`` over the lowest ``N`` eigenvectors, via pivoted LU in log space."""
    if specA.size != specB.size:
        raise ValueError("operators have different dimensions")
    if not 1 <= N <= specA.size:
        raise ValueError(f"N={N} out of range [1, {specA.size}]")
    degenerate = _splits_cluster(specA.eigenvalues, N, eig_tol) or _splits_cluster(specB.eigenvalues, N, eig_tol)
    if np.array_equal(specA.lowest(N), specB.lowest(N)):
        # identical Slater determinants; the LU route would return 1 - O(eps)
        return _result(0.0, N, MATRIX_DET, zero_threshold, degenerate)
    M = specA.lowest(N).T @ specB.lowest(N)
    sign, logdet = np.linalg.slogdet(M)
    return _result(float(logdet), N, MATRIX_DET, zero_threshold, degenerate, force_zero=sign == 0)


def _log_det_one_minus(b: np.ndarray) -> float:
    """``sum log(1 - b)`` for eigenvalues ``b`` in [0, 1] (clipped); -inf if any b >= 1."""
    b = np.clip(b, 0.0, 1.0)
    if np.any(b >= 1.0):
        return -math.inf
    return float(np.sum(np.log1p(-b)))


def overlap_fredholm(P: np.ndarray, Q: np.ndarray, zero_threshold: float = DEFAULT_ZERO_THRESHOLD
                     ) -> Tuple[OverlapResult, OverlapResult, OverlapResult]:
    """The three Fredholm-determinant forms of the overlap of equal-rank projections.

    ``det(I-(P-Q)^2)^(1/4)``, ``det(I-P(I-Q)P)^(1/2)``, ``det(I-(I-P)Q(I-P))^(1/2)``.
    """
    P, Q = check_projection(P, name="P"), check_projection(Q, name="Q")
    if P.shape != Q.shape:
        raise ValueError("P and Q have different shapes")
    rank_p, rank_q = int(round(np.trace(P))), int(round(np.trace(Q)))
    if rank_p != rank_q:
        raise RankMismatchError(f"rank(P)={rank_p} differs from rank(Q)={rank_q}")
    eye = np.eye(P.shape[0])
    D = P - Q
    t = np.linalg.eigvalsh(0.5 * (D + D.T))
    # 1 - t^2 = (1 - |t|)(1 + |t|) avoids squaring before the subtraction
    at = np.clip(np.abs(t), 0.0, 1.0)
    log1 = -math.inf if np.any(at >= 1.0) else float(np.sum(np.log1p(-at) + np.log1p(at)))
    Pc, Qc = eye - P, eye - Q
    b2 = np.linalg.eigvalsh(P @ Qc @ P)
    b3 = np.linalg.eigvalsh(Pc @ Q @ Pc)
    return (_result(0.25 * log1, rank_p, FREDHOLM_PQ, zero_threshold),
            _result(0.5 * _log_det_one_minus(b2), rank_p, FREDHOLM_PQCP, zero_threshold),
            _result(0.5 * _log_det_one_minus(b3), rank_p, FREDHOLM_PCQPC, zero_threshold))


def ground_state_overlap(specA: SpectralData, specB: SpectralData, E: float,
                         zero_threshold: float = DEFAULT_ZERO_THRESHOLD,
                         eig_tol: float = DEFAULT_EIG_TOL) -> OverlapResult:
    """Overlap of the ``N = N_A(E)`` particle ground states (1 when ``N = 0``)."""
    count = counting_function(specA, E, eig_tol)
    if count.value == 0:
        return OverlapResult(1.0, 0.0, 0, MATRIX_DET, False, count.degenerate)
    res = overlap_matrix_det(specA, specB, count.value, zero_threshold, eig_tol)
    if count.degenerate and not res.degenerate:
        res = OverlapResult(res.value, res.log_value, res.N, res.method, res.zero_flag, True)
    return res


def infinite_volume_overlap_proxy(T: ShiftOperator, zero_threshold: float = DEFAULT_ZERO_THRESHOLD,
                                  kernel_tol: float = DEFAULT_KERNEL_TOL) -> OverlapResult:
    """``det(I - T^2)^(1/4)`` from the eigenvalues of T; zero when ``1`` is (numerically) in spec(T^2)."""
    at = np.clip(np.abs(np.asarray(T.eigenvalues)), 0.0, 1.0)
    kernel = bool(at.size and at.max() >= 1.0 - kernel_tol)
    if np.any(at >= 1.0):
        log_s = -math.inf
    else:
        log_s = 0.25 * float(np.sum(np.log1p(-at) + np.log1p(at)))
    return _result(log_s, T.rank_a, FREDHOLM_PQ, zero_threshold, T.degenerate, force_zero=kernel)


def overlap_lower_bound(T: ShiftOperator, S: OverlapResult) -> Tuple[float, float, bool]:
    """``(log S^4, -||T||_2^2 / (1 - ||T||^2), holds)``; only meaningful for ``||T|| < 1``.

    The comparison allows a rounding slack of 64 ulp of the larger side.
    """
    norm = T.norm
    if norm >= 1.0:
        raise ValueError("the lower bound needs ||T|| < 1")
    lhs = 4.0 * S.log_value
    rhs = -T.hilbert_schmidt_sq / (1.0 - norm ** 2)
    slack = 64 * np.finfo(float).eps * max(abs(lhs), abs(rhs))
    return lhs, rhs, bool(lhs >= rhs - slack)
