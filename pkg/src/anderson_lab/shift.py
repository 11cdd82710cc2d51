"""Difference of Fermi projections, spectral shift, index of a projection pair, trace identities."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .config import ModelConfig
from .funcalc import BVFunction
from .model import DisorderRealization, build_hamiltonian, perturbation_values
from .spectral import DEFAULT_EIG_TOL, Counted, SpectralData, counting_function

DEFAULT_KERNEL_TOL = 1e-6


class AmbiguousKernelWarning(UserWarning):
    """An eigenvalue of T lies in the guard band just inside the kernel threshold."""


class NotAProjectionError(ValueError):
    pass


class SignDefinitenessError(ValueError):
    pass


class GridResolutionError(ValueError):
    """The energy grid does not resolve the spectrum (refinement changes the result)."""


@dataclass(frozen=True, eq=False)
class ShiftOperator:
    """``T = 1_(-inf,E](A) - 1_(-inf,E](B)`` with its spectrum."""

    matrix: np.ndarray
    energy: float
    eigenvalues: np.ndarray
    singular_values: np.ndarray
    rank_a: int
    rank_b: int
    degenerate: bool = False

    @property
    def norm(self) -> float:
        return float(self.singular_values[0]) if self.singular_values.size else 0.0

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def hilbert_schmidt_sq(self) -> float:
        return float(np.sum(self.eigenvalues ** 2))


def _fermi_projection(spec: SpectralData, E: float) -> Tuple[np.ndarray, int]:
    n = int(np.searchsorted(spec.eigenvalues, E, side="right"))
    v = spec.eigenvectors[:, :n]
    return v @ v.T, n


def shift_operator(specA: SpectralData, specB: SpectralData, E: float,
                   eig_tol: float = DEFAULT_EIG_TOL) -> ShiftOperator:
    if specA.size != specB.size:
        raise ValueError("operators have different dimensions")
    pa, na = _fermi_projection(specA, E)
    pb, nb = _fermi_projection(specB, E)
    t = pa - pb
    t = 0.5 * (t + t.T)
    ev = np.linalg.eigvalsh(t)
    sv = np.sort(np.abs(ev))[::-1]
    degenerate = counting_function(specA, E, eig_tol).degenerate or counting_function(specB, E, eig_tol).degenerate
    for arr in (t, ev, sv):
        arr.setflags(write=False)
    return ShiftOperator(t, float(E), ev, sv, na, nb, degenerate)


def ssf_counting(specA: SpectralData, specB: SpectralData, E: float,
                 eig_tol: float = DEFAULT_EIG_TOL) -> Counted:
    """``N_A(E) - N_B(E)``."""
    ca, cb = counting_function(specA, E, eig_tol), counting_function(specB, E, eig_tol)
    return Counted(ca.value - cb.value, ca.degenerate or cb.degenerate)


def ssf_on_grid(specA: SpectralData, specB: SpectralData, grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    return (np.searchsorted(specA.eigenvalues, grid, side="right")
            - np.searchsorted(specB.eigenvalues, grid, side="right"))


def _krein_integral(specA, specB, f: BVFunction, grid: np.ndarray) -> float:
    # ξ is sampled at cell midpoints; f' is integrated exactly over each cell
    mids = 0.5 * (grid[1:] + grid[:-1])
    df = np.diff(f(grid))
    return float(np.dot(ssf_on_grid(specA, specB, mids), df))


def krein_residual(specA: SpectralData, specB: SpectralData, f: BVFunction, grid: Sequence[float],
                   stability_tol: float = 0.1) -> float:
    """``|Tr(f(A) - f(B)) + ∫ f'(λ) ξ(λ) dλ|`` with ξ the counting difference on ``grid``.

    Raises GridResolutionError when dropping every other grid point changes the
    integral by more than ``stability_tol * (1 + |integral|)``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least 3 points")
    if f.jump_points.size:
        raise ValueError("krein_residual needs a function without jumps")
    for s in f.segments:
        if s.lo < grid[0] or s.hi > grid[-1]:
            raise ValueError("the derivative of f is not supported inside the grid")
    tr = float(np.sum(f(specA.eigenvalues)) - np.sum(f(specB.eigenvalues)))
    integral = _krein_integral(specA, specB, f, grid)
    coarse = _krein_integral(specA, specB, f, grid[::2] if grid.size % 2 else np.append(grid[:-1:2], grid[-1]))
    if abs(integral - coarse) > stability_tol * (1.0 + abs(integral)):
        raise GridResolutionError(
            f"grid too coarse for the eigenvalue spacing: halving changes the integral by {abs(integral - coarse):.3e}")
    return abs(tr + integral)


@dataclass(frozen=True)
class BirmanSolomyakResult:
    residual: float
    energy_side: float
    coupling_side: float
    refinement_change: float
    refinement_unstable: bool


_BS_GL_ORDER = 8


def _bs_energy_side(H, W, interval) -> float:
    """``∫_I ξ`` exactly: ξ is constant between consecutive eigenvalues of H and H + W."""
    lo, hi = interval
    ev_h, ev_hw = np.linalg.eigvalsh(H), np.linalg.eigvalsh(H + W)
    cuts = np.concatenate([[lo], np.sort(np.concatenate([ev_h, ev_hw])), [hi]])
    cuts = np.clip(cuts, lo, hi)
    widths = np.diff(cuts)
    mid = 0.5 * (cuts[:-1] + cuts[1:])
    xi = np.searchsorted(ev_h, mid, side="right") - np.searchsorted(ev_hw, mid, side="right")
    return float(np.sum(widths * xi))


def _bs_crossings(H, W, interval) -> np.ndarray:
    """Couplings ``s`` in (0, 1) at which an eigenvalue of ``H + sW`` sits on an endpoint of I."""
    from scipy.linalg import eigvals

    out = []
    for e in interval:
        # (H + sW - e) v = 0  <=>  (e - H) v = s W v
        s = eigvals(e * np.eye(H.shape[0]) - H, W)
        ok = np.isfinite(s) & (np.abs(s.imag) <= 1e-9 * (1.0 + np.abs(s.real)))
        out.extend(float(v) for v in s.real[ok] if 0.0 < v < 1.0)
    return np.unique(out)


def _bs_coupling_side(H, W, interval, n_coupling: int) -> float:
    """``∫_0^1 Tr(W 1_I(H + sW)) ds`` by composite Gauss-Legendre split at the endpoint crossings."""
    lo, hi = interval
    edges = np.concatenate([[0.0], _bs_crossings(H, W, interval), [1.0]])
    n_sub = max(1, int(round(n_coupling / (_BS_GL_ORDER * (edges.size - 1)))))
    gx, gw = np.polynomial.legendre.leggauss(_BS_GL_ORDER)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sub = np.linspace(a, b, n_sub + 1)
        half = 0.5 * np.diff(sub)
        nodes.append((0.5 * (sub[:-1] + sub[1:]))[:, None] + half[:, None] * gx[None])
        weights.append(half[:, None] * gw[None])
    s_all, w_all = np.concatenate(nodes).ravel(), np.concatenate(weights).ravel()
    total = 0.0
    chunk = max(1, 2 ** 22 // (H.shape[0] ** 2))
    wdiag = np.diag(W) if np.count_nonzero(W - np.diag(np.diag(W))) == 0 else None
    for start in range(0, s_all.size, chunk):
        s, w = s_all[start:start + chunk], w_all[start:start + chunk]
        ev, vec = np.linalg.eigh(H[None] + s[:, None, None] * W[None])
        inside = (ev >= lo) & (ev <= hi)
        if wdiag is not None:
            expect = np.einsum("kia,i->ka", vec ** 2, wdiag)
        else:
            expect = np.einsum("kia,ij,kja->ka", vec, W, vec)
        total += float(np.sum(w * np.sum(np.where(inside, expect, 0.0), axis=1)))
    return total


def birman_solomyak_matrices(H: np.ndarray, W: np.ndarray, interval: Tuple[float, float],
                             n_coupling: int = 256, stability_tol: float = 1e-2) -> BirmanSolomyakResult:
    """Compare ``∫_I ξ(E, H, H+W) dE`` with ``∫_0^1 Tr(W 1_I(H + sW)) ds``.

    The energy side is integrated exactly. The coupling side uses about
    ``n_coupling`` Gauss-Legendre nodes on panels split where an eigenvalue
    crosses an endpoint of I. The result is flagged unstable when halving the
    node budget moves the residual by more than ``stability_tol * (1 + |∫ξ|)``.
    """
    H, W = np.asarray(H, dtype=float), np.asarray(W, dtype=float)
    lo, hi = interval
    if not lo < hi:
        raise ValueError("interval must have lo < hi")
    e_side = _bs_energy_side(H, W, interval)
    s_side = _bs_coupling_side(H, W, interval, n_coupling)
    s_coarse = _bs_coupling_side(H, W, interval, max(1, n_coupling // 2))
    change = abs(s_side - s_coarse)
    unstable = change > stability_tol * (1.0 + abs(e_side))
    return BirmanSolomyakResult(abs(e_side - s_side), e_side, s_side, change, bool(unstable))


def birman_solomyak_residual(config: ModelConfig, omega: DisorderRealization, interval: Tuple[float, float],
                             n_coupling: int = 256) -> BirmanSolomyakResult:
    """Coupling-constant integral check for the configured perturbation at full strength."""
    H = build_hamiltonian(config, omega)
    W = np.diag(perturbation_values(config, H.coords))
    return birman_solomyak_matrices(H.matrix, W, interval, n_coupling)


@dataclass(frozen=True)
class IndexResult:
    dim_ker_plus: int
    dim_ker_minus: int
    ambiguous: int = 0

    @property
    def theta(self) -> int:
        return self.dim_ker_plus - self.dim_ker_minus


def _kernel_counts(ev: np.ndarray, kernel_tol: float) -> Tuple[int, int, int]:
    plus = int(np.sum(ev >= 1.0 - kernel_tol))
    minus = int(np.sum(ev <= -1.0 + kernel_tol))
    a = np.abs(ev)
    ambiguous = int(np.sum((a >= 1.0 - 2.0 * kernel_tol) & (a < 1.0 - kernel_tol)))
    return plus, minus, ambiguous


def index_of_pair(T: ShiftOperator, kernel_tol: float = DEFAULT_KERNEL_TOL) -> IndexResult:
    """``dim ker(T - 1) - dim ker(T + 1)`` with kernels read off at ``kernel_tol``."""
    plus, minus, ambiguous = _kernel_counts(np.asarray(T.eigenvalues), kernel_tol)
    if ambiguous:
        warnings.warn(f"{ambiguous} eigenvalue(s) of T in the guard band [1-2tol, 1-tol) in modulus",
                      AmbiguousKernelWarning, stacklevel=2)
    return IndexResult(plus, minus, ambiguous)


def check_projection(P: np.ndarray, tol: float = 1e-10, name: str = "P") -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise NotAProjectionError(f"{name} is not square")
    if np.max(np.abs(P - P.T), initial=0.0) > tol:
        raise NotAProjectionError(f"{name} is not symmetric")
    if np.max(np.abs(P @ P - P), initial=0.0) > tol:
        raise NotAProjectionError(f"{name} is not idempotent")
    return P


def projection_power_identities(P: np.ndarray, Q: np.ndarray, n: int) -> Tuple[float, float]:
    """Max-norm residuals of the odd and even power identities for ``P - Q``.

    odd:  (P-Q)^(2n-1) = (P Q')^n - (P' Q)^n
    even: (P-Q)^(2n)   = (P Q' P)^n + (P' Q P')^n, with X' = I - X.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    P, Q = check_projection(P, name="P"), check_projection(Q, name="Q")
    if P.shape != Q.shape:
        raise NotAProjectionError("P and Q have different shapes")
    eye = np.eye(P.shape[0])
    Pc, Qc = eye - P, eye - Q
    mp = np.linalg.matrix_power
    D = P - Q
    odd = mp(D, 2 * n - 1) - (mp(P @ Qc, n) - mp(Pc @ Q, n))
    even = mp(D, 2 * n) - (mp(P @ Qc @ P, n) + mp(Pc @ Q @ Pc, n))
    return float(np.max(np.abs(odd), initial=0.0)), float(np.max(np.abs(even), initial=0.0))


@dataclass(frozen=True)
class SignDefiniteReport:
    alpha: int
    xi: int
    theta: int
    dim_ker_same: int       # dim ker(T - alpha)
    dim_ker_opposite: int   # dim ker(T + alpha)
    one_in_spectrum_sq: bool
    degenerate: bool

    @property
    def kernel_opposite_empty(self) -> bool:
        return self.dim_ker_opposite == 0

    @property
    def theta_matches(self) -> bool:
        return self.theta == self.alpha * self.dim_ker_same

    @property
    def equivalence_holds(self) -> bool:
        return self.one_in_spectrum_sq == (self.theta != 0)

    @property
    def passed(self) -> bool:
        return self.kernel_opposite_empty and self.theta_matches and self.equivalence_holds


def sign_definite_checks(specA: SpectralData, specB: SpectralData, E: float, alpha: int = 1,
                         kernel_tol: float = DEFAULT_KERNEL_TOL, eig_tol: float = DEFAULT_EIG_TOL,
                         difference: np.ndarray | None = None) -> SignDefiniteReport:
    """Kernel structure of T for a sign-definite perturbation ``alpha (B - A) >= 0``.

    ``difference`` is ``B - A``; it is reconstructed from the spectral data when omitted.
    """
    if alpha not in (1, -1):
        raise ValueError("alpha must be +1 or -1")
    if difference is None:
        difference = specB.matrix() - specA.matrix()
    diff = np.asarray(difference, dtype=float)
    scale = max(1.0, float(np.max(np.abs(specA.eigenvalues), initial=0.0)),
                float(np.max(np.abs(specB.eigenvalues), initial=0.0)))
    low = float(np.linalg.eigvalsh(alpha * 0.5 * (diff + diff.T))[0]) if diff.size else 0.0
    if low < -eig_tol * scale:
        raise SignDefinitenessError(f"alpha (B - A) has eigenvalue {low:.3e} < 0")
    T = shift_operator(specA, specB, E, eig_tol)
    plus, minus, _ = _kernel_counts(np.asarray(T.eigenvalues), kernel_tol)
    same, opposite = (plus, minus) if alpha == 1 else (minus, plus)
    one_in_sq = bool(np.max(np.abs(T.eigenvalues), initial=0.0) >= 1.0 - kernel_tol)
    xi = ssf_counting(specA, specB, E, eig_tol)
    return SignDefiniteReport(alpha, xi.value, plus - minus, same, opposite, one_in_sq,
                              T.degenerate or xi.degenerate)
