"""Disorder-averaged decay scans: resolvent fractional moments, kernels, boundary effects, volume
convergence, and the energy modulus of the Fermi-projection difference."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import ModelConfig
from ..funcalc import BVFunction, apply_function_spectral
from ..mc import mc_map, summarize, z_value
from ..model import Hamiltonian, apply_perturbation, box_coords, build_hamiltonian, restrict
from ..overlap import ground_state_overlap, infinite_volume_overlap_proxy
from ..shift import shift_operator
from ..spectral import (DegeneracyError, counting_function, eig, operator_norm, resolvent_block,
                        schatten_norm)
from .fits import DecayFit, fit_decay

DEFAULT_ETAS = (1.0, 1e-1, 1e-2, 1e-3, 1e-4)
SPECTRAL_FLOOR = 1e-12  # eigenvector-based kernels carry absolute errors near machine precision

Point = Tuple[int, ...]
Pair = Tuple[Point, Point]


class PreconditionError(ValueError):
    """A documented precondition of an estimator is violated."""


def _point(p) -> Point:
    return tuple(int(v) for v in np.atleast_1d(p))


def normalize_pairs(pairs: Sequence, dimension: int) -> List[Pair]:
    out = []
    for a, b in pairs:
        a, b = _point(a), _point(b)
        if len(a) != dimension or len(b) != dimension:
            raise PreconditionError(f"pair {(a, b)} does not match dimension {dimension}")
        out.append((a, b))
    return out


def cell_sites(config: ModelConfig, point: Point) -> np.ndarray:
    """Lattice sites of the unit cell attached to an integer physical point."""
    m = config.cells_per_unit
    base = np.asarray(point) * m
    offs = box_coords(m, config.dimension) + m // 2  # 0..m-1 per axis
    return base[None, :] + offs


def cell_indices(config: ModelConfig, H: Hamiltonian, point: Point) -> np.ndarray:
    return H.index_of(cell_sites(config, point))


def pair_distance(a: Point, b: Point) -> float:
    return float(np.linalg.norm(np.subtract(a, b)))


def require_class_member(f: BVFunction):
    """f must be constant far left and vanish far right (an explicit class tag is validated on creation)."""
    if f.interval is None and f.right_value != 0.0:
        raise PreconditionError(f"{f.label or 'f'} does not vanish at +infinity")


def _check_degenerate(flag: bool, strict: bool, what: str):
    if flag and strict:
        raise DegeneracyError(f"{what} lies within eig_tol of an eigenvalue")


# ---------------------------------------------------------------------------
# fractional moments of the resolvent
# ---------------------------------------------------------------------------

def fmb_scan(config: ModelConfig, E: float, pairs: Sequence, eta_grid: Sequence[float] = DEFAULT_ETAS,
             s: float = 0.5, n: int = 500, seed: Optional[int] = None, level: float = 0.95) -> DecayFit:
    """``max_eta E[||chi_a R_{E+i eta} chi_b||^s]`` per pair, fitted against ``|a - b|``.

    The sup over eta is replaced by a max over ``eta_grid`` (a lower bound on the sup).
    """
    if not 0 < s < 1:
        raise PreconditionError("fractional moment exponent s must lie in (0, 1)")
    etas = np.asarray(eta_grid, dtype=float)
    if etas.size == 0 or np.any(etas == 0):
        raise PreconditionError("eta grid must be nonempty and must not contain 0")
    if seed is not None:
        config = replace(config, seed=seed)
    pairs = normalize_pairs(pairs, config.dimension)

    def stat(cfg, omega):
        H = build_hamiltonian(cfg, omega)
        H = apply_perturbation(H, cfg) if cfg.perturbation_strength else H
        rows = [cell_indices(cfg, H, a) for a, _ in pairs]
        cols = [cell_indices(cfg, H, b) for _, b in pairs]
        all_rows, all_cols = np.unique(np.concatenate(rows)), np.unique(np.concatenate(cols))
        out = np.empty((etas.size, len(pairs)))
        for i, eta in enumerate(etas):
            blk = resolvent_block(H, E + 1j * eta, all_rows, all_cols).matrix
            for j, (r, c) in enumerate(zip(rows, cols)):
                sub = blk[np.ix_(np.searchsorted(all_rows, r), np.searchsorted(all_cols, c))]
                out[i, j] = operator_norm(sub) ** s
        return out

    res = summarize(np.asarray(mc_map(stat, config, n)), "fractional_moment", config.seed, level)
    best = np.argmax(res.mean, axis=0)
    cols = np.arange(len(pairs))
    mean, stderr = res.mean[best, cols], res.stderr[best, cols]
    dist = np.array([pair_distance(a, b) for a, b in pairs])
    extra = {"statistic": "fractional_moment", "energy": E, "s": s, "eta_grid": etas.tolist(),
             "eta_argmax": etas[best].tolist(), "seed": config.seed}
    return fit_decay(dist, mean, stderr, n, level=level, extra=extra)


# ---------------------------------------------------------------------------
# kernels of f(H) - f(H^tau)
# ---------------------------------------------------------------------------

def _kernel_stat(config, f, p, pairs, strict):
    eig_tol = config.tolerances.eig_tol

    def stat(cfg, omega):
        H = build_hamiltonian(cfg, omega)
        Ht = apply_perturbation(H, cfg)
        fa = apply_function_spectral(eig(H, eig_tol), f, eig_tol)
        fb = apply_function_spectral(eig(Ht, eig_tol), f, eig_tol)
        _check_degenerate(fa.degenerate or fb.degenerate, strict, "a jump of f")
        D = fa.matrix - fb.matrix
        out = np.empty(len(pairs))
        for j, (a, b) in enumerate(pairs):
            out[j] = schatten_norm(D[np.ix_(cell_indices(cfg, H, a), cell_indices(cfg, H, b))], p)
        return out
    return stat


def kernel_decay_scan(config: ModelConfig, f: BVFunction, pairs: Sequence, p: float = 1.0, n: int = 500,
                      seed: Optional[int] = None, strict: bool = True, level: float = 0.95) -> DecayFit:
    """``E[||chi_a (f(H) - f(H^tau)) chi_b||_p]`` per pair, fitted against ``|a| + |b|``."""
    require_class_member(f)
    if seed is not None:
        config = replace(config, seed=seed)
    pairs = normalize_pairs(pairs, config.dimension)
    stat = _kernel_stat(config, f, p, pairs, strict)
    res = summarize(np.asarray(mc_map(stat, config, n)), "kernel_difference", config.seed, level)
    x = np.array([np.linalg.norm(a) + np.linalg.norm(b) for a, b in pairs], dtype=float)
    extra = {"statistic": "kernel_difference", "p": p, "function": f.label, "tau": config.perturbation_strength,
             "seed": config.seed}
    return fit_decay(x, res.mean, res.stderr, n, precision_floor=SPECTRAL_FLOOR, level=level,
                     exclude_zero_distance=False, extra=extra)


def _normalize_box(box, dimension) -> Tuple[Tuple[int, int], ...]:
    if len(box) == 2 and np.isscalar(box[0]):
        box = (box,)
    box = tuple((int(lo), int(hi)) for lo, hi in box)
    if len(box) != dimension:
        raise PreconditionError("box needs one (lo, hi) range per axis")
    return box


def boundary_distance(site: Sequence[int], box) -> int:
    """Lattice steps from a site of ``box`` to the first site outside it."""
    return int(min(min(x - lo + 1, hi + 1 - x) for x, (lo, hi) in zip(site, box)))


def boundary_decay_scan(config: ModelConfig, f: BVFunction, subbox, pairs: Sequence, p: float = 1.0,
                        outer_box=None, n: int = 500, seed: Optional[int] = None, strict: bool = True,
                        level: float = 0.95) -> DecayFit:
    """``E[||chi_a (f(H^tau_G) - f(H^tau_Gt)) chi_b||_p]`` against ``dist(a, dG) + dist(b, dG)``.

    ``G = subbox`` must sit at least one site inside ``Gt = outer_box`` on every side
    (``outer_box`` defaults to the configured box). Pairs are lattice sites of G.
    """
    d = config.dimension
    G = _normalize_box(subbox, d)
    full = (config.box_range(),) * d
    Gt = _normalize_box(outer_box, d) if outer_box is not None else full
    for (lo, hi), (tlo, thi), (flo, fhi) in zip(G, Gt, full):
        if tlo < flo or thi > fhi:
            raise PreconditionError("outer box is not inside the configured box")
        if lo < tlo + 1 or hi > thi - 1:
            raise PreconditionError("sub-box must keep a margin of at least one site inside the outer box")
    pairs = normalize_pairs(pairs, d)
    for a, b in pairs:
        for site in (a, b):
            if any(not lo <= x <= hi for x, (lo, hi) in zip(site, G)):
                raise PreconditionError(f"site {site} is not in the sub-box")
    if seed is not None:
        config = replace(config, seed=seed)
    eig_tol = config.tolerances.eig_tol

    def stat(cfg, omega):
        H = apply_perturbation(build_hamiltonian(cfg, omega), cfg)
        Hg, Ht = restrict(H, G), restrict(H, Gt)
        fg = apply_function_spectral(eig(Hg, eig_tol), f, eig_tol)
        ft = apply_function_spectral(eig(Ht, eig_tol), f, eig_tol)
        _check_degenerate(fg.degenerate or ft.degenerate, strict, "a jump of f")
        out = np.empty(len(pairs))
        for j, (a, b) in enumerate(pairs):
            ig, jg = Hg.index_of([a]), Hg.index_of([b])
            it, jt = Ht.index_of([a]), Ht.index_of([b])
            out[j] = schatten_norm(fg.matrix[np.ix_(ig, jg)] - ft.matrix[np.ix_(it, jt)], p)
        return out

    res = summarize(np.asarray(mc_map(stat, config, n)), "boundary_difference", config.seed, level)
    x = np.array([boundary_distance(a, G) + boundary_distance(b, G) for a, b in pairs], dtype=float)
    extra = {"statistic": "boundary_difference", "p": p, "function": f.label, "subbox": [list(r) for r in G],
             "outer_box": [list(r) for r in Gt], "seed": config.seed}
    return fit_decay(x, res.mean, res.stderr, n, precision_floor=SPECTRAL_FLOOR, level=level,
                     exclude_zero_distance=False, extra=extra)


# ---------------------------------------------------------------------------
# convergence in the volume
# ---------------------------------------------------------------------------

CONVERGENCE_KINDS = ("kernel-volume", "ssf-volume", "overlap-volume")


def _box_of(config: ModelConfig, L: int):
    return (config.box_range(L),) * config.dimension


def convergence_scan(kind: str, config: ModelConfig, L_list: Sequence[int], n: int = 500,
                     E: Optional[float] = None, f: Optional[BVFunction] = None, p: float = 1.0,
                     window: Optional[int] = None, seed: Optional[int] = None, strict: bool = True,
                     level: float = 0.95) -> DecayFit:
    """Discrepancy between nested boxes and the largest box (the infinite-volume proxy).

    ``kernel-volume``: ``||chi_w (D_L - D_proxy) chi_w||_p`` with ``D = f(H) - f(H^tau)``
    on the window of lattice radius ``window`` around the origin;
    ``ssf-volume``: ``|xi_L(E) - xi_proxy(E)|``;
    ``overlap-volume``: ``|S_L(E) - S_proxy(E)|`` with ``S_proxy = det(1 - T^2)^(1/4)``.
    Realizations are drawn on the proxy box and restricted.
    """
    if kind not in CONVERGENCE_KINDS:
        raise PreconditionError(f"unknown convergence kind {kind!r}")
    Ls = [int(v) for v in L_list]
    if len(Ls) < 3:
        raise PreconditionError("convergence_scan needs at least 3 box sizes (the last is the proxy)")
    if any(b < a for a, b in zip(Ls, Ls[1:])):
        raise PreconditionError("L list must be ascending")
    if kind == "kernel-volume" and f is None:
        raise PreconditionError("kernel-volume needs a function f")
    if kind != "kernel-volume" and E is None:
        raise PreconditionError(f"{kind} needs an energy E")
    L_proxy = Ls[-1]
    config = replace(config, sites_per_side=L_proxy, **({"seed": seed} if seed is not None else {}))
    for L in Ls:
        config.check_perturbation_fits(L)
    d = config.dimension
    if window is None:
        window = max(0, Ls[0] // 4)
    win_box = ((-window, window),) * d
    lo0, hi0 = config.box_range(Ls[0])
    if -window < lo0 or window > hi0:
        raise PreconditionError("kernel window does not fit in the smallest box")
    eig_tol = config.tolerances.eig_tol
    kernel_tol = config.tolerances.kernel_tol

    def stat(cfg, omega):
        H = build_hamiltonian(cfg, omega)
        Ht = apply_perturbation(H, cfg)
        vals = {}
        for L in Ls:
            box = _box_of(cfg, L)
            A, B = eig(restrict(H, box), eig_tol), eig(restrict(Ht, box), eig_tol)
            if kind == "kernel-volume":
                fa = apply_function_spectral(A, f, eig_tol)
                fb = apply_function_spectral(B, f, eig_tol)
                _check_degenerate(fa.degenerate or fb.degenerate, strict, "a jump of f")
                Hl = restrict(H, box)
                idx = restrict(Hl, win_box).coords
                sel = Hl.index_of(idx)
                vals[L] = (fa.matrix - fb.matrix)[np.ix_(sel, sel)]
            elif kind == "ssf-volume":
                ca, cb = counting_function(A, E, eig_tol), counting_function(B, E, eig_tol)
                _check_degenerate(ca.degenerate or cb.degenerate, strict, f"E={E}")
                vals[L] = ca.value - cb.value
            else:
                if L == L_proxy:
                    T = shift_operator(A, B, E, eig_tol)
                    _check_degenerate(T.degenerate, strict, f"E={E}")
                    vals[L] = infinite_volume_overlap_proxy(T, kernel_tol=kernel_tol).value
                else:
                    S = ground_state_overlap(A, B, E, eig_tol=eig_tol)
                    _check_degenerate(S.degenerate, strict, f"E={E}")
                    vals[L] = S.value
        ref = vals[L_proxy]
        out = []
        for L in Ls[:-1]:
            if kind == "kernel-volume":
                out.append(schatten_norm(vals[L] - ref, p))
            else:
                out.append(abs(vals[L] - ref))
        return np.asarray(out, dtype=float)

    res = summarize(np.asarray(mc_map(stat, config, n)), f"{kind}-discrepancy", config.seed, level)
    x = np.asarray(Ls[:-1], dtype=float) * config.lattice_spacing
    extra = {"statistic": f"{kind}-discrepancy", "kind": kind, "L_list": Ls, "proxy_L": L_proxy,
             "energy": E, "p": p, "window": window, "seed": config.seed,
             "ci_low": np.atleast_1d(res.confidence_interval[0]).tolist(),
             "ci_high": np.atleast_1d(res.confidence_interval[1]).tolist()}
    floor = SPECTRAL_FLOOR if kind == "kernel-volume" else 0.0
    return fit_decay(x, res.mean, res.stderr, n, precision_floor=floor, level=level, extra=extra)


# ---------------------------------------------------------------------------
# Hölder modulus in the energy
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HoelderReport:
    pairs: List[Tuple[float, float]]
    delta: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_realizations: int
    exponent: float
    exponent_ci: Tuple[float, float]
    log_C: float
    per_alpha: List[Dict]
    identically_zero: bool
    seed: int
    level: float = 0.95

    def table(self):
        return self.delta, self.mean, self.stderr, np.full(self.delta.shape, self.n_realizations)

    def as_dict(self):
        def f(x):
            return None if not math.isfinite(x) else float(x)
        return {"statistic": "trace_norm_modulus", "energy_pairs": [list(p) for p in self.pairs],
                "exponent": f(self.exponent), "exponent_ci": [f(self.exponent_ci[0]), f(self.exponent_ci[1])],
                "log_C": f(self.log_C), "per_alpha": self.per_alpha, "identically_zero": self.identically_zero,
                "n_realizations": self.n_realizations, "seed": self.seed, "level": self.level}


def hoelder_scan(config: ModelConfig, energies: Sequence[float], alphas: Sequence[float] = (0.25, 0.5, 1.0),
                 n: int = 500, seed: Optional[int] = None, strict: bool = True,
                 level: float = 0.95) -> HoelderReport:
    """``E ||T(E) - T(E')||_1`` over all grid pairs, with a log-log exponent fit.

    For each alpha, ``C_alpha`` is the least-squares constant at that fixed
    exponent; a pair violates when its lower confidence bound exceeds
    ``C_alpha |E - E'|^alpha``. ``C_sup`` is the smallest constant that bounds
    every tested mean.
    """
    grid = np.asarray(energies, dtype=float)
    pairs = [(float(grid[i]), float(grid[j])) for i in range(grid.size) for j in range(i + 1, grid.size)]
    if not pairs:
        raise PreconditionError("need at least two energies")
    if seed is not None:
        config = replace(config, seed=seed)
    eig_tol = config.tolerances.eig_tol

    def stat(cfg, omega):
        H = build_hamiltonian(cfg, omega)
        A, B = eig(H, eig_tol), eig(apply_perturbation(H, cfg), eig_tol)
        Ts = {}
        for E in grid:
            T = shift_operator(A, B, E, eig_tol)
            _check_degenerate(T.degenerate, strict, f"E={E}")
            Ts[float(E)] = T.matrix
        return np.array([np.sum(np.abs(np.linalg.eigvalsh(Ts[e2] - Ts[e1]))) for e1, e2 in pairs])

    res = summarize(np.asarray(mc_map(stat, config, n)), "trace_norm_modulus", config.seed, level)
    delta = np.array([abs(e2 - e1) for e1, e2 in pairs])
    mean, stderr = np.atleast_1d(res.mean), np.atleast_1d(res.stderr)
    z = z_value(level)
    if np.all(mean == 0):
        per_alpha = [{"alpha": a, "C_fit": 0.0, "C_sup": 0.0, "violations": 0, "holds": True} for a in alphas]
        return HoelderReport(pairs, delta, mean, stderr, n, math.nan, (math.nan, math.nan), -math.inf,
                             per_alpha, True, config.seed, level)
    pos = mean > 0
    import statsmodels.api as sm

    model = sm.OLS(np.log(mean[pos]), sm.add_constant(np.log(delta[pos]), has_constant="add")).fit()
    log_c, expo = (float(v) for v in model.params)
    if pos.sum() > 2:
        ci = model.conf_int(alpha=1.0 - level)
        expo_ci = (float(ci[1][0]), float(ci[1][1]))
    else:
        expo_ci = (math.nan, math.nan)
    per_alpha = []
    for a in alphas:
        c_fit = float(np.exp(np.mean(np.log(mean[pos]) - a * np.log(delta[pos]))))
        c_sup = float(np.max(mean / delta ** a))
        viol = int(np.sum(mean - z * stderr > c_fit * delta ** a))
        per_alpha.append({"alpha": float(a), "C_fit": c_fit, "C_sup": c_sup, "violations": viol,
                          "holds": viol == 0})
    return HoelderReport(pairs, delta, mean, stderr, n, expo, expo_ci, log_c, per_alpha, False,
                         config.seed, level)


def kernel_tau_sweep(config: ModelConfig, f: BVFunction, pairs: Sequence, taus: Sequence[float],
                     p: float = 1.0, n: int = 500, seed: Optional[int] = None, level: float = 0.95) -> Dict:
    """Fitted kernel intercepts across perturbation strengths, counting non-monotone steps."""
    fits = [kernel_decay_scan(replace(config, perturbation_strength=float(t)), f, pairs, p, n, seed,
                              level=level) for t in taus]
    # a violation is an intercept whose interval lies entirely below the previous one
    violations = 0
    for prev, cur in zip(fits, fits[1:]):
        prev_lo = prev.log_C_ci[0] if math.isfinite(prev.log_C_ci[0]) else prev.log_C
        cur_hi = cur.log_C_ci[1] if math.isfinite(cur.log_C_ci[1]) else cur.log_C
        if math.isfinite(prev_lo) and math.isfinite(cur_hi) and cur_hi < prev_lo:
            violations += 1
    return {"taus": [float(t) for t in taus], "fits": [fit.as_dict() for fit in fits],
            "monotonicity_violations": violations}
