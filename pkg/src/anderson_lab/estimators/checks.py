"""Eigenvalue-count scaling, below-spectrum resolvent decay, and positivity checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..config import ModelConfig, free_rate
from ..funcalc import BVFunction, apply_function_spectral
from ..mc import mc_map, summarize, z_value
from ..model import apply_perturbation, build_hamiltonian, restrict, spectral_floor
from ..shift import ssf_counting
from ..spectral import DegeneracyError, eig, eigenvalues, ids_estimate, operator_norm, resolvent_block
from .fits import DecayFit, fit_decay
from .scans import PreconditionError, _normalize_box, cell_indices, normalize_pairs, pair_distance

NO_DISORDER = "no-disorder regime, Wegner not applicable"


class HypothesisError(PreconditionError):
    """The configuration does not satisfy the hypothesis a check relies on."""


# ---------------------------------------------------------------------------
# Wegner scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WegnerReport:
    center: float
    lengths: np.ndarray
    L_list: List[int]
    mean: np.ndarray      # shape (len(L_list), len(lengths))
    stderr: np.ndarray
    n_realizations: int
    linear_in_length: bool
    linear_in_volume: bool
    wegner_constant: float
    flags: tuple
    seed: int
    dimension: int = 1

    def table(self):
        """Rows ordered by L then |I|; the abscissa is |I| * L^d."""
        x = np.concatenate([self.lengths * L ** self.dimension for L in self.L_list])
        return x, self.mean.ravel(), self.stderr.ravel(), np.full(x.shape, self.n_realizations)

    def as_dict(self) -> Dict:
        return {"statistic": "interval_eigenvalue_count", "center": self.center,
                "interval_lengths": self.lengths.tolist(), "L_list": self.L_list,
                "mean": self.mean.tolist(), "stderr": self.stderr.tolist(),
                "n_realizations": self.n_realizations, "linear_in_length": self.linear_in_length,
                "linear_in_volume": self.linear_in_volume, "wegner_constant": self.wegner_constant,
                "flags": list(self.flags), "seed": self.seed}


def _consistent(values: np.ndarray, errors: np.ndarray, sigmas: float = 3.0) -> bool:
    """All pairs of values agree within ``sigmas`` combined standard errors."""
    for i in range(values.size):
        for j in range(i + 1, values.size):
            if abs(values[i] - values[j]) > sigmas * math.hypot(errors[i], errors[j]):
                return False
    return True


def wegner_check(config: ModelConfig, lengths: Sequence[float], L_list: Optional[Sequence[int]] = None,
                 center: Optional[float] = None, n: int = 500, seed: Optional[int] = None) -> WegnerReport:
    """``E[Tr 1_I(H_L)]`` for intervals ``I`` of the given lengths centred at ``center``.

    Checks that ``count / |I|`` is stable across lengths and ``count / L^d``
    across box sizes (3 combined standard errors). Realizations are drawn on the
    largest box and restricted.
    """
    lengths = np.asarray(lengths, dtype=float)
    if np.any(lengths < 0):
        raise PreconditionError("interval lengths must be nonnegative")
    Ls = sorted(int(v) for v in (L_list or [config.sites_per_side]))
    if seed is not None:
        config = replace(config, seed=seed)
    config = replace(config, sites_per_side=Ls[-1])
    d = config.dimension
    if center is None:
        bg = float(np.mean(config.background))
        center = bg + config.coupling * config.single_site_law.mean * config.covering_constant + 2.0 * d / config.lattice_spacing ** 2
    lo, hi = center - lengths / 2, center + lengths / 2

    def stat(cfg, omega):
        H = build_hamiltonian(cfg, omega)
        out = []
        for L in Ls:
            ev = eigenvalues(restrict(H, (cfg.box_range(L),) * d))
            out.append(np.searchsorted(ev, hi, side="right") - np.searchsorted(ev, lo, side="left"))
        return np.asarray(out, dtype=float)

    res = summarize(np.asarray(mc_map(stat, config, n)), "interval_eigenvalue_count", config.seed)
    mean, se = np.asarray(res.mean), np.asarray(res.stderr)
    flags = []
    if config.coupling == 0.0 or np.all(se == 0):
        flags.append(NO_DISORDER)
    pos = lengths > 0
    lin_len = all(_consistent(mean[i, pos] / lengths[pos], se[i, pos] / lengths[pos]) for i in range(len(Ls)))
    vols = np.array([L ** d for L in Ls], dtype=float)
    lin_vol = all(_consistent(mean[:, k] / vols, se[:, k] / vols) for k in np.nonzero(pos)[0])
    if NO_DISORDER in flags:
        lin_len = lin_vol = False
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = mean[:, pos] / (lengths[pos][None, :] * vols[:, None])
    wc = float(np.max(ratio)) if ratio.size else 0.0
    return WegnerReport(float(center), lengths, Ls, mean, se, n, bool(lin_len), bool(lin_vol), wc,
                        tuple(flags), config.seed, d)


# ---------------------------------------------------------------------------
# Combes-Thomas
# ---------------------------------------------------------------------------

def combes_thomas_check(config: ModelConfig, E: float, pairs: Sequence, n: int = 500,
                        seed: Optional[int] = None, margin: float = 0.5) -> DecayFit:
    """Pathwise ``max_omega ||chi_a R_E(H^tau) chi_b||`` per pair, fitted against ``|a - b|``.

    Requires ``E <= E0 - margin`` with ``E0`` the spectral floor. For a
    constant background and no disorder in 1D the free lattice decay rate is
    attached for comparison.
    """
    E0 = spectral_floor(config)
    if E > E0 - margin:
        raise PreconditionError(f"E={E} is closer than {margin} to the spectral floor E0={E0}")
    pairs = normalize_pairs(pairs, config.dimension)
    if config.n_sites < 2 or not any(a != b for a, b in pairs):
        raise PreconditionError("no pairs at positive distance (a single site has none)")
    if seed is not None:
        config = replace(config, seed=seed)

    def stat(cfg, omega):
        H = apply_perturbation(build_hamiltonian(cfg, omega), cfg)
        rows = [cell_indices(cfg, H, a) for a, _ in pairs]
        cols = [cell_indices(cfg, H, b) for _, b in pairs]
        all_rows, all_cols = np.unique(np.concatenate(rows)), np.unique(np.concatenate(cols))
        blk = resolvent_block(H, E, all_rows, all_cols, cfg.tolerances.eig_tol).matrix
        return np.array([operator_norm(blk[np.ix_(np.searchsorted(all_rows, r), np.searchsorted(all_cols, c))])
                         for r, c in zip(rows, cols)])

    values = np.asarray(mc_map(stat, config, n))
    worst = values.max(axis=0)
    dist = np.array([pair_distance(a, b) for a, b in pairs])
    extra = {"statistic": "pathwise_max_resolvent_norm", "energy": E, "E0": E0, "seed": config.seed}
    bg = np.unique(np.asarray(config.background, dtype=float))
    if config.dimension == 1 and bg.size == 1:
        extra["free_rate"] = free_rate(E, float(bg[0]), config.lattice_spacing)
    return fit_decay(dist, worst, np.zeros_like(worst), n, extra=extra)


# ---------------------------------------------------------------------------
# positivity of the averaged spectral shift
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PositivityReport:
    statistic: str
    abscissa: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    ci_low: np.ndarray
    reference: np.ndarray     # density of states (ssf) or DOS-weighted integral (ucp)
    positive_points: List[int]
    n_realizations: int
    seed: int
    details: dict

    def table(self):
        return self.abscissa, self.mean, self.stderr, np.full(self.abscissa.shape, self.n_realizations)

    def as_dict(self) -> Dict:
        out = {"statistic": self.statistic, "abscissa": self.abscissa.tolist(), "mean": self.mean.tolist(),
               "stderr": self.stderr.tolist(), "ci_low": self.ci_low.tolist(),
               "reference": self.reference.tolist(), "positive_points": self.positive_points,
               "n_realizations": self.n_realizations, "seed": self.seed}
        out.update(self.details)
        return out


def check_ssf_hypothesis(config: ModelConfig) -> float:
    """Return ``C > 0`` with ``W >= C u_0`` on the support of the bump at the origin, else raise."""
    W = dict(config.perturbation)
    if any(v < 0 for v in W.values()):
        raise HypothesisError("perturbation must be nonnegative")
    ratios = []
    for off, u in config.bump_profile:
        if u > 0:
            w = W.get(off, 0.0)
            if w <= 0:
                raise HypothesisError(f"perturbation vanishes at {off} inside the support of the bump u_0")
            ratios.append(w / u)
    if config.single_site_law.density_lower_bound() <= 0:
        raise HypothesisError("single-site density has no positive lower bound on [0, 1]")
    return float(min(ratios))


def ssf_positivity_scan(config: ModelConfig, energies: Sequence[float], n: int = 500,
                        seed: Optional[int] = None, dos_step: Optional[float] = None, strict: bool = True,
                        level: float = 0.95) -> PositivityReport:
    """``E[xi(E)]`` on a grid next to a finite-difference density of states."""
    C = check_ssf_hypothesis(config)
    grid = np.asarray(energies, dtype=float)
    if seed is not None:
        config = replace(config, seed=seed)
    eig_tol = config.tolerances.eig_tol

    def stat(cfg, omega):
        H = build_hamiltonian(cfg, omega)
        A, B = eig(H, eig_tol), eig(apply_perturbation(H, cfg), eig_tol)
        out = []
        for E in grid:
            xi = ssf_counting(A, B, E, eig_tol)
            if xi.degenerate and strict:
                raise DegeneracyError(f"E={E} lies within eig_tol of an eigenvalue")
            if xi.value < 0:
                raise ArithmeticError(f"negative spectral shift {xi.value} at E={E} for W >= 0")
            out.append(xi.value)
        return np.asarray(out, dtype=float)

    res = summarize(np.asarray(mc_map(stat, config, n)), "spectral_shift", config.seed, level)
    step = dos_step if dos_step is not None else 0.1
    ids = ids_estimate(config, np.concatenate([grid - step, grid + step]), n)
    ids_mean = np.asarray(ids.mean)
    dos = (ids_mean[grid.size:] - ids_mean[:grid.size]) / (2 * step)
    mean, se = np.atleast_1d(res.mean), np.atleast_1d(res.stderr)
    lo = np.atleast_1d(res.confidence_interval[0])
    positive = [int(i) for i in np.nonzero((lo > 0) & (dos > 0))[0]]
    return PositivityReport("spectral_shift", grid, mean, se, lo, dos, positive, n, config.seed,
                            {"W_over_u0": C, "dos_step": step})


def _check_nonnegative_below(f: BVFunction, E: float):
    """Raise unless ``f >= 0`` everywhere and ``f = 0`` on ``(E, inf)``."""
    bp = f.breakpoints()
    point_vals = [f.left_value, f.right_value] + [float(v) for x in bp for v in (f(x), f.left_limit(x), f.right_limit(x))]
    piece_min, above = [], []
    for a, b, poly in f.pieces():
        lo = a if np.isfinite(a) else (b - 1.0 if np.isfinite(b) else 0.0)
        hi = b if np.isfinite(b) else lo + 1.0
        xs = np.linspace(lo, hi, 17)
        piece_min.append(float(poly(xs).min()))
        if hi > E:
            tail = xs[xs > E]
            above.append(float(np.abs(poly(tail)).max()) if tail.size else 0.0)
    if min(point_vals + piece_min) < 0:
        raise PreconditionError("f must be nonnegative")
    above += [abs(float(f(x))) for x in bp if x > E]
    if max(above, default=0.0) > 0:
        raise PreconditionError(f"f must vanish above E={E}")


def ucp_positivity_check(config: ModelConfig, region, f: BVFunction, E: float, n: int = 500,
                         seed: Optional[int] = None, level: float = 0.95) -> PositivityReport:
    """``E[Tr(1_Gamma f(H))]`` with its CI next to the DOS-weighted integral of f.

    ``region`` is a sub-box (inclusive lattice ranges per axis). ``f`` must be
    nonnegative and vanish above ``E``.
    """
    _check_nonnegative_below(f, E)
    box = _normalize_box(region, config.dimension)
    if seed is not None:
        config = replace(config, seed=seed)

    def stat(cfg, omega):
        H = build_hamiltonian(cfg, omega)
        F = apply_function_spectral(eig(H, cfg.tolerances.eig_tol), f).matrix
        sel = H.index_of(restrict(H, box).coords)
        return np.array([np.trace(F[np.ix_(sel, sel)]), np.trace(F) / cfg.n_sites])

    res = summarize(np.asarray(mc_map(stat, config, n)), "localized_trace", config.seed, level)
    mean, se = np.asarray(res.mean), np.asarray(res.stderr)
    lo = np.asarray(res.confidence_interval[0])
    z = z_value(level)
    dos_integral = float(mean[1])
    positive = [0] if (dos_integral - z * se[1] > 0 and lo[0] > 0) else []
    return PositivityReport("localized_trace", np.array([float(E)]), mean[:1], se[:1], lo[:1],
                            np.array([dos_integral]), positive, n, config.seed,
                            {"region": [list(r) for r in box], "dos_integral_stderr": float(se[1]),
                             "dos_integral_positive": bool(dos_integral - z * se[1] > 0),
                             "implication_holds": bool(not (dos_integral - z * se[1] > 0) or lo[0] > 0)})
