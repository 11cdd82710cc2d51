"""Probability of orthogonality: index of the projection pair versus vanishing overlap."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..config import ModelConfig
from ..mc import mc_map, summarize, wilson_interval, z_value
from ..model import apply_perturbation, build_hamiltonian
from ..overlap import DEFAULT_ZERO_THRESHOLD, infinite_volume_overlap_proxy, overlap_lower_bound
from ..shift import _kernel_counts, shift_operator
from ..spectral import DegeneracyError, eig

DEFAULT_TAUS = (0.5, 0.25, 0.1, 0.05)


@dataclass(frozen=True, eq=False)
class AOReport:
    energy: float
    taus: List[float]
    n_realizations: int
    p_index: List[float]
    p_index_ci: List[tuple]
    p_zero: List[float]
    p_zero_ci: List[tuple]
    difference_ci: List[tuple]
    agree: List[bool]
    mean_overlap: List[float]
    overlap_stderr: List[float]
    monotone_within_ci: bool
    trend_to_one: bool
    bound_checked: int
    bound_violations: int
    ambiguous_kernels: int
    sign_definite: bool
    seed: int
    level: float = 0.95

    @property
    def coexistence(self) -> List[bool]:
        """Wilson interval for P[theta != 0] strictly inside (0, 1)."""
        return [lo > 0.0 and hi < 1.0 for lo, hi in self.p_index_ci]

    def table(self):
        t = np.asarray(self.taus)
        return t, np.asarray(self.mean_overlap), np.asarray(self.overlap_stderr), np.full(t.shape, self.n_realizations)

    def as_dict(self) -> Dict:
        return {
            "statistic": "orthogonality_probability", "energy": self.energy, "taus": self.taus,
            "n_realizations": self.n_realizations,
            "p_index_nonzero": self.p_index, "p_index_wilson": [list(c) for c in self.p_index_ci],
            "p_overlap_zero": self.p_zero, "p_overlap_zero_wilson": [list(c) for c in self.p_zero_ci],
            "paired_difference_ci": [list(c) for c in self.difference_ci], "agree": self.agree,
            "coexistence": self.coexistence,
            "mean_overlap": self.mean_overlap, "overlap_stderr": self.overlap_stderr,
            "overlap_monotone_within_ci": self.monotone_within_ci, "overlap_trend_to_one": self.trend_to_one,
            "lower_bound_checked": self.bound_checked, "lower_bound_violations": self.bound_violations,
            "ambiguous_kernels": self.ambiguous_kernels, "sign_definite": self.sign_definite,
            "seed": self.seed, "level": self.level,
        }


def ao_probability(config: ModelConfig, E: float, n: int = 500, taus: Sequence[float] = DEFAULT_TAUS,
                   zero_threshold: float = DEFAULT_ZERO_THRESHOLD, kernel_tol: Optional[float] = None,
                   seed: Optional[int] = None, strict: bool = True, level: float = 0.95) -> AOReport:
    """Estimate ``P[theta != 0]`` and ``P[S = 0]`` on the configured box, for each tau.

    ``S`` is ``det(1 - T^2)^(1/4)`` from the shift operator of the box (the
    infinite-volume proxy) and is reported as zero when ``1`` is numerically in
    the spectrum of ``T^2``. Taus are swept in the given order; ``E[S]`` should
    rise towards 1 as tau decreases.
    """
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("need at least one tau")
    if seed is not None:
        config = replace(config, seed=seed)
    tol = config.tolerances.kernel_tol if kernel_tol is None else kernel_tol
    eig_tol = config.tolerances.eig_tol
    wvals = np.array([v for _, v in config.perturbation])
    sign_definite = bool(wvals.size and (np.all(wvals >= 0) or np.all(wvals <= 0)))

    def stat(cfg, omega):
        H = build_hamiltonian(cfg, omega)
        A = eig(H, eig_tol)
        rows = []
        for t in taus:
            B = eig(apply_perturbation(H, cfg, t), eig_tol)
            T = shift_operator(A, B, E, eig_tol)
            if T.degenerate and strict:
                raise DegeneracyError(f"E={E} lies within eig_tol of an eigenvalue")
            plus, minus, amb = _kernel_counts(np.asarray(T.eigenvalues), tol)
            S = infinite_volume_overlap_proxy(T, zero_threshold, tol)
            checked = violated = 0
            if T.norm < 1.0 - tol:
                checked = 1
                violated = int(not overlap_lower_bound(T, S)[2])
            rows.append([float(plus - minus != 0), float(S.zero_flag), S.value, checked, violated, amb])
        return np.asarray(rows)

    data = np.asarray(mc_map(stat, config, n))  # (n, n_tau, 6)
    z = z_value(level)
    p1, p1_ci, p2, p2_ci, dci, agree, mS, seS = [], [], [], [], [], [], [], []
    for k in range(len(taus)):
        th, zf = data[:, k, 0], data[:, k, 1]
        k1, k2 = int(th.sum()), int(zf.sum())
        p1.append(k1 / n)
        p2.append(k2 / n)
        p1_ci.append(wilson_interval(k1, n, level))
        p2_ci.append(wilson_interval(k2, n, level))
        diff = summarize(th - zf, "index_minus_zero", config.seed, level)
        dci.append((float(diff.confidence_interval[0]), float(diff.confidence_interval[1])))
        agree.append(dci[-1][0] <= 0.0 <= dci[-1][1])
        s = summarize(data[:, k, 2], "overlap", config.seed, level)
        mS.append(float(s.mean))
        seS.append(float(s.stderr))
    # along the sweep order, E[S] must not drop significantly (paired differences)
    monotone = True
    for k in range(1, len(taus)):
        d = summarize(data[:, k, 2] - data[:, k - 1, 2], "overlap_step", config.seed, level)
        step_up = taus[k] < taus[k - 1]
        lo, hi = d.confidence_interval
        if (step_up and hi < 0) or (not step_up and lo > 0):
            monotone = False
    order = np.argsort(taus)
    gaps = 1.0 - np.asarray(mS)[order]
    trend = bool(np.all(np.diff(gaps) >= -z * np.hypot(np.asarray(seS)[order][1:], np.asarray(seS)[order][:-1])))
    return AOReport(float(E), taus, n, p1, p1_ci, p2, p2_ci, dci, agree, mS, seS, monotone, trend,
                    int(data[:, :, 3].sum()), int(data[:, :, 4].sum()), int(data[:, :, 5].sum()),
                    sign_definite, config.seed, level)
