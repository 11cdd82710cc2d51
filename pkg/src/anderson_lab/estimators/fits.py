"""Exponential decay fits with noise-floor trimming."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

NO_FMB_EVIDENCE = "no-FMB-evidence"
IDENTICALLY_ZERO = "identically-zero"
FLOOR_LIMITED = "floor-limited"
TOO_FEW_POINTS = "insufficient-points"

FLOOR_SIGMAS = 3.0


@dataclass(frozen=True, eq=False)
class DecayFit:
    """``mean(x) ~ C exp(-mu x)`` fitted on log-means.

    ``used`` marks the points inside the fit window; ``floored`` marks points
    dropped for being indistinguishable from zero (or below the precision floor).
    """

    abscissa: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_realizations: int
    log_C: float
    mu: float
    r_squared: float
    used: np.ndarray
    floored: np.ndarray
    mu_ci: Tuple[float, float] = (math.nan, math.nan)
    log_C_ci: Tuple[float, float] = (math.nan, math.nan)
    flags: Tuple[str, ...] = ()
    level: float = 0.95
    extra: dict = field(default_factory=dict)

    @property
    def C(self) -> float:
        return math.exp(self.log_C) if math.isfinite(self.log_C) else (0.0 if self.log_C < 0 else math.nan)

    @property
    def window(self) -> Tuple[float, float]:
        x = self.abscissa[self.used]
        return (float(x.min()), float(x.max())) if x.size else (math.nan, math.nan)

    @property
    def decays(self) -> bool:
        return self.mu > 0 and NO_FMB_EVIDENCE not in self.flags

    def table(self):
        n = np.full(self.abscissa.shape, self.n_realizations)
        return self.abscissa, self.mean, self.stderr, n

    def as_dict(self):
        def f(x):
            return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else float(x)
        out = {
            "log_C": f(self.log_C), "C": f(self.C), "mu": f(self.mu), "r_squared": f(self.r_squared),
            "mu_ci": [f(self.mu_ci[0]), f(self.mu_ci[1])],
            "log_C_ci": [f(self.log_C_ci[0]), f(self.log_C_ci[1])],
            "window": [f(self.window[0]), f(self.window[1])],
            "n_used": int(self.used.sum()), "n_floored": int(self.floored.sum()),
            "n_realizations": self.n_realizations, "flags": list(self.flags), "level": self.level,
        }
        out.update(self.extra)
        return out


def fit_decay(abscissa, mean, stderr, n_realizations: int, precision_floor: float = 0.0,
              level: float = 0.95, exclude_zero_distance: bool = True, extra: Optional[dict] = None) -> DecayFit:
    """Least-squares fit of ``log mean = log C - mu x`` over points above the noise floor.

    Points with ``mean < 3 stderr`` or ``mean <= precision_floor`` are flagged and
    excluded. Weights are ``mean / stderr`` (inverse standard error of the log-mean);
    when some retained point has zero stderr the fit is unweighted.
    """
    x = np.asarray(abscissa, dtype=float)
    y = np.asarray(mean, dtype=float)
    se = np.asarray(stderr, dtype=float)
    extra = dict(extra or {})
    candidate = (x > 0) if exclude_zero_distance else np.ones(x.shape, dtype=bool)
    floored = candidate & ((y <= 0) | (y < FLOOR_SIGMAS * se) | (y <= precision_floor))
    used = candidate & ~floored
    flags = []
    nan2 = (math.nan, math.nan)
    if np.all(y[candidate] == 0):
        return DecayFit(x, y, se, n_realizations, -math.inf, math.nan, math.nan, used, floored,
                        nan2, nan2, (IDENTICALLY_ZERO,), level, extra)
    if floored.any():
        flags.append(FLOOR_LIMITED)
    if used.sum() < 2 or np.unique(x[used]).size < 2:
        flags += [TOO_FEW_POINTS, NO_FMB_EVIDENCE]
        return DecayFit(x, y, se, n_realizations, math.nan, math.nan, math.nan, used, floored,
                        nan2, nan2, tuple(flags), level, extra)
    import statsmodels.api as sm

    xu, yu, su = x[used], np.log(y[used]), se[used]
    design = sm.add_constant(xu, has_constant="add")
    if np.all(su > 0):
        model = sm.WLS(yu, design, weights=(y[used] / su) ** 2).fit()
    else:
        model = sm.OLS(yu, design).fit()
    intercept, slope = (float(v) for v in model.params)
    ss_res = float(np.sum(model.wresid ** 2))
    r2 = float(model.rsquared) if math.isfinite(model.rsquared) else (1.0 if ss_res == 0 else math.nan)
    if used.sum() > 2:
        ci = model.conf_int(alpha=1.0 - level)
        log_c_ci = (float(ci[0][0]), float(ci[0][1]))
        mu_ci = (float(-ci[1][1]), float(-ci[1][0]))
    else:
        log_c_ci = mu_ci = nan2
    mu = -slope
    if not (r2 >= 0.5) or mu <= 0:
        flags.append(NO_FMB_EVIDENCE)
    return DecayFit(x, y, se, n_realizations, intercept, mu, r2, used, floored, mu_ci, log_c_ci,
                    tuple(flags), level, extra)
