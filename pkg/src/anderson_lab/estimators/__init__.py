"""Disorder-averaged estimators, decay fits and consistency checks."""

from .checks import (NO_DISORDER, HypothesisError, PositivityReport, WegnerReport, check_ssf_hypothesis,
                     combes_thomas_check, ssf_positivity_scan, ucp_positivity_check, wegner_check)
from .fits import (FLOOR_LIMITED, IDENTICALLY_ZERO, NO_FMB_EVIDENCE, TOO_FEW_POINTS, DecayFit, fit_decay)
from .orthogonality import DEFAULT_TAUS, AOReport, ao_probability
from .scans import (CONVERGENCE_KINDS, DEFAULT_ETAS, SPECTRAL_FLOOR, HoelderReport, PreconditionError,
                    boundary_decay_scan, boundary_distance, convergence_scan, fmb_scan, hoelder_scan,
                    kernel_decay_scan, kernel_tau_sweep)

__all__ = [name for name in dir() if not name.startswith("_")]
