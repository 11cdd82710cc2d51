import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anderson_lab.config import ModelConfig, free_rate
from anderson_lab.estimators import (FLOOR_LIMITED, IDENTICALLY_ZERO, NO_DISORDER, NO_FMB_EVIDENCE,
                                     HypothesisError, PreconditionError, ao_probability, boundary_decay_scan,
                                     combes_thomas_check, convergence_scan, fit_decay, fmb_scan, hoelder_scan,
                                     kernel_decay_scan, ssf_positivity_scan, ucp_positivity_check, wegner_check)
from anderson_lab.funcalc import constant, indicator, interval_indicator
from anderson_lab.model import spectral_floor


def _line(k_max, step=1, start=0):
    return [((0,), (k,)) for k in range(start, k_max + 1, step)]


def perturbed(L=30, tau=1.0, coupling=1.0, seed=3, w=1.0):
    return ModelConfig(L, coupling=coupling, perturbation=(((0,), w),), perturbation_strength=tau, seed=seed)


@given(mu=st.floats(0.05, 2.0), log_c=st.floats(-3, 3))
def test_fit_recovers_exact_exponential(mu, log_c):
    x = np.arange(1.0, 11.0)
    y = np.exp(log_c - mu * x)
    fit = fit_decay(x, y, 0.01 * y, 100)
    assert fit.mu == pytest.approx(mu, rel=1e-9)
    assert fit.log_C == pytest.approx(log_c, abs=1e-8)
    assert fit.r_squared == pytest.approx(1.0) and fit.decays


def test_fit_flags():
    x = np.arange(0.0, 6.0)
    zero = fit_decay(x, np.zeros(6), np.zeros(6), 10)
    assert zero.flags == (IDENTICALLY_ZERO,) and not zero.decays
    y = np.exp(-x)
    se = np.full(6, 0.02)
    fit = fit_decay(x, y, se, 10)
    assert FLOOR_LIMITED in fit.flags
    assert not fit.used[0] and not fit.used[-1] and fit.floored[-1]
    grow = fit_decay(x, np.exp(x), np.zeros(6), 10)
    assert NO_FMB_EVIDENCE in grow.flags


def test_fmb_zero_distance_not_fitted():
    fit = fmb_scan(ModelConfig(20, coupling=0.0), -1.0, [((0,), (0,)), ((0,), (2,)), ((0,), (4,))], n=1)
    assert not fit.used[0] and fit.mean[0] > 0


def test_fmb_free_decay():
    # with no disorder the fractional moment decays at s times the free rate
    fit = fmb_scan(ModelConfig(100, coupling=0.0), -1.0, _line(20, 2), s=0.5, n=1)
    assert fit.mu == pytest.approx(0.5 * free_rate(-1.0), rel=1e-6)
    with pytest.raises(PreconditionError):
        fmb_scan(ModelConfig(10), 0.0, _line(2), s=1.0, n=1)
    with pytest.raises(PreconditionError):
        fmb_scan(ModelConfig(10), 0.0, _line(2), eta_grid=[0.0], n=1)


def test_kernel_scan_vanishes_without_perturbation():
    fit = kernel_decay_scan(perturbed(tau=0.0), indicator(1.0), [((k,), (k,)) for k in range(0, 6)], n=4)
    assert fit.flags == (IDENTICALLY_ZERO,)
    assert np.all(fit.mean == 0)


def test_kernel_scan_rejects_non_members():
    with pytest.raises(PreconditionError):
        kernel_decay_scan(perturbed(), constant(1.0), [((0,), (0,))], n=1)


def test_boundary_scan_needs_margin():
    cfg = perturbed(L=30)
    lo, hi = cfg.box_range()
    with pytest.raises(PreconditionError):
        boundary_decay_scan(cfg, indicator(1.0), ((lo, hi),), [(0, 0)], n=1)
    fit = boundary_decay_scan(perturbed(L=30, tau=0.0), indicator(1.0), ((lo + 2, hi - 2),),
                              [(k, k) for k in range(0, 6)], n=2)
    assert fit.mean.shape == (6,)


def test_convergence_trivial_cases():
    zero = convergence_scan("ssf-volume", perturbed(L=40, tau=0.0), [20, 30, 40], n=3, E=1.0)
    assert zero.flags == (IDENTICALLY_ZERO,)
    for kind in ("kernel-volume", "overlap-volume"):
        fit = convergence_scan(kind, perturbed(L=40, tau=0.0), [20, 30, 40], n=2, E=1.0,
                               f=indicator(1.0), window=3)
        assert np.all(fit.mean == 0)
    with pytest.raises(PreconditionError):
        convergence_scan("ssf-volume", perturbed(L=40), [20, 40], n=1, E=1.0)
    with pytest.raises(PreconditionError):
        convergence_scan("nope", perturbed(L=40), [20, 30, 40], n=1, E=1.0)


def test_hoelder_trivial_cases():
    r = hoelder_scan(perturbed(tau=0.0), [0.3, 0.9, 1.7], n=3)
    assert r.identically_zero and np.all(r.mean == 0)
    with pytest.raises(PreconditionError):
        hoelder_scan(perturbed(), [0.5], n=1)


def test_hoelder_reports_exponent():
    r = hoelder_scan(perturbed(L=40, coupling=3.0), np.linspace(0.55, 2.45, 6), n=40)
    assert not r.identically_zero and r.delta.size == 15
    for a in r.per_alpha:
        assert np.all(r.mean <= a["C_sup"] * r.delta ** a["alpha"] * (1 + 1e-12))
    assert math.isfinite(r.exponent)


def test_orthogonality_without_perturbation():
    r = ao_probability(perturbed(L=40, tau=0.0), 2.0, n=10, taus=(0.0,))
    assert r.p_index == [0.0] and r.p_zero == [0.0] and r.mean_overlap == [1.0]


def test_orthogonality_forced_index():
    # three sites: a large bump on the middle site always lifts the ground state above E
    cfg = ModelConfig(3, coupling=0.1, perturbation=(((0,), 10.0),), perturbation_strength=1.0, seed=2)
    r = ao_probability(cfg, 1.0, n=20, taus=(1.0,))
    assert r.p_index == [1.0] and r.p_zero == [1.0] and r.sign_definite


def test_wegner_examples():
    w = wegner_check(ModelConfig(40, coupling=2.0, seed=3), [0.0, 0.5, 1.0], [20, 40], n=200)
    assert np.all(w.mean[:, 0] == 0)
    # doubling the box doubles the expected count
    for k in (1, 2):
        assert abs(w.mean[1, k] - 2 * w.mean[0, k]) <= 3 * math.hypot(w.stderr[1, k], 2 * w.stderr[0, k])
    assert w.linear_in_volume and not w.flags
    free = wegner_check(ModelConfig(40, coupling=0.0), [0.5, 1.0], [20, 40], n=3)
    assert NO_DISORDER in free.flags and not free.linear_in_length
    with pytest.raises(PreconditionError):
        wegner_check(ModelConfig(10), [-1.0], n=1)


def test_combes_thomas_free_rate():
    cfg = ModelConfig(100, coupling=0.0)
    E = spectral_floor(cfg) - 1.0
    fit = combes_thomas_check(cfg, E, _line(20, 2), n=1)
    assert fit.mu == pytest.approx(free_rate(E), rel=0.05)
    assert fit.extra["free_rate"] == pytest.approx(free_rate(E))


def test_combes_thomas_with_disorder():
    cfg = perturbed(L=60, coupling=1.0)
    fit = combes_thomas_check(cfg, spectral_floor(cfg) - 1.0, _line(20, 2), n=20)
    assert fit.mu > 0 and fit.r_squared >= 0.95


def test_combes_thomas_preconditions():
    with pytest.raises(PreconditionError):
        combes_thomas_check(ModelConfig(1), -5.0, [((0,), (0,))], n=1)
    with pytest.raises(PreconditionError):
        combes_thomas_check(ModelConfig(10), 0.0, _line(2), n=1)


def test_ssf_positivity_without_perturbation():
    r = ssf_positivity_scan(perturbed(tau=0.0), [0.5, 1.5, 2.5], n=5)
    assert np.all(r.mean == 0) and r.positive_points == []


def test_ssf_positivity_hypothesis():
    cfg = ModelConfig(20, perturbation=(((1,), 1.0),), perturbation_strength=1.0)
    with pytest.raises(HypothesisError):
        ssf_positivity_scan(cfg, [1.0], n=1)
    with pytest.raises(HypothesisError):
        ssf_positivity_scan(perturbed(w=-1.0), [1.0], n=1)


def test_ucp_examples():
    cfg = perturbed(L=20)
    lo, hi = cfg.box_range()
    zero = ucp_positivity_check(cfg, ((lo, hi),), constant(0.0), 1.0, n=3)
    assert zero.mean[0] == 0.0
    f = interval_indicator(0.5, 1.5)
    full = ucp_positivity_check(cfg, ((lo, hi),), f, 1.5, n=10)
    assert full.mean[0] == pytest.approx(full.reference[0] * cfg.n_sites, rel=1e-12)
    with pytest.raises(PreconditionError):
        ucp_positivity_check(cfg, ((lo, hi),), f, 1.0, n=1)
    with pytest.raises(PreconditionError):
        ucp_positivity_check(cfg, ((lo, hi),), interval_indicator(0.5, 1.5) * -1.0, 2.0, n=1)
