import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anderson_lab.funcalc import constant, indicator, ramp, smooth_bump
from anderson_lab.shift import (AmbiguousKernelWarning, GridResolutionError, NotAProjectionError, ShiftOperator,
                                SignDefinitenessError, birman_solomyak_matrices, birman_solomyak_residual,
                                index_of_pair, krein_residual, projection_power_identities, shift_operator,
                                sign_definite_checks, ssf_counting)
from anderson_lab.identities import random_projection_pair
from anderson_lab.model import sample_realization
from anderson_lab.spectral import eig

from conftest import random_symmetric


def _psd(rng, n, rank):
    g = rng.normal(size=(n, rank))
    return g @ g.T


def _operator(ev):
    ev = np.asarray(ev, dtype=float)
    return ShiftOperator(np.diag(ev), 0.0, np.sort(ev), np.sort(np.abs(ev))[::-1], 0, 0)


def test_shift_operator_examples():
    A, B = eig(np.diag([0.0, 2.0])), eig(np.diag([1.0, 2.0]))
    assert np.array_equal(shift_operator(A, A, 0.5).matrix, np.zeros((2, 2)))
    T = shift_operator(A, B, 0.5)
    assert np.array_equal(T.matrix, np.diag([1.0, 0.0]))
    assert ssf_counting(A, B, 0.5).value == 1
    assert ssf_counting(A, A, 0.5).value == 0
    assert shift_operator(A, B, 1.0).degenerate


@given(seed=st.integers(0, 2 ** 32), E=st.floats(-2, 2))
def test_shift_operator_invariants(seed, E):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    A, B = eig(random_symmetric(rng, n)), eig(random_symmetric(rng, n))
    T = shift_operator(A, B, E)
    assert np.array_equal(T.matrix, T.matrix.T)
    assert T.norm <= 1.0 + 1e-10
    assert np.all(np.abs(T.eigenvalues) <= 1.0 + 1e-10)
    xi = ssf_counting(A, B, E).value
    assert abs(T.trace - xi) <= 1e-10


@given(seed=st.integers(0, 2 ** 32), tau=st.floats(0.01, 2.0))
def test_ssf_nonnegative_for_positive_perturbation(seed, tau):
    rng = np.random.default_rng(seed)
    H = random_symmetric(rng, 6)
    A, B = eig(H), eig(H + tau * _psd(rng, 6, 2))
    for E in np.linspace(-4, 4, 41):
        assert ssf_counting(A, B, E).value >= 0


def test_index_examples():
    assert index_of_pair(_operator([0.0, 0.0])).theta == 0
    nested = shift_operator(eig(np.diag([0.0, 0.0, 5.0])), eig(np.diag([0.0, 5.0, 5.0])), 1.0)
    assert index_of_pair(nested).theta == 1
    flip = shift_operator(eig(np.diag([0.0, 2.0])), eig(np.diag([2.0, 0.0])), 1.0)
    assert np.array_equal(flip.matrix, np.diag([1.0, -1.0]))
    r = index_of_pair(flip)
    assert (r.dim_ker_plus, r.dim_ker_minus, r.theta) == (1, 1, 0)


def test_index_guard_band():
    with pytest.warns(AmbiguousKernelWarning):
        r = index_of_pair(_operator([1.0 - 1.5e-6, 0.0]))
    assert r.ambiguous == 1 and r.theta == 0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert index_of_pair(_operator([1.0 - 5e-7, 0.0])).theta == 1


def test_power_identities_extremes():
    P = np.diag([1.0, 0.0, 1.0])
    for n in (1, 2, 3):
        assert projection_power_identities(P, P, n) == (0.0, 0.0)
    assert projection_power_identities(np.eye(3), np.zeros((3, 3)), 2) == (0.0, 0.0)
    with pytest.raises(NotAProjectionError):
        projection_power_identities(np.diag([1.0, 0.5]), np.eye(2), 1)
    with pytest.raises(ValueError):
        projection_power_identities(P, P, 0)


@given(seed=st.integers(0, 2 ** 32), n=st.sampled_from([1, 2, 3]))
def test_power_identities_random(seed, n):
    P, Q, _, _ = random_projection_pair(np.random.default_rng(seed), 6)
    assert max(projection_power_identities(P, Q, n)) <= 1e-12


def test_krein_constant_and_ramp():
    A, B = eig(np.diag([0.0])), eig(np.diag([1.0]))
    grid = np.linspace(-1.0, 3.0, 4001)
    assert krein_residual(A, B, constant(2.0), grid) == 0.0
    assert krein_residual(A, B, ramp(0.5, 2.0), grid) <= 1e-6


def test_krein_needs_resolved_grid():
    rng = np.random.default_rng(3)
    H = random_symmetric(rng, 10)
    A, B = eig(H), eig(H + _psd(rng, 10, 3))
    with pytest.raises(GridResolutionError):
        krein_residual(A, B, smooth_bump(0.0, 3.0), np.linspace(-4.0, 4.0, 5))
    with pytest.raises(ValueError):
        krein_residual(A, B, indicator(0.0), np.linspace(-4, 4, 101))


def test_krein_refinement_random():
    rng = np.random.default_rng(11)
    f = smooth_bump(0.0, 3.0)
    for _ in range(5):
        A, B = eig(random_symmetric(rng, 10)), eig(random_symmetric(rng, 10))
        res = [krein_residual(A, B, f, np.linspace(-4.0, 4.0, n)) for n in (1001, 10001, 100001)]
        assert res[-1] < res[0]
        assert res[-1] <= 1e-4


def test_birman_solomyak_two_by_two():
    r = birman_solomyak_matrices(np.diag([0.0, 3.0]), np.diag([1.0, 0.0]), (0.4, 0.6))
    assert r.energy_side == pytest.approx(0.2, abs=1e-14)
    assert r.coupling_side == pytest.approx(0.2, abs=1e-12)
    assert r.residual <= 1e-6 and not r.refinement_unstable


def test_birman_solomyak_zero_perturbation():
    H = random_symmetric(np.random.default_rng(2), 5)
    r = birman_solomyak_matrices(H, np.zeros((5, 5)), (-0.5, 0.5))
    assert r.energy_side == 0.0 and r.coupling_side == 0.0


def test_birman_solomyak_random_refinement():
    rng = np.random.default_rng(8)
    for _ in range(10):
        H = random_symmetric(rng, 8)
        W = np.diag(rng.uniform(0, 2, 8))
        res = [birman_solomyak_matrices(H, W, (-0.5, 0.7), n).residual for n in (16, 64, 256)]
        assert res[-1] <= 1e-12
        assert res[-1] <= res[0] + 1e-13


def test_birman_solomyak_on_model(small_config):
    omega = sample_realization(small_config, 0)
    assert birman_solomyak_residual(small_config, omega, (0.5, 2.0)).residual <= 1e-10


def test_sign_definite_rank_one():
    A = np.diag([0.0, 1.0, 2.0])
    W = np.zeros((3, 3))
    W[1, 1] = 2.0
    r = sign_definite_checks(eig(A), eig(A + W), 1.5, difference=W)
    assert (r.dim_ker_same, r.dim_ker_opposite, r.theta, r.xi) == (1, 0, 1, 1)
    assert r.passed
    neg = sign_definite_checks(eig(A + W), eig(A), 1.5, alpha=-1, difference=-W)
    assert (neg.theta, neg.dim_ker_same, neg.passed) == (-1, 1, True)
    with pytest.raises(SignDefinitenessError):
        sign_definite_checks(eig(A), eig(A + W), 1.5, alpha=-1, difference=W)


def test_sign_definite_identical():
    A = eig(np.diag([0.0, 1.0, 2.0]))
    r = sign_definite_checks(A, A, 0.5)
    assert r.passed and r.theta == 0 and not r.one_in_spectrum_sq


def test_sign_definite_random_instances():
    rng = np.random.default_rng(99)
    checked = 0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        H = random_symmetric(rng, n)
        W = rng.uniform(0.1, 3.0) * _psd(rng, n, int(rng.integers(1, n + 1)))
        A, B = eig(H), eig(H + W)
        E = float(rng.uniform(-2, 2))
        r = sign_definite_checks(A, B, E, difference=W)
        if r.degenerate:
            continue
        checked += 1
        assert r.passed
        # the finite-volume chain: counting difference, trace and index coincide
        assert r.xi == r.theta == round(shift_operator(A, B, E).trace)
    assert checked >= 190
