import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anderson_lab.config import ModelConfig
from anderson_lab.funcalc import apply_function_spectral, indicator
from anderson_lab.model import laplacian
from anderson_lab.spectral import (SpectrumProximityError, counting_function, eig, ids_estimate, operator_norm,
                                   resolvent_block, schatten_norm)

from conftest import random_symmetric


def test_diagonal_eig():
    s = eig(np.diag([3.0, 1.0, 2.0]))
    assert np.array_equal(s.eigenvalues, [1.0, 2.0, 3.0])
    assert np.array_equal(np.abs(s.eigenvectors), np.eye(3)[:, [1, 2, 0]])


def test_laplacian_closed_form():
    s = eig(laplacian(5, 1))
    assert np.allclose(s.eigenvalues, 2 - 2 * np.cos(np.arange(1, 6) * np.pi / 6), atol=1e-14)


@pytest.mark.parametrize("tridiagonal", [False, True])
def test_reconstruction(rng, tridiagonal):
    H = random_symmetric(rng, 50)
    if tridiagonal:
        H = np.triu(np.tril(H, 1), -1)
    s = eig(H)
    assert np.max(np.abs(s.matrix() - H)) <= 1e-10
    assert np.max(np.abs(s.eigenvectors.T @ s.eigenvectors - np.eye(50))) <= 1e-10
    assert np.all(np.diff(s.eigenvalues) >= 0)


def test_sign_convention_first_component_positive(rng):
    v = eig(random_symmetric(rng, 8)).eigenvectors
    first = v[np.argmax(np.abs(v) > 1e-8, axis=0), np.arange(8)]
    assert np.all(first > 0)


def test_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_scalar_resolvent():
    assert resolvent_block(np.array([[2.0]]), 0.0, [0], [0]).matrix[0, 0] == 0.5


@pytest.mark.parametrize("banded", [False, True])
def test_resolvent_against_spectral_oracle(rng, banded):
    H = random_symmetric(rng, 20)
    if banded:
        H = np.triu(np.tril(H, 2), -2)
    z = 1 + 0.1j
    s = eig(H)
    oracle = (s.eigenvectors / (s.eigenvalues - z)) @ s.eigenvectors.T
    a, b = [0, 3, 7], [1, 2, 19]
    blk = resolvent_block(H, z, a, b).matrix
    ref = oracle[np.ix_(a, b)]
    assert np.max(np.abs(blk - ref)) <= 1e-8 * np.max(np.abs(ref))
    conj = resolvent_block(H, np.conj(z), b, a).matrix
    assert np.allclose(conj, np.conj(blk).T, rtol=1e-12, atol=0)


def test_real_energy_near_eigenvalue_refused():
    with pytest.raises(SpectrumProximityError):
        resolvent_block(np.diag([0.0, 1.0]), 1.0, [0], [0])


@given(seed=st.integers(0, 2 ** 32), eta=st.floats(1e-3, 10), E=st.floats(-5, 5))
def test_resolvent_bound(seed, eta, E):
    H = random_symmetric(np.random.default_rng(seed), 12)
    blk = resolvent_block(H, E + 1j * eta, range(4), range(6, 12))
    assert operator_norm(blk) <= (1 + 1e-12) / eta


def test_norm_examples():
    assert operator_norm(np.zeros((3, 2))) == 0.0
    assert operator_norm(np.diag([3.0, -4.0])) == pytest.approx(4.0)
    assert schatten_norm(np.eye(2), 1) == pytest.approx(2.0)
    assert schatten_norm(np.diag([3.0, 4.0]), 2) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        schatten_norm(np.eye(2), 0)


matrices = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(-10, 10, allow_subnormal=False))


@given(M=matrices)
def test_schatten_monotone_in_p(M):
    ps = [0.25, 0.5, 1.0, 2.0, 4.0, np.inf]
    vals = [schatten_norm(M, p) for p in ps]
    assert all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(vals, vals[1:]))


@given(A=arrays(np.float64, (4, 5), elements=st.floats(-5, 5)),
       B=arrays(np.float64, (5, 3), elements=st.floats(-5, 5)), p=st.sampled_from([0.5, 1.0, 2.0]))
def test_product_bound(A, B, p):
    assert schatten_norm(A @ B, p) <= operator_norm(A) * schatten_norm(B, p) * (1 + 1e-10) + 1e-12


def test_counting_examples():
    s = eig(np.diag([0.0, 1.0, 2.0]))
    assert counting_function(s, -1.0) == (0, False)
    assert counting_function(s, 5.0) == (3, False)
    assert counting_function(s, 1.0) == (2, True)


@given(seed=st.integers(0, 2 ** 32), E=st.floats(-4, 4))
def test_counting_matches_trace(seed, E):
    s = eig(random_symmetric(np.random.default_rng(seed), 9))
    count = counting_function(s, E)
    if not count.degenerate:
        assert round(np.trace(apply_function_spectral(s, indicator(E)).matrix)) == count.value


def test_ids_free_and_floor():
    cfg = ModelConfig(16, coupling=0.0)
    res = ids_estimate(cfg, [-0.5, 1.0, 5.0], 5)
    free = 2 - 2 * np.cos(np.arange(1, 17) * np.pi / 17)
    assert res.mean[0] == 0.0 and res.mean[2] == 1.0
    assert res.mean[1] == np.sum(free <= 1.0) / 16
    assert np.all(res.stderr == 0)


def test_ids_volume_consistency():
    grid = np.linspace(0.5, 4.5, 5)
    small = ids_estimate(ModelConfig(64, coupling=1.0, seed=1), grid, 200)
    big = ids_estimate(ModelConfig(128, coupling=1.0, seed=2), grid, 200)
    assert np.all(np.abs(small.mean - big.mean) <= 3 * np.hypot(small.stderr, big.stderr) + 1.0 / 64)
