import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anderson_lab.identities import (interpolation, projection_suite, quasi_triangle, quasinorm_suite,
                                     random_matrix, random_projection, random_projection_pair)
from anderson_lab.spectral import singular_values


@given(seed=st.integers(0, 2 ** 32), dim=st.integers(1, 10), data=st.data())
def test_random_projection_is_projection(seed, dim, data):
    rank = data.draw(st.integers(0, dim))
    P, U = random_projection(np.random.default_rng(seed), dim, rank)
    assert np.array_equal(P, P.T)
    assert np.allclose(P @ P, P, atol=1e-13)
    assert round(np.trace(P)) == rank and U.shape == (dim, rank)


def test_projection_pair_rank_defaults():
    rng = np.random.default_rng(0)
    ranks = {round(np.trace(random_projection_pair(rng, 3)[0])) for _ in range(60)}
    assert ranks == {0, 1, 2, 3}


def test_random_matrix_spread():
    s = singular_values(random_matrix(np.random.default_rng(1), (6, 4), spread=3.0))
    assert s.size == 4 and s[0] <= 1.0 + 1e-12 and s[-1] >= 1e-3 * (1 - 1e-12)


def test_quasi_triangle_example():
    A = np.diag([1.0, 0.0])
    B = np.diag([0.0, 1.0])
    lhs, rhs = quasi_triangle(A, B, 0.5)
    assert (lhs, rhs) == (2.0, 2.0)
    lhs, rhs = quasi_triangle(A, A, 0.5)
    assert lhs == pytest.approx(2 ** 0.5) and rhs == 2.0


def test_interpolation_example():
    A = np.diag([2.0, 1.0])
    lhs, rhs = interpolation(A, 1.0, 0.5)
    assert lhs == pytest.approx(3.0) and rhs == pytest.approx(2 ** 0.5 * (2 ** 0.5 + 1.0))
    with pytest.raises(ValueError):
        interpolation(A, 0.5, 0.5)


def test_suites_small():
    rng = np.random.default_rng(5)
    assert projection_suite(rng, 6, 30).passed
    q = quasinorm_suite(rng, 6, 30)
    assert q.passed and q.checks == 30 * 3 * 6
