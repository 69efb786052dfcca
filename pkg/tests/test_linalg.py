import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmtnet.linalg import EigenPair, hadamard, is_symmetric, matmul, min_eigenvalue, sym_eig, symmetrize


def test_matmul_identity():
    a = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(matmul(np.eye(3), a), a)
    np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], np.eye(2)), [[1, 2], [3, 4]])


def test_matmul_frozen_product():
    np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[5, 6], [7, 8]]), [[19, 22], [43, 50]])


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_hadamard_cases():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(hadamard(a, np.ones((2, 2))), a)
    np.testing.assert_array_equal(hadamard(np.eye(2), np.eye(2)), np.eye(2))
    np.testing.assert_array_equal(hadamard([[2, 1], [1, 2]], [[3, 1], [1, 3]]), [[6, 1], [1, 6]])
    with pytest.raises(ValueError):
        hadamard(np.ones((2, 2)), np.ones((3, 3)))


def test_symmetrize_and_check():
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    s = symmetrize(a)
    assert is_symmetric(s)
    assert not is_symmetric(a)


def test_eig_diagonal():
    pair = sym_eig(np.diag([2.0, 3.0]))
    assert isinstance(pair, EigenPair)
    np.testing.assert_allclose(pair.values, [2, 3])
    np.testing.assert_allclose(np.abs(pair.vectors), np.eye(2))


def test_eig_two_by_two():
    np.testing.assert_allclose(sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]])).values, [1, 3], atol=1e-14)


def test_eig_identity():
    np.testing.assert_allclose(sym_eig(np.eye(5)).values, np.ones(5))


def test_eig_rejects_bad_input():
    with pytest.raises(ValueError):
        sym_eig(np.ones((2, 3)))
    with pytest.raises(ValueError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        sym_eig(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_min_eigenvalue_examples():
    assert min_eigenvalue(np.eye(4)) == pytest.approx(1.0)
    assert min_eigenvalue(np.diag([0.5, 7.0])) == pytest.approx(0.5)
    assert min_eigenvalue(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(1.0)


def test_eig_batched_matches_numpy(rng):
    a = rng.normal(size=(20, 7, 7))
    a = a + np.swapaxes(a, -1, -2)
    pair = sym_eig(a)
    np.testing.assert_allclose(pair.values, np.linalg.eigvalsh(a), atol=1e-11)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_eig_invariants(n, seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(n, n))
    a = a + a.T
    vals, vecs = sym_eig(a)
    scale = max(1.0, np.abs(a).max())
    assert np.all(np.diff(vals) >= 0)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(n), atol=1e-11)
    np.testing.assert_allclose((vecs * vals) @ vecs.T, a, atol=1e-11 * scale * n)
