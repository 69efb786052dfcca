import math

import numpy as np
import pytest

from dmtnet.layers import SpdKernelBank, materialize_kernels, spd_activate, spd_conv_forward
from dmtnet.oracles import (
    band_matrix,
    certify_spd,
    general_log_euclidean,
    hadamard_series_oracle,
    kernel_factorize,
    matrix_log,
    toeplitz_conv_oracle,
)


def _factor(w):
    return np.column_stack(kernel_factorize(w))


def test_factorize_identity():
    H = _factor(np.eye(3))
    np.testing.assert_allclose(H @ H.T, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(np.abs(H), np.eye(3), atol=1e-15)


def test_factorize_scaled_identity():
    np.testing.assert_allclose(np.abs(_factor(4 * np.eye(2))), 2 * np.eye(2))


def test_factorize_reconstructs(rng, spd):
    w = spd(rng, 3)
    H = _factor(w)
    assert np.abs(H @ H.T - w).max() < 1e-10


def test_factorize_rejects_indefinite():
    with pytest.raises(ValueError):
        kernel_factorize(np.diag([1.0, -1.0]))


def test_band_matrix_layout():
    np.testing.assert_array_equal(band_matrix([5.0, 7.0], 3), [[5, 7, 0], [0, 5, 7]])
    with pytest.raises(ValueError):
        band_matrix([1.0, 2.0, 3.0], 2)


def test_toeplitz_scalar_kernel(rng, spd):
    x = spd(rng, 5)
    np.testing.assert_allclose(toeplitz_conv_oracle(x, np.array([[3.0]])), 3 * x)


@pytest.mark.parametrize("d,k", [(8, 3), (6, 1), (12, 5), (5, 5)])
def test_toeplitz_matches_direct_conv(rng, spd, d, k):
    x = spd(rng, d)
    bank = SpdKernelBank(rng.normal(size=(1, 1, k, k)))
    direct = spd_conv_forward(x[None], bank)[0]
    oracle = toeplitz_conv_oracle(x, materialize_kernels(bank)[0, 0])
    assert np.abs(direct - oracle).max() < 1e-10


def test_series_zero_matrix():
    np.testing.assert_array_equal(hadamard_series_oracle(np.zeros((3, 3)), "exp"), np.ones((3, 3)))


def test_series_sinh_diagonal():
    x = np.diag([0.3, -1.2, 2.0])
    np.testing.assert_allclose(hadamard_series_oracle(x, "sinh"), np.diag(np.sinh([0.3, -1.2, 2.0])), atol=1e-14)


def test_series_matches_exp(rng):
    x = rng.uniform(-2, 2, size=(6, 6))
    assert np.abs(hadamard_series_oracle(x, "exp", 20) - np.exp(x)).max() < 1e-12
    y = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert np.abs(hadamard_series_oracle(y, "exp") - spd_activate(y, "exp")).max() < 1e-12


def test_series_rejects_bad_arguments():
    with pytest.raises(ValueError):
        hadamard_series_oracle(np.eye(2), "tan")
    with pytest.raises(ValueError):
        hadamard_series_oracle(np.eye(2), "exp", 0)


def test_certify_identity_channels():
    cert = certify_spd(np.stack([np.eye(3)] * 2))
    assert cert.passed
    np.testing.assert_allclose(cert.min_eigenvalues, [1, 1])


def test_certify_reports_failing_channel():
    cert = certify_spd(np.stack([np.eye(2), np.diag([1.0, -1.0]), np.eye(2)]))
    assert not cert.passed
    assert cert.failed_channels == [1]


def test_certify_flags_asymmetry():
    cert = certify_spd(np.array([[2.0, 1.0], [0.0, 2.0]]))
    assert not cert.passed


def test_certify_random_kernels(rng):
    for _ in range(200):
        k = int(rng.integers(1, 6))
        assert certify_spd(materialize_kernels(SpdKernelBank(rng.normal(size=(k, k))))).passed


def test_log_euclidean_cases(rng, spd):
    a = spd(rng, 4)
    assert general_log_euclidean(a, a) == pytest.approx(0.0, abs=1e-12)
    assert general_log_euclidean(3.0 * np.eye(5), np.eye(5)) == pytest.approx(math.sqrt(5) * math.log(3))
    np.testing.assert_allclose(matrix_log(np.diag([1.0, math.e])), np.diag([0.0, 1.0]), atol=1e-15)
