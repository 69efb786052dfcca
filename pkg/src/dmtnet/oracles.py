"""Brute-force constructions used to certify the layer implementations.

None of this is fast; all of it is independent of the code it checks.
Convolution is rebuilt from banded matrices, activations from truncated
Hadamard power series, and the log-Euclidean metric from a full Jacobi
eigendecomposition.

Index layout of the banded construction: input ``X`` is D x D, the kernel
is K x K, and each band matrix ``G_h`` is (D - K + 1) x D with
``G_h[i, i + p] = h[p]``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import is_symmetric, sym_eig

__all__ = [
    "kernel_factorize",
    "band_matrix",
    "toeplitz_conv_oracle",
    "hadamard_series_oracle",
    "SpdCertificate",
    "certify_spd",
    "general_log_euclidean",
    "matrix_log",
]


def kernel_factorize(w):
    """Columns ``h_1 .. h_K`` of a factor ``H`` with ``H H^T = W``.

    Uses the symmetric square root ``H = U diag(sqrt(lambda))``.
    """
    w = np.asarray(w, dtype=np.float64)
    pair = sym_eig(w)
    if pair.values[0] <= 0:
        raise ValueError(f"kernel is not SPD (min eigenvalue {pair.values[0]:.3e})")
    H = pair.vectors * np.sqrt(pair.values)
    return [H[:, i].copy() for i in range(H.shape[1])]


def band_matrix(h, d):
    """Banded (d - K + 1) x d matrix with ``h`` shifted one column per row."""
    h = np.asarray(h, dtype=np.float64)
    k = h.size
    rows = d - k + 1
    if rows < 1:
        raise ValueError(f"band of length {k} does not fit in dimension {d}")
    G = np.zeros((rows, d))
    for i in range(rows):
        G[i, i : i + k] = h
    return G


def toeplitz_conv_oracle(x, w):
    """Single-channel valid convolution as a sum of congruences ``G X G^T``."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    d, k = x.shape[0], w.shape[0]
    if d < k:
        raise ValueError(f"input size {d} is smaller than kernel size {k}")
    out = np.zeros((d - k + 1, d - k + 1))
    for h in kernel_factorize(w):
        G = band_matrix(h, d)
        out += G @ x @ G.T
    return out


def hadamard_series_oracle(x, kind="exp", terms=20):
    """Truncated element-wise power series of exp, sinh or cosh.

    ``terms`` counts the summands kept: powers ``0..terms-1`` for exp,
    the first ``terms`` odd powers for sinh, the first ``terms`` even
    powers for cosh.
    """
    if terms < 1:
        raise ValueError("terms must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if kind == "exp":
        powers = range(terms)
    elif kind == "sinh":
        powers = range(1, 2 * terms, 2)
    elif kind == "cosh":
        powers = range(0, 2 * terms, 2)
    else:
        raise ValueError(f"unknown series {kind!r}")
    out = np.zeros_like(x)
    for n in powers:
        term = np.ones_like(x)
        for _ in range(n):
            term = term * x
        out += term / math.factorial(n)
    return out


@dataclass
class SpdCertificate:
    """Per-channel symmetry residual and smallest eigenvalue."""

    symmetry_residual: np.ndarray
    min_eigenvalues: np.ndarray
    thresholds: np.ndarray
    passed_channels: np.ndarray
    failed_channels: list = field(default_factory=list)

    @property
    def passed(self):
        return bool(np.all(self.passed_channels))

    @property
    def worst_margin(self):
        """Smallest ``min_eigenvalue / (trace / D)`` over channels."""
        return float(np.min(self.min_eigenvalues / np.maximum(self.thresholds / 1e-10, 1e-300)))


def certify_spd(x, sym_rtol=1e-12, eig_rtol=1e-10):
    """Certify every channel of ``x`` (shape (..., D, D)) as SPD.

    A channel passes iff its asymmetry is at most ``sym_rtol`` times its
    largest entry and its smallest eigenvalue exceeds
    ``-eig_rtol * trace / D``.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    mats = x.reshape(-1, d, d)
    scale = np.max(np.abs(mats), axis=(-2, -1))
    resid = np.max(np.abs(mats - np.swapaxes(mats, -1, -2)), axis=(-2, -1))
    sym_ok = resid <= sym_rtol * scale
    # the oracle needs exact symmetry; asymmetric channels already fail above
    sym_part = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    if np.all(np.isfinite(sym_part)):
        mins = sym_eig(sym_part).values[:, 0]
    else:
        mins = np.full(mats.shape[0], -np.inf)
    thresholds = eig_rtol * np.abs(np.trace(mats, axis1=-2, axis2=-1)) / d
    eig_ok = mins > -thresholds
    ok = sym_ok & eig_ok
    return SpdCertificate(
        symmetry_residual=resid,
        min_eigenvalues=mins,
        thresholds=thresholds,
        passed_channels=ok,
        failed_channels=[int(i) for i in np.flatnonzero(~ok)],
    )


def matrix_log(a):
    """Matrix logarithm of an SPD matrix through its eigendecomposition."""
    pair = sym_eig(a)
    if pair.values[0] <= 0:
        raise ValueError(f"matrix is not SPD (min eigenvalue {pair.values[0]:.3e})")
    return (pair.vectors * np.log(pair.values)) @ pair.vectors.T


def general_log_euclidean(a, b):
    """Frobenius distance between matrix logarithms of two SPD matrices."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if not (is_symmetric(a) and is_symmetric(b)):
        raise ValueError("inputs must be symmetric")
    diff = matrix_log(a) - matrix_log(b)
    return float(np.sqrt(np.sum(diff * diff)))
