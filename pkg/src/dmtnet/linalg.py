"""Dense matrix helpers and a Jacobi eigen-solver for SPD certification.

Matrices are plain ``float64`` ndarrays.  Multi-channel SPD tensors are
arrays of shape ``(C, D, D)`` (optionally with leading batch axes), each
channel symmetric positive definite.

The eigen-solver here is a certification oracle.  Nothing on the
forward/backward path of the network calls it.
"""

from typing import NamedTuple

import numpy as np

__all__ = [
    "EigenPair",
    "matmul",
    "hadamard",
    "symmetrize",
    "sym_eig",
    "min_eigenvalue",
    "is_symmetric",
]

MAX_SWEEPS = 100


class EigenPair(NamedTuple):
    """Eigenvalues in ascending order and the matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray


def _as_matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a, b):
    """Matrix product ``a @ b`` with an explicit shape check."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def hadamard(a, b):
    """Element-wise (Schur) product of two equally shaped matrices."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def symmetrize(a):
    """Return ``(a + a^T) / 2`` over the last two axes."""
    a = np.asarray(a, dtype=np.float64)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def is_symmetric(a, rtol=1e-10):
    a = np.asarray(a, dtype=np.float64)
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.max(np.abs(a - np.swapaxes(a, -1, -2)), initial=0.0) <= rtol * scale)


def _round_robin(n):
    """Disjoint (p, q) index pairs for each round of a parallel cyclic sweep."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_norm(a):
    n = a.shape[-1]
    off = a * (1.0 - np.eye(n))
    return np.sqrt(np.sum(off * off, axis=(-2, -1)))


def sym_eig(a, tol=1e-12):
    """Eigendecomposition of a symmetric matrix (or stack) by cyclic Jacobi.

    Each sweep visits every off-diagonal pair once, in round-robin order so
    that the rotations of one round touch disjoint rows and can be applied
    together.  Sweeps stop once the off-diagonal Frobenius norm falls below
    ``tol * ||A||_F``.

    Parameters
    ----------
    a : array_like, shape (..., n, n)
        Symmetric input, within ``1e-10`` relative.
    tol : float
        Relative off-diagonal stopping threshold.

    Returns
    -------
    EigenPair
        ``values`` of shape (..., n), ascending; ``vectors`` of shape
        (..., n, n) with eigenvectors as columns.

    Raises
    ------
    ValueError
        If the input is not square, not finite or not symmetric.
    RuntimeError
        If the off-diagonal residual is still above threshold after
        ``MAX_SWEEPS`` sweeps.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"sym_eig needs square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("sym_eig input contains non-finite entries")
    if not is_symmetric(a):
        raise ValueError("sym_eig input is not symmetric")

    batch_shape = a.shape[:-2]
    n = a.shape[-1]
    work = symmetrize(a).reshape(-1, n, n).copy()
    vecs = np.broadcast_to(np.eye(n), work.shape).copy()
    threshold = tol * np.sqrt(np.sum(work * work, axis=(-2, -1)))
    rounds = _round_robin(n)

    active = np.arange(work.shape[0])
    for _ in range(MAX_SWEEPS + 1):
        off = _off_norm(work[active])
        active = active[off > threshold[active]]
        if active.size == 0:
            break
        A = work[active]
        V = vecs[active]
        for ps, qs in rounds:
            if ps.size == 0:
                continue
            app = A[:, ps, ps]
            aqq = A[:, qs, qs]
            apq = A[:, ps, qs]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                theta = (aqq - app) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(apq == 0.0, 0.0, t)
            t = np.where(np.isfinite(t), t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            J = np.broadcast_to(np.eye(n), A.shape).copy()
            J[:, ps, ps] = c
            J[:, qs, qs] = c
            J[:, ps, qs] = s
            J[:, qs, ps] = -s
            A = np.swapaxes(J, -1, -2) @ A @ J
            A = 0.5 * (A + np.swapaxes(A, -1, -2))
            V = V @ J
        work[active] = A
        vecs[active] = V
    else:
        resid = _off_norm(work[active]) / np.maximum(threshold[active] / tol, 1e-300)
        raise RuntimeError(
            f"Jacobi did not converge after {MAX_SWEEPS} sweeps; "
            f"worst relative off-diagonal residual {np.max(resid):.3e}"
        )

    values = np.diagonal(work, axis1=-2, axis2=-1)
    order = np.argsort(values, axis=-1, kind="stable")
    values = np.take_along_axis(values, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=-1)
    return EigenPair(values.reshape(batch_shape + (n,)), vecs.reshape(batch_shape + (n, n)))


def min_eigenvalue(a):
    """Smallest eigenvalue of a symmetric matrix (or of each in a stack)."""
    values = sym_eig(a).values
    return values[..., 0] if values.ndim > 1 else float(values[0])
