"""Manifold-preserving layers: SPD convolution, activation, recursion,
diagonalizing, and the classification head.

Every function accepts plain arrays or tape :class:`~dmtnet.autodiff.Var`
values.  Multi-channel SPD tensors have shape ``(..., C, D, D)``.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from . import autodiff as ad

log = logging.getLogger(__name__)

ACTIVATIONS = ("exp", "sinh", "cosh")
CLAMP_THRESHOLD = 30.0
PROB_FLOOR = 1e-15


def sym(x):
    """``(x + x^T) / 2``; absorbs rounding drift after each layer."""
    return ad.mul(ad.add(x, ad.transpose(x)), 0.5)


# -- convolution ----------------------------------------------------------


@dataclass
class SpdKernelBank:
    """Raw kernel factors ``V`` of shape (C_out, C_in, K, K)."""

    V: Any
    epsilon: float = 1e-4

    @property
    def out_channels(self):
        return ad.value_of(self.V).shape[0]

    @property
    def in_channels(self):
        return ad.value_of(self.V).shape[1]

    @property
    def kernel_size(self):
        return ad.value_of(self.V).shape[-1]


def materialize_kernels(bank):
    """Kernels ``W = V^T V + eps I`` for every (out, in) channel pair."""
    if not bank.epsilon > 0:
        raise ValueError(f"kernel epsilon must be positive, got {bank.epsilon}")
    k = bank.kernel_size
    return ad.add(ad.matmul(ad.transpose(bank.V), bank.V), bank.epsilon * np.eye(k))


def spd_conv_forward(x, bank, certify=False):
    """Valid, stride-1 cross-correlation of a multi-channel SPD tensor.

    ``F[m]_{ij} = sum_c sum_{p,q} W[m,c]_{pq} X[c]_{i+p, j+q}``, output
    size ``D - K + 1``.  With ``certify=True`` the input is checked with
    the eigen oracle first and a non-SPD channel raises ``ValueError``.
    """
    return conv_with_kernels(x, materialize_kernels(bank), certify)


def conv_with_kernels(x, W, certify=False):
    """Same as :func:`spd_conv_forward` for already materialized kernels
    ``W`` of shape (C_out, C_in, K, K).  No SPD check is made on ``W``."""
    xv = ad.value_of(x)
    out_c, in_c, k, _ = ad.value_of(W).shape
    if xv.ndim < 3:
        raise ValueError(f"expected (..., C, D, D) input, got shape {xv.shape}")
    c, d = xv.shape[-3], xv.shape[-1]
    if d < k:
        raise ValueError(f"input size {d} is smaller than kernel size {k}")
    if c != in_c:
        raise ValueError(f"input has {c} channels, kernels expect {in_c}")
    if certify:
        from .oracles import certify_spd

        report = certify_spd(xv.reshape(-1, d, d))
        if not report.passed:
            raise ValueError(f"input channel {report.failed_channels[0] % c} is not SPD")

    lead = xv.shape[:-3]
    out = sym(ad.conv2d_valid(ad.reshape(x, (-1, c, d, d)), W))
    size = d - k + 1
    return ad.reshape(out, lead + (out_c, size, size))


# -- activations -------------------------------------------------------------


def clamp_scale(x, tau=CLAMP_THRESHOLD):
    """Rescale each matrix whose largest |entry| exceeds ``tau`` down to ``tau``.

    A positive scalar factor keeps SPD, unlike entry-wise clipping.
    """
    m = ad.max_abs_entry(x)
    hit = (ad.value_of(m) > tau).astype(np.float64)
    if not hit.any():
        return x
    log.info("overflow guard rescaled %d matrices (max |entry| %.3g)", int(hit.sum()), float(np.max(ad.value_of(m))))
    factor = ad.div(tau * hit + (1.0 - hit), ad.add(ad.mul(m, hit), 1.0 - hit))
    return ad.mul(x, factor)


def spd_activate(x, kind="sinh"):
    """Element-wise exp / sinh / cosh of each channel (SPD in, SPD out)."""
    if kind not in ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}; choose from {ACTIVATIONS}")
    x = clamp_scale(x)
    return getattr(ad, kind)(x)


def gate_activation(x):
    """Gate nonlinearity ``exp(X) / max(exp(X))`` with element-wise exp.

    Computed as ``exp(X - max X)``, which is the same matrix without the
    overflow.  Entries lie in (0, 1] and the largest one is exactly 1.
    """
    return ad.exp(ad.sub(x, ad.max_entry(x)))


# -- recursive layer ----------------------------------------------------------


@dataclass
class RecursiveParams:
    """Per-channel projections, shape (C, D_in, D_hidden), and raw gate biases.

    Effective biases are ``beta ** 2`` so they stay non-negative.
    ``bias_mode`` chooses whether a bias enters as ``b * J`` (all-ones
    matrix) or ``b * I``.
    """

    W_fr: Any
    W_hr: Any
    W_fz: Any
    W_hz: Any
    W_fh: Any
    beta_r: Any
    beta_z: Any
    beta_h: Any
    epsilon: float = 1e-4
    bias_mode: str = "J"

    @property
    def channels(self):
        return ad.value_of(self.W_fr).shape[0]

    @property
    def input_dim(self):
        return ad.value_of(self.W_fr).shape[1]

    @property
    def hidden_dim(self):
        return ad.value_of(self.W_fr).shape[2]

    def projections(self):
        return {
            "W_fr": self.W_fr,
            "W_hr": self.W_hr,
            "W_fz": self.W_fz,
            "W_hz": self.W_hz,
            "W_fh": self.W_fh,
        }


@dataclass
class RecursiveState:
    H: Any
    R: Optional[Any] = None
    Z: Optional[Any] = None


def check_projection_rank(p, tol=1e-12):
    """Warn for any projection whose Gram matrix ``W^T W`` is not PD to ``tol``.

    Returns the names of the offending projections.
    """
    deficient = []
    eye = np.eye(p.hidden_dim)
    for name, W in p.projections().items():
        Wv = ad.value_of(W)
        gram = np.swapaxes(Wv, -1, -2) @ Wv
        try:
            np.linalg.cholesky(gram - tol * eye)
        except np.linalg.LinAlgError:
            deficient.append(name)
    if deficient:
        warnings.warn(
            f"rank-deficient recursive projections {deficient}; "
            "the epsilon term still keeps the hidden state PD",
            RuntimeWarning,
            stacklevel=2,
        )
    return deficient


def _bilinear(W, X):
    return ad.matmul(ad.matmul(ad.transpose(W), X), W)


def _bias(beta, p):
    shape = (p.hidden_dim, p.hidden_dim)
    base = np.ones(shape) if p.bias_mode == "J" else np.eye(p.hidden_dim)
    return ad.mul(ad.square(beta), base)


def initial_state(batch_shape, p):
    return RecursiveState(H=np.zeros(tuple(batch_shape) + (p.channels, p.hidden_dim, p.hidden_dim)))


def spd_gru_step(f_t, state, p):
    """One step of the SPD gated recursion, channel by channel.

    ::

        R = gate(Wfr' F Wfr + Whr' H Whr + b_r + eps I)
        Z = gate(Wfz' F Wfz + Whz' H Whz + b_z + eps I)
        H~ = sinh(Wfh' F Wfh + H o R + b_h + eps I)
        H_new = Z o H + H~
    """
    if p.bias_mode not in ("J", "I"):
        raise ValueError(f"bias_mode must be 'J' or 'I', got {p.bias_mode!r}")
    H = state.H
    eps_eye = p.epsilon * np.eye(p.hidden_dim)

    def pre_gate(W_f, W_h, beta):
        s = ad.add(_bilinear(W_f, f_t), _bilinear(W_h, H))
        return sym(ad.add(ad.add(s, _bias(beta, p)), eps_eye))

    R = gate_activation(pre_gate(p.W_fr, p.W_hr, p.beta_r))
    Z = gate_activation(pre_gate(p.W_fz, p.W_hz, p.beta_z))
    cand = ad.add(_bilinear(p.W_fh, f_t), ad.mul(H, R))
    cand = sym(ad.add(ad.add(cand, _bias(p.beta_h, p)), eps_eye))
    H_tilde = spd_activate(cand, "sinh")
    H_new = sym(ad.add(ad.mul(Z, H), H_tilde))
    return RecursiveState(H=H_new, R=R, Z=Z)


def spd_gru_rollout(seq, p, return_all=False):
    """Fold :func:`spd_gru_step` over ``seq`` starting from a zero state.

    ``seq`` is a non-empty list of multi-channel SPD tensors.  Returns the
    final state, or every state when ``return_all`` is set.
    """
    if len(seq) == 0:
        raise ValueError("recursive layer needs at least one time step")
    first = ad.value_of(seq[0])
    if first.shape[-3] != p.channels or first.shape[-1] != p.input_dim:
        raise ValueError(
            f"input step shape {first.shape} does not match projections "
            f"(C={p.channels}, D_in={p.input_dim})"
        )
    check_projection_rank(p)
    state = initial_state(first.shape[:-3], p)
    states = []
    for f_t in seq:
        state = spd_gru_step(f_t, state, p)
        states.append(state)
    return states if return_all else state


# -- diagonalizing layer and metric ------------------------------------------


def diagonalize_forward(z):
    """Non-zero diagonal of the diagonalized map: flatten(exp(Z)) per channel.

    ``z`` has shape (..., C, D, D); the result has shape (..., C * D * D).
    The diagonal matrix itself is never built.
    """
    zv = ad.value_of(z)
    lead = zv.shape[:-3]
    return ad.reshape(spd_activate(z, "exp"), lead + (-1,))


def diag_log_euclidean_distance(d1, d2):
    """Log-Euclidean distance between two diagonal SPD matrices given by their diagonals."""
    d1 = np.asarray(d1, dtype=np.float64)
    d2 = np.asarray(d2, dtype=np.float64)
    if d1.shape != d2.shape:
        raise ValueError(f"length mismatch: {d1.shape} vs {d2.shape}")
    if np.any(d1 <= 0) or np.any(d2 <= 0):
        raise ValueError("diagonal entries must be strictly positive")
    diff = np.log(d1) - np.log(d2)
    return float(np.sqrt(np.dot(diff, diff)))


# -- head ------------------------------------------------------------------------


@dataclass
class HeadParams:
    fc_weight: Any
    fc_bias: Any
    out_weight: Any
    out_bias: Any


def head_logits(feat, h):
    fv = ad.value_of(feat)
    if fv.shape[-1] != ad.value_of(h.fc_weight).shape[0]:
        raise ValueError(
            f"feature length {fv.shape[-1]} does not match fc weight "
            f"{ad.value_of(h.fc_weight).shape}"
        )
    hidden = ad.tanh(ad.add(ad.matmul(feat, h.fc_weight), h.fc_bias))
    return ad.add(ad.matmul(hidden, h.out_weight), h.out_bias)


def head_forward(feat, h):
    """Fully connected layer, tanh, linear output, softmax."""
    return ad.softmax(head_logits(feat, h))


def cross_entropy_loss(probs, labels):
    """Summed negative log-likelihood of the true labels.

    Probabilities at the true label below ``1e-15`` are clamped there with a
    warning.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    if probs.shape[0] != labels.shape[0]:
        raise ValueError(f"{probs.shape[0]} probability rows for {labels.shape[0]} labels")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise ValueError("label out of range")
    picked = probs[np.arange(labels.size), labels]
    if np.any(picked < PROB_FLOOR):
        warnings.warn("zero probability at a true label; clamped to 1e-15", RuntimeWarning, stacklevel=2)
        picked = np.maximum(picked, PROB_FLOOR)
    return float(-np.sum(np.log(picked)))


def cross_entropy_from_logits(logits, labels):
    """Tape-friendly summed cross-entropy computed from raw logits."""
    lv = ad.value_of(logits)
    onehot = np.zeros_like(lv)
    onehot[np.arange(lv.shape[0]), np.asarray(labels, dtype=np.intp)] = 1.0
    return ad.neg(ad.sum(ad.mul(ad.log_softmax(logits), onehot)))
