import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmtnet.layers import (
    HeadParams,
    RecursiveParams,
    SpdKernelBank,
    check_projection_rank,
    clamp_scale,
    conv_with_kernels,
    cross_entropy_loss,
    diag_log_euclidean_distance,
    diagonalize_forward,
    gate_activation,
    head_forward,
    materialize_kernels,
    spd_activate,
    spd_conv_forward,
    spd_gru_rollout,
    spd_gru_step,
    initial_state,
)
from dmtnet.oracles import certify_spd, general_log_euclidean
from dmtnet.verify import random_recursive_params

E = math.e


def _bank_from_kernels(W):
    """A bank whose materialized kernels equal ``W`` (up to eps) via the Cholesky factor."""
    W = np.asarray(W, dtype=np.float64)
    V = np.swapaxes(np.linalg.cholesky(W), -1, -2)
    return SpdKernelBank(V, epsilon=1e-300)


# -- convolution


def test_conv_scalar_kernel_scales():
    x = np.array([[[2.0, 0.5], [0.5, 1.0]]])
    out = conv_with_kernels(x, np.full((1, 1, 1, 1), 2.0))
    np.testing.assert_allclose(out, 2 * x)


def test_conv_identity_kernel_on_identity():
    out = conv_with_kernels(np.eye(3)[None], np.eye(2)[None, None])
    np.testing.assert_allclose(out[0], [[2, 0], [0, 2]])


def test_conv_sums_channels(rng, spd):
    a, b = spd(rng, 4), spd(rng, 4)
    out = conv_with_kernels(np.stack([a, b]), np.ones((1, 2, 1, 1)))
    np.testing.assert_allclose(out[0], a + b)


def test_materialize_examples():
    np.testing.assert_allclose(materialize_kernels(SpdKernelBank(np.eye(2), 1e-4)), (1 + 1e-4) * np.eye(2))
    np.testing.assert_allclose(materialize_kernels(SpdKernelBank(np.zeros((2, 2)), 1e-4)), 1e-4 * np.eye(2))
    w = materialize_kernels(SpdKernelBank(np.array([[1.0, 2.0], [3.0, 4.0]]), 1e-300))
    np.testing.assert_allclose(w, [[10, 14], [14, 20]])


def test_materialize_rejects_nonpositive_epsilon():
    with pytest.raises(ValueError):
        materialize_kernels(SpdKernelBank(np.eye(2), 0.0))


def test_conv_shape_errors(rng):
    bank = SpdKernelBank(rng.normal(size=(2, 1, 3, 3)))
    with pytest.raises(ValueError):
        spd_conv_forward(np.eye(2)[None], bank)
    with pytest.raises(ValueError):
        spd_conv_forward(np.stack([np.eye(4)] * 2), bank)


def test_conv_certify_rejects_non_spd(rng):
    bank = SpdKernelBank(rng.normal(size=(1, 1, 2, 2)))
    bad = np.diag([1.0, -1.0, 1.0])[None]
    spd_conv_forward(bad, bank)
    with pytest.raises(ValueError, match="channel 0"):
        spd_conv_forward(bad, bank, certify=True)


def test_conv_is_linear_in_input(rng, spd):
    x = np.stack([spd(rng, 6) for _ in range(2)])
    bank = SpdKernelBank(rng.normal(size=(3, 2, 3, 3)))
    np.testing.assert_allclose(spd_conv_forward(2.5 * x, bank), 2.5 * spd_conv_forward(x, bank), rtol=1e-13)


def test_conv_batched_matches_single(rng, spd):
    x = np.stack([np.stack([spd(rng, 5)]) for _ in range(3)])
    bank = SpdKernelBank(rng.normal(size=(2, 1, 2, 2)))
    batched = spd_conv_forward(x, bank)
    for i in range(3):
        np.testing.assert_allclose(batched[i], spd_conv_forward(x[i], bank))


@settings(max_examples=30, deadline=None)
@given(c=st.integers(1, 4), d=st.integers(3, 10), k=st.integers(1, 3), seed=st.integers(0, 10**6))
def test_conv_output_spd(c, d, k, seed):
    r = np.random.default_rng(seed)
    from dmtnet.verify import random_spd

    x = np.stack([random_spd(r, d) for _ in range(c)])
    out = spd_conv_forward(x, SpdKernelBank(r.normal(size=(2, c, k, k))))
    assert certify_spd(out).passed


# -- activations


def test_exp_on_identity():
    np.testing.assert_allclose(spd_activate(np.eye(2), "exp"), [[E, 1], [1, E]])


def test_sinh_on_identity_keeps_zero_offdiagonal():
    out = spd_activate(np.eye(2), "sinh")
    np.testing.assert_allclose(out, np.diag([math.sinh(1)] * 2))


def test_cosh_entrywise():
    x = np.array([[1.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(spd_activate(x, "cosh"), np.cosh(x))


def test_unknown_activation():
    with pytest.raises(ValueError):
        spd_activate(np.eye(2), "relu")


def test_overflow_guard_rescales_channel():
    x = np.stack([np.diag([60.0, 30.0]), np.eye(2)])
    guarded = clamp_scale(x)
    np.testing.assert_allclose(guarded[0], np.diag([30.0, 15.0]))
    np.testing.assert_allclose(guarded[1], np.eye(2))
    assert np.isfinite(spd_activate(1e6 * np.eye(3), "sinh")).all()


@settings(max_examples=30, deadline=None)
@given(kind=st.sampled_from(["exp", "sinh", "cosh"]), d=st.integers(1, 9), seed=st.integers(0, 10**6))
def test_activation_preserves_spd(kind, d, seed):
    from dmtnet.verify import random_spd

    r = np.random.default_rng(seed)
    x = random_spd(r, d, rank=max(1, d // 2), max_entry=r.uniform(0.1, 5.0))
    assert certify_spd(spd_activate(x, kind)).passed


def test_gate_examples():
    np.testing.assert_allclose(gate_activation(3.7 * np.ones((3, 3))), np.ones((3, 3)))
    np.testing.assert_allclose(gate_activation(np.eye(2)), [[1, 1 / E], [1 / E, 1]])
    np.testing.assert_allclose(gate_activation(np.diag([2.0, 0.0])), [[1, E**-2], [E**-2, E**-2]])


def test_gate_range(rng, spd):
    g = gate_activation(spd(rng, 6, max_entry=50.0))
    assert g.max() == 1.0
    assert g.min() > 0.0


# -- recursion


def _scalar_params(**kw):
    one = np.ones((1, 1, 1))
    base = dict(W_fr=one, W_hr=one, W_fz=one, W_hz=one, W_fh=one, beta_r=0.0, beta_z=0.0, beta_h=0.0, epsilon=0.0)
    base.update(kw)
    return RecursiveParams(**base)


def test_scalar_recursion_step():
    p = _scalar_params()
    state = spd_gru_step(np.full((1, 1, 1), 2.0), initial_state((), p), p)
    assert state.R[0, 0, 0] == pytest.approx(1.0)
    assert state.Z[0, 0, 0] == pytest.approx(1.0)
    assert state.H[0, 0, 0] == pytest.approx(math.sinh(2.0))
    assert state.H[0, 0, 0] == pytest.approx(3.62686, abs=1e-5)


def test_rollout_length_one_equals_step(rng, spd):
    p = random_recursive_params(rng, 2, 6, 4)
    f = np.stack([spd(rng, 6) for _ in range(2)])
    np.testing.assert_allclose(spd_gru_rollout([f], p).H, spd_gru_step(f, initial_state((), p), p).H)


def test_rollout_rejects_empty_and_mismatch(rng):
    p = random_recursive_params(rng, 1, 5, 4)
    with pytest.raises(ValueError):
        spd_gru_rollout([], p)
    with pytest.raises(ValueError):
        spd_gru_rollout([np.eye(6)[None]], p)


def test_open_gate_limit_is_monotone(rng, spd):
    p = random_recursive_params(rng, 1, 5, 4, epsilon=1e-12)
    p.W_fz = np.zeros_like(p.W_fz)
    p.W_hz = np.zeros_like(p.W_hz)
    seq = [spd(rng, 5)[None] for _ in range(4)]
    states = spd_gru_rollout(seq, p, return_all=True)
    for prev, cur in zip(states, states[1:]):
        np.testing.assert_allclose(cur.Z, 1.0, atol=1e-11)
        assert certify_spd(cur.H - prev.H).passed


def test_gate_ignores_all_ones_bias(rng, spd):
    p = random_recursive_params(rng, 1, 5, 4)
    seq = [spd(rng, 5)[None] for _ in range(3)]
    base = spd_gru_rollout(seq, p)
    p.beta_r, p.beta_z = 7.0, 11.0
    moved = spd_gru_rollout(seq, p)
    np.testing.assert_allclose(moved.Z, base.Z, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(moved.H, base.H, rtol=1e-10)


def test_constant_input_keeps_epsilon_floor(rng, spd):
    p = random_recursive_params(rng, 2, 9, 9, epsilon=1e-3)
    f = np.stack([spd(rng, 9, max_entry=0.3) for _ in range(2)])
    for state in spd_gru_rollout([f] * 12, p, return_all=True):
        mins = np.linalg.eigvalsh(state.H).min(axis=-1)
        assert np.all(mins >= 1e-3 * (1 - 1e-9))


def test_bias_modes_differ(rng, spd):
    p = random_recursive_params(rng, 1, 5, 4)
    p.beta_h = 0.5
    f = spd(rng, 5)[None]
    h_j = spd_gru_rollout([f], p).H
    p.bias_mode = "I"
    h_i = spd_gru_rollout([f], p).H
    assert not np.allclose(h_j, h_i)
    assert certify_spd(h_i).passed


def test_rank_warning():
    p = _scalar_params(W_fr=np.zeros((1, 2, 3)), W_fz=np.zeros((1, 2, 3)), W_fh=np.zeros((1, 2, 3)),
                       W_hr=np.ones((1, 3, 3)), W_hz=np.eye(3)[None])
    with pytest.warns(RuntimeWarning, match="rank-deficient"):
        names = check_projection_rank(p)
    assert names == ["W_fr", "W_hr", "W_fz", "W_fh"]


# -- diagonalizing layer and metric


def test_diagonalize_examples():
    np.testing.assert_allclose(diagonalize_forward(np.eye(2)[None]), [E, 1, 1, E])
    z = np.stack([np.eye(2), 2 * np.eye(2)])
    np.testing.assert_allclose(diagonalize_forward(z), [E, 1, 1, E, E**2, 1, 1, E**2])


def test_diagonalize_log_recovers_input(rng, spd):
    z = np.stack([spd(rng, 4) for _ in range(3)])
    np.testing.assert_allclose(np.log(diagonalize_forward(z)), z.reshape(-1), atol=1e-14)


def test_distance_examples(rng):
    a = np.exp(rng.normal(size=6))
    assert diag_log_euclidean_distance(a, a) == 0.0
    assert diag_log_euclidean_distance([E, 1], [1, 1]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        diag_log_euclidean_distance([1.0, 0.0], [1.0, 1.0])


def test_distance_matches_general(rng):
    for _ in range(20):
        d1, d2 = np.exp(rng.normal(size=(2, 10)))
        assert abs(diag_log_euclidean_distance(d1, d2) - general_log_euclidean(np.diag(d1), np.diag(d2))) < 1e-9


# -- head


def test_head_zero_weights_uniform():
    h = HeadParams(np.zeros((4, 5)), np.zeros(5), np.zeros((5, 3)), np.zeros(3))
    np.testing.assert_allclose(head_forward(np.ones((2, 4)), h), np.full((2, 3), 1 / 3))


def test_head_matches_direct_formula(rng):
    h = HeadParams(rng.normal(size=(4, 6)), rng.normal(size=6), rng.normal(size=(6, 3)), rng.normal(size=3))
    x = rng.normal(size=(5, 4))
    logits = np.tanh(x @ h.fc_weight + h.fc_bias) @ h.out_weight + h.out_bias
    ref = np.exp(logits - logits.max(axis=1, keepdims=True))
    np.testing.assert_allclose(head_forward(x, h), ref / ref.sum(axis=1, keepdims=True))


def test_head_rejects_wrong_length():
    h = HeadParams(np.zeros((4, 5)), np.zeros(5), np.zeros((5, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        head_forward(np.ones((1, 3)), h)


def test_cross_entropy_examples():
    assert cross_entropy_loss([[1.0, 0.0]], [0]) == 0.0
    assert cross_entropy_loss(np.full((4, 5), 0.2), [0, 1, 2, 3]) == pytest.approx(4 * math.log(5))
    assert cross_entropy_loss([[0.5, 0.5], [0.75, 0.25]], [0, 1]) == pytest.approx(2.0794415, abs=1e-7)


def test_cross_entropy_clamps_zero_probability():
    with pytest.warns(RuntimeWarning):
        loss = cross_entropy_loss([[1.0, 0.0]], [1])
    assert loss == pytest.approx(-math.log(1e-15))
