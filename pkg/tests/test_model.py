import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mgnet.errors import ShapeError
from mgnet.model import (fcn_softmax, forward, gcn_layer, init_params, modality_pool,
                         softmax)

from helpers import random_a_hat, slice_loop_gcn


def test_gcn_identity_on_nonnegative(rng):
    h = rng.random((5, 5, 2, 3))
    np.testing.assert_array_equal(gcn_layer(h, np.eye(5), np.eye(5)), h)


def test_gcn_relu_kills_negative(rng):
    h = -rng.random((4, 4, 1, 2)) - 0.1
    assert np.all(gcn_layer(h, np.eye(4), np.eye(4)) == 0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 8), d=st.integers(1, 6), d2=st.integers(1, 6), m=st.integers(1, 3),
       s=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_tensor_layer_equals_slice_loop(n, d, d2, m, s, seed):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((n, d, m, s))
    a_hat = random_a_hat(rng, n)
    w = rng.standard_normal((d, d2))
    assert np.abs(gcn_layer(h, a_hat, w) - slice_loop_gcn(h, a_hat, w)).max() < 1e-12


def test_gcn_shape_errors(rng):
    with pytest.raises(ShapeError):
        gcn_layer(rng.random((4, 3, 1, 1)), np.eye(4), np.eye(2))
    with pytest.raises(ShapeError):
        gcn_layer(rng.random((4, 3, 1, 1)), np.eye(3), np.eye(3))


def test_pool_selector(rng):
    h = rng.standard_normal((4, 3, 2, 5))
    np.testing.assert_array_equal(modality_pool(h, [1.0, 0.0]), h[:, :, 0, :])


def test_pool_average(rng):
    h = rng.standard_normal((4, 3, 2, 5))
    np.testing.assert_allclose(modality_pool(h, [0.5, 0.5]), h.mean(axis=2), atol=1e-15)


def test_pool_loop_oracle(rng):
    h = rng.standard_normal((3, 2, 3, 4))
    alpha = rng.standard_normal(3)
    expected = np.zeros((3, 2, 4))
    for i in range(3):
        for d in range(2):
            for s in range(4):
                expected[i, d, s] = sum(alpha[m] * h[i, d, m, s] for m in range(3))
    np.testing.assert_allclose(modality_pool(h, alpha), expected, atol=1e-14)


def test_pool_length_mismatch(rng):
    with pytest.raises(ShapeError, match="3 modalities"):
        modality_pool(rng.random((2, 2, 3, 1)), [1.0, 1.0])


def test_softmax_zero_weights_uniform():
    np.testing.assert_array_equal(fcn_softmax(np.ones(6), np.zeros((2, 6)), np.zeros(2)), [0.5, 0.5])


def test_softmax_overflow_safe():
    p = softmax(np.array([1000.0, 0.0]))
    assert p[0] == 1.0 and 0 <= p[1] < 1e-300 and np.all(np.isfinite(p))


def test_softmax_direct_oracle(rng):
    f = rng.standard_normal(10) * 0.3
    w = rng.standard_normal((2, 10)) * 0.3
    b = rng.standard_normal(2)
    z = w @ f + b
    direct = np.exp(z) / np.exp(z).sum()
    np.testing.assert_allclose(fcn_softmax(f, w, b), direct, atol=1e-12)


def _setup(rng, n=6, m=2, s=5, layers=1, d_out=4, dropout=0.0):
    h0 = rng.standard_normal((n, n, m, s))
    a_hat = random_a_hat(rng, n)
    params = init_params(n, m, layers, d_out, dropout, rng)
    params.alpha = rng.standard_normal(m)
    params.fcn_b = rng.standard_normal(2)
    return h0, a_hat, params


def test_no_dropout_train_equals_eval(rng):
    h0, a_hat, params = _setup(rng)
    a = forward(h0, a_hat, params, "train", rng=1).probs
    b = forward(h0, a_hat, params, "eval").probs
    assert a.tobytes() == b.tobytes()


def test_one_layer_closed_form(rng):
    h0, a_hat, params = _setup(rng, layers=1)
    x = h0
    w = params.layers[0]
    f = np.zeros((6, 4, 5))
    for s in range(5):
        for m in range(2):
            f[:, :, s] += params.alpha[m] * np.maximum(a_hat.T @ x[:, :, m, s] @ w, 0)
    logits = np.stack([f[:, :, s].ravel() for s in range(5)]) @ params.fcn_w.T + params.fcn_b
    p = np.exp(logits - logits.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    np.testing.assert_allclose(forward(h0, a_hat, params).probs, p, atol=1e-12)


@pytest.mark.parametrize("layers", [1, 2, 3])
def test_batch_equals_single_subject(rng, layers):
    h0, a_hat, params = _setup(rng, layers=layers)
    batch = forward(h0, a_hat, params).probs
    for s in range(5):
        one = forward(h0[..., s:s + 1], a_hat, params).probs
        np.testing.assert_allclose(one[0], batch[s], atol=1e-12)


def test_trace_shapes_and_probabilities(rng):
    h0, a_hat, params = _setup(rng, layers=3, d_out=3)
    tr = forward(h0, a_hat, params, "train", rng=0)
    assert [a.shape for a in tr.acts] == [(6, 6, 2, 5), (6, 3, 2, 5), (6, 3, 2, 5), (6, 3, 2, 5)]
    assert tr.pooled.shape == (6, 3, 5)
    assert np.abs(tr.probs.sum(axis=1) - 1).max() < 1e-12


def test_modality_permutation_symmetry(rng):
    h0, a_hat, params = _setup(rng, m=3)
    perm = [2, 0, 1]
    p2 = params.copy()
    p2.alpha = params.alpha[perm]
    a = forward(h0, a_hat, params)
    b = forward(h0[:, :, perm, :], a_hat, p2)
    np.testing.assert_allclose(a.pooled, b.pooled, atol=1e-12)
    np.testing.assert_allclose(a.probs, b.probs, atol=1e-12)


def test_identity_graph_blocks_node_mixing(rng):
    h0, _, params = _setup(rng, layers=2)
    base = forward(h0, np.eye(6), params)
    h1 = h0.copy()
    h1[3] += rng.standard_normal(h1[3].shape)
    pert = forward(h1, np.eye(6), params)
    changed = np.any(pert.acts[-1] != base.acts[-1], axis=(1, 2, 3))
    assert not np.any(np.delete(changed, 3))


def test_dropout_inverted_scaling(rng):
    h0, a_hat, params = _setup(rng, dropout=0.5)
    tr = forward(h0, a_hat, params, "train", rng=3)
    assert set(np.unique(tr.mask)) <= {0.0, 2.0}
    assert forward(h0, a_hat, params, "train", rng=3).probs.tobytes() == tr.probs.tobytes()


def test_shape_mismatch_names_layer(rng):
    h0, a_hat, params = _setup(rng, layers=2)
    params.layers[1] = np.ones((4, 4))
    params.layers[0] = np.ones((5, 4))
    with pytest.raises(ShapeError, match="layer 0"):
        forward(h0, a_hat, params)


def test_params_validation():
    from mgnet.errors import ConfigError
    with pytest.raises(ConfigError):
        init_params(4, 2, n_layers=4)
    with pytest.raises(ConfigError):
        init_params(4, 2, dropout_rate=0.6)


def test_init_deterministic_and_uniform_alpha():
    a, b = init_params(5, 3, 2, 4, rng=9), init_params(5, 3, 2, 4, rng=9)
    for k in a.named():
        assert a.named()[k].tobytes() == b.named()[k].tobytes()
    np.testing.assert_array_equal(a.alpha, [1 / 3] * 3)
    assert np.abs(a.layers[0]).max() <= np.sqrt(6 / 9)
