import numpy as np
import pytest

from detkit.blocks import (
    AttentionParams, GCBParams, attention_weights, global_context_block,
    global_context_pool, positional_encoding, single_head_attention,
)

from oracles import attention_ref, gcb_ref, positional_encoding_ref


class TestGlobalContext:
    def test_zero_transform_is_identity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(6, 4, 5))
        p = GCBParams.random(6, reduction=2, rng=rng)
        p = GCBParams(p.key_weight, p.squeeze_weight, p.ln_gamma, p.ln_beta,
                      np.zeros_like(p.expand_weight))
        assert np.array_equal(global_context_block(x, p), x)

    def test_uniform_keys_recover_average_pooling(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 3, 7))
        pooled = global_context_pool(x, np.zeros(4))
        assert np.max(np.abs(pooled - x.mean(axis=(1, 2)))) < 1e-9

    def test_output_shape_preserved(self):
        rng = np.random.default_rng(2)
        for shape in ((2, 3, 3), (5, 1, 9), (8, 6, 2)):
            x = rng.normal(size=shape)
            p = GCBParams.random(shape[0], reduction=4, rng=rng)
            assert global_context_block(x, p).shape == shape

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(5, 4, 4))
        p = GCBParams.random(5, reduction=2, rng=rng)
        got = global_context_block(x, p)
        want = gcb_ref(x, p.key_weight, p.squeeze_weight, p.ln_gamma,
                       p.ln_beta, p.expand_weight)
        assert np.max(np.abs(got - want)) < 1e-9

    def test_channel_mismatch(self):
        p = GCBParams.random(4, reduction=2)
        with pytest.raises(ValueError):
            global_context_block(np.zeros((3, 2, 2)), p)

    def test_param_shape_validation(self):
        with pytest.raises(ValueError):
            GCBParams(np.zeros(4), np.zeros((2, 3)), np.zeros(2),
                      np.zeros(2), np.zeros((4, 2)))


class TestPositionalEncoding:
    def test_first_position_values(self):
        pe = positional_encoding(4, 4, 8)
        assert pe[0, 0, 0] == 0.0  # sin(0)
        assert pe[1, 0, 0] == 1.0  # cos(0)

    def test_matches_closed_form(self):
        got = positional_encoding(4, 4, 8)
        want = positional_encoding_ref(4, 4, 8)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_bounded(self):
        pe = positional_encoding(7, 9, 16)
        assert np.all(pe >= -1.0) and np.all(pe <= 1.0)

    def test_deterministic(self):
        assert np.array_equal(positional_encoding(5, 5, 6),
                              positional_encoding(5, 5, 6))

    def test_odd_channels_rejected(self):
        with pytest.raises(ValueError):
            positional_encoding(4, 4, 7)


class TestAttention:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(6, 10))
        p = AttentionParams.random(6, rng)
        w = attention_weights(x, p)
        assert w.shape == (10, 10)
        assert np.max(np.abs(w.sum(axis=1) - 1.0)) < 1e-6

    def test_single_position(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 1))
        p = AttentionParams.random(4, rng)
        got = single_head_attention(x, p)
        assert np.allclose(got, p.value @ x)

    def test_identical_positions_identity_projection(self):
        v = np.array([1.0, -2.0, 0.5])
        x = np.tile(v[:, None], (1, 6))
        got = single_head_attention(x, AttentionParams.identity(3))
        assert np.allclose(got, x)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(5, 8))
        p = AttentionParams.random(5, rng)
        got = single_head_attention(x, p)
        want = attention_ref(x, p.query, p.key, p.value)
        assert np.max(np.abs(got - want)) < 1e-9

    def test_convex_combination_with_identity_value(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(4, 9))
        p = AttentionParams(rng.normal(size=(4, 4)), rng.normal(size=(4, 4)),
                            np.eye(4))
        out = single_head_attention(x, p)
        lo = x.min(axis=1, keepdims=True) - 1e-12
        hi = x.max(axis=1, keepdims=True) + 1e-12
        assert np.all(out >= lo) and np.all(out <= hi)

    def test_shape_preserved(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(3, 14))
        assert single_head_attention(x, AttentionParams.random(3, rng)).shape \
            == (3, 14)

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            single_head_attention(np.zeros((3, 4)), AttentionParams.identity(5))
