import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import attention as attention_oracle
from oracles import encoder_block as block_oracle

from jmtfusion import nn
from jmtfusion import tensor as T
from jmtfusion.errors import ConfigError, ShapeError


class TestLinearAndInit:
    def test_shapes_and_registration(self, rng):
        lin = nn.Linear(5, 3, rng)
        assert lin.weight.shape == (5, 3) and lin.bias.shape == (3,)
        assert [n for n, _ in lin.named_parameters()] == ["weight", "bias"]
        assert lin(np.ones((7, 5))).shape == (7, 3)

    def test_uniform_fan_in_bounds(self, rng):
        w = nn.Linear(16, 200, rng).weight.data
        assert np.abs(w).max() <= 1 / 4
        assert np.abs(w).max() > 0.24
        conv = nn.Conv1d(4, 8, 3, rng=rng)
        assert np.abs(conv.weight.data).max() <= 1 / np.sqrt(12)
        assert not conv.bias.data.any()

    def test_same_seed_same_init(self):
        a = nn.EncoderBlock(8, 2, rng=5).state_dict()
        b = nn.EncoderBlock(8, 2, rng=5).state_dict()
        assert all(np.array_equal(a[k], b[k]) for k in a)


class TestModule:
    def test_freeze_keeps_parameters_listed(self, rng):
        blk = nn.EncoderBlock(8, 2, rng=rng)
        n = len(blk.parameters())
        blk.freeze()
        assert len(blk.parameters()) == n
        assert blk.trainable_parameters() == []

    def test_state_dict_round_trip(self, rng):
        a, b = nn.EncoderBlock(8, 2, rng=1), nn.EncoderBlock(8, 2, rng=2)
        b.load_state_dict(a.state_dict())
        x = rng.standard_normal((2, 3, 8))
        np.testing.assert_array_equal(a(x).data, b(x).data)

    def test_load_state_dict_validates_before_assigning(self, rng):
        blk = nn.EncoderBlock(8, 2, rng=rng)
        before = blk.state_dict()
        bad = dict(before)
        bad["norm2.gain"] = np.ones(9)
        with pytest.raises(ShapeError):
            blk.load_state_dict({k: v + 1 for k, v in bad.items()})
        after = blk.state_dict()
        assert all(np.array_equal(before[k], after[k]) for k in before)
        missing = dict(before)
        missing.pop("norm1.gain")
        with pytest.raises(ConfigError):
            blk.load_state_dict(missing)


class TestConvPoolLayers:
    def test_phys_stack_layer_shapes(self, rng):
        with T.no_grad():
            h = nn.Conv1d(1, 32, 5, stride=2, rng=rng)(np.zeros((2816, 1)))
            assert h.shape == (1406, 32)
            h = nn.MaxPool1d(2)(h)
            assert h.shape == (703, 32)
            h = nn.Conv1d(32, 64, 5, rng=rng)(h)
            assert h.shape == (699, 64)
            assert nn.MaxPool1d(2)(h).shape == (349, 64)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 6), st.integers(1, 4))
    def test_conv_out_length_formula(self, length, kernel, stride):
        conv = nn.Conv1d(2, 3, kernel, stride=stride, rng=0)
        if length < kernel:
            with pytest.raises(ShapeError):
                conv(np.zeros((length, 2)))
        else:
            assert conv(np.zeros((length, 2))).shape == ((length - kernel) // stride + 1, 3)

    def test_layer_norm_statistics(self, rng):
        out = nn.LayerNorm(16)(rng.standard_normal((4, 16)) * 5 + 3).data
        np.testing.assert_allclose(out.mean(axis=-1), 0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=-1), 1, atol=1e-3)


class TestAttention:
    def test_single_key(self, rng):
        mha = nn.MultiHeadAttention(8, 2, rng)
        q, kv = rng.standard_normal((1, 8)), rng.standard_normal((1, 8))
        out, w = mha(q, kv, return_weights=True)
        np.testing.assert_array_equal(w, np.ones((2, 1, 1)))
        ref = kv @ mha.w_v.weight.data @ mha.w_o.weight.data + mha.w_o.bias.data
        np.testing.assert_allclose(out.data, ref, atol=1e-12)

    def test_identical_keys_give_uniform_weights(self, rng):
        mha = nn.MultiHeadAttention(8, 4, rng)
        kv = np.tile(rng.standard_normal(8), (5, 1))
        out, w = mha(rng.standard_normal((3, 8)), kv, return_weights=True)
        np.testing.assert_allclose(w, 0.2, atol=1e-15)
        ref = kv.mean(axis=0) @ mha.w_v.weight.data @ mha.w_o.weight.data + mha.w_o.bias.data
        np.testing.assert_allclose(out.data, np.tile(ref, (3, 1)), atol=1e-12)

    @pytest.mark.parametrize("scaling", ["sqrt_dk", "dk"])
    def test_per_head_loop_oracle(self, rng, scaling):
        mha = nn.MultiHeadAttention(8, 2, rng, scaling=scaling)
        x, ctx = rng.standard_normal((2, 4, 8)), rng.standard_normal((2, 6, 8))
        state = {f"m.{k}": v for k, v in mha.state_dict().items()}
        ref = attention_oracle(state, "m", x, ctx, 2, scaling)
        np.testing.assert_allclose(nn.attention(x, ctx, mha).data, ref, rtol=0, atol=1e-10)

    def test_scaling_variants_differ(self, rng):
        a = nn.MultiHeadAttention(8, 2, 3, scaling="sqrt_dk")
        b = nn.MultiHeadAttention(8, 2, 3, scaling="dk")
        x = rng.standard_normal((4, 8))
        assert not np.allclose(a(x).data, b(x).data)

    def test_dim_mismatch(self, rng):
        mha = nn.MultiHeadAttention(8, 2, rng)
        with pytest.raises(ShapeError):
            mha(np.ones((3, 8)), np.ones((3, 6)))

    def test_heads_must_divide(self):
        with pytest.raises(ConfigError):
            nn.MultiHeadAttention(10, 3)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6))
    def test_rows_sum_and_permutation_invariance(self, seed, tq, tk):
        r = np.random.default_rng(seed)
        mha = nn.MultiHeadAttention(6, 3, r)
        q, kv = r.standard_normal((tq, 6)), r.standard_normal((tk, 6))
        out, w = mha(q, kv, return_weights=True)
        np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-9)
        np.testing.assert_allclose(mha(q, kv[r.permutation(tk)]).data, out.data, atol=1e-10)


class TestEncoderBlock:
    def test_zero_branches_reduce_to_stacked_norms(self, rng):
        blk = nn.EncoderBlock(8, 2, rng=rng)
        blk.attention.w_o.weight.data[:] = 0
        blk.feed_forward.fc2.weight.data[:] = 0
        x = rng.standard_normal((5, 8))
        expected = blk.norm2(blk.norm1(x)).data
        np.testing.assert_allclose(nn.encoder_forward(x, blk).data, expected, atol=1e-12)

    def test_width_512_shape(self, rng):
        blk = nn.EncoderBlock(512, 8, rng=rng)
        with T.no_grad():
            assert blk(rng.standard_normal((8, 512))).shape == (8, 512)

    @pytest.mark.parametrize("t", [1, 2, 7])
    def test_shape_preserved(self, rng, t):
        assert nn.EncoderBlock(8, 2, rng=rng)(rng.standard_normal((3, t, 8))).shape == (3, t, 8)

    def test_matches_oracle(self, rng):
        blk = nn.EncoderBlock(8, 2, rng=rng)
        x, ctx = rng.standard_normal((2, 3, 8)), rng.standard_normal((2, 5, 8))
        state = {f"b.{k}": v for k, v in blk.state_dict().items()}
        np.testing.assert_allclose(blk(x, ctx).data, block_oracle(state, "b", x, ctx, 2), atol=1e-10)

    def test_gradient_through_block(self, rng):
        blk = nn.EncoderBlock(8, 2, rng=rng)
        w = T.Tensor(rng.standard_normal((4, 8)))
        rep = T.gradient_check_report(lambda v: T.sum(blk(v) * w), T.tensor(rng.standard_normal((4, 8))),
                                      skip_kinks=True)
        assert rep.max_relative_error < 1e-3

    def test_dropout_is_seeded(self, rng):
        blk = nn.EncoderBlock(8, 2, rng=rng, dropout=0.5)
        x = rng.standard_normal((4, 8))
        a = blk(x, training=True, rng=1).data
        b = blk(x, training=True, rng=1).data
        c = blk(x, training=True, rng=2).data
        np.testing.assert_array_equal(a, b)
        assert not np.allclose(a, c)
        np.testing.assert_array_equal(blk(x).data, blk(x, training=False, rng=3).data)


class TestPositions:
    def test_sinusoidal_table(self):
        table = nn.sinusoidal_positions(5, 6)
        assert table.shape == (5, 6)
        np.testing.assert_allclose(table[0, 0::2], 0.0)
        np.testing.assert_allclose(table[0, 1::2], 1.0)
