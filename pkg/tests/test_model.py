"""Forward pass: embedding, CAS, attention, fusion, pooling, checkpoints."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtalkit.model import (
    Hyperparams,
    ModalityParams,
    ModelParams,
    NormMode,
    attention,
    cas,
    embed,
    forward,
    init_params,
    load_checkpoint,
    pool,
    save_checkpoint,
    temporal_windows,
)
from wtalkit.numerics import sigmoid, softmax


def make_params(rng, d=6, e=5, c=3, k=3):
    return init_params(rng, feature_dim=d, embed_dim=e, num_classes=c,
                       kernel_size=k)


def random_inputs(rng, t=8, d=6):
    return rng.normal(size=(t, d)), rng.normal(size=(t, d))


class TestWindows:
    def test_kernel_one_is_identity(self):
        x = np.arange(12.0).reshape(4, 3)
        win = temporal_windows(x, 1)
        np.testing.assert_array_equal(win[:, 0, :], x)

    def test_reflect_padding(self):
        x = np.arange(4.0)[:, None]
        win = temporal_windows(x, 3)
        # neighbors of snippet 0 reflect: [1, 0, 1]; of snippet 3: [2, 3, 2]
        np.testing.assert_array_equal(win[0, :, 0], [1.0, 0.0, 1.0])
        np.testing.assert_array_equal(win[3, :, 0], [2.0, 3.0, 2.0])

    def test_interior_windows(self):
        x = np.arange(5.0)[:, None]
        win = temporal_windows(x, 3)
        np.testing.assert_array_equal(win[2, :, 0], [1.0, 2.0, 3.0])


class TestHeads:
    def test_cas_zero_input_gives_bias(self):
        rng = np.random.default_rng(0)
        params = make_params(rng)
        mod = params.rgb
        mod.b_cls[:] = rng.normal(size=4)
        y = cas(np.zeros((6, 5)), mod)
        np.testing.assert_allclose(y, np.tile(mod.b_cls, (6, 1)))

    def test_cas_identity_weights(self):
        rng = np.random.default_rng(1)
        xe = rng.normal(size=(5, 4))
        mod = ModalityParams(
            w_embed=np.zeros((4, 6, 1)), b_embed=np.zeros(4),
            w_cls=np.eye(4), b_cls=np.zeros(4),
            w_att=np.zeros(4), b_att=0.0,
        )
        np.testing.assert_allclose(cas(xe, mod), xe)

    def test_cas_matches_matmul_oracle(self):
        rng = np.random.default_rng(2)
        params = make_params(rng)
        xe = rng.normal(size=(7, 5))
        expected = xe @ params.rgb.w_cls + params.rgb.b_cls
        np.testing.assert_allclose(cas(xe, params.rgb), expected, atol=1e-12)

    def test_attention_zero_input(self):
        rng = np.random.default_rng(3)
        params = make_params(rng)
        a = attention(np.zeros((4, 5)), params.rgb)
        np.testing.assert_allclose(a, np.full(4, 0.5))

    def test_attention_saturates(self):
        rng = np.random.default_rng(4)
        params = make_params(rng)
        params.rgb.b_att = 50.0
        a = attention(np.zeros((3, 5)), params.rgb)
        np.testing.assert_allclose(a, np.ones(3), atol=1e-12)

    def test_attention_matches_dot_sigmoid_oracle(self):
        rng = np.random.default_rng(5)
        params = make_params(rng)
        xe = rng.normal(size=(6, 5))
        expected = np.array([sigmoid(float(row @ params.rgb.w_att)
                                     + params.rgb.b_att) for row in xe])
        np.testing.assert_allclose(attention(xe, params.rgb), expected,
                                   atol=1e-12)

    def test_embed_matches_window_contraction_oracle(self):
        rng = np.random.default_rng(6)
        params = make_params(rng)
        x = rng.normal(size=(7, 6))
        win = temporal_windows(x, 3)
        z_expected = np.zeros((7, 5))
        for t in range(7):
            for e_i in range(5):
                z_expected[t, e_i] = np.sum(
                    win[t].T * params.rgb.w_embed[e_i]
                ) + params.rgb.b_embed[e_i]
        _, z, xe = embed(x, params.rgb)
        np.testing.assert_allclose(z, z_expected, atol=1e-12)
        np.testing.assert_allclose(xe, np.maximum(z_expected, 0.0), atol=1e-12)


class TestPool:
    def test_single_snippet_attention_cancels(self):
        rng = np.random.default_rng(7)
        y = rng.normal(size=(1, 4))
        for a_val in (0.2, 0.5, 0.9):
            p_fg, p_bg, _, _, n_f, n_b = pool(y, np.array([a_val]))
            np.testing.assert_allclose(p_fg, softmax(y[0]), atol=1e-12)
            np.testing.assert_allclose(p_bg, softmax(y[0]), atol=1e-12)

    def test_uniform_attention_identical_rows(self):
        v = np.array([0.3, -1.0, 2.0, 0.1])
        y = np.tile(v, (6, 1))
        a = np.full(6, 0.5)
        p_fg, p_bg, _, _, _, _ = pool(y, a)
        np.testing.assert_allclose(p_fg, softmax(v), atol=1e-12)
        np.testing.assert_allclose(p_bg, softmax(v), atol=1e-12)
        p_fg2, p_bg2, _, _, _, _ = pool(y, a, NormMode.BGES)
        np.testing.assert_allclose(p_bg2, softmax(v), atol=1e-12)

    def test_bges_rescales_background_aggregate(self):
        rng = np.random.default_rng(8)
        y = rng.normal(size=(6, 4))
        a = rng.uniform(0.1, 0.9, size=6)
        n_f, n_b = a.sum(), (1.0 - a).sum()
        agg_std = (1.0 - a) @ y / n_b
        _, p_bg_std, _, _, _, _ = pool(y, a, NormMode.STANDARD)
        _, p_bg_bges, _, _, _, _ = pool(y, a, NormMode.BGES)
        np.testing.assert_allclose(p_bg_std, softmax(agg_std), atol=1e-12)
        np.testing.assert_allclose(p_bg_bges, softmax(agg_std * n_b / n_f),
                                   atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pool(np.zeros((0, 4)), np.zeros(0))

    @given(st.integers(min_value=1, max_value=12))
    @settings(max_examples=30)
    def test_pooling_weights_sum(self, t):
        rng = np.random.default_rng(t)
        a = rng.uniform(0.05, 0.95, size=t)
        n_f, n_b = a.sum(), (1.0 - a).sum()
        assert (a / n_f).sum() == pytest.approx(1.0, abs=1e-10)
        assert ((1.0 - a) / n_b).sum() == pytest.approx(1.0, abs=1e-10)
        assert ((1.0 - a) / n_f).sum() == pytest.approx(n_b / n_f, abs=1e-10)


class TestForward:
    def test_identical_modalities_fuse_to_themselves(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(8, 6))
        params = make_params(rng)
        params.flow = params.rgb
        out = forward(x, x, params)
        np.testing.assert_array_equal(out.y_rgb, out.y_flow)
        np.testing.assert_array_equal(out.y, out.y_rgb)
        np.testing.assert_array_equal(out.a, out.a_rgb)

    def test_fusion_is_half_sum(self):
        rng = np.random.default_rng(10)
        x_rgb, x_flow = random_inputs(rng)
        params = make_params(rng)
        out = forward(x_rgb, x_flow, params)
        np.testing.assert_array_equal(out.y, 0.5 * (out.y_rgb + out.y_flow))
        np.testing.assert_array_equal(out.a, 0.5 * (out.a_rgb + out.a_flow))

    def test_invariants(self):
        rng = np.random.default_rng(11)
        x_rgb, x_flow = random_inputs(rng)
        out = forward(x_rgb, x_flow, make_params(rng))
        assert np.all(out.a > 0) and np.all(out.a < 1)
        assert out.p_fg.sum() == pytest.approx(1.0, abs=1e-10)
        assert out.p_bg.sum() == pytest.approx(1.0, abs=1e-10)
        assert out.n_f + out.n_b == pytest.approx(8.0, abs=1e-9)

    def test_p_fg_invariant_under_bges(self):
        rng = np.random.default_rng(12)
        x_rgb, x_flow = random_inputs(rng)
        params = make_params(rng)
        std = forward(x_rgb, x_flow, params, NormMode.STANDARD)
        bges = forward(x_rgb, x_flow, params, NormMode.BGES)
        np.testing.assert_array_equal(std.p_fg, bges.p_fg)
        assert not np.array_equal(std.p_bg, bges.p_bg)

    def test_seed0_regression_lock(self):
        # golden forward output, validated against the head oracles above
        rng = np.random.default_rng(0)
        params = make_params(rng)
        x_rgb, x_flow = random_inputs(np.random.default_rng(100))
        out = forward(x_rgb, x_flow, params)
        np.testing.assert_allclose(
            out.p_fg,
            [0.2615669319717532, 0.2838831835463413, 0.17104921456016173,
             0.2835006699217437],
            atol=1e-15)

    def test_permuting_snippets_with_kernel_one(self):
        rng = np.random.default_rng(13)
        params = make_params(rng, k=1)
        x_rgb, x_flow = random_inputs(rng)
        out = forward(x_rgb, x_flow, params)
        perm = np.random.default_rng(14).permutation(8)
        out_p = forward(x_rgb[perm], x_flow[perm], params)
        np.testing.assert_allclose(out_p.y, out.y[perm], atol=1e-12)
        np.testing.assert_allclose(out_p.a, out.a[perm], atol=1e-12)
        np.testing.assert_allclose(out_p.p_fg, out.p_fg, atol=1e-12)
        np.testing.assert_allclose(out_p.p_bg, out.p_bg, atol=1e-12)

    def test_bad_shapes_rejected(self):
        rng = np.random.default_rng(15)
        params = make_params(rng)
        with pytest.raises(ValueError):
            forward(np.zeros((4, 7)), np.zeros((4, 6)), params)
        with pytest.raises(ValueError):
            forward(np.zeros((0, 6)), np.zeros((0, 6)), params)


class TestParamsVector:
    def test_round_trip(self):
        rng = np.random.default_rng(16)
        params = make_params(rng)
        vec = params.to_vector()
        rebuilt = params.from_vector(vec)
        np.testing.assert_array_equal(rebuilt.to_vector(), vec)
        np.testing.assert_array_equal(rebuilt.rgb.w_embed, params.rgb.w_embed)
        assert rebuilt.flow.b_att == params.flow.b_att

    def test_vector_edit_lands_in_right_block(self):
        rng = np.random.default_rng(17)
        params = make_params(rng)
        vec = params.to_vector()
        vec[0] += 1.0
        rebuilt = params.from_vector(vec)
        assert rebuilt.rgb.w_embed.ravel()[0] == params.rgb.w_embed.ravel()[0] + 1.0

    def test_wrong_length_rejected(self):
        rng = np.random.default_rng(18)
        params = make_params(rng)
        with pytest.raises(ValueError):
            params.from_vector(np.zeros(3))


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(19)
        params = make_params(rng)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params)
        loaded = load_checkpoint(path)
        np.testing.assert_array_equal(loaded.to_vector(), params.to_vector())

    def test_corrupt_rejected(self, tmp_path):
        from wtalkit.errors import DataFormatError
        rng = np.random.default_rng(20)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, make_params(rng))
        blob = bytearray(path.read_bytes())
        blob[-3] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(DataFormatError):
            load_checkpoint(path)


class TestHyperparams:
    def test_defaults(self):
        hp = Hyperparams()
        assert hp.lam == 0.1 and hp.beta == 0.1 and hp.k == 4
        assert hp.epsilon == 0.5 and hp.rho_cls == 0.1 and hp.nms_iou == 0.5
        assert len(hp.proposal_thresholds) == 13
        assert hp.proposal_thresholds[0] == pytest.approx(0.10)
        assert hp.proposal_thresholds[-1] == pytest.approx(0.70)

    def test_bvl_weight_defaults_to_lam(self):
        assert Hyperparams(lam=0.3).resolved_bvl_weight() == 0.3
        assert Hyperparams(lam=0.3, bvl_weight=0.05).resolved_bvl_weight() == 0.05
