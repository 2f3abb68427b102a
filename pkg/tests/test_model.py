import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srcodec import (
    ModelConfig,
    adaptive_conv_block,
    batch_to_space,
    forward,
    forward_video,
    generate_kernel,
    init_params,
    param_count,
    param_shapes,
    pixel_shuffle,
    space_to_batch,
)

from oracles import conv2d_naive, forward_naive, relu


class TestParamCount:
    @pytest.mark.parametrize("channels,expected,paper_millions", [
        (8, 586_120, 0.59), (32, 2_156_560, 2.22), (128, 8_438_320, 8.72),
    ])
    def test_reported_table_values(self, channels, expected, paper_millions):
        cfg = ModelConfig(feature_channels=channels)
        m = param_count(cfg)
        assert m == expected
        assert abs(m - paper_millions * 1e6) / (paper_millions * 1e6) < 0.05

    @given(st.integers(1, 16), st.integers(1, 6), st.integers(1, 4),
           st.integers(1, 24), st.integers(1, 24))
    @settings(max_examples=20)
    def test_formula_matches_tensor_enumeration(self, f, p, k, cg, cr):
        cfg = ModelConfig(feature_channels=f, patch_size=p, scale=k,
                          generator_width=cg, regular_width=cr)
        enumerated = sum(math.prod(shape) for _, shape in param_shapes(cfg))
        analytic = ((27 * cg + cg) + (9 * cg * 27 * f + 27 * f)
                    + (25 * f * cr + cr) + (9 * cr * 3 * k * k + 3 * k * k))
        assert param_count(cfg) == enumerated == analytic

    def test_init_params_length_and_zero_biases(self, tiny_config):
        params = init_params(tiny_config, seed=11)
        assert params.shape == (param_count(tiny_config),)
        offset = 0
        for name, shape in param_shapes(tiny_config):
            n = math.prod(shape)
            block = params[offset:offset + n]
            if name.endswith("bias"):
                assert np.all(block == 0.0)
            else:
                assert np.any(block != 0.0)
            offset += n

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ModelConfig(feature_channels=0)
        with pytest.raises(ValueError):
            ModelConfig(scale=-1)


class TestSpaceToBatch:
    def test_divisible_no_padding(self):
        grid = space_to_batch(np.random.default_rng(0).random((10, 10, 3)), 5)
        assert grid.patches.shape == (4, 5, 5, 3)
        assert (grid.pad_bottom, grid.pad_right) == (0, 0)

    def test_padding_by_edge_replication(self):
        frame = np.random.default_rng(1).random((11, 11, 3)).astype(np.float32)
        grid = space_to_batch(frame, 5)
        assert grid.patches.shape == (9, 5, 5, 3)
        assert (grid.pad_bottom, grid.pad_right) == (4, 4)
        # the padded strip repeats the last source row
        np.testing.assert_array_equal(grid.patches[-1][-1], grid.patches[-1][1])

    @given(st.integers(1, 13), st.integers(1, 13), st.integers(1, 6),
           st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40)
    def test_round_trip_identity(self, h, w, p, seed):
        frame = np.random.default_rng(seed).random((h, w, 3)).astype(np.float32)
        grid = space_to_batch(frame, p)
        np.testing.assert_array_equal(batch_to_space(grid, (h, w)), frame)

    def test_every_pixel_in_exactly_one_patch(self):
        frame = np.arange(13 * 7 * 1, dtype=np.float32).reshape(13, 7, 1)
        grid = space_to_batch(frame, 5)
        rebuilt = batch_to_space(grid, (13, 7))
        np.testing.assert_array_equal(rebuilt, frame)


class TestGenerateKernel:
    def test_zero_params_zero_kernel(self, tiny_config):
        patch = np.random.default_rng(0).random((4, 4, 3)).astype(np.float32)
        kernel = generate_kernel(patch, np.zeros(param_count(tiny_config), np.float32),
                                 tiny_config)
        assert kernel.shape == (3, 3, 3, tiny_config.feature_channels)
        assert np.all(kernel == 0.0)

    def test_kernel_entry_count_f32(self):
        cfg = ModelConfig(feature_channels=32, patch_size=5, scale=4,
                          generator_width=8, regular_width=8)
        patch = np.full((5, 5, 3), 0.25, np.float32)
        kernel = generate_kernel(patch, init_params(cfg, 0), cfg)
        assert kernel.size == 27 * 32 == 864

    def test_different_patches_get_different_kernels(self, tiny_config):
        params = init_params(tiny_config, seed=5)
        rng = np.random.default_rng(6)
        a = generate_kernel(rng.random((4, 4, 3)).astype(np.float32), params, tiny_config)
        b = generate_kernel(rng.random((4, 4, 3)).astype(np.float32), params, tiny_config)
        assert np.abs(a - b).max() > 0.0

    def test_deterministic(self, tiny_config):
        params = init_params(tiny_config, seed=5)
        patch = np.random.default_rng(7).random((4, 4, 3)).astype(np.float32)
        k1 = generate_kernel(patch, params, tiny_config)
        k2 = generate_kernel(patch, params, tiny_config)
        assert k1.tobytes() == k2.tobytes()


class TestAdaptiveConvBlock:
    def test_zero_kernel_zero_features(self, tiny_config):
        patch = np.random.default_rng(0).random((4, 4, 3)).astype(np.float32)
        feats = adaptive_conv_block(patch, np.zeros(param_count(tiny_config), np.float32),
                                    tiny_config)
        assert feats.shape == (4, 4, tiny_config.feature_channels)
        assert np.all(feats == 0.0)

    def test_single_pixel_patch_uses_center_taps_only(self):
        cfg = ModelConfig(feature_channels=3, patch_size=1, scale=2,
                          generator_width=4, regular_width=4)
        params = init_params(cfg, seed=9)
        patch = np.array([[[0.2, 0.5, 0.8]]], dtype=np.float32)
        kernel = generate_kernel(patch, params, cfg)  # (3, 3, 3, F)
        feats = adaptive_conv_block(patch, params, cfg)
        expected = relu(np.einsum("c,cf->f", patch[0, 0].astype(np.float64),
                                  kernel[1, 1].astype(np.float64)))
        np.testing.assert_allclose(feats[0, 0], expected, atol=1e-6)

    def test_matches_naive_convolution_oracle(self, tiny_config):
        params = init_params(tiny_config, seed=3)
        patch = np.random.default_rng(4).random((4, 4, 3)).astype(np.float32)
        feats = adaptive_conv_block(patch, params, tiny_config)
        kernel = generate_kernel(patch, params, tiny_config)  # (kh, kw, cin, F)
        w = kernel.astype(np.float64).transpose(3, 2, 0, 1)   # (F, cin, kh, kw)
        expected = relu(conv2d_naive(patch.astype(np.float64), w, None, pad=1))
        np.testing.assert_allclose(feats, expected, atol=1e-5)

    def test_outputs_nonnegative(self, tiny_config):
        params = init_params(tiny_config, seed=13)
        patch = np.random.default_rng(14).random((4, 4, 3)).astype(np.float32)
        assert adaptive_conv_block(patch, params, tiny_config).min() >= 0.0


class TestPixelShuffle:
    def test_channel_order_convention(self):
        features = np.arange(12, dtype=np.float32).reshape(1, 1, 12)
        out = pixel_shuffle(features, 2)
        assert out.shape == (2, 2, 3)
        np.testing.assert_array_equal(out[0, 0], [0, 4, 8])
        np.testing.assert_array_equal(out[0, 1], [1, 5, 9])
        np.testing.assert_array_equal(out[1, 0], [2, 6, 10])
        np.testing.assert_array_equal(out[1, 1], [3, 7, 11])

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 4),
           st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40)
    def test_sum_preserved(self, h, w, k, seed):
        feats = np.random.default_rng(seed).random((h, w, 3 * k * k))
        out = pixel_shuffle(feats, k)
        assert math.isclose(float(out.sum()), float(feats.sum()), rel_tol=1e-9)

    def test_inverse_space_to_depth(self):
        rng = np.random.default_rng(10)
        frame = rng.random((6, 8, 3)).astype(np.float32)
        k = 2
        # inverse of the shuffle: gather channels back
        depth = np.zeros((3, 4, 12), dtype=np.float32)
        for y in range(6):
            for x in range(8):
                for c in range(3):
                    depth[y // k, x // k, c * k * k + (y % k) * k + (x % k)] = frame[y, x, c]
        np.testing.assert_array_equal(pixel_shuffle(depth, k), frame)

    def test_wrong_channel_count(self):
        with pytest.raises(ValueError, match="channels"):
            pixel_shuffle(np.zeros((2, 2, 10), np.float32), 2)


class TestForward:
    def test_output_shape_contract(self):
        cfg = ModelConfig(feature_channels=4, patch_size=5, scale=4,
                          generator_width=8, regular_width=8)
        out = forward(np.random.default_rng(0).random((20, 20, 3)).astype(np.float32),
                      init_params(cfg, 0), cfg)
        assert out.shape == (80, 80, 3)

    @given(st.integers(1, 9), st.integers(1, 9))
    @settings(max_examples=15, deadline=None)
    def test_shape_invariant_any_dims(self, h, w):
        cfg = ModelConfig(feature_channels=2, patch_size=3, scale=2,
                          generator_width=4, regular_width=4)
        out = forward(np.random.default_rng(1).random((h, w, 3)).astype(np.float32),
                      init_params(cfg, 1), cfg)
        assert out.shape == (2 * h, 2 * w, 3)

    def test_zero_params_zero_frame(self, tiny_config):
        frame = np.random.default_rng(2).random((8, 8, 3)).astype(np.float32)
        out = forward(frame, np.zeros(param_count(tiny_config), np.float32), tiny_config)
        assert np.all(out == 0.0)

    def test_matches_straight_line_oracle(self, tiny_config):
        params = init_params(tiny_config, seed=21)
        frame = np.random.default_rng(22).random((8, 8, 3)).astype(np.float32)
        ours = forward(frame, params, tiny_config)
        reference = forward_naive(frame, params, tiny_config)
        np.testing.assert_allclose(ours, reference, atol=1e-5)

    def test_oracle_agreement_with_padding(self):
        cfg = ModelConfig(feature_channels=3, patch_size=4, scale=2,
                          generator_width=4, regular_width=4)
        params = init_params(cfg, seed=23)
        frame = np.random.default_rng(24).random((7, 5, 3)).astype(np.float32)
        np.testing.assert_allclose(forward(frame, params, cfg),
                                   forward_naive(frame, params, cfg), atol=1e-5)

    def test_bit_reproducible(self, tiny_config):
        params = init_params(tiny_config, seed=31)
        frame = np.random.default_rng(32).random((12, 8, 3)).astype(np.float32)
        a = forward(frame, params, tiny_config)
        b = forward(frame, params, tiny_config)
        assert a.tobytes() == b.tobytes()

    def test_output_clamped(self, tiny_config):
        params = 3.0 * init_params(tiny_config, seed=41)
        frame = np.random.default_rng(42).random((8, 8, 3)).astype(np.float32)
        out = forward(frame, params, tiny_config)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_forward_video_matches_per_frame(self, tiny_config):
        params = init_params(tiny_config, seed=51)
        frames = np.random.default_rng(52).random((3, 8, 8, 3)).astype(np.float32)
        batched = forward_video(frames, params, tiny_config)
        for i in range(3):
            np.testing.assert_allclose(batched[i], forward(frames[i], params, tiny_config),
                                       atol=1e-6)

    def test_wrong_param_length(self, tiny_config):
        with pytest.raises(ValueError, match="parameter vector"):
            forward(np.zeros((8, 8, 3), np.float32), np.zeros(10, np.float32),
                    tiny_config)


class TestSpatialAdaptivity:
    def test_distinct_patches_get_meaningfully_different_kernels(self, tiny_config):
        params = init_params(tiny_config, seed=61)
        flat = np.full((4, 4, 3), 0.5, np.float32)
        textured = np.zeros((4, 4, 3), np.float32)
        textured[::2, ::2] = 1.0
        ka = generate_kernel(flat, params, tiny_config).astype(np.float64)
        kb = generate_kernel(textured, params, tiny_config).astype(np.float64)
        rel = np.abs(ka - kb).max() / max(np.abs(ka).max(), np.abs(kb).max())
        assert rel > 1e-3
