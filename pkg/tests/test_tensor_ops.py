"""Tensor primitive tests against brute-force loop oracles."""

import numpy as np
import pytest

from hebbcnn.errors import ShapeError
from hebbcnn.tensor_ops import avg_pool2, conv2d_valid, standardize_sample, unfold


def conv_loop_oracle(x, w):
    """Quadruple-nested direct convolution, the independent reference."""
    b, c, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    out = np.zeros((b, c_out, h - kh + 1, wd - kw + 1))
    for bi in range(b):
        for o in range(c_out):
            for i in range(out.shape[2]):
                for j in range(out.shape[3]):
                    out[bi, o, i, j] = (x[bi, :, i : i + kh, j : j + kw] * w[o]).sum()
    return out


def pool_loop_oracle(x):
    b, c, h, w = x.shape
    out = np.zeros((b, c, h // 2, w // 2))
    for bi in range(b):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[bi, ci, i, j] = x[bi, ci, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].mean()
    return out


class TestConv2dValid:
    def test_zero_input(self):
        out = conv2d_valid(np.zeros((1, 1, 3, 3)), np.ones((1, 1, 2, 2)))
        assert out.shape == (1, 1, 2, 2)
        assert np.all(out == 0)

    def test_identity_kernel(self):
        x = np.random.default_rng(1).standard_normal((2, 1, 4, 5))
        out = conv2d_valid(x, np.ones((1, 1, 1, 1)))
        np.testing.assert_allclose(out, x, rtol=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 3, 3))
        out = conv2d_valid(x, w)
        ref = conv_loop_oracle(x, w)
        np.testing.assert_allclose(out, ref, rtol=1e-6)

    @pytest.mark.parametrize("trial", range(10))
    def test_random_shapes_match_oracle(self, trial):
        rng = np.random.default_rng(100 + trial)
        b, c, co = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 6)
        kh, kw = rng.integers(1, 5), rng.integers(1, 5)
        h, w = kh + rng.integers(0, 5), kw + rng.integers(0, 5)
        x = rng.standard_normal((b, c, h, w))
        wt = rng.standard_normal((co, c, kh, kw))
        np.testing.assert_allclose(
            conv2d_valid(x, wt), conv_loop_oracle(x, wt), rtol=1e-6, atol=1e-9
        )

    def test_linear_in_both_arguments(self):
        rng = np.random.default_rng(2)
        x1 = rng.standard_normal((2, 3, 6, 6))
        x2 = rng.standard_normal((2, 3, 6, 6))
        w1 = rng.standard_normal((4, 3, 3, 3))
        w2 = rng.standard_normal((4, 3, 3, 3))
        np.testing.assert_allclose(
            conv2d_valid(x1 + x2, w1),
            conv2d_valid(x1, w1) + conv2d_valid(x2, w1),
            rtol=1e-6,
        )
        np.testing.assert_allclose(
            conv2d_valid(x1, w1 + w2),
            conv2d_valid(x1, w1) + conv2d_valid(x1, w2),
            rtol=1e-6,
        )

    def test_channel_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"3 channels.*expect 2"):
            conv2d_valid(np.zeros((1, 3, 4, 4)), np.zeros((1, 2, 2, 2)))

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError, match="larger than input"):
            conv2d_valid(np.zeros((1, 1, 3, 3)), np.zeros((1, 1, 4, 4)))

    def test_float64_accumulation_headroom(self):
        # summing many same-sign float32 products must not drift
        x = np.full((1, 1, 1, 4096), 0.1, dtype=np.float32)
        w = np.full((1, 1, 1, 4096), 0.1, dtype=np.float32)
        out = conv2d_valid(x, w)
        expected = 4096 * np.float64(np.float32(0.1)) ** 2
        assert abs(float(out[0, 0, 0, 0]) - expected) < 1e-3

    def test_does_not_mutate_inputs(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 2, 5, 5))
        w = rng.standard_normal((3, 2, 2, 2))
        xc, wc = x.copy(), w.copy()
        conv2d_valid(x, w)
        np.testing.assert_array_equal(x, xc)
        np.testing.assert_array_equal(w, wc)


class TestUnfold:
    def test_identity_for_1x1(self):
        x = np.random.default_rng(4).standard_normal((2, 3, 4, 4))
        np.testing.assert_array_equal(unfold(x, 1, 1), x)

    def test_single_patch(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        out = unfold(x, 2, 2)
        assert out.shape == (1, 4, 1, 1)
        np.testing.assert_array_equal(out[0, :, 0, 0], [1.0, 2.0, 3.0, 4.0])

    def test_channel_ordering(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((1, 2, 3, 4))
        out = unfold(x, 2, 2)
        kh = kw = 2
        for c in range(2):
            for u in range(kh):
                for v in range(kw):
                    np.testing.assert_array_equal(
                        out[0, c * kh * kw + u * kw + v],
                        x[0, c, u : u + 2, v : v + 3],
                    )

    @pytest.mark.parametrize("trial", range(10))
    def test_composition_equals_conv(self, trial):
        rng = np.random.default_rng(200 + trial)
        c, co = rng.integers(1, 4), rng.integers(1, 5)
        kh, kw = rng.integers(1, 4), rng.integers(1, 4)
        h, w = kh + rng.integers(0, 4), kw + rng.integers(0, 4)
        x = rng.standard_normal((2, c, h, w))
        wt = rng.standard_normal((co, c, kh, kw))
        direct = conv2d_valid(x, wt)
        composed = conv2d_valid(unfold(x, kh, kw), wt.reshape(co, c * kh * kw, 1, 1))
        np.testing.assert_allclose(composed, direct, rtol=1e-6, atol=1e-12)

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError):
            unfold(np.zeros((1, 1, 2, 2)), 3, 3)


class TestAvgPool2:
    def test_constant(self):
        x = np.full((2, 3, 4, 4), 2.5)
        np.testing.assert_allclose(avg_pool2(x), np.full((2, 3, 2, 2), 2.5))

    def test_single_block(self):
        x = np.array([[[[1.0, 3.0], [5.0, 7.0]]]])
        np.testing.assert_allclose(avg_pool2(x), [[[[4.0]]]])

    def test_matches_loop_oracle(self):
        x = np.random.default_rng(6).standard_normal((2, 3, 6, 8))
        np.testing.assert_allclose(avg_pool2(x), pool_loop_oracle(x), rtol=1e-12)

    def test_preserves_plane_means(self):
        x = np.random.default_rng(8).standard_normal((3, 4, 8, 8))
        pooled = avg_pool2(x)
        np.testing.assert_allclose(
            pooled.mean(axis=(2, 3)), x.mean(axis=(2, 3)), atol=1e-6
        )

    def test_odd_dims_rejected(self):
        with pytest.raises(ShapeError, match="even"):
            avg_pool2(np.zeros((1, 1, 3, 4)))

    def test_does_not_mutate_input(self):
        x = np.random.default_rng(9).standard_normal((1, 1, 4, 4))
        xc = x.copy()
        avg_pool2(x)
        np.testing.assert_array_equal(x, xc)


class TestStandardizeSample:
    def test_fixed_point(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((1, 2, 5, 5))
        flat = x.reshape(1, -1)
        x = ((flat - flat.mean()) / flat.std()).reshape(x.shape)
        np.testing.assert_allclose(standardize_sample(x), x, atol=1e-6)

    def test_constant_sample_becomes_zero(self):
        x = np.full((2, 3, 4, 4), 7.0)
        np.testing.assert_array_equal(standardize_sample(x), np.zeros_like(x))

    def test_moments(self):
        x = np.random.default_rng(11).normal(3.0, 5.0, size=(4, 3, 8, 8))
        out = standardize_sample(x)
        flat = out.reshape(4, -1)
        np.testing.assert_allclose(flat.mean(axis=1), 0.0, atol=1e-6)
        np.testing.assert_allclose(flat.std(axis=1), 1.0, atol=1e-5)

    def test_affine_invariance(self):
        x = np.random.default_rng(12).standard_normal((3, 2, 6, 6))
        out = standardize_sample(x)
        np.testing.assert_allclose(standardize_sample(2.5 * x + 4.0), out, atol=1e-9)

    def test_per_sample_independence(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((3, 2, 4, 4))
        solo = standardize_sample(x[1:2])
        batched = standardize_sample(x)[1:2]
        np.testing.assert_allclose(batched, solo, atol=1e-12)

    def test_mixed_degenerate_batch(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal((2, 1, 3, 3))
        x[0] = 4.2  # constant sample alongside a live one
        out = standardize_sample(x)
        assert np.all(out[0] == 0.0)
        assert out[1].std() > 0.9
