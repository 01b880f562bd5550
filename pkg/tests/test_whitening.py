"""Whitening tests: closed-form oracle, covariance identity, invariances."""

import math

import numpy as np
import pytest

from hebbcnn.errors import DataError, FitError, ShapeError
from hebbcnn.tensor_ops import standardize_sample
from hebbcnn.whitening import ZcaTransform, apply_zca, fit_zca, zca_matrix


def correlated_vectors(rng, n, d, as_images=False):
    mix = rng.standard_normal((d, d))
    data = rng.standard_normal((n, d)) @ mix.T
    if as_images:
        return data.reshape(n, 1, 1, d)
    return data


class TestZcaMatrix:
    def test_identity_covariance(self):
        w = zca_matrix(np.eye(4), epsilon=1e-9)
        np.testing.assert_allclose(w, np.eye(4), atol=1e-3)

    def test_closed_form_two_dim(self):
        # hand eigendecomposition of [[2, 1], [1, 2]]:
        #   eigenpairs (3, [1, 1]/sqrt(2)) and (1, [1, -1]/sqrt(2))
        v1 = np.array([1.0, 1.0]) / math.sqrt(2.0)
        v2 = np.array([1.0, -1.0]) / math.sqrt(2.0)
        expected = np.outer(v1, v1) / math.sqrt(3.0) + np.outer(v2, v2)
        w = zca_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]), epsilon=0.0)
        np.testing.assert_allclose(w, expected, atol=1e-12)

    def test_order_and_sign_invariance(self):
        # rebuild from a hand-permuted, hand-flipped eigendecomposition and
        # compare with the solver-ordered result
        rng = np.random.default_rng(0)
        a = rng.standard_normal((6, 6))
        cov = a @ a.T + 0.5 * np.eye(6)
        evals, evecs = np.linalg.eigh(cov)
        perm = rng.permutation(6)
        flips = np.where(rng.random(6) < 0.5, -1.0, 1.0)
        rebuilt = (evecs[:, perm] * flips) * (1.0 / np.sqrt(evals[perm] + 1e-3))
        rebuilt = rebuilt @ (evecs[:, perm] * flips).T
        np.testing.assert_allclose(zca_matrix(cov, 1e-3), rebuilt, atol=1e-6)

    def test_singular_needs_epsilon(self):
        cov = np.zeros((3, 3))
        with pytest.raises(FitError, match="epsilon"):
            zca_matrix(cov, 0.0)


class TestFitZca:
    def test_symmetry(self):
        rng = np.random.default_rng(1)
        t = fit_zca(correlated_vectors(rng, 300, 12, as_images=True), epsilon=1e-3)
        np.testing.assert_allclose(t.matrix, t.matrix.T, atol=1e-6)
        assert t.fitted_on == 300

    def test_training_covariance_becomes_identity_raw_vectors(self):
        # full-rank raw vectors, epsilon -> 0: exact algebra, not statistics
        rng = np.random.default_rng(2)
        d = 16
        data = correlated_vectors(rng, 2000, d, as_images=True)
        t = fit_zca(data, epsilon=1e-6, standardize=False)
        out = apply_zca(t, data, standardize=False).reshape(2000, d).astype(np.float64)
        out -= out.mean(axis=0)
        cov = out.T @ out / out.shape[0]
        assert np.abs(cov - np.eye(d)).max() < 1e-2

    def test_image_pipeline_covariance_off_diagonal(self):
        # with per-image standardization the mean-zero constraint leaves one
        # flat direction; at image-sized D its footprint is tiny
        rng = np.random.default_rng(3)
        imgs = rng.standard_normal((1000, 3, 8, 8))
        imgs += 0.8 * imgs.mean(axis=1, keepdims=True)  # channel correlations
        t = fit_zca(imgs, epsilon=1e-4)
        out = apply_zca(t, imgs).reshape(1000, -1).astype(np.float64)
        out -= out.mean(axis=0)
        cov = out.T @ out / out.shape[0]
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() < 0.05

    def test_streaming_matches_single_batch(self):
        rng = np.random.default_rng(4)
        imgs = rng.standard_normal((64, 2, 3, 3))
        whole = fit_zca(imgs, epsilon=1e-3)
        chunked = fit_zca((imgs[:20], imgs[20:50], imgs[50:]), epsilon=1e-3)
        np.testing.assert_allclose(whole.matrix, chunked.matrix, atol=1e-6)
        assert chunked.fitted_on == 64

    def test_too_few_images(self):
        with pytest.raises(FitError, match="at least 2"):
            fit_zca(np.zeros((1, 1, 2, 2)), epsilon=1e-3)

    def test_non_finite_data(self):
        bad = np.full((4, 1, 2, 2), np.nan)
        with pytest.raises((DataError, FitError)):
            fit_zca(bad, epsilon=1e-3, standardize=False)

    def test_negative_epsilon(self):
        with pytest.raises(FitError):
            fit_zca(np.zeros((3, 1, 2, 2)), epsilon=-1.0)


class TestApplyZca:
    def test_identity_transform_standardizes(self):
        rng = np.random.default_rng(5)
        img = rng.standard_normal((2, 2, 4, 4))
        t = ZcaTransform(matrix=np.eye(32, dtype=np.float32), epsilon=1e-3, fitted_on=10)
        out = apply_zca(t, img)
        np.testing.assert_allclose(out, standardize_sample(img), atol=1e-6)

    def test_zero_image_maps_to_zero(self):
        t = ZcaTransform(matrix=np.eye(12, dtype=np.float32), epsilon=1e-3, fitted_on=10)
        out = apply_zca(t, np.zeros((3, 2, 2)))
        np.testing.assert_array_equal(out, np.zeros((3, 2, 2)))

    def test_single_image_equals_batch_row(self):
        rng = np.random.default_rng(6)
        imgs = rng.standard_normal((4, 3, 2, 2))
        t = fit_zca(imgs, epsilon=1e-2)
        np.testing.assert_allclose(apply_zca(t, imgs[1]), apply_zca(t, imgs)[1])

    def test_linear_after_standardization(self):
        rng = np.random.default_rng(7)
        t = fit_zca(rng.standard_normal((50, 1, 2, 3)), epsilon=1e-2)
        v1 = rng.standard_normal((2, 1, 2, 3))
        v2 = rng.standard_normal((2, 1, 2, 3))
        lhs = apply_zca(t, 2.0 * v1 + v2, standardize=False)
        rhs = 2.0 * apply_zca(t, v1, standardize=False) + apply_zca(
            t, v2, standardize=False
        )
        np.testing.assert_allclose(lhs, rhs, atol=1e-4)

    def test_length_mismatch(self):
        t = ZcaTransform(matrix=np.eye(8, dtype=np.float32), epsilon=1e-3, fitted_on=10)
        with pytest.raises(ShapeError, match="length"):
            apply_zca(t, np.zeros((1, 3, 2, 2)))


class TestDeterminism:
    def test_same_inputs_same_matrix(self):
        rng = np.random.default_rng(8)
        imgs = rng.standard_normal((80, 2, 4, 4))
        a = fit_zca(imgs, epsilon=1e-3)
        b = fit_zca(imgs.copy(), epsilon=1e-3)
        np.testing.assert_array_equal(a.matrix, b.matrix)

    def test_basis_equivariance(self):
        # permuting the coordinate order conjugates the fitted matrix; any
        # eigen-ordering differences inside the solver must cancel
        rng = np.random.default_rng(9)
        data = correlated_vectors(rng, 500, 6)
        perm = rng.permutation(6)
        t = fit_zca(data.reshape(-1, 1, 1, 6), epsilon=1e-3, standardize=False)
        tp = fit_zca(data[:, perm].reshape(-1, 1, 1, 6), epsilon=1e-3, standardize=False)
        np.testing.assert_allclose(
            tp.matrix, t.matrix[np.ix_(perm, perm)], atol=1e-5
        )
