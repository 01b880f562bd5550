"""Linear probing of learned representations.

Features are built either by averaging each channel over four spatial
quadrants (for intermediate layers) or by flattening the final output. A
ridge-regularized least-squares decoder maps features to one-hot class
scores; accuracy is the fraction of argmax hits.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import FitError, ShapeError
from .layers import network_forward
from .whitening import apply_zca


@dataclass(frozen=True)
class LinearDecoder:
    """Least-squares map from feature vectors to class scores.

    weights has shape (feature_dim + 1, n_classes); the last row is the bias.
    """

    weights: np.ndarray
    ridge: float

    @property
    def feature_dim(self):
        return self.weights.shape[0] - 1


def quadrants_features(layer_output):
    """Average each channel over the four spatial quadrants and concatenate
    in (TL, TR, BL, BR) order, channels contiguous within a quadrant.

    (B, C, H, W) -> (B, 4C); H and W must be even. For a 2x2 map this is
    just the flattened output in quadrant order.
    """
    x = np.asarray(layer_output)
    if x.ndim != 4:
        raise ShapeError(f"expected 4-D layer output, got shape {x.shape}")
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"quadrants need even spatial dims, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    quads = (
        x[:, :, :h2, :w2],
        x[:, :, :h2, w2:],
        x[:, :, h2:, :w2],
        x[:, :, h2:, w2:],
    )
    return np.concatenate(
        [q.mean(axis=(2, 3), dtype=np.float64) for q in quads], axis=1
    )


def flatten_features(layer_output):
    """Flatten a (B, C, H, W) output into (B, C*H*W) float64 feature rows."""
    x = np.asarray(layer_output)
    if x.ndim != 4:
        raise ShapeError(f"expected 4-D layer output, got shape {x.shape}")
    return x.reshape(x.shape[0], -1).astype(np.float64)


def one_hot(labels, n_classes=10):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= n_classes:
        raise ShapeError(f"labels outside 0..{n_classes - 1}")
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def default_ridge(features):
    """Scale-aware ridge floor: 1e-3 * trace(X^T X) / F."""
    x = np.asarray(features, dtype=np.float64)
    return 1e-3 * float((x * x).sum()) / x.shape[1]


def fit_decoder(features, labels_one_hot, ridge=None):
    """Regress one-hot labels on features with an appended bias column.

    Solves (A^T A + ridge * J) W = A^T Y by Cholesky, where A = [X, 1] and J
    is the identity on the feature rows with a zero in the bias position
    (leaving the intercept unpenalized keeps the solution equivariant under
    feature rescaling). ridge=None uses default_ridge(features).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels_one_hot, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ShapeError("features and labels must both be 2-D")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"{x.shape[0]} feature rows vs {y.shape[0]} label rows")
    if ridge is None:
        ridge = default_ridge(x)
    if ridge < 0:
        raise FitError(f"ridge must be nonnegative, got {ridge}")

    a = np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)
    gram = a.T @ a
    idx = np.arange(x.shape[1])
    gram[idx, idx] += ridge
    rhs = a.T @ y
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise FitError(
            "normal equations are singular; pass a ridge > 0"
        ) from exc
    weights = scipy.linalg.cho_solve(factor, rhs)
    return LinearDecoder(weights=weights, ridge=float(ridge))


def decoder_scores(decoder, features):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != decoder.feature_dim:
        raise ShapeError(
            f"features of shape {x.shape} do not match decoder dimension "
            f"{decoder.feature_dim}"
        )
    return x @ decoder.weights[:-1] + decoder.weights[-1]


def evaluate_accuracy(decoder, features, labels):
    """Fraction of rows whose highest class score matches the integer label.

    Ties resolve to the lowest class index. Always in [0, 1].
    """
    scores = decoder_scores(decoder, features)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != scores.shape[0]:
        raise ShapeError(f"{scores.shape[0]} rows vs {labels.shape[0]} labels")
    return float((scores.argmax(axis=1) == labels).mean())


def probe_names(network):
    """Probe points of a network: quadrant features of every layer below the
    top, plus the flattened final output."""
    return [f"l{i + 1}_quadrants" for i in range(len(network.layers) - 1)] + ["final"]


def extract_probe_features(network, images, zca=None, batch_size=256):
    """Run images through the network and collect the probe features.

    images: (N, C, H, W), raw (uint8 or float); whitened first when ``zca``
    is given. Returns {probe name: (N, F) float32}.
    """
    names = probe_names(network)
    parts = {name: [] for name in names}
    n = images.shape[0]
    for start in range(0, n, batch_size):
        x = np.asarray(images[start : start + batch_size], dtype=np.float32)
        if zca is not None:
            x = apply_zca(zca, x)
        outs = network_forward(network, x)
        for i, name in enumerate(names[:-1]):
            parts[name].append(quadrants_features(outs[i]).astype(np.float32))
        parts["final"].append(flatten_features(outs[-1]).astype(np.float32))
    return {name: np.concatenate(chunks) for name, chunks in parts.items()}


def probe_accuracies(network, zca, train_images, train_labels, test_images,
                     test_labels, n_classes=10, batch_size=256):
    """Fit one decoder per probe on the training set and score the test set.

    Returns {probe name: test accuracy}."""
    train_feats = extract_probe_features(network, train_images, zca, batch_size)
    test_feats = extract_probe_features(network, test_images, zca, batch_size)
    labels = one_hot(train_labels, n_classes)
    out = {}
    for name in probe_names(network):
        decoder = fit_decoder(train_feats[name], labels)
        out[name] = evaluate_accuracy(decoder, test_feats[name], test_labels)
    return out
