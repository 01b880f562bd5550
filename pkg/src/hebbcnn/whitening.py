"""ZCA whitening fitted over a training set of images.

In the image pipeline each image is standardized over its own pixels first;
the whitening matrix E diag(1/sqrt(eigenvalue + epsilon)) E^T is then built
from the eigendecomposition of the covariance (1/N convention) of the
standardized, flattened images. The resulting matrix is symmetric and
independent of eigenvector order and sign.

Note that per-sample standardization pins every vector to the mean-zero
hyperplane, so the fitted covariance always has one near-zero eigenvalue;
epsilon keeps that direction finite. Pass standardize=False to whiten raw
vectors whose covariance can be genuinely full rank.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, FitError, ShapeError
from .tensor_ops import standardize_sample

DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class ZcaTransform:
    """Fitted whitening matrix plus its regularization metadata.

    matrix: (D, D) float32, symmetric.
    epsilon: eigenvalue shift used at fit time.
    fitted_on: number of training images the covariance was estimated from.
    """

    matrix: np.ndarray
    epsilon: float
    fitted_on: int

    @property
    def dim(self):
        return self.matrix.shape[0]


def zca_matrix(cov, epsilon):
    """E diag(1/sqrt(eigenvalue + epsilon)) E^T for a symmetric covariance.

    Returns float64; the result does not depend on how the eigendecomposition
    orders or signs its eigenvectors. Raises FitError when an eigenvalue plus
    epsilon is not positive."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ShapeError(f"covariance must be square, got shape {cov.shape}")
    evals, evecs = np.linalg.eigh(cov)
    shifted = np.clip(evals, 0.0, None) + epsilon
    if np.any(shifted <= 0.0):
        raise FitError("covariance is singular; use epsilon > 0")
    wmat = (evecs * (1.0 / np.sqrt(shifted))) @ evecs.T
    return 0.5 * (wmat + wmat.T)  # exact symmetry


def _flatten_chunk(chunk, standardize):
    chunk = np.asarray(chunk)
    if chunk.ndim != 4:
        raise ShapeError(f"image chunks must be 4-D, got shape {chunk.shape}")
    chunk = chunk.astype(np.float64)
    if standardize:
        chunk = standardize_sample(chunk)
    return chunk.reshape(chunk.shape[0], -1)


def fit_zca(images, epsilon=DEFAULT_EPSILON, standardize=True):
    """Fit a ZCA transform from images given as one (N, C, H, W) array or an
    iterable of such chunks (streamed in a fixed order).

    epsilon must be nonnegative; zero is only usable when the covariance is
    full rank. Raises FitError for fewer than 2 images and DataError if the
    accumulated covariance is non-finite.
    """
    if epsilon < 0:
        raise FitError(f"epsilon must be nonnegative, got {epsilon}")
    if isinstance(images, np.ndarray):
        images = (images,)

    sum_outer = None
    sum_vec = None
    dim = 0
    count = 0
    for chunk in images:
        flat = _flatten_chunk(chunk, standardize)
        if sum_outer is None:
            dim = flat.shape[1]
            sum_outer = np.zeros((dim, dim))
            sum_vec = np.zeros(dim)
        elif flat.shape[1] != dim:
            raise ShapeError(f"chunk vector length {flat.shape[1]} != {dim}")
        sum_outer += flat.T @ flat
        sum_vec += flat.sum(axis=0)
        count += flat.shape[0]

    if count < 2:
        raise FitError(f"need at least 2 images to fit whitening, got {count}")
    mean = sum_vec / count
    cov = sum_outer / count - np.outer(mean, mean)
    if not np.all(np.isfinite(cov)):
        raise DataError("covariance has non-finite entries")
    wmat = zca_matrix(cov, epsilon)
    return ZcaTransform(
        matrix=wmat.astype(np.float32), epsilon=float(epsilon), fitted_on=count
    )


def apply_zca(transform, images, standardize=True):
    """Standardize each image (unless disabled) and multiply it by the
    whitening matrix.

    Accepts a single (C, H, W) image or a (B, C, H, W) batch; returns float32
    of the matching shape.
    """
    arr = np.asarray(images)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.ndim != 4:
        raise ShapeError(f"expected a 3-D image or 4-D batch, got shape {arr.shape}")
    d = arr[0].size
    if d != transform.dim:
        raise ShapeError(
            f"image vector length {d} != transform dimension {transform.dim}"
        )
    flat = _flatten_chunk(arr, standardize)
    out = (flat @ transform.matrix.astype(np.float64)).reshape(arr.shape)
    out = out.astype(np.float32)
    return out[0] if single else out
