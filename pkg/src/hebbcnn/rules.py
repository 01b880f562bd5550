"""Hebbian plasticity updates for convolutional filter banks.

Two interchangeable computations of the same raw weight delta are provided.
``hebbian_update_via_gradient`` differentiates a per-rule surrogate
expression whose output values are overwritten by the layer's real (binary)
output before the backward step, so the chain rule lands exactly on the
classical update. ``hebbian_update_direct`` accumulates the update
patch-by-patch over the unfolded input instead. Agreement of the two routes
is the central correctness check of this package.

Neither function applies a learning rate and both sum (not average) over the
batch and all spatial positions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor_ops import conv2d_valid, unfold


class HebbRule(enum.Enum):
    """Selects the plasticity semantics of a layer.

    PLAIN_HEBB: dw ~ y*x
    INSTAR:     dw ~ y*(x - w)
    OJA:        dw ~ y*(x - y*w)
    """

    PLAIN_HEBB = "hebb"
    INSTAR = "instar"
    OJA = "oja"


@dataclass(frozen=True)
class PlasticityBatch:
    """Signals captured from one layer for one plasticity step.

    x: layer input after per-sample standardization, (B, C, H, W).
    preact: linear filter response conv2d_valid(x, w), (B, C_out, H', W').
    y_real: binary winner map used as the plastic output, same shape as preact.
    """

    x: np.ndarray
    preact: np.ndarray
    y_real: np.ndarray


def _check_rule(rule):
    if not isinstance(rule, HebbRule):
        raise ValueError(f"unknown Hebbian rule: {rule!r}")


def _check_batch(batch, w):
    _require = batch.x.ndim == 4 and batch.preact.ndim == 4 and batch.y_real.ndim == 4
    if not _require:
        raise ShapeError("PlasticityBatch tensors must all be 4-D")
    if batch.preact.shape != batch.y_real.shape:
        raise ShapeError(
            f"preact {batch.preact.shape} and y_real {batch.y_real.shape} differ"
        )
    c_out, c_in, kh, kw = w.shape
    b, c, h, wd = batch.x.shape
    expected = (b, c_out, h - kh + 1, wd - kw + 1)
    if c != c_in:
        raise ShapeError(f"input has {c} channels but weights expect {c_in}")
    if batch.y_real.shape != expected:
        raise ShapeError(
            f"y_real shape {batch.y_real.shape} does not match {expected} "
            f"implied by input {batch.x.shape} and weights {w.shape}"
        )


def filter_sq_norms(w):
    """Squared Euclidean norm of each filter, shape (C_out,), float64."""
    return (np.asarray(w, dtype=np.float64) ** 2).sum(axis=(1, 2, 3))


def surrogate_value(rule, preact, w, y_real):
    """Per-position surrogate output whose gradient carries the rule's update.

    PLAIN_HEBB returns the linear response unchanged; INSTAR subtracts half
    the squared filter norm; OJA subtracts it scaled by the (constant) real
    output. The returned values are only ever used through their dependence
    on ``w``; their numeric content is overwritten before any backward step.
    """
    _check_rule(rule)
    preact = np.asarray(preact)
    if rule is HebbRule.PLAIN_HEBB:
        return preact.copy()
    half_sq = 0.5 * filter_sq_norms(w)
    if rule is HebbRule.INSTAR:
        out = preact.astype(np.float64) - half_sq[None, :, None, None]
    else:  # OJA; y_real is treated as a constant here
        out = preact.astype(np.float64) - half_sq[None, :, None, None] * np.asarray(
            y_real, dtype=np.float64
        )
    dt = np.result_type(preact, w)
    return out.astype(dt if dt == np.float64 else np.float32, copy=False)


def hebbian_update_direct(rule, batch, w):
    """Accumulate the update patch-by-patch over the unfolded input.

    For output channel o at every batch element and position, adds
    y * patch (PLAIN_HEBB), y * (patch - w_o) (INSTAR) or
    y * (patch - y * w_o) (OJA), where y is the scalar y_real entry and
    ``patch`` the flattened input patch under the filter. Returns a float64
    array shaped like ``w``.
    """
    _check_rule(rule)
    w = np.asarray(w)
    _check_batch(batch, w)
    c_out, c_in, kh, kw = w.shape
    y = np.asarray(batch.y_real, dtype=np.float64)
    patches = unfold(batch.x, kh, kw).astype(np.float64)  # (B, C*kh*kw, H', W')
    wflat = w.reshape(c_out, -1).astype(np.float64)
    # sum_{b,i,j} y[b,o,i,j] * patches[b,k,i,j]
    yx = np.tensordot(y, patches, axes=([0, 2, 3], [0, 2, 3]))
    if rule is HebbRule.PLAIN_HEBB:
        delta = yx
    elif rule is HebbRule.INSTAR:
        delta = yx - y.sum(axis=(0, 2, 3))[:, None] * wflat
    else:
        delta = yx - (y * y).sum(axis=(0, 2, 3))[:, None] * wflat
    return delta.reshape(w.shape)


def hebbian_update_via_gradient(rule, batch, w):
    """Update as the negative gradient of the surrogate loss -1/2 * sum(y^2)
    with the output values overwritten by ``y_real``.

    The chain rule factors into d(loss)/d(output) frozen at the real output,
    times d(output)/d(weights). The convolutional part of the second factor
    is evaluated as a convolution with the batch axis playing the channel
    role; INSTAR and OJA contribute an extra term from the squared-norm part
    of their surrogates. Returns a float64 array shaped like ``w``.
    """
    _check_rule(rule)
    w = np.asarray(w)
    _check_batch(batch, w)
    y = np.asarray(batch.y_real)
    x = np.asarray(batch.x)
    # d/dw of sum(g * conv(x, w)) is itself a valid convolution: swap batch
    # and channel axes and convolve x with g.
    xt = x.transpose(1, 0, 2, 3)
    gt = np.ascontiguousarray(y.transpose(1, 0, 2, 3), dtype=np.float64)
    grad = conv2d_valid(xt, gt).transpose(1, 0, 2, 3).astype(np.float64)
    if rule is HebbRule.PLAIN_HEBB:
        return np.ascontiguousarray(grad)
    if rule is HebbRule.INSTAR:
        per_channel = y.sum(axis=(0, 2, 3), dtype=np.float64)
    else:
        yf = y.astype(np.float64, copy=False)
        per_channel = np.einsum("bcij,bcij->c", yf, yf)
    return grad - per_channel[:, None, None, None] * w.astype(np.float64)


def oja_fixed_point_demo(data, steps, lr):
    """Train a single linear unit y = w . x with Oja's rule, cycling through
    ``data`` in order for ``steps`` updates.

    With centered data the weight vector aligns with the leading principal
    component and self-normalizes toward unit length. Returns the final
    weight vector (float64).
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("data must be a nonempty (N, d) array")
    norms = np.linalg.norm(data, axis=1)
    start = int(np.argmax(norms))
    if norms[start] == 0.0:
        raise ValueError("data is identically zero")
    w = data[start] / norms[start]
    n = data.shape[0]
    for t in range(steps):
        x = data[t % n]
        y = float(w @ x)
        w = w + lr * y * (x - y * w)
    return w
