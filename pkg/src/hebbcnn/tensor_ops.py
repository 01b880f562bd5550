"""Dense 4-D tensor primitives: valid convolution, patch unfolding, average
pooling, and per-sample standardization.

Layout convention: activations are arrays of shape (B, C, H, W) and filter
banks have shape (C_out, C_in, kh, kw). Every function returns a fresh array
and never mutates its inputs. Convolution and pooling sums are accumulated in
float64 regardless of input dtype; results come back in the promoted input
dtype (integer inputs promote to float32).
"""

import numpy as np

from .errors import ShapeError

# Samples whose standard deviation falls below this are treated as blank.
DEGENERATE_STD = 1e-8


def _require_4d(name, a):
    if a.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (B, C, H, W), got shape {a.shape}")


def _result_dtype(*arrays):
    dt = np.result_type(*arrays)
    return dt if dt == np.float64 else np.dtype(np.float32)


def _patch_matrix(x, kh, kw):
    # (B, C, H, W) -> (C*kh*kw, B*H'*W') float64, columns in (b, i, j) order,
    # rows in (c, u, v) order. Keeping the original W axis innermost makes
    # this gather (the single copy feeding the GEMM) mostly sequential.
    b, c, h, w = x.shape
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    cols = windows.transpose(1, 4, 5, 0, 2, 3).reshape(
        c * kh * kw, b * (h - kh + 1) * (w - kw + 1)
    )
    return np.ascontiguousarray(cols).astype(np.float64, copy=False)


def conv2d_valid(x, weights):
    """Valid-padding, stride-1 cross-correlation of a batch with a filter bank.

    x: (B, C, H, W); weights: (C_out, C, kh, kw). Returns
    (B, C_out, H-kh+1, W-kw+1) where out[b, o, i, j] =
    sum_{c,u,v} x[b, c, i+u, j+v] * weights[o, c, u, v].
    """
    x = np.asarray(x)
    weights = np.asarray(weights)
    _require_4d("input", x)
    _require_4d("weights", weights)
    b, c, h, w = x.shape
    c_out, c_in, kh, kw = weights.shape
    if c != c_in:
        raise ShapeError(
            f"input has {c} channels but weights expect {c_in} "
            f"(input {x.shape}, weights {weights.shape})"
        )
    if h < kh or w < kw:
        raise ShapeError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    cols = _patch_matrix(x, kh, kw)
    wmat = np.ascontiguousarray(weights.reshape(c_out, c_in * kh * kw), dtype=np.float64)
    out = wmat @ cols
    out = out.reshape(c_out, b, h - kh + 1, w - kw + 1).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out, dtype=_result_dtype(x, weights))


def unfold(x, kh, kw):
    """Rearrange overlapping kh-by-kw patches into channels.

    Output has shape (B, C*kh*kw, H-kh+1, W-kw+1); channel c*kh*kw + u*kw + v
    at position (i, j) holds x[b, c, i+u, j+v]. A 1x1 convolution of the
    result with a reshaped filter bank reproduces conv2d_valid exactly.
    """
    x = np.asarray(x)
    _require_4d("input", x)
    b, c, h, w = x.shape
    if h < kh or w < kw:
        raise ShapeError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    out = windows.transpose(0, 1, 4, 5, 2, 3).reshape(
        b, c * kh * kw, h - kh + 1, w - kw + 1
    )
    return np.ascontiguousarray(out)


def avg_pool2(x):
    """2x2 average pooling with stride 2. H and W must be even."""
    x = np.asarray(x)
    _require_4d("input", x)
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    x = x.astype(_result_dtype(x), copy=False)
    out = x[:, :, 0::2, 0::2] + x[:, :, 0::2, 1::2]
    out += x[:, :, 1::2, 0::2]
    out += x[:, :, 1::2, 1::2]
    out *= 0.25
    return out


def standardize_sample(x):
    """Shift and scale each batch element to zero mean, unit std over all of
    its channels and positions.

    Samples whose std is below DEGENERATE_STD come back as all zeros, so a
    blank input cannot poison downstream arithmetic with infinities.
    """
    x = np.asarray(x)
    _require_4d("input", x)
    b = x.shape[0]
    dt = _result_dtype(x)
    flat = x.reshape(b, -1).astype(dt, copy=False)
    mean = flat.mean(axis=1, dtype=np.float64)
    centered = flat - mean[:, None].astype(dt)
    std = np.sqrt((centered * centered).mean(axis=1, dtype=np.float64))
    scale = np.where(std >= DEGENERATE_STD, 1.0 / np.where(std > 0, std, 1.0), 0.0)
    out = centered * scale[:, None].astype(dt)
    return out.reshape(x.shape)
