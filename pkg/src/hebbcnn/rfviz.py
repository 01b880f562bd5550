"""Receptive-field reconstruction and image-grid export.

First-layer filters are rendered directly as RGB tiles. For higher layers
the field is rebuilt recursively: each filter's tile is the weighted sum of
the previous layer's tiles placed at their kernel offsets, with the offset
stride doubling at every pooling stage (so tiles grow 5 -> 10 -> 20 pixels
for the stock architecture). The reconstruction ignores the within-pool
position and is therefore approximate by design.

A whole grid shares one value-to-gray mapping so that weight zero is the
same mid-gray in every tile.
"""

import math
from pathlib import Path

import numpy as np

from .errors import ShapeError


def layer_receptive_fields(network, layer_index):
    """Pixel-space receptive fields for one layer (1-based index).

    Returns (filters, C0, S, S) float64 where C0 is the network's input
    channel count and S the layer's tile size.
    """
    n_layers = len(network.layers)
    if not 1 <= layer_index <= n_layers:
        raise ShapeError(f"layer index {layer_index} outside 1..{n_layers}")

    first = network.layers[0]
    fields = first.w.astype(np.float64)  # (filters, C0, k, k)
    size = first.spec.kernel
    stride = 1
    for layer in network.layers[1 : layer_index]:
        stride *= 2  # one pooling stage between consecutive layers
        k = layer.spec.kernel
        span = (k - 1) * stride + size
        new_size = max(2 * size, span)
        w = layer.w.astype(np.float64)  # (filters, prev_filters, k, k)
        new = np.zeros((w.shape[0], fields.shape[1], new_size, new_size))
        for u in range(k):
            for v in range(k):
                block = np.tensordot(w[:, :, u, v], fields, axes=(1, 0))
                new[:, :, stride * u : stride * u + size,
                    stride * v : stride * v + size] += block
        fields = new
        size = new_size
    return fields


def render_grid(tiles, border=1):
    """Lay tiles out in a near-square grid with 1-px black borders.

    tiles: (N, 3, S, S) real-valued. The whole grid is normalized together
    so that value 0 maps to mid-gray in every tile; an all-zero tile set
    renders as flat mid-gray. Returns (H, W, 3) uint8.
    """
    tiles = np.asarray(tiles, dtype=np.float64)
    if tiles.ndim != 4 or tiles.shape[1] != 3:
        raise ShapeError(f"tiles must be (N, 3, S, S), got {tiles.shape}")
    n, _, s, _ = tiles.shape
    peak = np.abs(tiles).max()
    scaled = 0.5 + tiles / (2.0 * peak) if peak > 0 else np.full_like(tiles, 0.5)

    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    height = rows * s + (rows + 1) * border
    width = cols * s + (cols + 1) * border
    canvas = np.zeros((height, width, 3))
    for i in range(n):
        r, c = divmod(i, cols)
        top = border + r * (s + border)
        left = border + c * (s + border)
        canvas[top : top + s, left : left + s] = scaled[i].transpose(1, 2, 0)
    return np.clip(np.round(canvas * 255.0), 0, 255).astype(np.uint8)


def write_image(path, pixels):
    """Write (H, W, 3) uint8 pixels as PNG via Pillow, or as binary PPM when
    the suffix is .ppm or Pillow is unavailable. Returns the path written."""
    path = Path(path)
    if path.suffix.lower() != ".ppm":
        try:
            from PIL import Image
        except ImportError:
            path = path.with_suffix(".ppm")
        else:
            Image.fromarray(pixels, mode="RGB").save(path, format="PNG")
            return path
    header = f"P6\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode()
    path.write_bytes(header + pixels.tobytes())
    return path


def export_receptive_fields(network, layer_index, path):
    """Render one layer's receptive-field grid to an image file."""
    fields = layer_receptive_fields(network, layer_index)
    if fields.shape[1] != 3:
        raise ShapeError(
            f"can only render 3-channel inputs, network takes {fields.shape[1]}"
        )
    return write_image(path, render_grid(fields))
