"""Versioned binary container for trained networks and whitening transforms.

Layout (all little-endian): the magic bytes "HEBB", a u32 format version,
a flags byte, the full training configuration, then per-layer dims followed
by the weight, bias, mask and win-rate tensors as 32-bit floats in row-major
order, and finally the whitening block (dimension, epsilon, fit count,
matrix) when present. Loading a saved file reproduces every tensor
bit-exactly.
"""

import struct
from io import BufferedIOBase
from pathlib import Path

import numpy as np

from .errors import CompatibilityError, FormatError
from .layers import ConvLayer, HebbNetwork, LayerSpec, NetworkConfig
from .rules import HebbRule
from .whitening import ZcaTransform

MAGIC = b"HEBB"
ZCA_MAGIC = b"HZCA"
VERSION = 1

_RULE_CODES = {HebbRule.PLAIN_HEBB: 0, HebbRule.INSTAR: 1, HebbRule.OJA: 2}
_RULE_FROM_CODE = {v: k for k, v in _RULE_CODES.items()}
_ACT_CODES = {"wta": 0, "kwta": 1, "triangle": 2}
_ACT_FROM_CODE = {v: k for k, v in _ACT_CODES.items()}


class _Reader:
    def __init__(self, data, name):
        self.data = data
        self.name = name
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(
                f"{self.name}: truncated (wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)})"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array_f32(self, count):
        return np.frombuffer(self.take(4 * count), dtype="<f4").copy()

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.name}: {len(self.data) - self.pos} unexpected trailing bytes"
            )


def _write_f32(out, arr):
    out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _write_zca_block(out, zca):
    out.write(struct.pack("<IdI", zca.dim, zca.epsilon, zca.fitted_on))
    _write_f32(out, zca.matrix)


def _read_zca_block(r):
    dim, epsilon, fitted_on = r.unpack("<IdI")
    matrix = r.array_f32(dim * dim).reshape(dim, dim)
    return ZcaTransform(matrix=matrix, epsilon=epsilon, fitted_on=fitted_on)


def save_checkpoint(path, network, zca=None):
    """Write a network (and optionally its whitening transform) to ``path``."""
    cfg = network.config
    with open(path, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<IB", VERSION, 1 if zca is not None else 0))
        out.write(
            struct.pack(
                "<QIBBIIdddI",
                cfg.seed,
                network.epochs_done,
                _RULE_CODES[cfg.rule],
                1 if cfg.greedy else 0,
                cfg.epochs,
                cfg.batch_size,
                cfg.learning_rate,
                cfg.threshold_rate,
                cfg.ema_horizon,
                len(network.layers),
            )
        )
        for layer in network.layers:
            spec = layer.spec
            out.write(
                struct.pack(
                    "<IIIBIIdI",
                    spec.filters,
                    layer.in_channels,
                    spec.kernel,
                    _ACT_CODES[spec.activation],
                    spec.activation_k,
                    spec.plasticity_k,
                    spec.prune_density,
                    layer.rescue_count,
                )
            )
            _write_f32(out, layer.w)
            _write_f32(out, layer.bias)
            _write_f32(out, layer.mask)
            _write_f32(out, layer.rate_ema)
        if zca is not None:
            _write_zca_block(out, zca)


def load_checkpoint(path, expect_config=None):
    """Read a checkpoint back as (network, zca-or-None).

    If ``expect_config`` is given, its layer structure must match the stored
    dims (CompatibilityError otherwise)."""
    path = Path(path)
    r = _Reader(path.read_bytes(), str(path))
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic bytes (not a checkpoint)")
    (version, flags) = r.unpack("<IB")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    (seed, epochs_done, rule_code, greedy, epochs, batch_size,
     lr, threshold_rate, ema_horizon, n_layers) = r.unpack("<QIBBIIdddI")
    if rule_code not in _RULE_FROM_CODE:
        raise FormatError(f"{path}: unknown rule code {rule_code}")

    specs = []
    layers = []
    in_channels_first = None
    for i in range(n_layers):
        (filters, in_channels, kernel, act_code, act_k, plast_k,
         density, rescue_count) = r.unpack("<IIIBIIdI")
        if act_code not in _ACT_FROM_CODE:
            raise FormatError(f"{path}: unknown activation code {act_code}")
        spec = LayerSpec(
            filters=filters,
            kernel=kernel,
            activation=_ACT_FROM_CODE[act_code],
            activation_k=act_k,
            prune_density=density,
            plasticity_k=plast_k,
        )
        n_w = filters * in_channels * kernel * kernel
        shape = (filters, in_channels, kernel, kernel)
        layer = ConvLayer(
            spec=spec,
            in_channels=in_channels,
            w=r.array_f32(n_w).reshape(shape),
            bias=r.array_f32(filters),
            mask=r.array_f32(n_w).reshape(shape),
            rate_ema=r.array_f32(filters),
            seed=seed,
            layer_index=i,
            rescue_count=rescue_count,
        )
        if in_channels_first is None:
            in_channels_first = in_channels
        specs.append(spec)
        layers.append(layer)

    zca = _read_zca_block(r) if flags & 1 else None
    r.done()

    config = NetworkConfig(
        layers=tuple(specs),
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=lr,
        threshold_rate=threshold_rate,
        ema_horizon=ema_horizon,
        rule=_RULE_FROM_CODE[rule_code],
        seed=seed,
        greedy=bool(greedy),
    )
    if expect_config is not None:
        stored = [(s.filters, s.kernel) for s in specs]
        wanted = [(s.filters, s.kernel) for s in expect_config.layers]
        if stored != wanted:
            raise CompatibilityError(
                f"{path}: stored layers {stored} do not match expected {wanted}"
            )
    network = HebbNetwork(config=config, layers=layers, epochs_done=epochs_done)
    return network, zca


def save_zca(path, zca):
    """Write a whitening transform on its own (magic "HZCA")."""
    with open(path, "wb") as out:
        out.write(ZCA_MAGIC)
        out.write(struct.pack("<I", VERSION))
        _write_zca_block(out, zca)


def load_zca(path):
    path = Path(path)
    r = _Reader(path.read_bytes(), str(path))
    if r.take(4) != ZCA_MAGIC:
        raise FormatError(f"{path}: bad magic bytes (not a whitening file)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    zca = _read_zca_block(r)
    r.done()
    return zca
