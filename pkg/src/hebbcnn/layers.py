"""Hebbian convolutional layers and the multi-layer training loop.

A layer keeps its filters masked and unit-norm at all times and carries an
adaptive per-channel bias that steers each channel's win rate toward
plasticity_k / filters. The transmitted activation (binary winner-take-all,
binary top-k, or the softer triangle response) is chosen independently of
the plasticity signal, which is always binary WTA over the bias-shifted
response and always taken before pooling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeError
from .rules import HebbRule, PlasticityBatch, hebbian_update_via_gradient
from .tensor_ops import avg_pool2, conv2d_valid, standardize_sample

ACTIVATION_KINDS = ("wta", "kwta", "triangle")

# Seed-stream tags keep independent random draws from ever colliding.
_TAG_INIT = 0
_TAG_SHUFFLE = 1
_TAG_RESCUE = 2


@dataclass(frozen=True)
class LayerSpec:
    """Static description of one convolutional layer."""

    filters: int
    kernel: int
    activation: str = "wta"
    activation_k: int = 1
    prune_density: float = 1.0
    plasticity_k: int = 1

    def validate(self):
        if self.filters < 1 or self.kernel < 1:
            raise ValueError(f"filters and kernel must be positive: {self}")
        if self.activation not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 < self.prune_density <= 1.0:
            raise ValueError(f"prune_density must be in (0, 1]: {self.prune_density}")
        if not 1 <= self.plasticity_k <= self.filters:
            raise ValueError(f"plasticity_k must be in 1..{self.filters}")
        if self.activation == "kwta" and not 1 <= self.activation_k <= self.filters:
            raise ValueError(f"activation_k must be in 1..{self.filters}")

    @property
    def target_rate(self):
        return self.plasticity_k / self.filters


def default_layer_specs():
    return (
        LayerSpec(filters=100, kernel=5),
        LayerSpec(filters=196, kernel=3),
        LayerSpec(filters=400, kernel=3),
    )


@dataclass(frozen=True)
class NetworkConfig:
    """Everything needed to reproduce a training run."""

    layers: tuple[LayerSpec, ...] = field(default_factory=default_layer_specs)
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 0.01
    threshold_rate: float = 0.02
    ema_horizon: float = 10.0
    rule: HebbRule = HebbRule.INSTAR
    seed: int = 0
    greedy: bool = False

    def validate(self):
        if not self.layers:
            raise ValueError("config needs at least one layer")
        for spec in self.layers:
            spec.validate()
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        for name in ("learning_rate", "threshold_rate", "ema_horizon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def ema_coefficient(config, n_images):
    """Per-batch EMA coefficient for the win-rate tracker.

    ema_horizon of 10 means the tracker effectively averages over a tenth of
    an epoch's batches; clamped to 1 for very small datasets.
    """
    batches = max(1, math.ceil(n_images / config.batch_size))
    return min(1.0, config.ema_horizon / batches)


def wta_select(preact_with_bias, k):
    """Binary winner map: at each (b, i, j) the k highest channels get 1,
    every other channel 0. Ties go to the lower channel index."""
    a = np.asarray(preact_with_bias)
    if a.ndim != 4:
        raise ShapeError(f"expected 4-D input, got shape {a.shape}")
    c = a.shape[1]
    if not 1 <= k <= c:
        raise ShapeError(f"k={k} outside 1..{c}")
    dt = a.dtype if a.dtype == np.float64 else np.dtype(np.float32)
    out = np.zeros(a.shape, dtype=dt)
    if k == 1:
        winners = a.argmax(axis=1)  # argmax returns the first (lowest) index
        np.put_along_axis(out, winners[:, None], 1.0, axis=1)
    else:
        order = np.argsort(-a, axis=1, kind="stable")
        np.put_along_axis(out, order[:, :k], 1.0, axis=1)
    return out


def triangle_activation(preact_with_bias):
    """Subtract the per-position mean across channels and rectify at zero."""
    a = np.asarray(preact_with_bias)
    if a.ndim != 4:
        raise ShapeError(f"expected 4-D input, got shape {a.shape}")
    if a.shape[1] < 2:
        raise ShapeError("triangle activation needs at least 2 channels")
    mean = a.mean(axis=1, keepdims=True, dtype=np.float64)
    out = np.maximum(a - mean, 0.0)
    return out.astype(a.dtype if a.dtype == np.float64 else np.float32, copy=False)


@dataclass
class ConvLayer:
    """Mutable state of one Hebbian convolutional layer."""

    spec: LayerSpec
    in_channels: int
    w: np.ndarray  # (filters, in_channels, k, k) float32, masked, unit norm
    bias: np.ndarray  # (filters,) float32 adaptive threshold
    mask: np.ndarray  # same shape as w, float32 entries in {0, 1}
    rate_ema: np.ndarray  # (filters,) float32 smoothed win rate
    seed: int
    layer_index: int
    rescue_count: int = 0

    def filter_norms(self):
        return np.sqrt((self.w.astype(np.float64) ** 2).sum(axis=(1, 2, 3)))


def init_layer(spec, in_channels, seed, layer_index):
    """Fresh layer: standard-normal weights, per-filter pruning mask with
    exactly ceil(density * fan_in) surviving entries, unit-norm filters,
    zero biases, win-rate tracker starting at its target."""
    spec.validate()
    rng = np.random.default_rng([seed, _TAG_INIT, layer_index])
    fan_in = in_channels * spec.kernel * spec.kernel
    shape = (spec.filters, in_channels, spec.kernel, spec.kernel)
    w = rng.standard_normal(shape)
    keep = max(1, math.ceil(spec.prune_density * fan_in))
    mask = np.zeros((spec.filters, fan_in), dtype=np.float32)
    for o in range(spec.filters):
        mask[o, rng.choice(fan_in, size=keep, replace=False)] = 1.0
    mask = mask.reshape(shape)
    layer = ConvLayer(
        spec=spec,
        in_channels=in_channels,
        w=w.astype(np.float32),
        bias=np.zeros(spec.filters, dtype=np.float32),
        mask=mask,
        rate_ema=np.full(spec.filters, spec.target_rate, dtype=np.float32),
        seed=seed,
        layer_index=layer_index,
    )
    apply_mask_and_normalize(layer)
    return layer


def apply_mask_and_normalize(layer):
    """Re-impose the pruning mask and rescale every filter to unit norm.

    A filter whose surviving weights are all zero has them redrawn from a
    deterministic stream before rescaling, so no filter can die."""
    w = layer.w.astype(np.float64) * layer.mask
    sq = (w**2).sum(axis=(1, 2, 3))
    for o in np.flatnonzero(sq < 1e-24):
        layer.rescue_count += 1
        rng = np.random.default_rng(
            [layer.seed, _TAG_RESCUE, layer.layer_index, layer.rescue_count]
        )
        while True:
            w[o] = rng.standard_normal(w[o].shape) * layer.mask[o]
            sq[o] = (w[o] ** 2).sum()
            if sq[o] > 0.0:
                break
    layer.w = (w / np.sqrt(sq)[:, None, None, None]).astype(np.float32)


def update_thresholds(layer, plasticity_output, threshold_rate=0.02, ema_alpha=0.05):
    """Fold this batch's per-channel win fraction into the EMA tracker and
    nudge each bias toward the target rate plasticity_k / filters."""
    wins = np.asarray(plasticity_output).mean(axis=(0, 2, 3), dtype=np.float64)
    ema = (1.0 - ema_alpha) * layer.rate_ema.astype(np.float64) + ema_alpha * wins
    layer.rate_ema = ema.astype(np.float32)
    bias = layer.bias.astype(np.float64) + threshold_rate * (layer.spec.target_rate - ema)
    layer.bias = bias.astype(np.float32)


def _activation_output(layer, shifted, y_real):
    kind = layer.spec.activation
    if kind == "wta":
        return y_real if layer.spec.plasticity_k == 1 else wta_select(shifted, 1)
    if kind == "kwta":
        return wta_select(shifted, layer.spec.activation_k)
    return triangle_activation(shifted)


def layer_forward(layer, x):
    """Inference pass: standardize, convolve, add bias, select, pool."""
    xs = standardize_sample(x)
    shifted = conv2d_valid(xs, layer.w) + layer.bias[None, :, None, None]
    y_real = wta_select(shifted, layer.spec.plasticity_k)
    return avg_pool2(_activation_output(layer, shifted, y_real))


def layer_forward_train(layer, x, rule, lr, *, threshold_rate=0.02, ema_alpha=0.05):
    """One training step. Returns the pooled activation output; the layer is
    updated in place.

    Order of effects: standardize the batch, convolve, add bias, pick the
    binary plasticity winners and the transmitted activation, apply the
    Hebbian delta, re-mask and re-normalize the filters, adapt thresholds.
    The returned output is computed from the pre-update weights, and
    plasticity sees the pre-pooling signals.
    """
    xs = standardize_sample(x)
    preact = conv2d_valid(xs, layer.w)
    shifted = preact + layer.bias[None, :, None, None]
    y_real = wta_select(shifted, layer.spec.plasticity_k)
    act = _activation_output(layer, shifted, y_real)
    delta = hebbian_update_via_gradient(
        rule, PlasticityBatch(x=xs, preact=preact, y_real=y_real), layer.w
    )
    layer.w = (layer.w.astype(np.float64) + lr * delta).astype(np.float32)
    apply_mask_and_normalize(layer)
    update_thresholds(layer, y_real, threshold_rate, ema_alpha)
    return avg_pool2(act)


@dataclass
class HebbNetwork:
    """A stack of Hebbian layers plus its originating config."""

    config: NetworkConfig
    layers: list[ConvLayer]
    epochs_done: int = 0


def init_network(config, in_channels=3):
    config.validate()
    layers = []
    for i, spec in enumerate(config.layers):
        layers.append(init_layer(spec, in_channels, config.seed, i))
        in_channels = spec.filters
    return HebbNetwork(config=config, layers=layers)


def network_forward(network, x):
    """Per-layer post-pooling outputs for a batch; no state is touched."""
    outs = []
    for layer in network.layers:
        x = layer_forward(layer, x)
        outs.append(x)
    return outs


def network_train(config, images, *, network=None, epochs=None, step_callback=None,
                  log=None):
    """Train for ``epochs`` additional epochs (default: config.epochs) over
    ``images`` of shape (N, C, H, W).

    Batches are reshuffled each epoch from a stream derived from
    (seed, epoch index), so training 1 epoch, checkpointing, and training 1
    more reproduces an uninterrupted 2-epoch run exactly. In the default
    mode every layer learns in the same pass; with config.greedy each layer
    is trained for config.epochs epochs in turn while earlier layers run
    inference only.

    step_callback, if given, is called as step_callback(network, epoch,
    batch_index) after every batch.
    """
    config.validate()
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ShapeError(f"images must be a nonempty 4-D array, got {images.shape}")
    net = network if network is not None else init_network(config, images.shape[1])
    if epochs is None:
        # greedy mode spends config.epochs on each layer in turn
        epochs = config.epochs * (len(net.layers) if config.greedy else 1)
    n = images.shape[0]
    bsz = config.batch_size
    batches = math.ceil(n / bsz)
    alpha = ema_coefficient(config, n)

    for _ in range(epochs):
        epoch = net.epochs_done
        order = np.random.default_rng([config.seed, _TAG_SHUFFLE, epoch]).permutation(n)
        if config.greedy:
            train_idx = min(epoch // max(1, config.epochs), len(net.layers) - 1)
        for b in range(batches):
            x = images[order[b * bsz : (b + 1) * bsz]]
            if config.greedy:
                for j, layer in enumerate(net.layers[: train_idx + 1]):
                    if j < train_idx:
                        x = layer_forward(layer, x)
                    else:
                        x = layer_forward_train(
                            layer, x, config.rule, config.learning_rate,
                            threshold_rate=config.threshold_rate, ema_alpha=alpha,
                        )
            else:
                for layer in net.layers:
                    x = layer_forward_train(
                        layer, x, config.rule, config.learning_rate,
                        threshold_rate=config.threshold_rate, ema_alpha=alpha,
                    )
            if step_callback is not None:
                step_callback(net, epoch, b)
        net.epochs_done += 1
        if log is not None:
            log(f"epoch {net.epochs_done}: "
                + " ".join(f"L{i+1} rate [{l.rate_ema.min():.4f}, {l.rate_ema.max():.4f}]"
                           for i, l in enumerate(net.layers)))
    return net
