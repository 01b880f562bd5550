"""Flat key = value experiment configuration and the two stock presets.

Unknown keys are hard errors: a silently ignored typo in an experiment
config is the cheapest way to lose a week. '#' starts a comment.
"""

from pathlib import Path

from .errors import ConfigError
from .layers import ACTIVATION_KINDS, LayerSpec, NetworkConfig, default_layer_specs
from .rules import HebbRule

PRESETS = ("default", "triangle-pruned")

_SCALAR_KEYS = (
    "rule", "epochs", "batch_size", "learning_rate", "threshold_rate",
    "ema_horizon", "seed", "greedy",
)
_LAYER_KEYS = (
    "filters", "kernel", "activation", "activation_k", "prune_density",
    "plasticity_k",
)


def preset_config(name, seed=0):
    """The stock 3-layer networks: 'default' is dense binary-WTA everywhere;
    'triangle-pruned' switches layers 2 and 3 to triangle activations with a
    1% connectivity mask (layer 1 stays dense binary WTA)."""
    if name == "default":
        return NetworkConfig(layers=default_layer_specs(), seed=seed)
    if name == "triangle-pruned":
        base = default_layer_specs()
        upper = [
            LayerSpec(
                filters=s.filters, kernel=s.kernel, activation="triangle",
                prune_density=0.01,
            )
            for s in base[1:]
        ]
        return NetworkConfig(layers=(base[0], *upper), seed=seed)
    raise ConfigError(f"unknown preset {name!r} (choose from {PRESETS})")


def _parse_bool(key, value):
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _parse_scalar(cfg_kwargs, key, value):
    try:
        if key == "rule":
            cfg_kwargs["rule"] = HebbRule(value)
        elif key in ("epochs", "batch_size", "seed"):
            cfg_kwargs[key] = int(value)
        elif key in ("learning_rate", "threshold_rate", "ema_horizon"):
            cfg_kwargs[key] = float(value)
        elif key == "greedy":
            cfg_kwargs[key] = _parse_bool(key, value)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r}") from exc


def parse_config_text(text, base=None):
    """Parse flat key = value text into a NetworkConfig.

    Layer keys look like layer1_filters, layer2_activation, ...; layer
    numbering must be contiguous from 1. Keys absent from the text keep the
    values of ``base`` (or the package defaults).
    """
    base = base if base is not None else NetworkConfig()
    cfg_kwargs = {
        "epochs": base.epochs, "batch_size": base.batch_size,
        "learning_rate": base.learning_rate, "threshold_rate": base.threshold_rate,
        "ema_horizon": base.ema_horizon, "rule": base.rule, "seed": base.seed,
        "greedy": base.greedy,
    }
    layer_kwargs = {
        i + 1: {k: getattr(spec, k) for k in _LAYER_KEYS}
        for i, spec in enumerate(base.layers)
    }

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _SCALAR_KEYS:
            _parse_scalar(cfg_kwargs, key, value)
            continue
        if key.startswith("layer") and "_" in key:
            head, _, field = key.partition("_")
            if field in _LAYER_KEYS and head[5:].isdigit():
                index = int(head[5:])
                if index < 1:
                    raise ConfigError(f"line {lineno}: layer index must be >= 1")
                entry = layer_kwargs.setdefault(
                    index, {k: getattr(LayerSpec(1, 1), k) for k in _LAYER_KEYS}
                )
                try:
                    if field in ("filters", "kernel", "activation_k", "plasticity_k"):
                        entry[field] = int(value)
                    elif field == "prune_density":
                        entry[field] = float(value)
                    elif field == "activation":
                        if value not in ACTIVATION_KINDS:
                            raise ConfigError(
                                f"line {lineno}: activation must be one of "
                                f"{ACTIVATION_KINDS}, got {value!r}"
                            )
                        entry[field] = value
                except ValueError as exc:
                    raise ConfigError(f"line {lineno}: cannot parse {value!r}") from exc
                continue
        raise ConfigError(f"line {lineno}: unknown key {key!r}")

    indices = sorted(layer_kwargs)
    if indices != list(range(1, len(indices) + 1)):
        raise ConfigError(f"layer indices must be contiguous from 1, got {indices}")
    layers = tuple(LayerSpec(**layer_kwargs[i]) for i in indices)
    cfg = NetworkConfig(layers=layers, **cfg_kwargs)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def read_config(path, base=None):
    return parse_config_text(Path(path).read_text(), base=base)


def config_to_text(cfg):
    """Serialize a NetworkConfig to the flat key = value format."""
    lines = [
        f"rule = {cfg.rule.value}",
        f"epochs = {cfg.epochs}",
        f"batch_size = {cfg.batch_size}",
        f"learning_rate = {cfg.learning_rate!r}",
        f"threshold_rate = {cfg.threshold_rate!r}",
        f"ema_horizon = {cfg.ema_horizon!r}",
        f"seed = {cfg.seed}",
        f"greedy = {'true' if cfg.greedy else 'false'}",
    ]
    for i, spec in enumerate(cfg.layers, start=1):
        lines.extend(
            [
                f"layer{i}_filters = {spec.filters}",
                f"layer{i}_kernel = {spec.kernel}",
                f"layer{i}_activation = {spec.activation}",
                f"layer{i}_activation_k = {spec.activation_k}",
                f"layer{i}_prune_density = {spec.prune_density!r}",
                f"layer{i}_plasticity_k = {spec.plasticity_k}",
            ]
        )
    return "\n".join(lines) + "\n"


def write_config(path, cfg):
    Path(path).write_text(config_to_text(cfg))
