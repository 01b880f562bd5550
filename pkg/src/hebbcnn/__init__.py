"""Hebbian convolutional feature learning with gradient-expressed updates.

The package trains stacks of convolutional layers with local plasticity
rules (plain Hebb, instar, Oja) expressed as gradients of per-rule
surrogate losses, whitens inputs with ZCA, and scores the learned
representations with linear probes.
"""

from .errors import (
    CompatibilityError,
    ConfigError,
    DataError,
    FitError,
    FormatError,
    HebbError,
    ShapeError,
)
from .tensor_ops import avg_pool2, conv2d_valid, standardize_sample, unfold
from .rules import (
    HebbRule,
    PlasticityBatch,
    hebbian_update_direct,
    hebbian_update_via_gradient,
    oja_fixed_point_demo,
    surrogate_value,
)
from .whitening import ZcaTransform, apply_zca, fit_zca
from .layers import (
    ConvLayer,
    HebbNetwork,
    LayerSpec,
    NetworkConfig,
    apply_mask_and_normalize,
    init_layer,
    init_network,
    layer_forward,
    layer_forward_train,
    network_forward,
    network_train,
    triangle_activation,
    update_thresholds,
    wta_select,
)
from .evaluation import (
    LinearDecoder,
    evaluate_accuracy,
    extract_probe_features,
    fit_decoder,
    one_hot,
    probe_accuracies,
    quadrants_features,
)
from .dataset import Cifar10Set, load_cifar10, load_cifar10_test
from .checkpoint import load_checkpoint, load_zca, save_checkpoint, save_zca
from .rfviz import export_receptive_fields, layer_receptive_fields
from .config import preset_config, read_config, write_config

__version__ = "0.1.0"
