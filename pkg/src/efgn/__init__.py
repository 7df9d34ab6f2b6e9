"""Grouped-band hyperspectral super-resolution with inter-group feedback and strip-convolution gates."""

from .core import (
    GroupPartition,
    HSICube,
    ModelConfig,
    ShapeReport,
    TrainConfig,
    make_partition,
    normalize,
    validate_shapes,
)
from .data import bicubic_resize, degrade, extract_patches, load_cube, make_pairs, save_cube
from .losses import LossReport, total_loss
from .metrics import MetricReport, evaluate_pair
from .network import (
    EFGN,
    conv_flops,
    count_params,
    estimate_activation_bytes,
    estimate_flops,
    load_checkpoint,
    save_checkpoint,
    super_resolve,
)
from .trainer import evaluate, lr_at, train

__version__ = "0.1.0"
