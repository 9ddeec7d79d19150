"""Class-size-weighted softmax training for imbalanced image classification."""

from .errors import DataError, DivergenceError, FormatError, InvalidArgument, InvalidState, ShapeError
from .loss import (
    LossOutput,
    class_weights,
    cross_entropy_loss,
    softmax_loss,
    softmax_probs,
    weight_sensitivity_table,
    weighted_softmax_loss,
)
from .nn import LayerSpec, Network, finite_diff_check, load_checkpoint, msra_init, save_checkpoint
from .trainer import TrainConfig, build_preset, compare_losses, evaluate, sgd_step, sweep_beta, train

__version__ = "0.1.0"
