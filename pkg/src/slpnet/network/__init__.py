"""Neural precoder: architecture, losses, optimizer, training, checkpoints."""

from .checkpoint import (
    CheckpointFormatError,
    load_checkpoint,
    load_train_state,
    save_checkpoint,
    save_train_state,
)
from .losses import (
    batch_margins,
    supervised_loss,
    supervised_value_and_grad,
    unsupervised_loss,
    unsupervised_value_and_grad,
)
from .model import EPNN, ConvSpec, NetworkSpec, forward, infer
from .optim import AdamState, TrainConfig, adam_step, effective_lr
from .train import TrainResult, train

__all__ = [
    "AdamState",
    "CheckpointFormatError",
    "ConvSpec",
    "EPNN",
    "NetworkSpec",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "batch_margins",
    "effective_lr",
    "forward",
    "infer",
    "load_checkpoint",
    "load_train_state",
    "save_checkpoint",
    "save_train_state",
    "supervised_loss",
    "supervised_value_and_grad",
    "train",
    "unsupervised_loss",
    "unsupervised_value_and_grad",
]
