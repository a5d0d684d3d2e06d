"""Training: objectives, optimizer, loop, checkpoints."""

from .checkpoint import (
    check_model_compat,
    config_from_snapshot,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from .loop import Trainer
from .losses import LossConfig, combined_loss, lm_loss
from .optim import AdamW

__all__ = [
    "AdamW", "LossConfig", "Trainer", "check_model_compat",
    "combined_loss", "config_from_snapshot", "lm_loss", "load_checkpoint",
    "restore_model", "save_checkpoint",
]
