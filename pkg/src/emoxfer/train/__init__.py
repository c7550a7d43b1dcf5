"""Training engine: objective, schedules, checkpointing, the batch loop."""

from .losses import LossBreakdown, composite_loss, masked_mel_mae
from .schedules import lr_schedule, tau_schedule
from .checkpoint import load_checkpoint, save_checkpoint
from .loop import Trainer, compute_intensity_medians

__all__ = [
    "LossBreakdown",
    "Trainer",
    "composite_loss",
    "compute_intensity_medians",
    "load_checkpoint",
    "lr_schedule",
    "masked_mel_mae",
    "save_checkpoint",
    "tau_schedule",
]
