"""Configuration, optimiser, checkpoints and the two-phase training loop."""

from .checkpoint import (Checkpoint, atomic_write_bytes, checkpoint_bytes, checkpoint_from_bytes,
                         load_checkpoint, save_checkpoint)
from .config import TrainConfig, config_from_dict, dump_config, load_config, validate_config
from .optim import OptimizerState, adamw_step, lr_at_step
from .train import LOG_COLUMNS, TrainResult, infer_image, metrics_csv, train

__all__ = [
    "Checkpoint", "atomic_write_bytes", "checkpoint_bytes", "checkpoint_from_bytes",
    "load_checkpoint", "save_checkpoint", "TrainConfig", "config_from_dict", "dump_config",
    "load_config", "validate_config", "OptimizerState", "adamw_step", "lr_at_step",
    "LOG_COLUMNS", "TrainResult", "infer_image", "metrics_csv", "train",
]
