"""Attention MIL classifier: model, training, inference, CAM, checkpoints."""

from .augment import AugmentConfig, AugmentDraws, apply_draws, augment_bag, augment_tile
from .cam import grad_cam
from .checkpoint import (
    BadMagicError,
    Checkpoint,
    CheckpointError,
    HeaderCorruptError,
    TensorTableError,
    TruncatedCheckpointError,
    VersionMismatchError,
    load_checkpoint,
    save_checkpoint,
)
from .infer import TileScore, infer_sample, score_single_tiles
from .model import (
    CLASS_NAMES,
    HYPOXIC,
    NORMOXIC,
    AttentionOutput,
    Bag,
    MilModel,
    ModelConfig,
    forward_bag,
    forward_bag_embeddings,
)
from .train import ConfigurationError, TrainConfig, TrainResult, train, train_on_tiles

__all__ = [
    "CLASS_NAMES",
    "HYPOXIC",
    "NORMOXIC",
    "AttentionOutput",
    "AugmentConfig",
    "AugmentDraws",
    "BadMagicError",
    "Bag",
    "Checkpoint",
    "CheckpointError",
    "ConfigurationError",
    "HeaderCorruptError",
    "MilModel",
    "ModelConfig",
    "TensorTableError",
    "TileScore",
    "TrainConfig",
    "TrainResult",
    "TruncatedCheckpointError",
    "VersionMismatchError",
    "apply_draws",
    "augment_bag",
    "augment_tile",
    "forward_bag",
    "forward_bag_embeddings",
    "grad_cam",
    "infer_sample",
    "load_checkpoint",
    "save_checkpoint",
    "score_single_tiles",
    "train",
    "train_on_tiles",
]
