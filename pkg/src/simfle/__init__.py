"""Desk-scale joint contrastive + semantic-masked-autoencoding pretraining."""

from simfle.config import TrainConfig, load_config, save_config, derive_patch_grid
from simfle.rng import RNGStream

__all__ = [
    "TrainConfig",
    "load_config",
    "save_config",
    "derive_patch_grid",
    "RNGStream",
]
