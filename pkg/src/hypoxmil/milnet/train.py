"""Bag-level SGD training."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional

import numpy as np

from .. import ndnum as nd
from .augment import AugmentConfig, augment_bag
from .model import MilModel, ModelConfig, init_params, tiles_to_input

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.0003
    epochs: int = 100
    bag_size: int = 20
    seed: int = 0
    momentum: float = 0.0
    clip_norm: float = 0.0  # global gradient-norm cap; 0 disables
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if isinstance(self.augment, dict):
            unknown = set(self.augment) - set(AugmentConfig.__dataclass_fields__)
            if unknown:
                raise ConfigurationError(f"unknown augment keys: {sorted(unknown)}")
            self.augment = AugmentConfig(**self.augment)
        if self.bag_size < 1:
            raise ConfigurationError("bag_size must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("lr must be > 0")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must be in [0, 1)")
        if self.clip_norm < 0:
            raise ConfigurationError("clip_norm must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainResult:
    model: MilModel
    loss_log: list[tuple[int, float]]
    metadata: dict


def draw_bag_indices(n_tiles: int, bag_size: int, rng: np.random.Generator) -> np.ndarray:
    # with replacement only when the sample is short of tiles
    if n_tiles < bag_size:
        return rng.integers(0, n_tiles, size=bag_size)
    return rng.choice(n_tiles, size=bag_size, replace=False)


def sgd_step(params: nd.ParamStore, lr: float, momentum: float, velocity: dict, clip_norm: float = 0.0) -> None:
    scale = 1.0
    if clip_norm:
        norm = float(np.sqrt(sum(float(np.sum(params[n].grad.astype(np.float64) ** 2)) for n in params.names())))
        if norm > clip_norm:
            scale = clip_norm / norm
    for name in params.names():
        t = params[name]
        g = t.grad if scale == 1.0 else t.grad * t.dtype.type(scale)
        if momentum:
            v = velocity.get(name)
            v = g.copy() if v is None else momentum * v + g
            velocity[name] = v
            g = v
        params.set(name, t.data - t.dtype.type(lr) * g)


def train_on_tiles(
    model_config: ModelConfig,
    train_config: TrainConfig,
    tiles: Mapping[str, np.ndarray],
    labels: Mapping[str, int],
    rng: Optional[np.random.Generator] = None,
    dtype=np.float32,
) -> TrainResult:
    """Train from in-memory tiles.

    ``tiles[sample_id]`` is ``[n, S, S, 3]`` float in [0, 1] (or uint8).
    Parameter init draws come first from ``rng``, then per epoch the sample
    shuffle, and per sample the tile selection followed by augmentation.
    """
    samples = sorted(labels)
    missing = [s for s in samples if s not in tiles or len(tiles[s]) == 0]
    if missing:
        raise ConfigurationError(f"labeled samples without tiles: {missing[:5]}")
    if rng is None:
        rng = np.random.default_rng(train_config.seed)

    store = {s: (np.asarray(tiles[s], dtype=np.float32) / 255 if np.asarray(tiles[s]).dtype == np.uint8
                 else np.asarray(tiles[s], dtype=dtype)) for s in samples}
    model = MilModel(model_config, init_params(model_config, rng, dtype))
    velocity: dict = {}
    loss_log: list[tuple[int, float]] = []
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(len(samples))
        total = 0.0
        for si in order:
            sid = samples[si]
            pool = store[sid]
            idx = draw_bag_indices(len(pool), train_config.bag_size, rng)
            bag = augment_bag(pool[idx], rng, train_config.augment)
            loss = model.loss(tiles_to_input(bag, dtype), int(labels[sid]))
            nd.backward(loss, model.params)
            sgd_step(model.params, train_config.lr, train_config.momentum, velocity, train_config.clip_norm)
            total += float(loss.data)
        mean = total / len(samples)
        loss_log.append((epoch, mean))
        log.debug("epoch %d mean loss %.6f", epoch, mean)
    metadata = {"seed": train_config.seed, "epoch": train_config.epochs, "n_samples": len(samples)}
    return TrainResult(model, loss_log, metadata)


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    manifest,
    labels: Mapping[str, int],
    rng: Optional[np.random.Generator] = None,
) -> TrainResult:
    """Train on tiles listed in a :class:`~hypoxmil.slideio.TileManifest`."""
    from ..slideio import load_manifest_tiles

    labeled = set(labels)
    tiles = load_manifest_tiles(manifest, samples=labeled)
    return train_on_tiles(model_config, train_config, tiles, labels, rng)


def write_loss_log(loss_log, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, loss in loss_log:
            fh.write(f"{epoch},{loss!r}\n")
