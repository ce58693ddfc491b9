"""Full-model finite-difference gradient check on a down-scaled network."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import ndnum as nd
from .model import MilModel, ModelConfig, init_params, tiles_to_input


def small_config(tile_size: int = 16, backbone: Sequence[int] = (3, 4), hidden: int = 5) -> ModelConfig:
    return ModelConfig(
        backbone=list(backbone),
        feature_dim=backbone[-1],
        attention_hidden=hidden,
        head_hidden=hidden,
        tile_size=tile_size,
    )


def model_gradient_check(
    seed: int,
    config: ModelConfig | None = None,
    bag_size: int = 3,
    tolerance: float = 1e-4,
    max_entries: int = 40,
    fd_dtype=np.longdouble,
    h: float | None = None,
) -> nd.GradCheckReport:
    """Check d(cross-entropy)/d(every parameter) of a random 64-bit model.

    Tiles and parameters come from ``seed``. The fixture is kept well
    conditioned so central differences resolve every entry: biases start at
    a small random offset instead of zero, each tile gets its own brightness
    and contrast so instance features (and hence attention gradients)
    differ, and the target is the currently less probable class so the loss
    is not saturated.
    """
    cfg = config or small_config()
    rng = np.random.default_rng(seed)
    params = init_params(cfg, rng, np.float64)
    for name in params.names():
        if name.endswith("bias") or name.endswith(".b1") or name.endswith(".b2"):
            params.set(name, rng.uniform(-0.1, 0.1, size=params[name].shape))
    model = MilModel(cfg, params)
    shape = (bag_size, cfg.tile_size, cfg.tile_size, cfg.in_channels)
    level = rng.uniform(0.1, 0.9, size=(bag_size, 1, 1, 1))
    spread = rng.uniform(0.05, 0.5, size=(bag_size, 1, 1, 1))
    tiles = np.clip(level + spread * (rng.random(shape) - 0.5), 0, 1)
    x = tiles_to_input(list(tiles), np.float64)
    _, _, _, probs = model.graph(x)
    label = int(np.argmin(probs.data))

    def loss_fn(store: nd.ParamStore) -> nd.Tensor:
        dtype = next(iter(store.values())).dtype
        return MilModel(cfg, store).loss(x.astype(dtype), label)

    if h is None:
        # extended precision tolerates a much smaller step, which shrinks the
        # truncation error and the odds of straddling a ReLU/maxpool kink
        h = 1e-7 if fd_dtype is not None and np.finfo(fd_dtype).eps < 1e-18 else 1e-5
    return nd.gradient_check(
        loss_fn, params, tolerance=tolerance, h=h, max_entries=max_entries, seed=seed, fd_dtype=fd_dtype
    )
