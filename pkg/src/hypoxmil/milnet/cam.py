"""Gradient-weighted class activation maps for single tiles."""

from __future__ import annotations

import numpy as np

from .. import ndnum as nd
from .model import HYPOXIC, MilModel, tiles_to_input


def last_block_activation(model: MilModel, tile: np.ndarray) -> tuple[nd.Tensor, nd.Tensor]:
    """Forward a singleton bag; returns (last post-ReLU conv map, logits)."""
    x = nd.Tensor(tiles_to_input([tile], model.dtype), requires_grad=False)
    acts: list = []
    h = model.backbone(x, keep=acts)
    _, _, logits, _ = model.graph_from_features(h)
    return acts[-1], logits


def cam_channel_weights(model: MilModel, tile: np.ndarray, target: int = HYPOXIC):
    """Spatial mean of d logit[target] / d activation, per channel.

    Returns (weights [C], activation [C, h, w]).
    """
    act, logits = last_block_activation(model, tile)
    nd.backward(nd.pick(logits, target))
    grad = act.grad[:, 0]
    return grad.mean(axis=(1, 2)), act.data[:, 0].copy()


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and edge clamping."""
    h, w = img.shape
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def grad_cam(model: MilModel, tile: np.ndarray, target: int = HYPOXIC) -> np.ndarray:
    """Heat map in [0, 1] at tile resolution; an all-zero map stays zero."""
    weights, act = cam_channel_weights(model, tile, target)
    raw = np.maximum(np.tensordot(weights, act, axes=1), 0)
    up = bilinear_resize(raw.astype(np.float64), tile.shape[0], tile.shape[1])
    lo, hi = up.min(), up.max()
    if hi - lo <= 0:
        # flat map: zero stays zero, any positive constant maps to 1
        return np.zeros_like(up) if hi <= 0 else np.ones_like(up)
    return (up - lo) / (hi - lo)


def overlay(tile: np.ndarray, heat: np.ndarray, alpha: float = 0.45) -> np.ndarray:
    """Blend a blue-to-red heat map onto an RGB uint8 tile."""
    base = tile.astype(np.float64) / 255 if tile.dtype == np.uint8 else tile.astype(np.float64)
    r = np.clip(1.5 - np.abs(4 * heat - 3), 0, 1)
    g = np.clip(1.5 - np.abs(4 * heat - 2), 0, 1)
    b = np.clip(1.5 - np.abs(4 * heat - 1), 0, 1)
    color = np.stack([r, g, b], axis=-1)
    out = (1 - alpha) * base + alpha * color
    return np.clip(np.rint(out * 255), 0, 255).astype(np.uint8)
