"""On-the-fly geometric and spectral tile augmentation.

RNG draws are consumed in a fixed order so a run is reproducible from its
seed: for each tile in bag order, (rotation k, hflip, vflip, hue shift,
gamma, noise sigma); then one standard-normal noise field for the whole bag.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class AugmentConfig:
    rotate: bool = True
    flip_prob: float = 0.5
    hue_max_deg: float = 18.0
    gamma_min: float = 0.8
    gamma_max: float = 1.25
    noise_max: float = 0.02
    enabled: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AugmentDraws:
    k: int = 0
    hflip: bool = False
    vflip: bool = False
    hue_deg: float = 0.0
    gamma: float = 1.0
    sigma: float = 0.0

    @property
    def is_spectral_identity(self) -> bool:
        return self.hue_deg == 0.0 and self.gamma == 1.0


def draw_params(rng: np.random.Generator, cfg: AugmentConfig) -> AugmentDraws:
    k = int(rng.integers(0, 4))
    hflip = bool(rng.random() < cfg.flip_prob)
    vflip = bool(rng.random() < cfg.flip_prob)
    hue = float(rng.uniform(-cfg.hue_max_deg, cfg.hue_max_deg))
    gamma = float(rng.uniform(cfg.gamma_min, cfg.gamma_max))
    sigma = float(rng.uniform(0.0, cfg.noise_max))
    if not cfg.rotate:
        k = 0
    return AugmentDraws(k, hflip, vflip, hue, gamma, sigma)


def _wrap01(h: np.ndarray) -> np.ndarray:
    return h - np.floor(h)


def _planes_to_hsv(r, g, b):
    v = np.maximum(np.maximum(r, g), b)
    c = v - np.minimum(np.minimum(r, g), b)
    # divide differences by c directly; 1/c overflows for subnormal chroma
    safe_c = np.where(c > 0, c, 1)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)
    h = np.where(c > 0, np.where(v == r, (g - b) / safe_c, np.where(v == g, 2 + (b - r) / safe_c, 4 + (r - g) / safe_c)), 0)
    return _wrap01(h / 6), s, v


def _hsv_to_planes(h, s, v):
    h6 = _wrap01(h) * 6
    vs = v * s
    out = []
    for n in (5, 3, 1):
        k = n + h6
        k -= 6 * (k >= 6)
        out.append(v - vs * np.clip(np.minimum(k, 4 - k), 0, 1))
    return out


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV on values in [0, 1]; hue in [0, 1)."""
    rgb = np.asarray(rgb)
    return np.stack(_planes_to_hsv(rgb[..., 0], rgb[..., 1], rgb[..., 2]), axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv)
    return np.stack(_hsv_to_planes(hsv[..., 0], hsv[..., 1], hsv[..., 2]), axis=-1)


def _geometric(tile: np.ndarray, d: AugmentDraws) -> np.ndarray:
    out = np.rot90(tile, d.k, axes=(0, 1)) if d.k else tile
    if d.hflip:
        out = out[:, ::-1]
    if d.vflip:
        out = out[::-1]
    return out


def apply_draws(tiles: np.ndarray, draws: list[AugmentDraws], noise: np.ndarray | None) -> np.ndarray:
    """Apply explicit draws to float tiles ``[N, H, W, 3]`` in [0, 1]."""
    out = np.stack([_geometric(t, d) for t, d in zip(tiles, draws)])
    spectral = [i for i, d in enumerate(draws) if not d.is_spectral_identity]
    if spectral:
        # channel planes are contiguous, which keeps the elementwise passes cheap
        planes = np.ascontiguousarray(np.moveaxis(out[spectral], -1, 0))
        h, s, v = _planes_to_hsv(*planes)
        hue = np.array([draws[i].hue_deg / 360.0 for i in spectral], dtype=out.dtype)
        gam = np.array([draws[i].gamma for i in spectral], dtype=out.dtype)
        h = h + hue[:, None, None]
        v = v ** gam[:, None, None]
        out[spectral] = np.stack(_hsv_to_planes(h, s, v), axis=-1)
    if noise is not None:
        sig = np.array([d.sigma for d in draws], dtype=out.dtype)
        if np.any(sig > 0):
            out = out + noise * sig[:, None, None, None]
    return np.clip(out, 0.0, 1.0)


def augment_bag(tiles, rng: np.random.Generator, cfg: AugmentConfig | None = None) -> np.ndarray:
    """Augment a stack of tiles; uint8 in -> uint8 out, float in -> float out."""
    cfg = cfg or AugmentConfig()
    tiles = np.asarray(tiles)
    is_u8 = tiles.dtype == np.uint8
    work = tiles.astype(np.float32) / np.float32(255) if is_u8 else tiles
    if not cfg.enabled:
        return tiles.copy()
    draws = [draw_params(rng, cfg) for _ in range(len(work))]
    noise = rng.standard_normal(work.shape, dtype=np.float32 if work.dtype == np.float32 else np.float64)
    out = apply_draws(work, draws, noise.astype(work.dtype, copy=False))
    if is_u8:
        return np.clip(np.rint(out * 255), 0, 255).astype(np.uint8)
    return out.astype(tiles.dtype, copy=False)


def augment_tile(tile, rng: np.random.Generator, cfg: AugmentConfig | None = None) -> np.ndarray:
    return augment_bag(np.asarray(tile)[None], rng, cfg)[0]
