"""Gray-level co-occurrence texture features.

Matrices count ordered (non-symmetric) pixel pairs at distance 1 for the four
angles 0, 45, 90 and 135 degrees. Features are computed per angle and then
averaged.
"""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

LEVELS = 256
ANGLES = (0, 45, 90, 135)
# (row, col) offset of the neighbour for each angle
OFFSETS = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}
FEATURE_NAMES = ("homogeneity", "energy", "correlation", "contrast", "dissimilarity", "ASM")


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class GlcmMatrix:
    angle: int
    distance: int
    P: np.ndarray


@dataclass(frozen=True)
class GlcmFeatures:
    homogeneity: float
    energy: float
    correlation: float
    contrast: float
    dissimilarity: float
    ASM: float

    def as_tuple(self) -> tuple:
        return astuple(self)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Rec. 709 luma, rounded and clamped to 8-bit levels."""
    rgb = np.asarray(rgb, dtype=np.float64)
    y = 0.2126 * rgb[..., 0] + 0.7152 * rgb[..., 1] + 0.0722 * rgb[..., 2]
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


def _pair_views(gray: np.ndarray, angle: int):
    dr, dc = OFFSETS[angle]
    h, w = gray.shape
    r0, r1 = max(0, -dr), h - max(0, dr)
    c0, c1 = max(0, -dc), w - max(0, dc)
    ref = gray[r0:r1, c0:c1]
    nb = gray[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
    return ref, nb


def glcm_counts(gray: np.ndarray, angle: int, levels: int = LEVELS) -> np.ndarray:
    """Unnormalized ordered-pair counts ``C[i, j]`` (reference i, neighbour j)."""
    if angle not in OFFSETS:
        raise ValueError(f"angle must be one of {ANGLES}, got {angle}")
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"gray tile must be 2-D, got {gray.shape}")
    if gray.size and (gray.min() < 0 or gray.max() >= levels):
        raise ValueError(f"gray levels must lie in [0, {levels - 1}]")
    ref, nb = _pair_views(gray, angle)
    if ref.size == 0:
        raise DegenerateInputError(f"tile {gray.shape} has no pixel pairs at {angle} degrees")
    flat = ref.astype(np.int64).ravel() * levels + nb.astype(np.int64).ravel()
    return np.bincount(flat, minlength=levels * levels).reshape(levels, levels)


def glcm(gray: np.ndarray, angle: int, levels: int = LEVELS) -> GlcmMatrix:
    counts = glcm_counts(gray, angle, levels)
    return GlcmMatrix(angle, 1, counts / counts.sum())


def features_from_matrix(P: np.ndarray) -> GlcmFeatures:
    n = P.shape[0]
    i = np.arange(n, dtype=np.float64)[:, None]
    j = np.arange(n, dtype=np.float64)[None, :]
    diff = i - j
    homogeneity = float((P / (1.0 + diff**2)).sum())
    asm = float((P**2).sum())
    energy = float(np.sqrt(asm))
    contrast = float((P * diff**2).sum())
    dissimilarity = float((P * np.abs(diff)).sum())
    pi = P.sum(axis=1)
    pj = P.sum(axis=0)
    lv = np.arange(n, dtype=np.float64)
    mu_i = float((lv * pi).sum())
    mu_j = float((lv * pj).sum())
    var_i = float((pi * (lv - mu_i) ** 2).sum())
    var_j = float((pj * (lv - mu_j) ** 2).sum())
    denom = np.sqrt(var_i * var_j)
    if denom <= 0:
        correlation = 1.0
    else:
        correlation = float((P * (i - mu_i) * (j - mu_j)).sum() / denom)
    return GlcmFeatures(homogeneity, energy, correlation, contrast, dissimilarity, asm)


def glcm_features_per_angle(gray: np.ndarray, angles=ANGLES) -> dict[int, GlcmFeatures]:
    return {a: features_from_matrix(glcm(gray, a).P) for a in angles}


def glcm_features(gray: np.ndarray, angles=ANGLES) -> GlcmFeatures:
    """Mean over angles of the per-angle features."""
    per = glcm_features_per_angle(gray, angles)
    vals = np.mean([f.as_tuple() for f in per.values()], axis=0)
    return GlcmFeatures(*(float(v) for v in vals))


def texture_table(rows: list[tuple[str, GlcmFeatures]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tile_id", *FEATURE_NAMES])
    for tid, f in rows:
        w.writerow([tid, *(repr(v) for v in f.as_tuple())])
    return buf.getvalue()


def batch_features(manifest, out_csv=None, workers: int = 1) -> list[tuple[str, GlcmFeatures]]:
    """Features for every tile in a manifest, in manifest order."""
    from .slideio import read_image

    def one(rec):
        tid = f"{rec.sample_id}:{rec.tile_index}"
        return tid, glcm_features(to_gray(read_image(manifest.resolve(rec))))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(one, manifest.records))
    else:
        rows = [one(r) for r in manifest.records]
    if out_csv is not None:
        Path(out_csv).write_text(texture_table(rows))
    return rows
