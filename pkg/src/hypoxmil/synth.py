"""Synthetic slides, tiles and expression data for desk-scale runs.

Background tiles are smooth stain blobs. Hypoxic samples carry a few signal
tiles whose texture is grainy at the pixel scale, so their GLCM homogeneity
is lower. Each slide is a grid of tile-sized cells with some cells left
white, which the tissue filter must discard. The expression matrix shifts a
hallmark gene set up in hypoxic samples so median-split labelling recovers
the intended classes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .sigstrat import ExpressionMatrix, GeneSet, write_expression_tsv
from .slideio import SlideImage, write_png

EOSIN = np.array([232.0, 150.0, 196.0])
HEMATOXYLIN = np.array([118.0, 72.0, 162.0])
HALLMARK = "HALLMARK_HYPOXIA"


@dataclass
class SynthConfig:
    n_per_class: int = 100
    tiles_per_sample: int = 20
    tile_size: int = 64
    min_signal: int = 3
    max_signal: int = 8
    blank_cells: int = 4
    grid_cols: int = 6
    n_signature_genes: int = 40
    n_other_genes: int = 160
    signature_shift: float = 1.5

    def __post_init__(self):
        if self.n_per_class < 3:
            raise ValueError("n_per_class must be >= 3")
        if not 0 <= self.min_signal <= self.max_signal <= self.tiles_per_sample:
            raise ValueError(
                f"need 0 <= min_signal <= max_signal <= tiles_per_sample, got "
                f"{self.min_signal}, {self.max_signal}, {self.tiles_per_sample}"
            )


@dataclass
class SyntheticDataset:
    config: SynthConfig
    sample_ids: list[str]
    labels: dict[str, int]  # generator truth, 1 = hypoxic
    tiles: dict[str, np.ndarray]  # uint8 [n, S, S, 3]
    signal: dict[str, np.ndarray]  # bool [n], True for signal tiles
    slides: dict[str, SlideImage]
    expression: ExpressionMatrix
    gene_sets: list[GeneSet]


def _stain(weight: np.ndarray) -> np.ndarray:
    return EOSIN * (1 - weight[..., None]) + HEMATOXYLIN * weight[..., None]


def background_tile(rng: np.random.Generator, size: int) -> np.ndarray:
    field = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 12, mode="wrap")
    field /= field.std() + 1e-12
    weight = 1 / (1 + np.exp(-1.6 * (field - 0.3)))
    shade = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 6, mode="wrap")
    rgb = _stain(weight) * (1 + 0.04 * shade / (shade.std() + 1e-12))[..., None]
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def signal_tile(rng: np.random.Generator, size: int) -> np.ndarray:
    base = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 12, mode="wrap")
    base /= base.std() + 1e-12
    grain = rng.standard_normal((size, size))
    weight = 1 / (1 + np.exp(-(0.6 * base + 1.8 * grain - 0.3)))
    rgb = _stain(weight)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def _slide(tiles: np.ndarray, cells: np.ndarray, cols: int, size: int) -> np.ndarray:
    n_cells = len(cells)
    rows = -(-n_cells // cols)
    px = np.full((rows * size, cols * size, 3), 255, dtype=np.uint8)
    for t, cell in zip(tiles, np.flatnonzero(cells)):
        r, c = divmod(int(cell), cols)
        px[r * size : (r + 1) * size, c * size : (c + 1) * size] = t
    return px


def make_dataset(seed: int = 0, config: SynthConfig | None = None) -> SyntheticDataset:
    cfg = config or SynthConfig()
    rng = np.random.default_rng(seed)
    n = 2 * cfg.n_per_class
    sample_ids = [f"S{i:04d}" for i in range(n)]
    classes = np.array([1] * cfg.n_per_class + [0] * cfg.n_per_class)[rng.permutation(n)]
    labels = {s: int(c) for s, c in zip(sample_ids, classes)}

    tiles, signal, slides = {}, {}, {}
    n_cells = cfg.tiles_per_sample + cfg.blank_cells
    for sid in sample_ids:
        k = int(rng.integers(cfg.min_signal, cfg.max_signal + 1)) if labels[sid] else 0
        is_sig = np.zeros(cfg.tiles_per_sample, dtype=bool)
        is_sig[rng.choice(cfg.tiles_per_sample, size=k, replace=False)] = True
        stack = np.stack(
            [signal_tile(rng, cfg.tile_size) if s else background_tile(rng, cfg.tile_size) for s in is_sig]
        )
        cells = np.ones(n_cells, dtype=bool)
        cells[rng.choice(n_cells, size=cfg.blank_cells, replace=False)] = False
        tiles[sid], signal[sid] = stack, is_sig
        slides[sid] = SlideImage(sid, _slide(stack, cells, cfg.grid_cols, cfg.tile_size))

    genes = [f"HYP{i:03d}" for i in range(cfg.n_signature_genes)] + [
        f"GEN{i:03d}" for i in range(cfg.n_other_genes)
    ]
    base = rng.normal(6.0, 1.0, size=(len(genes), 1))
    values = base + rng.normal(0.0, 1.0, size=(len(genes), n))
    values[: cfg.n_signature_genes] += cfg.signature_shift * classes[None, :]
    expr = ExpressionMatrix(genes, sample_ids, values)
    gene_sets = [
        GeneSet(HALLMARK, frozenset(genes[: cfg.n_signature_genes])),
        GeneSet("DECOY_SET", frozenset(genes[cfg.n_signature_genes : cfg.n_signature_genes + 30])),
    ]
    return SyntheticDataset(cfg, sample_ids, labels, tiles, signal, slides, expr, gene_sets)


def write_gmt(gene_sets: list[GeneSet], path) -> None:
    lines = [f"{gs.name}\tsynthetic\t" + "\t".join(sorted(gs.genes)) for gs in gene_sets]
    Path(path).write_text("\n".join(lines) + "\n")


def write_dataset(ds: SyntheticDataset, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    (out / "slides").mkdir(parents=True, exist_ok=True)
    for sid in ds.sample_ids:
        write_png(out / "slides" / f"{sid}.png", ds.slides[sid].pixels)
    write_expression_tsv(ds.expression, out / "expression.tsv")
    write_gmt(ds.gene_sets, out / "hallmark.gmt")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "class", "n_signal", "signal_tiles"])
    for sid in ds.sample_ids:
        sig = ";".join(str(i) for i in np.flatnonzero(ds.signal[sid]))
        w.writerow([sid, "hypoxic" if ds.labels[sid] else "normoxic", int(ds.signal[sid].sum()), sig])
    (out / "truth.csv").write_text(buf.getvalue())
    return {
        "slides": out / "slides",
        "expression": out / "expression.tsv",
        "gmt": out / "hallmark.gmt",
        "truth": out / "truth.csv",
    }
