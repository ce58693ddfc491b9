"""Slide ingestion, tissue masking and tiling.

The manifest is a CSV whose first lines are ``# key=value`` comments carrying
tile size, tissue threshold and seed, followed by the columns
``sample_id,tile_index,row,col,tissue_fraction,path``. Tile paths are stored
relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image

MANIFEST_COLUMNS = ["sample_id", "tile_index", "row", "col", "tissue_fraction", "path"]
SAT_MIN = 0.05
VAL_MAX = 0.98


class ManifestError(ValueError):
    pass


@dataclass
class SlideImage:
    sample_id: str
    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"slide pixels must be (H, W, 3) uint8, got {px.shape} {px.dtype}")
        self.pixels = px


@dataclass(frozen=True)
class TileRecord:
    sample_id: str
    tile_index: int
    row: int
    col: int
    tissue_fraction: float
    path: str


@dataclass
class TileManifest:
    tile_size: int
    min_tissue: float
    seed: int = 0
    records: list[TileRecord] = field(default_factory=list)
    root: Optional[Path] = None  # directory relative paths resolve against

    def __post_init__(self):
        seen = set()
        for r in self.records:
            key = (r.sample_id, r.tile_index)
            if key in seen:
                raise ManifestError(f"duplicate tile {key}")
            seen.add(key)

    def samples(self) -> list[str]:
        return sorted({r.sample_id for r in self.records})

    def by_sample(self) -> dict[str, list[TileRecord]]:
        out: dict[str, list[TileRecord]] = {}
        for r in self.records:
            out.setdefault(r.sample_id, []).append(r)
        for recs in out.values():
            recs.sort(key=lambda r: r.tile_index)
        return out

    def resolve(self, record: TileRecord) -> Path:
        p = Path(record.path)
        return p if p.is_absolute() or self.root is None else self.root / p


def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc


def write_png(path, pixels: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    # fixed encoder settings keep output bytes stable
    Image.fromarray(np.asarray(pixels)).save(path, format="PNG", optimize=False, compress_level=6)


def load_slide(path, sample_id: Optional[str] = None) -> SlideImage:
    return SlideImage(sample_id or Path(path).stem, read_image(path))


def tissue_mask(slide) -> np.ndarray:
    """True where HSV saturation > 0.05 and value < 0.98."""
    px = slide.pixels if isinstance(slide, SlideImage) else np.asarray(slide)
    px = px.astype(np.float64) / 255.0
    v = px.max(axis=-1)
    c = v - px.min(axis=-1)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)
    return (s > SAT_MIN) & (v < VAL_MAX)


def _cut(slide: SlideImage, tile_size: int, min_tissue: float, out_dir: Optional[Path], prefix: str):
    h, w = slide.pixels.shape[:2]
    mask = tissue_mask(slide)
    kept = []
    for r in range(0, h - tile_size + 1, tile_size):
        for c in range(0, w - tile_size + 1, tile_size):
            frac = float(mask[r : r + tile_size, c : c + tile_size].mean())
            if frac < min_tissue:
                continue
            idx = len(kept)
            rel = f"{prefix}{slide.sample_id}/{slide.sample_id}_{idx:05d}.png"
            if out_dir is not None:
                write_png(out_dir / rel, slide.pixels[r : r + tile_size, c : c + tile_size])
            kept.append(TileRecord(slide.sample_id, idx, r, c, frac, rel))
    return kept


def tile_slide(
    slide: SlideImage,
    tile_size: int = 512,
    min_tissue: float = 0.5,
    out_dir=None,
    seed: int = 0,
    tile_subdir: str = "tiles/",
) -> TileManifest:
    """Cut a non-overlapping grid from (0, 0); partial edge tiles are dropped."""
    if tile_size < 1:
        raise ValueError("tile_size must be >= 1")
    out = Path(out_dir) if out_dir is not None else None
    records = _cut(slide, tile_size, min_tissue, out, tile_subdir)
    return TileManifest(tile_size, min_tissue, seed, records, out)


def tile_slides(
    slides: Iterable,
    tile_size: int = 512,
    min_tissue: float = 0.5,
    out_dir=None,
    seed: int = 0,
    workers: int = 1,
) -> TileManifest:
    """Tile several slides (SlideImage or paths); rows follow input slide order."""
    slides = list(slides)
    out = Path(out_dir) if out_dir is not None else None

    def one(s):
        s = s if isinstance(s, SlideImage) else load_slide(s)
        return _cut(s, tile_size, min_tissue, out, "tiles/")

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(one, slides))
    else:
        parts = [one(s) for s in slides]
    return TileManifest(tile_size, min_tissue, seed, [r for p in parts for r in p], out)


def manifest_from_tile_dir(tile_dir, tile_size: Optional[int] = None) -> TileManifest:
    """Index a directory of pre-extracted tiles.

    The sample id comes from a ``sample_id.txt`` sidecar, falling back to the
    directory name. Tiles are taken in sorted filename order.
    """
    d = Path(tile_dir)
    sidecar = d / "sample_id.txt"
    sid = sidecar.read_text().strip() if sidecar.exists() else d.name
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in (".png", ".ppm"))
    records = []
    size = tile_size
    for i, f in enumerate(files):
        px = read_image(f)
        size = size or px.shape[0]
        frac = float(tissue_mask(px).mean())
        records.append(TileRecord(sid, i, 0, 0, frac, str(f.resolve())))
    return TileManifest(size or 0, 0.0, 0, records, None)


def format_manifest(m: TileManifest) -> str:
    buf = io.StringIO()
    buf.write(f"# tile_size={m.tile_size}\n# min_tissue={m.min_tissue!r}\n# seed={m.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for r in m.records:
        w.writerow([r.sample_id, r.tile_index, r.row, r.col, repr(r.tissue_fraction), r.path])
    return buf.getvalue()


def write_manifest(m: TileManifest, path) -> None:
    Path(path).write_text(format_manifest(m))


def read_manifest(path) -> TileManifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read manifest {path}: {exc}") from exc
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise ManifestError(f"{path}: missing column header")
    reader = csv.reader(body)
    header = next(reader)
    if header != MANIFEST_COLUMNS:
        raise ManifestError(f"{path}: expected columns {MANIFEST_COLUMNS}, got {header}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(MANIFEST_COLUMNS):
            raise ManifestError(f"{path}: row {lineno} has {len(row)} fields")
        try:
            records.append(TileRecord(row[0], int(row[1]), int(row[2]), int(row[3]), float(row[4]), row[5]))
        except ValueError as exc:
            raise ManifestError(f"{path}: row {lineno}: {exc}") from None
    try:
        m = TileManifest(
            int(meta.get("tile_size", 0)),
            float(meta.get("min_tissue", 0.0)),
            int(meta.get("seed", 0)),
            records,
            path.parent,
        )
    except ValueError as exc:
        raise ManifestError(f"{path}: {exc}") from None
    return m


def load_manifest_tiles(manifest: TileManifest, samples=None) -> dict[str, np.ndarray]:
    """Read tiles into ``{sample_id: uint8 [n, S, S, 3]}`` in tile_index order."""
    out = {}
    for sid, recs in manifest.by_sample().items():
        if samples is not None and sid not in samples:
            continue
        out[sid] = np.stack([read_image(manifest.resolve(r)) for r in recs])
    return out


def relpath(path, start) -> str:
    return Path(os.path.relpath(path, start)).as_posix()
