"""Pipeline configuration: one JSON document plus command-line overrides.

Unknown keys are rejected at every level. The top-level ``seed`` seeds the
split plans and the training RNG; the fully resolved config is echoed into
each output directory together with a run manifest (inputs and their
hashes, config hash, seed, library versions).
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional

from .milnet import ModelConfig, TrainConfig

CONFIG_ENV = "HYPOXMIL_CONFIG"
RESOLVED_NAME = "config.resolved.json"
MANIFEST_NAME = "run_manifest.json"


class ConfigError(ValueError):
    pass


@dataclass
class TilingConfig:
    tile_size: int = 512
    min_tissue: float = 0.5
    workers: int = 1


@dataclass
class LabelConfig:
    gene_set: str = "HALLMARK_HYPOXIA"
    mode: str = "median_split"
    k: Optional[int] = None


@dataclass
class EvalConfig:
    n_repeats: int = 3
    test_fraction: float = 1 / 3
    threshold: float = 0.5  # confusion-matrix cut on the bag score
    tile_threshold: float = 0.9  # single-tile confidence cut


@dataclass
class PipelineConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    tiling: TilingConfig = field(default_factory=TilingConfig)
    label: LabelConfig = field(default_factory=LabelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.train.seed = int(self.seed)
        if not 0 < self.eval.test_fraction < 1:
            raise ConfigError("eval.test_fraction must lie in (0, 1)")
        if self.eval.n_repeats < 1:
            raise ConfigError("eval.n_repeats must be >= 1")
        if self.tiling.tile_size < 1 or not 0 <= self.tiling.min_tissue <= 1:
            raise ConfigError("tiling.tile_size must be >= 1 and tiling.min_tissue in [0, 1]")
        if self.label.mode not in ("median_split", "top_bottom_k"):
            raise ConfigError(f"label.mode must be median_split or top_bottom_k, got {self.label.mode!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"].pop("seed")  # carried by the top-level seed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PipelineConfig":
        d = dict(d)
        _reject_unknown("config", d, {f.name for f in fields(cls)})
        try:
            train = dict(d.pop("train", {}))
            if "seed" in train:
                raise ConfigError("train.seed is not configurable; set the top-level seed")
            kw: dict[str, Any] = {
                "model": ModelConfig.from_dict(dict(d.pop("model", {}))),
                "train": TrainConfig.from_dict(train),
            }
            for name, typ in (("tiling", TilingConfig), ("label", LabelConfig), ("eval", EvalConfig)):
                sub = dict(d.pop(name, {}))
                _reject_unknown(name, sub, {f.name for f in fields(typ)})
                kw[name] = typ(**sub)
            return cls(**kw, **d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def synthetic(cls) -> "PipelineConfig":
        """Desk-scale settings for the generated 64x64 benchmark data."""
        return cls.from_dict(SYNTHETIC_PRESET)


# Default architecture and optimizer shrunk for CPU training from scratch on
# small tiles: narrower backbone and heads, smaller bags, and a larger step
# with a gradient-norm cap so early loss spikes cannot kill the ReLUs.
SYNTHETIC_PRESET: dict = {
    "model": {
        "backbone": [4, 8, 16],
        "feature_dim": 16,
        "attention_hidden": 16,
        "head_hidden": 16,
        "tile_size": 64,
    },
    "train": {"lr": 0.01, "epochs": 100, "bag_size": 8, "clip_norm": 1.0},
    "tiling": {"tile_size": 64, "min_tissue": 0.5},
}


def _reject_unknown(where: str, d: Mapping, known: set) -> None:
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {unknown}")


def _set_path(d: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        nxt = cur.setdefault(k, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {dotted!r}: {k!r} is not a section")
        cur = nxt
    cur[keys[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    """``section.key=value``; the value is read as JSON, else kept as a string."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(
    path: Optional[str] = None,
    overrides: Mapping[str, Any] | None = None,
    base: Optional[Mapping[str, Any]] = None,
) -> PipelineConfig:
    """Resolve a config from ``path`` (or $HYPOXMIL_CONFIG) and overrides.

    Precedence: overrides > file > ``base`` > built-in defaults.
    """
    path = path or os.environ.get(CONFIG_ENV) or None
    doc: dict = json.loads(json.dumps(base)) if base else {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config {path}: {exc.strerror or exc}") from None
        try:
            file_doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(file_doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        _merge(doc, file_doc)
    for key, value in (overrides or {}).items():
        _set_path(doc, key, value)
    return PipelineConfig.from_dict(doc)


def _merge(dst: dict, src: Mapping) -> None:
    for k, v in src.items():
        if isinstance(v, Mapping) and isinstance(dst.get(k), dict):
            _merge(dst[k], v)
        else:
            dst[k] = v


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import numpy
    import PIL
    import scipy

    from . import __version__

    return {
        "hypoxmil": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "Pillow": PIL.__version__,
    }


def write_run_files(out_dir, cfg: PipelineConfig, command: str, inputs: Mapping[str, Any] | None = None) -> None:
    """Echo the resolved config and a run manifest into ``out_dir``.

    No timestamps are recorded, so identical runs write identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_NAME).write_text(cfg.to_json())
    ins = {}
    for name, p in sorted((inputs or {}).items()):
        if p is None:
            continue
        p = Path(p)
        ins[name] = {"path": str(p), "sha256": file_sha256(p) if p.is_file() else None}
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "inputs": ins,
        "versions": versions(),
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
