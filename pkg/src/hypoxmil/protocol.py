"""Experiment chains built from the module operations.

- :func:`run_protocol`: stratified random splits, one model trained per
  repeat on its training samples, AUC and confusion on the held-out samples.
- :func:`single_tile_calls` plus :func:`compare_texture`: score every tile
  as a bag of one, keep the confident calls and compare GLCM features of
  predicted-hypoxic against predicted-normoxic tiles.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .evalstat import Confusion, Metrics, SplitPlan, TestResult, confusion, make_splits, mann_whitney, roc_auc
from .milnet import CLASS_NAMES, HYPOXIC, NORMOXIC, MilModel, ModelConfig, TrainConfig, infer_sample
from .milnet.infer import score_single_tiles
from .milnet.train import TrainResult, train_on_tiles
from .texfeat import FEATURE_NAMES, GlcmFeatures, glcm_features, to_gray

log = logging.getLogger(__name__)


@dataclass
class RepeatResult:
    plan: SplitPlan
    train: TrainResult
    scores: dict[str, float]  # held-out sample -> hypoxic score
    auc: float
    confusion: Confusion

    @property
    def model(self) -> MilModel:
        return self.train.model


@dataclass
class ProtocolResult:
    repeats: list[RepeatResult]

    @property
    def metrics(self) -> Metrics:
        return Metrics([r.auc for r in self.repeats], [r.confusion for r in self.repeats])


def repeat_rng(train_seed: int, repeat: int) -> np.random.Generator:
    """Training RNG of one repeat; independent of the split RNG."""
    return np.random.default_rng([train_seed, 1000 + repeat])


def evaluate_model(
    model: MilModel,
    tiles: Mapping[str, np.ndarray],
    labels: Mapping[str, int],
    sample_ids: Sequence[str],
    threshold: float = 0.5,
) -> tuple[dict[str, float], float, Confusion]:
    """Score held-out samples on all their tiles; returns (scores, AUC, confusion)."""
    ids = sorted(sample_ids)
    scores = {sid: infer_sample(model, list(tiles[sid]), keys=list(range(len(tiles[sid])))) for sid in ids}
    s = [scores[sid] for sid in ids]
    y = [int(labels[sid]) for sid in ids]
    return scores, roc_auc(s, y), confusion(s, y, threshold)


def run_protocol(
    tiles: Mapping[str, np.ndarray],
    labels: Mapping[str, int],
    model_config: ModelConfig,
    train_config: TrainConfig,
    n_repeats: int = 3,
    split_seed: int = 0,
    plans: Optional[list[SplitPlan]] = None,
    on_repeat: Optional[Callable[[RepeatResult], None]] = None,
) -> ProtocolResult:
    if plans is None:
        plans = make_splits(labels, n_repeats=n_repeats, seed=split_seed)
    results = []
    for plan in plans:
        train_labels = {sid: int(labels[sid]) for sid in plan.train}
        tr = train_on_tiles(
            model_config,
            train_config,
            {sid: tiles[sid] for sid in plan.train},
            train_labels,
            rng=repeat_rng(train_config.seed, plan.repeat),
        )
        tr.metadata["repeat"] = plan.repeat
        scores, auc, conf = evaluate_model(tr.model, tiles, labels, plan.test)
        res = RepeatResult(plan, tr, scores, auc, conf)
        log.info("repeat %d: AUC %.4f", plan.repeat, auc)
        if on_repeat is not None:
            on_repeat(res)
        results.append(res)
    return ProtocolResult(results)


def scores_table(rows: Sequence[tuple[int, str, int, float]]) -> str:
    """CSV of (repeat, sample_id, label, score)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["repeat", "sample_id", "label", "score"])
    for rep, sid, y, s in rows:
        w.writerow([rep, sid, y, repr(float(s))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# single-tile calls and texture comparison


@dataclass(frozen=True)
class TileCall:
    sample_id: str
    tile_index: int
    score: float
    label: int

    @property
    def tile_id(self) -> str:
        return f"{self.sample_id}:{self.tile_index}"


def single_tile_calls(
    model: MilModel,
    tiles: Mapping[str, np.ndarray],
    sample_ids: Optional[Sequence[str]] = None,
    threshold: float = 0.9,
) -> list[TileCall]:
    ids = sorted(tiles) if sample_ids is None else sorted(sample_ids)
    calls = []
    for sid in ids:
        for t in score_single_tiles(model, list(tiles[sid]), threshold):
            calls.append(TileCall(sid, t.index, t.score, t.label))
    return calls


def tile_calls_table(calls: Sequence[TileCall]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tile_id", "sample_id", "tile_index", "score", "label"])
    for c in calls:
        w.writerow([c.tile_id, c.sample_id, c.tile_index, repr(float(c.score)), CLASS_NAMES[c.label]])
    return buf.getvalue()


def read_tile_calls(path) -> list[TileCall]:
    names = {v: k for k, v in CLASS_NAMES.items()}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for i, r in enumerate(rows, start=2):
        try:
            out.append(TileCall(r["sample_id"], int(r["tile_index"]), float(r["score"]), names[r["label"]]))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}: row {i}: bad tile score record ({exc})") from None
    return out


@dataclass
class GroupComparison:
    feature: str
    hypoxic: list[float]
    normoxic: list[float]
    test: TestResult

    @property
    def means(self) -> tuple[float, float]:
        return float(np.mean(self.hypoxic)), float(np.mean(self.normoxic))


def compare_features(
    features: Mapping[str, GlcmFeatures], calls: Sequence[TileCall], names: Sequence[str] = FEATURE_NAMES
) -> list[GroupComparison]:
    """Mann-Whitney comparison of each feature between the two call groups."""
    hyp = [features[c.tile_id] for c in calls if c.label == HYPOXIC]
    nor = [features[c.tile_id] for c in calls if c.label == NORMOXIC]
    if not hyp or not nor:
        raise ValueError(f"need confident calls in both groups, got {len(hyp)} hypoxic and {len(nor)} normoxic")
    out = []
    for name in names:
        a = [float(getattr(f, name)) for f in hyp]
        b = [float(getattr(f, name)) for f in nor]
        out.append(GroupComparison(name, a, b, mann_whitney(a, b)))
    return out


def compare_texture(calls: Sequence[TileCall], tiles: Mapping[str, np.ndarray]) -> list[GroupComparison]:
    feats = {c.tile_id: glcm_features(to_gray(tiles[c.sample_id][c.tile_index])) for c in calls}
    return compare_features(feats, calls)


def comparison_table(rows: Sequence[GroupComparison]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "n_hypoxic", "n_normoxic", "mean_hypoxic", "mean_normoxic", "u", "p", "stars", "method"])
    for r in rows:
        mh, mn = r.means
        t = r.test
        w.writerow([r.feature, len(r.hypoxic), len(r.normoxic), repr(mh), repr(mn), repr(t.u), repr(t.p), t.stars, t.method])
    return buf.getvalue()


def write_text(path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)
    return p
