"""Sample-level inference and single-tile scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import CLASS_NAMES, HYPOXIC, NORMOXIC, MilModel, forward_bag


@dataclass
class TileScore:
    index: int
    score: float
    label: int

    @property
    def label_name(self) -> str:
        return CLASS_NAMES[self.label]


def infer_sample(model: MilModel, tiles: Sequence[np.ndarray], keys: Optional[Sequence] = None) -> float:
    """Hypoxic probability of one sample from all of its tiles, unaugmented."""
    if len(tiles) == 0:
        raise ValueError("infer_sample needs at least one tile")
    return forward_bag(model, list(tiles), keys).score


def score_single_tiles(model: MilModel, tiles: Sequence[np.ndarray], threshold: float = 0.9) -> list[TileScore]:
    """Score each tile as a bag of one and keep only confident calls.

    A tile is hypoxic when its score reaches ``threshold``, normoxic when
    ``1 - score`` does, and dropped otherwise. Below 0.5 both can hold; the
    more probable class wins.
    """
    if not 0 <= threshold <= 1:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    kept = []
    for i, tile in enumerate(tiles):
        s = forward_bag(model, [tile]).score
        hyp = s >= threshold
        nor = (1 - s) >= threshold
        if hyp and nor:
            label = HYPOXIC if s >= 0.5 else NORMOXIC
        elif hyp:
            label = HYPOXIC
        elif nor:
            label = NORMOXIC
        else:
            continue
        kept.append(TileScore(i, s, label))
    return kept
