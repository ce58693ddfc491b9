"""Gene-set signature scoring and weak-label stratification."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

HYPOXIC = "hypoxic"
NORMOXIC = "normoxic"


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class GeneSet:
    name: str
    genes: frozenset


@dataclass
class ExpressionMatrix:
    genes: list[str]
    samples: list[str]
    values: np.ndarray  # genes x samples

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.genes), len(self.samples)):
            raise ValueError(
                f"matrix shape {self.values.shape} != ({len(self.genes)}, {len(self.samples)})"
            )
        for kind, ids in (("gene", self.genes), ("sample", self.samples)):
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate {kind} ids")


@dataclass(frozen=True)
class SampleLabel:
    sample_id: str
    score: float
    label: Optional[str]  # None for samples left out by top/bottom selection

    @property
    def target(self) -> Optional[int]:
        return None if self.label is None else int(self.label == HYPOXIC)


def parse_gmt(source) -> list[GeneSet]:
    """Parse GMT text (a path or an open file): name, description, genes..."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            lines = fh.read().splitlines()
    else:
        lines = source.read().splitlines()
    sets = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) < 3:
            raise ParseError(f"GMT line {lineno}: expected name, description and >=1 gene")
        genes = frozenset(g.strip() for g in fields[2:] if g.strip())
        if not genes:
            raise ParseError(f"GMT line {lineno}: gene set {fields[0]!r} is empty")
        sets.append(GeneSet(fields[0], genes))
    return sets


def read_expression_tsv(path) -> ExpressionMatrix:
    """Genes as rows, samples as columns; first column gene ids."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows:
        raise ParseError(f"{path}: empty expression file")
    samples = rows[0][1:]
    genes, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(samples) + 1:
            raise ParseError(f"{path}: line {lineno} has {len(row) - 1} values, expected {len(samples)}")
        genes.append(row[0])
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
    try:
        return ExpressionMatrix(genes, samples, np.array(values).reshape(len(genes), len(samples)))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_expression_tsv(expr: ExpressionMatrix, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["gene"] + list(expr.samples))
    for g, row in zip(expr.genes, expr.values):
        w.writerow([g] + [repr(float(v)) for v in row])
    Path(path).write_text(buf.getvalue())


def signature_scores(expr: ExpressionMatrix, gs: GeneSet) -> dict[str, float]:
    """Mean across signature genes of per-gene z-scores (population SD).

    Genes with zero variance contribute 0.
    """
    rows = [i for i, g in enumerate(expr.genes) if g in gs.genes]
    if not rows:
        raise ValueError(f"no genes of {gs.name!r} present in the expression matrix")
    sub = expr.values[rows]
    mu = sub.mean(axis=1, keepdims=True)
    sd = sub.std(axis=1, keepdims=True)
    z = np.divide(sub - mu, sd, out=np.zeros_like(sub), where=sd > 0)
    score = z.mean(axis=0)
    return {s: float(v) for s, v in zip(expr.samples, score)}


def stratify(scores: Mapping[str, float], mode: str = "median_split", k: Optional[int] = None) -> list[SampleLabel]:
    """Weak labels from signature scores.

    ``median_split`` ranks samples by (score, sample_id) and labels the upper
    half hypoxic, so ties at the median fall to the sample-id order and an
    even count always splits evenly. ``top_bottom_k`` labels the k highest
    hypoxic, the k lowest normoxic and leaves the rest unlabeled.
    """
    n = len(scores)
    if n < 2:
        raise ValueError("stratify needs at least two samples")
    ranked = sorted(scores, key=lambda s: (scores[s], s))
    labels: dict[str, Optional[str]] = {}
    if mode == "median_split":
        half = n // 2
        for i, s in enumerate(ranked):
            if n % 2 and i == half:
                # odd count: the exact median sample goes with the lower half
                labels[s] = NORMOXIC
            else:
                labels[s] = NORMOXIC if i < half else HYPOXIC
    elif mode == "top_bottom_k":
        if k is None or k < 1:
            raise ValueError("top_bottom_k needs k >= 1")
        if 2 * k > n:
            raise ValueError(f"k={k} too large for {n} samples")
        for i, s in enumerate(ranked):
            labels[s] = NORMOXIC if i < k else HYPOXIC if i >= n - k else None
    else:
        raise ValueError(f"unknown stratification mode {mode!r}")
    return [SampleLabel(s, float(scores[s]), labels[s]) for s in sorted(scores)]


def write_labels(labels: list[SampleLabel], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "score", "label"])
    for lab in labels:
        w.writerow([lab.sample_id, repr(lab.score), lab.label or ""])
    Path(path).write_text(buf.getvalue())


def read_labels(path) -> list[SampleLabel]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["sample_id", "score", "label"]:
        raise ParseError(f"{path}: expected header sample_id,score,label")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ParseError(f"{path}: line {lineno} has {len(row)} fields")
        label = row[2] or None
        if label not in (None, HYPOXIC, NORMOXIC):
            raise ParseError(f"{path}: line {lineno}: unknown label {row[2]!r}")
        try:
            out.append(SampleLabel(row[0], float(row[1]), label))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
    return out


def label_targets(labels: list[SampleLabel]) -> dict[str, int]:
    """``{sample_id: 1 hypoxic / 0 normoxic}``, skipping unlabeled samples."""
    return {lab.sample_id: lab.target for lab in labels if lab.label is not None}
