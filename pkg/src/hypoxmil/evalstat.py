"""Evaluation protocol and rank statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

EXACT_LIMIT = 400  # n*m at or below which the exact permutation p-value is used
STARS = ((1e-4, "****"), (1e-3, "***"), (1e-2, "**"), (5e-2, "*"))


@dataclass
class SplitPlan:
    repeat: int
    train: list[str]
    test: list[str]
    seed: int


@dataclass
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class Metrics:
    aucs: list[float]
    confusions: list[Confusion] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def sd(self) -> float:
        # sample SD over repeats
        return float(np.std(self.aucs, ddof=1)) if len(self.aucs) > 1 else 0.0


@dataclass
class TestResult:
    u: float
    p: float
    stars: str
    method: str


def star_label(p: float) -> str:
    for cut, label in STARS:
        if p < cut:
            return label
    return "ns"


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_splits(
    labels: Mapping[str, int],
    n_repeats: int = 3,
    test_fraction: float = 1 / 3,
    seed: int = 0,
) -> list[SplitPlan]:
    """Independent stratified random train/test splits, one per repeat."""
    by_class: dict[int, list[str]] = {}
    for sid, y in labels.items():
        by_class.setdefault(int(y), []).append(sid)
    for y, ids in by_class.items():
        if len(ids) < 3:
            raise ValueError(f"class {y} has only {len(ids)} samples; need at least 3")
    plans = []
    for rep in range(1, n_repeats + 1):
        rng = np.random.default_rng([seed, rep])
        train, test = [], []
        for y in sorted(by_class):
            ids = sorted(by_class[y])
            n_test = min(max(_round_half_up(len(ids) * test_fraction), 1), len(ids) - 1)
            perm = rng.permutation(len(ids))
            test += [ids[i] for i in perm[:n_test]]
            train += [ids[i] for i in perm[n_test:]]
        plans.append(SplitPlan(rep, sorted(train), sorted(test), seed))
    return plans


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if not set(np.unique(y)) <= {0, 1}:
        raise ValueError("labels must be 0/1")
    return s, y


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-based AUC with midranks for tied scores."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    ranks = rankdata(s, method="average")
    r_pos = float(ranks[y == 1].sum())
    return (r_pos - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def confusion(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> Confusion:
    """Predicted positive iff score >= threshold."""
    s, y = _check_binary(scores, labels)
    pred = s >= threshold
    return Confusion(
        tp=int(np.sum(pred & (y == 1))),
        fp=int(np.sum(pred & (y == 0))),
        tn=int(np.sum(~pred & (y == 0))),
        fn=int(np.sum(~pred & (y == 1))),
    )


def _exact_rank_sum_pmf(doubled_ranks: np.ndarray, n: int) -> np.ndarray:
    """Counts of size-n subsets by their (doubled) rank sum.

    Equivalent to enumerating every assignment of n of the pooled values to
    the first sample; ties keep their midranks.
    """
    total = int(doubled_ranks.sum())
    dp = np.zeros((n + 1, total + 1), dtype=np.float64)
    dp[0, 0] = 1.0
    for r in doubled_ranks.astype(int):
        dp[1:, r:] += dp[:-1, : total + 1 - r].copy()
    return dp[n]


def mann_whitney(xs: Sequence[float], ys: Sequence[float], method: str = "auto") -> TestResult:
    """Two-sided Mann-Whitney U test; ``u`` counts pairs with x > y (+0.5 per tie).

    ``auto`` uses the exact permutation distribution when len(xs)*len(ys) <=
    400 and the tie- and continuity-corrected normal approximation otherwise.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("mann_whitney needs two non-empty samples")
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled, method="average")
    rx = float(ranks[:n].sum())
    u = rx - n * (n + 1) / 2
    if method == "auto":
        method = "exact" if n * m <= EXACT_LIMIT else "normal"
    if method == "exact":
        doubled = np.rint(2 * ranks).astype(int)
        counts = _exact_rank_sum_pmf(doubled, n)
        obs = int(round(2 * rx))
        denom = counts.sum()
        p_le = counts[: obs + 1].sum() / denom
        p_ge = counts[obs:].sum() / denom
        p = min(1.0, 2 * min(p_le, p_ge))
    elif method == "normal":
        big_n = n + m
        _, tie_counts = np.unique(pooled, return_counts=True)
        tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (big_n * (big_n - 1))
        var = n * m / 12.0 * ((big_n + 1) - tie_term)
        if var <= 0:
            p = 1.0
        else:
            z = max(abs(u - n * m / 2.0) - 0.5, 0.0) / math.sqrt(var)
            p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return TestResult(u, float(p), star_label(p), method)


def boxplot_summary(values: Sequence[float]) -> dict:
    """Linear-interpolation quartiles and 1.5 IQR whiskers."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("boxplot_summary needs at least one value")
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(o) for o in v[(v < lo_fence) | (v > hi_fence)]],
    }


# ---------------------------------------------------------------------------
# CSV helpers


def splits_table(plans: list[SplitPlan]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["repeat", "sample_id", "role"])
    for plan in plans:
        for sid in plan.train:
            w.writerow([plan.repeat, sid, "train"])
        for sid in plan.test:
            w.writerow([plan.repeat, sid, "test"])
    return buf.getvalue()


def read_splits(path) -> list[SplitPlan]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["repeat", "sample_id", "role"]:
        raise ValueError(f"{path}: expected header repeat,sample_id,role")
    plans: dict[int, SplitPlan] = {}
    for row in rows[1:]:
        rep = int(row[0])
        plan = plans.setdefault(rep, SplitPlan(rep, [], [], 0))
        (plan.train if row[2] == "train" else plan.test).append(row[1])
    return [plans[k] for k in sorted(plans)]


def metrics_table(metrics: Metrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["repeat", "auc", "sd", "tp", "fp", "tn", "fn"])
    for i, auc in enumerate(metrics.aucs, start=1):
        c = metrics.confusions[i - 1] if i - 1 < len(metrics.confusions) else None
        w.writerow([i, repr(auc), "", *((c.tp, c.fp, c.tn, c.fn) if c else ("", "", "", ""))])
    w.writerow(["mean", repr(metrics.mean), repr(metrics.sd), "", "", "", ""])
    return buf.getvalue()


def write_text(path, text: str) -> None:
    Path(path).write_text(text)
