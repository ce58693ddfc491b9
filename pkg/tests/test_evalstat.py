import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from hypoxmil import evalstat, figures
from hypoxmil.evalstat import Confusion, Metrics


def mock_labels(n=240):
    return {f"T{i:03d}": int(i < n // 2) for i in range(n)}


# --- splits -------------------------------------------------------------------


def test_split_sizes_on_240_mock():
    labels = mock_labels()
    plans = evalstat.make_splits(labels, 3, seed=0)
    assert [p.repeat for p in plans] == [1, 2, 3]
    for p in plans:
        assert len(p.test) == 80 and len(p.train) == 160
        assert sum(labels[s] for s in p.test) == 40
        assert set(p.train).isdisjoint(p.test)
        assert set(p.train) | set(p.test) == set(labels)
    assert len({tuple(p.test) for p in plans}) == 3


def test_splits_are_deterministic_and_seeded():
    labels = mock_labels(30)
    a = evalstat.make_splits(labels, 3, seed=4)
    assert a == evalstat.make_splits(dict(reversed(list(labels.items()))), 3, seed=4)
    assert a != evalstat.make_splits(labels, 3, seed=5)


def test_split_rounding_and_class_floor():
    labels = {f"s{i}": int(i < 5) for i in range(10)}
    p = evalstat.make_splits(labels, 1)[0]
    # round(5/3) = 2 per class
    assert len(p.test) == 4
    with pytest.raises(ValueError):
        evalstat.make_splits({"a": 0, "b": 0, "c": 0, "d": 1, "e": 1})


@given(st.integers(3, 40), st.integers(3, 40), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_split_partition_property(n0, n1, seed):
    labels = {f"a{i}": 0 for i in range(n0)} | {f"b{i}": 1 for i in range(n1)}
    for p in evalstat.make_splits(labels, 2, seed=seed):
        assert sorted(p.train + p.test) == sorted(labels)
        for y, n in ((0, n0), (1, n1)):
            k = sum(labels[s] == y for s in p.test)
            assert 1 <= k <= n - 1 and abs(k - n / 3) <= 0.5 + 1e-9


def test_splits_csv_round_trip(tmp_path):
    plans = evalstat.make_splits(mock_labels(12), 2, seed=1)
    (tmp_path / "s.csv").write_text(evalstat.splits_table(plans))
    back = evalstat.read_splits(tmp_path / "s.csv")
    assert [(b.repeat, b.train, b.test) for b in back] == [(p.repeat, p.train, p.test) for p in plans]


# --- AUC and confusion ----------------------------------------------------------


def brute_auc(s, y):
    pos = [a for a, t in zip(s, y) if t == 1]
    neg = [a for a, t in zip(s, y) if t == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_examples():
    assert evalstat.roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert evalstat.roc_auc([0.5] * 4, [0, 1, 0, 1]) == 0.5
    assert evalstat.roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    with pytest.raises(ValueError):
        evalstat.roc_auc([0.1, 0.2], [1, 1])


@given(st.integers(0, 2**31), st.integers(2, 50))
@settings(max_examples=150, deadline=None)
def test_auc_matches_pair_count(seed, n):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    s = rng.integers(0, 6, n) / 5.0  # coarse grid forces ties
    assert evalstat.roc_auc(s, y) == pytest.approx(brute_auc(s, y), abs=1e-12)
    # strictly increasing transform leaves it unchanged
    assert evalstat.roc_auc(np.exp(3 * s) - 2, y) == pytest.approx(evalstat.roc_auc(s, y), abs=1e-12)


@given(st.integers(0, 2**31), st.integers(1, 40), st.floats(0, 1))
@settings(max_examples=100, deadline=None)
def test_confusion_matches_direct_count(seed, n, thr):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    s = rng.random(n)
    c = evalstat.confusion(s, y, thr)
    tp = sum(1 for a, t in zip(s, y) if a >= thr and t == 1)
    fp = sum(1 for a, t in zip(s, y) if a >= thr and t == 0)
    assert (c.tp, c.fp, c.tn + c.fp, c.fn + c.tp) == (tp, fp, int((y == 0).sum()), int((y == 1).sum()))
    assert c.total == n


def test_confusion_threshold_edges():
    assert evalstat.confusion([0.0, 0.5, 1.0], [0, 1, 1], 0.0) == Confusion(2, 1, 0, 0)
    assert evalstat.confusion([0.49, 0.5], [0, 1]) == Confusion(1, 0, 1, 0)


# --- Mann-Whitney ---------------------------------------------------------------


def brute_mw_p(x, y):
    """Two-sided exact p by enumerating every relabelling of the pooled values."""
    pooled = np.concatenate([x, y])
    ranks = sps.rankdata(pooled)
    n = len(x)
    obs = ranks[:n].sum()
    sums = [ranks[list(c)].sum() for c in itertools.combinations(range(len(pooled)), n)]
    sums = np.array(sums)
    p_le = np.mean(sums <= obs + 1e-9)
    p_ge = np.mean(sums >= obs - 1e-9)
    return min(1.0, 2 * min(p_le, p_ge))


def test_mw_separated_example():
    r = evalstat.mann_whitney([1, 2, 3], [10, 11, 12])
    assert r.u == 0 and r.p == pytest.approx(0.1, abs=1e-12) and r.method == "exact"
    assert r.stars == "ns"


def test_mw_identical_samples():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    r = evalstat.mann_whitney(x, list(x))
    assert r.p >= 0.99 and r.stars == "ns"


def test_mw_large_shift_gets_four_stars():
    rng = np.random.default_rng(0)
    r = evalstat.mann_whitney(rng.normal(0, 1, 100), rng.normal(2, 1, 100))
    assert r.method == "normal" and r.stars == "****"


@given(st.integers(0, 2**31), st.integers(1, 7), st.integers(1, 7))
@settings(max_examples=80, deadline=None)
def test_mw_exact_matches_enumeration_with_ties(seed, n, m):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 5, n).astype(float)
    y = rng.integers(0, 5, m).astype(float)
    r = evalstat.mann_whitney(x, y, "exact")
    assert r.p == pytest.approx(brute_mw_p(x, y), abs=1e-12)
    assert r.u == sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in x for b in y)
    # swapping the samples mirrors U and keeps p
    s = evalstat.mann_whitney(y, x, "exact")
    assert s.u == pytest.approx(n * m - r.u) and s.p == pytest.approx(r.p, abs=1e-12)


@given(st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_mw_exact_matches_scipy_without_ties(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=8), rng.normal(0.5, 1, size=9)
    ref = sps.mannwhitneyu(x, y, alternative="two-sided", method="exact")
    r = evalstat.mann_whitney(x, y)
    assert r.u == ref.statistic and r.p == pytest.approx(ref.pvalue, abs=1e-12)


def test_mw_normal_matches_scipy_asymptotic():
    rng = np.random.default_rng(3)
    x, y = rng.integers(0, 20, 60).astype(float), rng.integers(2, 22, 70).astype(float)
    ref = sps.mannwhitneyu(x, y, alternative="two-sided", method="asymptotic", use_continuity=True)
    r = evalstat.mann_whitney(x, y)
    assert r.method == "normal" and r.p == pytest.approx(ref.pvalue, abs=1e-12)


def test_mw_exact_and_normal_agree_at_15_by_15():
    rng = np.random.default_rng(11)
    for _ in range(5):
        x, y = rng.normal(size=15), rng.normal(0.4, 1, size=15)
        e = evalstat.mann_whitney(x, y, "exact").p
        a = evalstat.mann_whitney(x, y, "normal").p
        assert abs(e - a) < 0.01


def test_star_thresholds():
    cases = [(0.2, "ns"), (0.05, "ns"), (0.0499, "*"), (0.01, "*"), (0.0099, "**"),
             (0.001, "**"), (0.00099, "***"), (0.0001, "***"), (0.00009, "****")]
    for p, s in cases:
        assert evalstat.star_label(p) == s


# --- summaries and tables -------------------------------------------------------


def test_boxplot_summary_examples():
    b = evalstat.boxplot_summary(range(1, 9))
    assert (b["median"], b["q1"], b["q3"]) == (4.5, 2.75, 6.25)
    assert b["outliers"] == [] and (b["whisker_low"], b["whisker_high"]) == (1, 8)
    b = evalstat.boxplot_summary([1, 2, 3, 4, 100])
    assert b["outliers"] == [100.0] and b["whisker_high"] == 4
    b = evalstat.boxplot_summary([7.0])
    assert b["median"] == b["q1"] == b["q3"] == b["whisker_low"] == 7.0
    assert evalstat.boxplot_summary([2, 2, 2])["outliers"] == []


def test_metrics_mean_sd_and_table():
    m = Metrics([0.9, 1.0, 0.95], [Confusion(1, 2, 3, 4)] * 3)
    assert m.mean == pytest.approx(0.95) and m.sd == pytest.approx(0.05)
    rows = [r.split(",") for r in evalstat.metrics_table(m).splitlines()]
    assert rows[0] == ["repeat", "auc", "sd", "tp", "fp", "tn", "fn"]
    assert rows[1] == ["1", "0.9", "", "1", "2", "3", "4"]
    assert rows[-1][0] == "mean" and float(rows[-1][1]) == m.mean and len(rows) == 5
    assert Metrics([0.7]).sd == 0.0


def test_figures_are_byte_stable():
    g = [("hypoxic", [0.1, 0.2, 0.3, 0.9]), ("normoxic", [0.5, 0.6, 0.65])]
    res = evalstat.mann_whitney(g[0][1], g[1][1])
    a = figures.boxplot_svg(g, [(0, 1, res)], "homogeneity", "value")
    assert a == figures.boxplot_svg(g, [(0, 1, res)], "homogeneity", "value")
    assert a.startswith("<svg") and res.stars in a and "hypoxic (n=4)" in a
    m = Metrics([0.9, 0.97, 1.0])
    assert figures.auc_svg(m) == figures.auc_svg(m)
    assert "TP 3" in figures.confusion_svg(3, 1, 2, 0)
    with pytest.raises(ValueError):
        figures.boxplot_svg([])
