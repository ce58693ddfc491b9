"""Self-contained SVG figures: group boxplots with significance stars and a
per-repeat AUC plot. Output is a pure function of the inputs, with every
coordinate formatted to fixed precision so files are byte-stable.
"""

from __future__ import annotations

from html import escape
from typing import Optional, Sequence

from .evalstat import Metrics, TestResult, boxplot_summary

WIDTH = 360
HEIGHT = 300
MARGIN = (48, 20, 40, 56)  # top, right, bottom, left
COLORS = ("#c0392b", "#2e6da4", "#7f8c8d", "#8e44ad")


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Canvas:
    def __init__(self, width: int, height: int, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{_f(width / 2)}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        ]

    def line(self, x1, y1, x2, y2, stroke="black", width=1.0):
        self.parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" stroke="{stroke}" stroke-width="{width}"/>'
        )

    def rect(self, x, y, w, h, fill, stroke="black"):
        self.parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" fill="{fill}" '
            f'fill-opacity="0.35" stroke="{stroke}"/>'
        )

    def circle(self, x, y, r, fill):
        self.parts.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(r)}" fill="{fill}"/>')

    def text(self, x, y, s, anchor="middle", size=None, rotate=False):
        extra = f' font-size="{size}"' if size else ""
        rot = f' transform="rotate(-90 {_f(x)} {_f(y)})"' if rotate else ""
        self.parts.append(f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"{extra}{rot}>{escape(s)}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _nice_range(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.08
    return lo - pad, hi + pad


def _y_axis(c: _Canvas, lo: float, hi: float, to_y, x0: float, label: str, n_ticks: int = 5):
    top, _, bottom, left = MARGIN
    c.line(x0, to_y(hi), x0, to_y(lo))
    for i in range(n_ticks + 1):
        v = lo + (hi - lo) * i / n_ticks
        y = to_y(v)
        c.line(x0 - 4, y, x0, y)
        c.text(x0 - 6, y + 3, f"{v:.3g}", anchor="end", size=9)
    c.text(14, (top + HEIGHT - bottom) / 2, label, rotate=True)


def boxplot_svg(
    groups: Sequence[tuple[str, Sequence[float]]],
    comparisons: Sequence[tuple[int, int, TestResult]] = (),
    title: str = "",
    ylabel: str = "",
) -> str:
    """Boxplot of each group; each comparison draws a bracket with its stars."""
    if not groups:
        raise ValueError("boxplot_svg needs at least one group")
    stats = [boxplot_summary(v) for _, v in groups]
    lo = min(min(s["whisker_low"], *s["outliers"]) if s["outliers"] else s["whisker_low"] for s in stats)
    hi = max(max(s["whisker_high"], *s["outliers"]) if s["outliers"] else s["whisker_high"] for s in stats)
    span = (hi - lo) or 1.0
    hi_plot = hi + span * (0.12 * len(comparisons) + 0.02)
    lo, hi_plot = _nice_range(lo, hi_plot)
    top, right, bottom, left = MARGIN
    plot_h = HEIGHT - top - bottom
    plot_w = WIDTH - left - right

    def to_y(v):
        return top + plot_h * (hi_plot - v) / (hi_plot - lo)

    c = _Canvas(WIDTH, HEIGHT, title)
    _y_axis(c, lo, hi_plot, to_y, left, ylabel)
    slot = plot_w / len(groups)
    xs = []
    for i, ((name, values), s) in enumerate(zip(groups, stats)):
        cx = left + slot * (i + 0.5)
        xs.append(cx)
        bw = min(60.0, slot * 0.5)
        color = COLORS[i % len(COLORS)]
        c.line(cx, to_y(s["whisker_low"]), cx, to_y(s["q1"]))
        c.line(cx, to_y(s["q3"]), cx, to_y(s["whisker_high"]))
        for w in (s["whisker_low"], s["whisker_high"]):
            c.line(cx - bw / 4, to_y(w), cx + bw / 4, to_y(w))
        c.rect(cx - bw / 2, to_y(s["q3"]), bw, max(to_y(s["q1"]) - to_y(s["q3"]), 0.5), color)
        c.line(cx - bw / 2, to_y(s["median"]), cx + bw / 2, to_y(s["median"]), width=2.0)
        for o in s["outliers"]:
            c.circle(cx, to_y(o), 1.8, color)
        c.text(cx, HEIGHT - bottom + 16, f"{name} (n={len(values)})")
    for k, (i, j, res) in enumerate(comparisons):
        yv = hi + span * (0.06 + 0.12 * k)
        y = to_y(yv)
        c.line(xs[i], y + 5, xs[i], y)
        c.line(xs[i], y, xs[j], y)
        c.line(xs[j], y, xs[j], y + 5)
        c.text((xs[i] + xs[j]) / 2, y - 3, f"{res.stars} (p={res.p:.2g})")
    return c.render()


def auc_svg(metrics: Metrics, title: str = "Test AUC per split") -> str:
    """One point per repeat plus the mean with a +/- SD bar."""
    top, right, bottom, left = MARGIN
    lo, hi = 0.0, 1.0
    plot_h = HEIGHT - top - bottom
    plot_w = WIDTH - left - right

    def to_y(v):
        return top + plot_h * (hi - v) / (hi - lo)

    c = _Canvas(WIDTH, HEIGHT, title)
    _y_axis(c, lo, hi, to_y, left, "AUROC")
    c.line(left, to_y(0.5), left + plot_w, to_y(0.5), stroke="#bbbbbb")
    n = len(metrics.aucs)
    for i, auc in enumerate(metrics.aucs):
        x = left + plot_w * 0.25 + (plot_w * 0.2) * (i - (n - 1) / 2) / max(n, 1)
        c.circle(x, to_y(auc), 3.5, COLORS[1])
    mx = left + plot_w * 0.7
    m, sd = metrics.mean, metrics.sd
    c.line(mx, to_y(min(1.0, m + sd)), mx, to_y(max(0.0, m - sd)))
    c.rect(mx - 14, to_y(m) - 1, 28, 2, COLORS[0])
    c.text(mx, to_y(min(1.0, m + sd)) - 6, f"{m:.3f} ± {sd:.3f}")
    c.text(left + plot_w * 0.25, HEIGHT - bottom + 16, f"splits (n={n})")
    c.text(mx, HEIGHT - bottom + 16, "mean ± SD")
    return c.render()


def confusion_svg(tp: int, fp: int, tn: int, fn: int, title: Optional[str] = None) -> str:
    """2x2 confusion matrix, rows = true class, columns = predicted class."""
    size = 260
    c = _Canvas(size, size, title or "Confusion matrix")
    cells = [((0, 0), tn, "TN"), ((0, 1), fp, "FP"), ((1, 0), fn, "FN"), ((1, 1), tp, "TP")]
    total = max(tp + fp + tn + fn, 1)
    x0, y0, cell = 80, 50, 80
    for (r, col), v, name in cells:
        shade = int(round(235 - 150 * v / total))
        c.parts.append(
            f'<rect x="{x0 + col * cell}" y="{y0 + r * cell}" width="{cell}" height="{cell}" '
            f'fill="rgb({shade},{shade},255)" stroke="black"/>'
        )
        c.text(x0 + col * cell + cell / 2, y0 + r * cell + cell / 2 + 4, f"{name} {v}")
    for k, name in enumerate(("normoxic", "hypoxic")):
        c.text(x0 + k * cell + cell / 2, y0 + 2 * cell + 16, name)
        c.text(x0 - 6, y0 + k * cell + cell / 2 + 4, name, anchor="end")
    c.text(x0 + cell, y0 + 2 * cell + 32, "predicted")
    return c.render()
