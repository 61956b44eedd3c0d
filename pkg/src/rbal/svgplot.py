"""Minimal deterministic SVG charts for experiment aggregates.

Coordinates are rounded to two decimals so output bytes depend only on the
input data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    step: bool = False


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: List[Series] = field(default_factory=list)
    bars: List[Tuple[str, np.ndarray, np.ndarray, float]] = field(default_factory=list)
    ylim: Optional[Tuple[float, float]] = None


def _fmt(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def nice_ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    """Round-numbered ticks spanning ``[lo, hi]``."""
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(count, 1)
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = np.ceil(lo / step - 1e-9) * step
    ticks = np.arange(start, hi + step * 1e-6, step)
    return np.round(ticks, 10) + 0.0  # drops negative zero


def _tick_label(v: float) -> str:
    return f"{v:g}"


class _Frame:
    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (np.asarray(x, float) - lo) / (hi - lo) * self.w

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - (np.asarray(y, float) - lo) / (hi - lo) * self.h


def _points(xs, ys) -> str:
    return " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys))


def _step_xy(x, y):
    """Vertices of a right-continuous step function through the points."""
    xs = np.repeat(x, 2)[1:]
    ys = np.repeat(y, 2)[:-1]
    return xs, ys


def _limits(panel: Panel):
    xs, ys = [], []
    for s in panel.series:
        xs.append(s.x)
        ys.extend([s.y] + [b for b in (s.lower, s.upper) if b is not None])
    for _, edges, counts, width in panel.bars:
        xs.extend([edges, edges + width])
        ys.extend([counts, np.zeros(1)])
    x = np.concatenate(xs) if xs else np.zeros(1)
    xlim = (float(x.min()), float(x.max()))
    if xlim[1] <= xlim[0]:
        xlim = (xlim[0] - 0.5, xlim[0] + 0.5)
    if panel.ylim is not None:
        ylim = panel.ylim
    else:
        y = np.concatenate(ys) if ys else np.zeros(1)
        ylim = (min(0.0, float(y.min())), float(y.max()) * 1.05 or 1.0)
    return xlim, ylim


def _render_panel(out: list, panel: Panel, x0, y0, w, h):
    xlim, ylim = _limits(panel)
    fr = _Frame(x0, y0, w, h, xlim, ylim)
    out.append(f'<text x="{_fmt(x0 + w / 2)}" y="{_fmt(y0 - 10)}" text-anchor="middle" '
               f'font-size="14">{escape(panel.title)}</text>')
    out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(w)}" height="{_fmt(h)}" '
               'fill="none" stroke="#000"/>')
    for t in nice_ticks(*xlim):
        px = float(fr.px(t))
        out.append(f'<line x1="{_fmt(px)}" y1="{_fmt(y0 + h)}" x2="{_fmt(px)}" y2="{_fmt(y0 + h + 4)}" stroke="#000"/>')
        out.append(f'<text x="{_fmt(px)}" y="{_fmt(y0 + h + 16)}" text-anchor="middle" font-size="10">{_tick_label(t)}</text>')
    for t in nice_ticks(*ylim):
        py = float(fr.py(t))
        out.append(f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(py)}" x2="{_fmt(x0)}" y2="{_fmt(py)}" stroke="#000"/>')
        out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(py)}" x2="{_fmt(x0 + w)}" y2="{_fmt(py)}" stroke="#ddd"/>')
        out.append(f'<text x="{_fmt(x0 - 6)}" y="{_fmt(py + 3)}" text-anchor="end" font-size="10">{_tick_label(t)}</text>')
    out.append(f'<text x="{_fmt(x0 + w / 2)}" y="{_fmt(y0 + h + 34)}" text-anchor="middle" font-size="12">{escape(panel.xlabel)}</text>')
    out.append(f'<text x="{_fmt(x0 - 42)}" y="{_fmt(y0 + h / 2)}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 {_fmt(x0 - 42)} {_fmt(y0 + h / 2)})">{escape(panel.ylabel)}</text>')

    legend = []
    for i, (label, edges, counts, width) in enumerate(panel.bars):
        color = PALETTE[i % len(PALETTE)]
        for e, c in zip(edges, counts):
            if c <= 0:
                continue
            bx, by = float(fr.px(e)), float(fr.py(c))
            bw = float(fr.px(e + width)) - bx
            out.append(f'<rect class="bar" x="{_fmt(bx)}" y="{_fmt(by)}" width="{_fmt(bw)}" '
                       f'height="{_fmt(y0 + h - by)}" fill="{color}" fill-opacity="0.45" stroke="{color}"/>')
        legend.append((label, color))
    offset = len(panel.bars)
    for i, s in enumerate(panel.series):
        color = PALETTE[(i + offset) % len(PALETTE)]
        x, y = np.asarray(s.x, float), np.asarray(s.y, float)
        if s.lower is not None and s.upper is not None and np.any(s.upper > s.lower):
            lo, hi = np.asarray(s.lower, float), np.asarray(s.upper, float)
            if s.step:
                bx, blo = _step_xy(x, lo)
                _, bhi = _step_xy(x, hi)
            else:
                bx, blo, bhi = x, lo, hi
            poly = _points(fr.px(bx), fr.py(bhi)) + " " + _points(fr.px(bx[::-1]), fr.py(blo[::-1]))
            out.append(f'<polygon class="band" points="{poly}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        lx, ly = _step_xy(x, y) if s.step else (x, y)
        out.append(f'<polyline class="line" points="{_points(fr.px(lx), fr.py(ly))}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        legend.append((s.label, color))
    for i, (label, color) in enumerate(legend):
        ly = y0 + 14 + 16 * i
        out.append(f'<rect x="{_fmt(x0 + w - 110)}" y="{_fmt(ly - 9)}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{_fmt(x0 + w - 95)}" y="{_fmt(ly)}" font-size="11">{escape(label)}</text>')


def render(panels: Sequence[Panel], panel_width: int = 480, panel_height: int = 300) -> str:
    """Lay panels out side by side and return the SVG document."""
    margin_l, margin_r, margin_t, margin_b = 70, 20, 40, 50
    cell_w = margin_l + panel_width + margin_r
    total_w = cell_w * len(panels)
    total_h = margin_t + panel_height + margin_b
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" '
        f'viewBox="0 0 {total_w} {total_h}" font-family="sans-serif">',
        f'<rect width="{total_w}" height="{total_h}" fill="#fff"/>',
    ]
    for i, p in enumerate(panels):
        _render_panel(out, p, cell_w * i + margin_l, margin_t, panel_width, panel_height)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def performance_figure(aggregates: dict) -> str:
    """Median decision accuracy and f1 against queries, with interquartile bands."""
    panels = []
    for metric, title, ylabel in (("accuracy", "Decision accuracy", "decision accuracy"),
                                  ("f1", "Classification performance", "f1-score")):
        panel = Panel(title, "number of queries", ylabel, ylim=(0.0, 1.0))
        for kind, agg in sorted(aggregates.items()):
            bands = getattr(agg, metric)
            panel.series.append(Series(kind, agg.query_counts, bands["median"],
                                       bands["q25"], bands["q75"], step=True))
        panels.append(panel)
    return render(panels)


def histogram_figure(aggregates: dict, bin_width: int = 10) -> str:
    panel = Panel("Total queries per run", "number of queries", "runs")
    for kind, agg in sorted(aggregates.items()):
        edges = np.array([e for e, _ in agg.histogram], float)
        counts = np.array([c for _, c in agg.histogram], float)
        panel.bars.append((kind, edges, counts, float(bin_width)))
    return render([panel])


def query_frequency_figure(aggregates: dict) -> str:
    panel = Panel("Queries per observation", "observation index", "fraction of runs querying",
                  ylim=(0.0, 1.0))
    for kind, agg in sorted(aggregates.items()):
        f = np.asarray(agg.query_frequency, float)
        panel.series.append(Series(kind, np.arange(f.size), f))
    return render([panel], panel_width=900)
