"""Evaluation quantities and aggregation of repeated campaigns."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np


def decision_accuracy(record) -> float:
    """Fraction of logged steps whose action matches the oracle action."""
    actions = np.asarray(record.actions)
    if actions.size == 0:
        raise ValueError("empty record")
    return float(np.mean(actions == np.asarray(record.oracle_actions)))


def macro_f1(predicted, true, class_count: int) -> float:
    """Unweighted mean of per-class f1 over classes seen in either argument.

    A class with precision + recall = 0 scores 0.
    """
    p = np.asarray(predicted, dtype=int)
    t = np.asarray(true, dtype=int)
    if p.shape != t.shape:
        raise ValueError("predicted and true labels differ in length")
    if p.size == 0:
        raise ValueError("no labels")
    if min(p.min(), t.min()) < 1 or max(p.max(), t.max()) > class_count:
        raise ValueError(f"labels must lie in 1..{class_count}")
    scores = []
    for k in np.union1d(p, t):
        tp = np.sum((p == k) & (t == k))
        n_pred = np.sum(p == k)
        n_true = np.sum(t == k)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / n_true if n_true else 0.0
        scores.append(2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
    return float(np.mean(scores))


@dataclass
class RunSummary:
    """Curves are lists of (query_count, value) at each retraining milestone."""

    accuracy_curve: List[tuple]
    f1_curve: List[tuple]
    total_queries: int
    query_indicator: np.ndarray

    def __post_init__(self):
        self.query_indicator = np.asarray(self.query_indicator, dtype=int)


@dataclass
class Aggregate:
    query_counts: np.ndarray
    accuracy: dict  # median / q25 / q75 arrays
    f1: dict
    histogram: List[tuple]  # (bin lower edge, count)
    query_frequency: np.ndarray
    total_queries: np.ndarray = field(default_factory=lambda: np.zeros(0))


def align_curve(curve: Sequence[tuple], grid: np.ndarray) -> np.ndarray:
    """Value of a step curve at every grid point, carrying the last value forward.

    Grid points before the first milestone take the first value.
    """
    qs = np.array([c[0] for c in curve], dtype=float)
    vs = np.array([c[1] for c in curve], dtype=float)
    order = np.argsort(qs, kind="stable")
    qs, vs = qs[order], vs[order]
    pos = np.searchsorted(qs, grid, side="right") - 1
    return vs[np.clip(pos, 0, len(vs) - 1)]


def _bands(curves, grid):
    M = np.vstack([align_curve(c, grid) for c in curves])
    q25, med, q75 = np.percentile(M, [25, 50, 75], axis=0)
    return {"median": med, "q25": q25, "q75": q75}


def query_histogram(totals, bin_width: int = 10) -> List[tuple]:
    totals = np.asarray(totals, dtype=int)
    lo = (totals.min() // bin_width) * bin_width
    hi = (totals.max() // bin_width) * bin_width
    edges = np.arange(lo, hi + bin_width, bin_width)
    counts = [int(np.sum((totals >= e) & (totals < e + bin_width))) for e in edges]
    return list(zip(edges.tolist(), counts))


def aggregate_runs(summaries: Sequence[RunSummary], bin_width: int = 10) -> Aggregate:
    if not summaries:
        raise ValueError("need at least one run summary")
    lo = min(min(q for q, _ in s.accuracy_curve) for s in summaries)
    hi = max(max(q for q, _ in s.accuracy_curve) for s in summaries)
    grid = np.arange(lo, hi + 1)
    totals = np.array([s.total_queries for s in summaries])
    lengths = {s.query_indicator.shape[0] for s in summaries}
    if len(lengths) == 1:
        freq = np.mean([s.query_indicator for s in summaries], axis=0)
    else:
        # streams of different lengths: count over the runs covering each index
        n = max(lengths)
        padded = np.full((len(summaries), n), np.nan)
        for i, s in enumerate(summaries):
            padded[i, : s.query_indicator.shape[0]] = s.query_indicator
        freq = np.nanmean(padded, axis=0)
    return Aggregate(
        query_counts=grid,
        accuracy=_bands([s.accuracy_curve for s in summaries], grid),
        f1=_bands([s.f1_curve for s in summaries], grid),
        histogram=query_histogram(totals, bin_width),
        query_frequency=freq,
        total_queries=totals,
    )


def max_drawdown(values) -> float:
    """Largest drop below the running maximum."""
    v = np.asarray(values, dtype=float)
    return float(np.max(np.maximum.accumulate(v) - v)) if v.size else 0.0
