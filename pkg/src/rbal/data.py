"""Monitoring streams: a synthetic bridge-like generator and a CSV loader.

Labels follow the four health states: 1 normal, 2 cold (undamaged),
3 incipient damage, 4 advanced damage.  Observations after damage onset
are split into two halves, the earlier half incipient and the later half
advanced.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

N_CLASSES = 4


class StreamConfigError(ValueError):
    pass


class CsvParseError(ValueError):
    pass


@dataclass(frozen=True)
class MonitoringStream:
    features: np.ndarray  # (n, D), Hz
    labels: np.ndarray  # (n,), 1..4

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("features must be (n, D) with one label per row")
        if y.size and (y.min() < 1 or y.max() > N_CLASSES):
            raise ValueError(f"labels must lie in 1..{N_CLASSES}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def indices(self) -> np.ndarray:
        return np.arange(len(self))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES + 1)[1:]

    def subset(self, rows) -> "MonitoringStream":
        rows = np.asarray(rows)
        return MonitoringStream(self.features[rows], self.labels[rows])


_DEFAULT_MEANS = (
    (3.9, 5.0, 9.8, 10.3),
    (4.2, 5.3, 10.1, 10.6),
    (3.8, 4.9, 9.7, 10.2),
    (3.7, 4.8, 9.6, 10.1),
)
_SIGMA = 0.06


def _default_covs():
    base = np.eye(4) * _SIGMA**2
    return (base, 2.0 * base, base, base)


@dataclass(frozen=True)
class GeneratorConfig:
    total_count: int = 1000
    damage_start_fraction: float = 0.884
    cold_block: Tuple[float, float] = (0.30, 0.38)
    means: Tuple = _DEFAULT_MEANS
    covariances: Tuple = field(default_factory=_default_covs)
    seed: int = 0

    def segment_bounds(self):
        """Index boundaries (cold_start, cold_end, damage_start, split)."""
        n = int(self.total_count)
        damage = int(np.floor(self.damage_start_fraction * n))
        c0 = int(np.floor(self.cold_block[0] * n))
        c1 = int(np.floor(self.cold_block[1] * n))
        split = damage + (n - damage + 1) // 2
        return c0, c1, damage, split

    def class_counts(self) -> np.ndarray:
        c0, c1, damage, split = self.segment_bounds()
        n = int(self.total_count)
        return np.array([damage - (c1 - c0), c1 - c0, split - damage, n - split])

    def validate(self):
        if self.total_count < 1:
            raise StreamConfigError("total_count must be positive")
        if not 0 < self.damage_start_fraction < 1:
            raise StreamConfigError("damage_start_fraction must lie strictly between 0 and 1")
        lo, hi = self.cold_block
        if not 0 <= lo <= hi <= self.damage_start_fraction:
            raise StreamConfigError("cold block must lie inside the undamaged span")
        means = np.asarray(self.means, dtype=float)
        covs = np.asarray(self.covariances, dtype=float)
        if means.shape[0] != N_CLASSES or covs.shape != (N_CLASSES, means.shape[1], means.shape[1]):
            raise StreamConfigError("need one mean vector and one covariance per class")
        counts = self.class_counts()
        if np.any(counts <= 0):
            empty = [k + 1 for k in np.flatnonzero(counts <= 0)]
            raise StreamConfigError(f"configuration leaves class(es) {empty} with no observations")

    def to_dict(self) -> dict:
        return {
            "total_count": self.total_count,
            "damage_start_fraction": self.damage_start_fraction,
            "cold_block": list(self.cold_block),
            "means": np.asarray(self.means, dtype=float).tolist(),
            "covariances": np.asarray(self.covariances, dtype=float).tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorConfig":
        kw = dict(doc)
        if "cold_block" in kw:
            kw["cold_block"] = tuple(kw["cold_block"])
        if "means" in kw:
            kw["means"] = tuple(tuple(m) for m in kw["means"])
        if "covariances" in kw:
            kw["covariances"] = tuple(np.asarray(c, dtype=float) for c in kw["covariances"])
        return cls(**kw)


def labels_from_indices(n: int, damage_start_index: int, cold_ranges: Sequence[Tuple[int, int]] = ()) -> np.ndarray:
    """Label rows by position: cold ranges are half-open ``[start, end)``.

    An odd-length damage tail gives its extra row to the incipient class.
    """
    if not 0 <= damage_start_index <= n:
        raise StreamConfigError(f"damage start {damage_start_index} outside 0..{n}")
    labels = np.ones(n, dtype=int)
    for start, end in cold_ranges:
        if not 0 <= start <= end <= damage_start_index:
            raise StreamConfigError(f"cold range ({start}, {end}) must lie before damage onset")
        labels[start:end] = 2
    split = damage_start_index + (n - damage_start_index + 1) // 2
    labels[damage_start_index:split] = 3
    labels[split:] = 4
    return labels


def generate_z24_analog(config: GeneratorConfig = GeneratorConfig()) -> MonitoringStream:
    config.validate()
    n = int(config.total_count)
    c0, c1, damage, _ = config.segment_bounds()
    labels = labels_from_indices(n, damage, [(c0, c1)])
    means = np.asarray(config.means, dtype=float)
    covs = np.asarray(config.covariances, dtype=float)
    rng = np.random.default_rng(config.seed)
    X = np.empty((n, means.shape[1]))
    # draw in temporal order, one block of contiguous labels at a time
    start = 0
    while start < n:
        k = labels[start]
        end = start
        while end < n and labels[end] == k:
            end += 1
        X[start:end] = rng.multivariate_normal(means[k - 1], covs[k - 1], size=end - start)
        start = end
    return MonitoringStream(X, labels)


def read_feature_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(Path(path), newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise CsvParseError(f"row {lineno}: non-numeric cell ({exc})") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise CsvParseError(f"row {lineno}: expected {width} columns, found {len(values)}")
            rows.append(values)
    if not rows:
        raise CsvParseError("no data rows")
    X = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(X)):
        bad = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0]) + 1
        raise CsvParseError(f"row {bad}: non-finite value")
    return X


def load_feature_csv(path, damage_start_index: int, cold_ranges: Sequence[Tuple[int, int]] = ()) -> MonitoringStream:
    X = read_feature_csv(path)
    return MonitoringStream(X, labels_from_indices(X.shape[0], damage_start_index, cold_ranges))


def write_stream_csv(stream: MonitoringStream, path) -> None:
    """Features followed by the label column, fixed 6-decimal formatting."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for x, y in zip(stream.features, stream.labels):
            w.writerow([f"{v:.6f}" for v in x] + [int(y)])
