"""Kernel functions, Gram matrices and feature standardization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

KINDS = ("rbf", "linear", "polynomial")


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    width: float = 1.0
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if not self.width > 0:
            raise ValueError("kernel width must be positive")
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError("polynomial degree must be an integer >= 1")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "width": self.width, "degree": self.degree, "offset": self.offset}

    @classmethod
    def from_dict(cls, doc: dict) -> "KernelSpec":
        return cls(
            kind=doc.get("kind", "rbf"),
            width=float(doc.get("width", 1.0)),
            degree=int(doc.get("degree", 2)),
            offset=float(doc.get("offset", 1.0)),
        )


def _as_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got {X.ndim}-D")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite entries")
    return X


def kernel_eval(spec: KernelSpec, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(gram(spec, a[None, :], b[None, :])[0, 0])


def gram(spec: KernelSpec, rows, cols) -> np.ndarray:
    """Matrix of kernel values between every row of ``rows`` and of ``cols``."""
    R = _as_rows(rows)
    C = _as_rows(cols)
    if R.shape[1] != C.shape[1]:
        raise ValueError(f"dimension mismatch: {R.shape[1]} vs {C.shape[1]} features")
    if spec.kind == "rbf":
        d2 = cdist(R, C, "sqeuclidean")
        return np.exp(-d2 / (2.0 * spec.width**2))
    inner = R @ C.T
    if spec.kind == "linear":
        return inner
    return (inner + spec.offset) ** spec.degree


def median_heuristic(X) -> float:
    """Median pairwise Euclidean distance; falls back to 1.0 when degenerate."""
    X = _as_rows(X)
    if X.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(X)))
    return med if med > 0 else 1.0


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension z-score fixed at construction."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = _as_rows(X)
        scale = X.std(axis=0)
        # constant columns (e.g. a single sample) keep unit scale
        scale = np.where(scale > 0, scale, 1.0)
        return cls(X.mean(axis=0), scale)

    def transform(self, X) -> np.ndarray:
        return (_as_rows(X) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": np.asarray(self.mean).tolist(), "scale": np.asarray(self.scale).tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Standardizer":
        return cls(np.asarray(doc["mean"], dtype=float), np.asarray(doc["scale"], dtype=float))
