"""Risk-based active learning over a monitoring stream.

Each incoming observation gets a belief from the current classifier.  When
the value of perfect information about its health state exceeds the
inspection cost the state is inspected (its label revealed), the decision is
taken with the revealed state, and the classifier is retrained on the
enlarged labelled set.  Otherwise the decision is taken with the belief.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import decision as dc
from .data import N_CLASSES, MonitoringStream
from .gmm import NiwPrior, gmm_fit, gmm_predict_proba
from .kernels import KernelSpec, Standardizer, median_heuristic
from .metrics import RunSummary, macro_f1
from .mrvm import TrainConfig, TrainingError, predict_proba, train

log = logging.getLogger(__name__)

CLASSIFIERS = ("gmm", "mrvm1", "mrvm2")


class GmmClassifier:
    name = "gmm"

    def __init__(self, class_count: int = N_CLASSES):
        self.class_count = class_count
        self.prior = None

    def setup(self, X0):
        self.prior = NiwPrior.from_data(X0)

    def fit(self, X, y):
        return gmm_fit(X, y, self.prior, self.class_count)

    def predict(self, model, X):
        return gmm_predict_proba(model, X)


class MrvmClassifier:
    """Standardization and RBF width are fixed once from the seed set."""

    def __init__(self, config: TrainConfig, class_count: int = N_CLASSES,
                 kernel: Optional[KernelSpec] = None, fallback_on_nonconvergence: bool = False):
        self.config = config
        self.class_count = class_count
        self.name = f"mrvm{config.variant}"
        self.fixed_kernel = kernel
        self.kernel = kernel
        self.fallback_on_nonconvergence = fallback_on_nonconvergence
        self.standardizer = None

    def setup(self, X0):
        self.standardizer = Standardizer.fit(X0)
        if self.fixed_kernel is None:
            width = median_heuristic(self.standardizer.transform(X0))
            self.kernel = KernelSpec("rbf", width=width)

    def fit(self, X, y):
        model = train(X, y, self.config, class_count=self.class_count,
                      kernel=self.kernel, standardizer=self.standardizer)
        if self.fallback_on_nonconvergence and not model.converged:
            raise TrainingError(f"{self.name} did not converge in {model.iterations} iterations")
        return model

    def predict(self, model, X):
        return predict_proba(model, X)


def make_classifier(kind: str, train_config: Optional[TrainConfig] = None, kernel=None,
                    fallback_on_nonconvergence: bool = False):
    if kind == "gmm":
        return GmmClassifier()
    if kind in ("mrvm1", "mrvm2"):
        base = train_config or TrainConfig()
        cfg = TrainConfig(**{**base.to_dict(), "variant": int(kind[-1])})
        return MrvmClassifier(cfg, kernel=kernel, fallback_on_nonconvergence=fallback_on_nonconvergence)
    raise ValueError(f"unknown classifier {kind!r}; expected one of {CLASSIFIERS}")


@dataclass
class CampaignConfig:
    classifier_kind: str = "mrvm2"
    initial_labelled_count: int = 10
    decision_process: dc.DecisionProcess = field(default_factory=dc.z24_default)
    train_config: TrainConfig = field(default_factory=lambda: TrainConfig(allow_single_class=True))
    seed: int = 0
    kernel: Optional[KernelSpec] = None
    fallback_on_nonconvergence: bool = False

    def __post_init__(self):
        if self.initial_labelled_count < 1:
            raise ValueError("initial_labelled_count must be >= 1")
        if self.classifier_kind not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier_kind!r}")


@dataclass
class RunRecord:
    """Per-step log of one campaign.

    Seed-set rows (the first ``initial_labelled_count`` steps) are queried
    unconditionally; their EVPI is NaN and their belief is the revealed
    one-hot state.
    """

    beliefs: np.ndarray
    evpi: np.ndarray
    queried: np.ndarray
    actions: np.ndarray
    oracle_actions: np.ndarray
    pred_labels: np.ndarray
    true_labels: np.ndarray
    fallback: np.ndarray
    initial_labelled_count: int
    accuracy_curve: List[tuple] = field(default_factory=list)
    f1_curve: List[tuple] = field(default_factory=list)
    final_model: Optional[dict] = None
    classifier_kind: str = ""

    @property
    def query_count(self) -> int:
        return int(self.queried.sum())

    @property
    def labelled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.queried)

    def summary(self) -> RunSummary:
        return RunSummary(list(self.accuracy_curve), list(self.f1_curve), self.query_count,
                          self.queried.astype(int))

    def to_csv(self) -> str:
        K = self.beliefs.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"belief_{k + 1}" for k in range(K)]
                   + ["evpi", "queried", "action", "oracle_action", "pred_label", "true_label"])
        for t in range(self.beliefs.shape[0]):
            w.writerow(
                [t]
                + [repr(float(p)) for p in self.beliefs[t]]
                + [repr(float(self.evpi[t])), int(self.queried[t]), int(self.actions[t]),
                   int(self.oracle_actions[t]), int(self.pred_labels[t]), int(self.true_labels[t])]
            )
        return buf.getvalue()

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["query_count", "decision_accuracy", "f1"])
        for (q, a), (_, f) in zip(self.accuracy_curve, self.f1_curve):
            w.writerow([q, repr(float(a)), repr(float(f))])
        return buf.getvalue()


def read_record_csv(text: str) -> dict:
    """Parse a record CSV into column arrays."""
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    cols = {h: [r[i] for r in body] for i, h in enumerate(header)}
    out = {}
    for h, v in cols.items():
        out[h] = np.array(v, dtype=float if h.startswith("belief") or h == "evpi" else int)
    return out


def oracle_actions(labels, dp: dc.DecisionProcess) -> np.ndarray:
    """Best action for every state when the state is known."""
    best = np.argmax(dc.state_action_values(dp), axis=1)
    return best[np.asarray(labels) - 1]


def _beliefs(clf, model, X, K):
    if model is None:
        return np.full((X.shape[0], K), 1.0 / K)
    return clf.predict(model, X)


def run_campaign(stream: MonitoringStream, config: CampaignConfig, classifier=None) -> RunRecord:
    """Stream the observations once, querying and retraining as EVPI dictates."""
    n = len(stream)
    n0 = config.initial_labelled_count
    if n == 0:
        raise ValueError("empty stream")
    if n0 >= n:
        raise ValueError("initial_labelled_count must be smaller than the stream length")
    dp = config.decision_process
    K = dp.n_states
    X, y = stream.features, stream.labels
    clf = classifier or make_classifier(config.classifier_kind, config.train_config, config.kernel,
                                        config.fallback_on_nonconvergence)
    clf.setup(X[:n0])

    labelled = list(range(n0))
    oracle = oracle_actions(y, dp)

    def refit():
        try:
            return clf.fit(X[labelled], y[labelled])
        except TrainingError as exc:
            log.debug("training failed with %d labels: %s", len(labelled), exc)
            return None

    model = refit()
    B = _beliefs(clf, model, X, K)
    acc_curve = []
    f1_curve = []

    def milestone():
        acc = float(np.mean(dc.decide_batch(B, dp) == oracle))
        f1 = macro_f1(np.argmax(B, axis=1) + 1, y, K)
        acc_curve.append((len(labelled), acc))
        f1_curve.append((len(labelled), f1))

    milestone()

    beliefs = np.zeros((n, K))
    evpis = np.full(n, np.nan)
    queried = np.zeros(n, dtype=bool)
    actions = np.zeros(n, dtype=int)
    preds = np.zeros(n, dtype=int)
    fallback = np.zeros(n, dtype=bool)

    beliefs[np.arange(n0), y[:n0] - 1] = 1.0
    queried[:n0] = True
    actions[:n0] = oracle[:n0]
    preds[:n0] = y[:n0]

    for t in range(n0, n):
        b = B[t]
        e = dc.evpi(b, dp)
        beliefs[t] = b
        evpis[t] = e
        preds[t] = int(np.argmax(b)) + 1
        fallback[t] = model is None
        if dc.should_query(e, dp):
            queried[t] = True
            actions[t] = oracle[t]
            labelled.append(t)
            model = refit()
            B = _beliefs(clf, model, X, K)
            milestone()
        else:
            actions[t] = dc.meu(b, dp)[0]

    return RunRecord(
        beliefs=beliefs,
        evpi=evpis,
        queried=queried,
        actions=actions,
        oracle_actions=oracle,
        pred_labels=preds,
        true_labels=y.copy(),
        fallback=fallback,
        initial_labelled_count=n0,
        accuracy_curve=acc_curve,
        f1_curve=f1_curve,
        final_model=None if model is None else model.to_dict(),
        classifier_kind=config.classifier_kind,
    )


def decide(belief, dp: dc.DecisionProcess) -> int:
    return dc.meu(belief, dp)[0]
