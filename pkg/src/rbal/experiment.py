"""Batch experiments: configuration, campaign fan-out, manifests and aggregates.

Output layout under the experiment's ``out`` directory::

    manifest.json
    records/<classifier>/run_<i>.csv    per-step campaign log
    curves/<classifier>/run_<i>.csv     metrics at every retraining milestone
    models/<classifier>/run_<i>.json    final classifier parameters
    aggregate/<classifier>_*.csv        written by ``aggregate``
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import decision as dc
from .campaign import CLASSIFIERS, CampaignConfig, run_campaign
from .data import (GeneratorConfig, MonitoringStream, generate_z24_analog, labels_from_indices,
                   read_feature_csv)
from .kernels import KernelSpec
from .metrics import RunSummary, aggregate_runs
from .mrvm import TrainConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    generator: Optional[GeneratorConfig] = field(default_factory=GeneratorConfig)
    csv: Optional[dict] = None
    decision_process: dc.DecisionProcess = field(default_factory=dc.z24_default)
    classifiers: List[str] = field(default_factory=lambda: list(CLASSIFIERS))
    runs: int = 50
    seed: int = 0
    out: str = "results"
    initial_labelled_count: int = 10
    kernel: Optional[KernelSpec] = None  # None: median heuristic
    train: TrainConfig = field(default_factory=lambda: TrainConfig(allow_single_class=True))
    workers: Optional[int] = None
    histogram_bin: int = 10

    def validate(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not self.classifiers:
            raise ConfigError("classifier list is empty")
        bad = [c for c in self.classifiers if c not in CLASSIFIERS]
        if bad:
            raise ConfigError(f"unknown classifier(s) {bad}; expected {list(CLASSIFIERS)}")
        if (self.generator is None) == (self.csv is None):
            raise ConfigError("give exactly one data source: 'generator' or 'csv'")
        if self.generator is not None:
            try:
                self.generator.validate()
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if self.initial_labelled_count < 1:
            raise ConfigError("initial_labelled_count must be >= 1")

    def to_dict(self) -> dict:
        doc = {
            "data": {"generator": self.generator.to_dict()} if self.generator else {"csv": self.csv},
            "decision_process": self.decision_process.to_dict(),
            "classifiers": list(self.classifiers),
            "runs": self.runs,
            "seed": self.seed,
            "out": self.out,
            "initial_labelled_count": self.initial_labelled_count,
            "kernel": self.kernel.to_dict() if self.kernel else {"kind": "rbf", "width": "median"},
            "train": self.train.to_dict(),
            "histogram_bin": self.histogram_bin,
        }
        return doc


def parse_experiment(doc: dict, renormalize: bool = False) -> ExperimentConfig:
    """Build an experiment from its JSON document; missing keys take defaults."""
    try:
        cfg = ExperimentConfig()
        data = doc.get("data", {"generator": {}})
        if "csv" in data:
            cfg.generator = None
            cfg.csv = dict(data["csv"])
            if "path" not in cfg.csv:
                raise ConfigError("csv data source needs a 'path'")
        else:
            cfg.generator = GeneratorConfig.from_dict(data.get("generator", {}))
        dp = doc.get("decision_process", "z24_default")
        if dp == "z24_default":
            cfg.decision_process = dc.z24_default()
        elif isinstance(dp, dict):
            cfg.decision_process = dc.DecisionProcess.from_dict(dp, renormalize=renormalize)
        else:
            raise ConfigError("decision_process must be 'z24_default' or an inline object")
        for key in ("classifiers", "runs", "seed", "out", "initial_labelled_count", "workers",
                    "histogram_bin"):
            if key in doc:
                setattr(cfg, key, doc[key])
        kern = doc.get("kernel")
        if kern is not None and kern.get("width", "median") != "median":
            cfg.kernel = KernelSpec.from_dict(kern)
        elif kern is not None and kern.get("kind", "rbf") != "rbf":
            raise ConfigError("the median width heuristic applies to rbf kernels only")
        if "train" in doc:
            cfg.train = TrainConfig(**{**cfg.train.to_dict(), **doc["train"]})
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid experiment configuration: {exc}") from exc
    cfg.validate()
    return cfg


def load_experiment(path, renormalize: bool = False) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_experiment(doc, renormalize=renormalize)


def stream_for_run(cfg: ExperimentConfig, seed: int) -> MonitoringStream:
    """Synthetic sources redraw the stream from the run seed; CSV sources are fixed."""
    if cfg.generator is not None:
        return generate_z24_analog(replace(cfg.generator, seed=seed))
    src = cfg.csv
    X = read_feature_csv(src["path"])
    if src.get("labelled", False):
        return MonitoringStream(X[:, :-1], X[:, -1].astype(int))
    cold = [tuple(r) for r in src.get("cold_ranges", [])]
    return MonitoringStream(X, labels_from_indices(X.shape[0], int(src["damage_start_index"]), cold))


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _run_one(cfg: ExperimentConfig, kind: str, run: int) -> dict:
    seed = cfg.seed + run
    rel = {
        "record": f"records/{kind}/run_{run:03d}.csv",
        "curves": f"curves/{kind}/run_{run:03d}.csv",
        "model": f"models/{kind}/run_{run:03d}.json",
    }
    entry = {"classifier": kind, "run": run, "seed": seed, **rel}
    try:
        stream = stream_for_run(cfg, seed)
        camp = CampaignConfig(
            classifier_kind=kind,
            initial_labelled_count=cfg.initial_labelled_count,
            decision_process=cfg.decision_process,
            train_config=replace(cfg.train, seed=seed),
            seed=seed,
            kernel=cfg.kernel,
        )
        record = run_campaign(stream, camp)
        out = Path(cfg.out)
        texts = {
            "record": record.to_csv(),
            "curves": record.curves_csv(),
            "model": json.dumps(record.final_model, sort_keys=True) + "\n",
        }
        for key, text in texts.items():
            path = out / rel[key]
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        entry.update(
            status="ok",
            sha256=_sha256(texts["record"]),
            total_queries=record.query_count,
            fallback_steps=int(record.fallback.sum()),
            terminal_accuracy=record.accuracy_curve[-1][1],
            terminal_f1=record.f1_curve[-1][1],
        )
    except Exception as exc:  # recorded in the manifest; the batch carries on
        log.exception("campaign %s run %d failed", kind, run)
        entry.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return entry


def _run_one_star(args):
    return _run_one(*args)


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> dict:
    """Run every (classifier, run) campaign and write the manifest."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, kind, run) for kind in cfg.classifiers for run in range(cfg.runs)]
    workers = workers or cfg.workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_run_one_star, jobs))
    else:
        entries = [_run_one(*job) for job in jobs]
    manifest = {
        "config": cfg.to_dict(),
        "runs": entries,
        "failed": sum(e["status"] != "ok" for e in entries),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest


def load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    with open(path, encoding="utf-8") as fh:
        return json.load(fh), path.parent


def _read_curves(path: Path):
    acc, f1 = [], []
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            q = int(row["query_count"])
            acc.append((q, float(row["decision_accuracy"])))
            f1.append((q, float(row["f1"])))
    return acc, f1


def _read_queried(path: Path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return np.array([int(row["queried"]) for row in csv.DictReader(fh)])


def summaries_by_classifier(manifest: dict, root: Path) -> dict:
    out = {}
    for e in manifest["runs"]:
        if e["status"] != "ok":
            continue
        acc, f1 = _read_curves(root / e["curves"])
        queried = _read_queried(root / e["record"])
        out.setdefault(e["classifier"], []).append(
            RunSummary(acc, f1, int(queried.sum()), queried)
        )
    return out


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_aggregates(manifest: dict, root: Path) -> dict:
    """Median/IQR curves, query histograms and per-observation frequencies."""
    bin_width = int(manifest.get("config", {}).get("histogram_bin", 10))
    aggs = {}
    agg_dir = root / "aggregate"
    agg_dir.mkdir(parents=True, exist_ok=True)
    for kind, sums in sorted(summaries_by_classifier(manifest, root).items()):
        agg = aggregate_runs(sums, bin_width=bin_width)
        aggs[kind] = agg
        for metric, bands in (("accuracy", agg.accuracy), ("f1", agg.f1)):
            rows = [
                [int(q), repr(float(m)), repr(float(lo)), repr(float(hi))]
                for q, m, lo, hi in zip(agg.query_counts, bands["median"], bands["q25"], bands["q75"])
            ]
            (agg_dir / f"{kind}_{metric}.csv").write_text(
                _csv_text(["query_count", "median", "q25", "q75"], rows), encoding="utf-8")
        (agg_dir / f"{kind}_histogram.csv").write_text(
            _csv_text(["bin", "count"], agg.histogram), encoding="utf-8")
        (agg_dir / f"{kind}_query_frequency.csv").write_text(
            _csv_text(["t", "frequency"], [[t, repr(float(f))] for t, f in enumerate(agg.query_frequency)]),
            encoding="utf-8")
    return aggs
