"""Command-line driver.

Subcommands::

    rbal generate   [--config C] [--out stream.csv] [--seed N]
    rbal run        [--config C] [--out DIR] [--runs N] [--seed N] [--classifier K ...] [--workers N]
    rbal aggregate  [--out DIR]
    rbal plot       [--out DIR]
    rbal demo-evpi  B1 B2 B3 B4 [--config C]

Flags given on the command line override the matching config fields.
Exit status is 0 on success, 1 for configuration errors and 2 when some
campaigns of a batch failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import decision as dc
from .data import generate_z24_analog, write_stream_csv
from .experiment import (ConfigError, ExperimentConfig, load_experiment, load_manifest,
                         parse_experiment, run_experiment, write_aggregates)
from .svgplot import histogram_figure, performance_figure, query_frequency_figure

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("rbal")


def _experiment(args) -> ExperimentConfig:
    if args.config:
        cfg = load_experiment(args.config, renormalize=args.renormalize)
    else:
        cfg = parse_experiment({}, renormalize=args.renormalize)
    if getattr(args, "runs", None) is not None:
        cfg.runs = args.runs
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "classifier", None):
        cfg.classifiers = list(args.classifier)
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "out", None) is not None and args.command == "run":
        cfg.out = args.out
    cfg.validate()
    return cfg


def cmd_generate(args) -> int:
    cfg = _experiment(args)
    if cfg.generator is None:
        raise ConfigError("generate needs a generator data source")
    gen = cfg.generator if args.seed is None else replace(cfg.generator, seed=args.seed)
    stream = generate_z24_analog(gen)
    out = Path(args.out or "stream.csv")
    try:
        if out.parent != Path(""):
            out.parent.mkdir(parents=True, exist_ok=True)
        write_stream_csv(stream, out)
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from exc
    counts = stream.class_counts()
    print(f"wrote {len(stream)} rows to {out}")
    for k, c in enumerate(counts, start=1):
        print(f"class {k}: {int(c)}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _experiment(args)
    manifest = run_experiment(cfg, workers=cfg.workers)
    ok = len(manifest["runs"]) - manifest["failed"]
    print(f"{ok}/{len(manifest['runs'])} campaigns succeeded; manifest at {Path(cfg.out) / 'manifest.json'}")
    for kind in cfg.classifiers:
        q = [e["total_queries"] for e in manifest["runs"] if e["classifier"] == kind and e["status"] == "ok"]
        if q:
            print(f"{kind}: median queries {np.median(q):g}")
    return EXIT_PARTIAL if manifest["failed"] else EXIT_OK


def _load(args):
    root = Path(args.out or "results")
    try:
        manifest, root = load_manifest(root)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest under {args.out or 'results'}: {exc}") from exc
    if not any(e.get("status") == "ok" for e in manifest.get("runs", [])):
        raise ConfigError("manifest lists no successful runs")
    return manifest, root


def cmd_aggregate(args) -> int:
    manifest, root = _load(args)
    aggs = write_aggregates(manifest, root)
    for kind, agg in aggs.items():
        print(f"{kind}: {agg.total_queries.size} runs, median queries {np.median(agg.total_queries):g}, "
              f"terminal median accuracy {agg.accuracy['median'][-1]:.4f}")
    return EXIT_PARTIAL if manifest.get("failed") else EXIT_OK


def cmd_plot(args) -> int:
    manifest, root = _load(args)
    aggs = write_aggregates(manifest, root)
    fig_dir = root / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    bin_width = int(manifest.get("config", {}).get("histogram_bin", 10))
    figures = {
        "performance.svg": performance_figure(aggs),
        "query_histogram.svg": histogram_figure(aggs, bin_width),
        "query_frequency.svg": query_frequency_figure(aggs),
    }
    for name, text in figures.items():
        (fig_dir / name).write_text(text, encoding="utf-8")
        print(fig_dir / name)
    return EXIT_PARTIAL if manifest.get("failed") else EXIT_OK


def evpi_report(belief, dp: dc.DecisionProcess) -> str:
    b = np.asarray(belief, dtype=float)
    if b.shape != (dp.n_states,):
        raise ConfigError(f"belief needs {dp.n_states} entries, got {b.size}")
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise ConfigError("belief entries must be finite and non-negative")
    if b.sum() <= 0:
        raise ConfigError("belief must have positive mass")
    b = b / b.sum()
    eu = dc.expected_utilities(b, dp)
    best, best_value = dc.meu(b, dp)
    perfect = dc.meu_perfect_info(b, dp)
    value = dc.evpi(b, dp)
    names = {dc.DO_NOTHING: "do nothing", dc.REPAIR: "repair"}
    lines = ["belief: " + " ".join(f"{p:.6g}" for p in b)]
    for d, u in enumerate(eu):
        lines.append(f"EU[{names.get(d, f'action {d}')}]: {u:.6f}")
    lines += [
        f"MEU: {best_value:.6f} ({names.get(best, f'action {best}')})",
        f"MEU with perfect information: {perfect:.6f}",
        f"EVPI: {value:.6f}",
        f"inspection cost: {dp.inspection_cost:g}",
        f"verdict: {'query' if dc.should_query(value, dp) else 'no query'}",
    ]
    return "\n".join(lines)


def cmd_demo_evpi(args) -> int:
    dp = _experiment(args).decision_process if args.config else dc.z24_default()
    print(evpi_report(args.belief, dp))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment JSON file")
    common.add_argument("--renormalize", action="store_true",
                        help="rescale table rows that sum to within 0.05 of one")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rbal", description="Risk-based active learning experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic monitoring stream")
    p.add_argument("--out", help="output CSV path (default stream.csv)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", parents=[common], help="run campaign batches")
    p.add_argument("--out", help="output directory")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int, help="base seed; run i uses seed + i")
    p.add_argument("--classifier", action="append", choices=["gmm", "mrvm1", "mrvm2"],
                   help="repeat to run several kinds")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    for name, func, text in (("aggregate", cmd_aggregate, "write median/IQR CSVs"),
                             ("plot", cmd_plot, "write SVG figures")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--out", help="experiment output directory (default results)")
        p.set_defaults(func=func)

    p = sub.add_parser("demo-evpi", parents=[common], help="print the EVPI report for one belief")
    p.add_argument("belief", type=float, nargs=4, metavar="B")
    p.set_defaults(func=cmd_demo_evpi)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, dc.DecisionProcessError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
