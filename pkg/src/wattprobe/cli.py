"""Command-line entry point.

Subcommands: generate (synthetic corpus), train (fit a model bundle),
detect (score runs against a bundle), evaluate (full metrics report).
Detect exits 0 when every run is clean, 2 when any run is flagged, and 1
on errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from wattprobe import __version__
from wattprobe.config import load_config
from wattprobe.pipeline import (
    DetectionReport,
    ModelBundle,
    PipelineConfig,
    detect_runs,
    evaluate_corpus,
    train_models,
    write_atomic,
)
from wattprobe.synth import generate_corpus, load_corpus_index
from wattprobe.trace import load_manifest

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFECTED = 2


def base_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "subset", None) is not None:
        updates["feature_subset"] = args.subset
    if getattr(args, "two_sided", False):
        updates["two_sided"] = True
    return dataclasses.replace(cfg, **updates) if updates else cfg


def cmd_generate(args):
    cfg = base_config(args)
    manifests = generate_corpus(
        args.out_dir,
        families=args.families,
        runs_per_family=args.runs_per_family,
        clean_runs=args.clean_runs,
        seed=cfg.seed,
        effect_scale=args.effect_scale,
        channels=args.channels,
    )
    n_clean = sum(m.label == "clean" for m in manifests)
    print(
        f"wrote {len(manifests)} runs ({n_clean} clean, {len(manifests) - n_clean} "
        f"infected) to {args.out_dir}"
    )
    return EXIT_OK


def cmd_train(args):
    cfg = base_config(args)
    bundle = train_models(args.corpus_dir, cfg)
    write_atomic(args.out, bundle.to_json())
    tasks = ", ".join(bundle.task_order)
    print(
        f"trained on {len(bundle.training_run_ids)} clean runs; tasks: {tasks}; "
        f"vote threshold {bundle.detector.vote_threshold_:.2f}; bundle -> {args.out}"
    )
    return EXIT_OK


def _load_targets(target):
    path = Path(target)
    if path.is_dir():
        return load_corpus_index(path), path
    return [load_manifest(path)], path.parent


def cmd_detect(args):
    bundle = ModelBundle.from_json(Path(args.bundle).read_text())
    manifests, corpus_dir = _load_targets(args.target)
    report = detect_runs(
        bundle,
        manifests,
        corpus_dir,
        feature_subset=args.subset,
        two_sided=True if args.two_sided else None,
    )
    if args.json:
        write_atomic(args.json, report.to_json())
    if args.zscore_csv:
        write_atomic(args.zscore_csv, report.zscore_csv())
    print(f"{'run':20s} {'votes':>5s} {'z':>6s} verdict")
    for run in report.runs:
        z = "-" if run["z_votes"] is None else f"{run['z_votes']:.2f}"
        print(f"{run['run_id']:20s} {run['total']:5d} {z:>6s} {run['verdict']}")
    return EXIT_INFECTED if report.any_infected else EXIT_OK


def cmd_evaluate(args):
    cfg = base_config(args)
    report = evaluate_corpus(args.corpus_dir, cfg, with_svm=not args.no_svm)
    if args.json:
        write_atomic(args.json, report.to_json())
    print(f"{'detector':28s} {'TPR':>6s} {'FDR':>6s}")
    print(f"{'ensemble':28s} {report.ensemble.tpr:6.3f} {report.ensemble.fdr:6.3f}")
    print(f"{'blind baseline':28s} {report.blind_tpr:6.3f} {report.blind_fdr:6.3f}")
    for task, metrics in sorted(report.task_metrics.items()):
        print(f"{'task ' + task:28s} {metrics.tpr:6.3f} {metrics.fdr:6.3f}")
    for name, metrics in sorted(report.feature_metrics.items()):
        print(f"{'feature ' + name:28s} {metrics.tpr:6.3f} {metrics.fdr:6.3f}")
    for kernel, metrics in sorted(report.svm_metrics.items()):
        print(f"{'svm ' + kernel:28s} {metrics.tpr:6.3f} {metrics.fdr:6.3f}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wattprobe",
        description="Baseline fixed-workload power profiles and flag anomalous runs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file; flags override it")
    common.add_argument("--seed", type=int, help="override the configured seed")

    detectish = argparse.ArgumentParser(add_help=False)
    detectish.add_argument(
        "--subset",
        choices=["all", "recommended"],
        help="feature subset: all features, or the four moments plus the baseline distance",
    )
    detectish.add_argument(
        "--two-sided",
        action="store_true",
        help="also flag runs with unusually few votes",
    )

    p = sub.add_parser("generate", parents=[common], help="write a synthetic labeled corpus")
    p.add_argument("out_dir")
    p.add_argument("--families", type=int, default=5)
    p.add_argument("--runs-per-family", type=int, default=3)
    p.add_argument("--clean-runs", type=int, default=15)
    p.add_argument("--effect-scale", type=float, default=1.0)
    p.add_argument("--channels", choices=["vi", "power"], default="vi")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common, detectish], help="fit a model bundle")
    p.add_argument("corpus_dir")
    p.add_argument("-o", "--out", default="bundle.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "detect", parents=[common, detectish], help="score runs against a bundle"
    )
    p.add_argument("bundle")
    p.add_argument("target", help="corpus directory or a single run manifest")
    p.add_argument("--json", help="write the detection report JSON here")
    p.add_argument("--zscore-csv", help="write the runs-by-features z-score table here")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", parents=[common, detectish], help="full metrics report")
    p.add_argument("corpus_dir")
    p.add_argument("--json", help="write the evaluation report JSON here")
    p.add_argument("--no-svm", action="store_true", help="skip the supervised harness")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
