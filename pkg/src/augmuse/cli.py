"""Subcommand CLI for the whole evaluation workflow.

Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .audioio import AudioDecodeError
from .corpus import MetadataError, build_vocabulary, load_audio, load_splits, save_metadata, split_durations
from .emotionmap import MappingError, load_mapping, quadrant_durations, relabel, write_drop_report
from .metrics import MetricReport
from .pipeline.config import ConfigError, load_config

VALIDATION_ERRORS = (
    ConfigError,
    MetadataError,
    MappingError,
    AudioDecodeError,
    FileNotFoundError,
    NotADirectoryError,
    ValueError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _cmd_ingest(args) -> int:
    splits = load_splits(args.metadata_dir, args.stem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    all_records = []
    for split, records in splits.items():
        save_metadata(records, out / f"{args.stem}_{split}.tsv")
        all_records.extend(records)
    durations = split_durations(all_records)
    vocabulary = build_vocabulary(all_records)
    (out / "durations.json").write_text(json.dumps(durations, indent=2))
    (out / "vocabulary.json").write_text(json.dumps(list(vocabulary.classes), indent=2))
    print(f"{len(all_records)} tracks, {len(vocabulary)} classes")
    for split, hours in durations.items():
        print(f"  {split}: {hours:.2f} h")
    return 0


def _cmd_relabel(args) -> int:
    splits = load_splits(args.metadata_dir, args.stem)
    mapping = load_mapping(args.mapping)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dropped_all = []
    kept_all = []
    for split, records in splits.items():
        result = relabel(records, mapping, keep_multi_quadrant=args.keep_multi_quadrant)
        save_metadata(result.records, out / f"{args.stem}_{split}.tsv")
        dropped_all.extend(result.dropped)
        kept_all.extend(result.records)
    write_drop_report(dropped_all, out / "drop_report.jsonl")
    hours = quadrant_durations(kept_all)
    (out / "durations.json").write_text(json.dumps(hours, indent=2))
    from .pipeline.reports import save_durations

    save_durations(hours, out / "durations.png", out / "durations.csv")
    print(f"kept {len(kept_all)}, dropped {len(dropped_all)}")
    return 0


def _cmd_synth_corpus(args) -> int:
    from .pipeline.synthetic import make_synthetic_corpus

    info = make_synthetic_corpus(
        args.out, n_classes=args.classes, hours=args.hours, rate=args.rate, seed=args.seed, track_s=args.track_seconds
    )
    print(f"corpus at {args.out}; nearest-centroid accuracy {info.centroid_accuracy:.3f}")
    return 0


def _cmd_train_classifier(args) -> int:
    from . import classifier
    from .pipeline.experiments import load_task_sets

    cfg = load_config(args.config)
    sets = load_task_sets(cfg)
    from dataclasses import replace

    clf_cfg = replace(cfg.classifier, num_classes=len(sets.vocabulary), seed=cfg.seeds[0])
    model = classifier.train(sets.train, sets.validation, clf_cfg, cache_dir=cfg.cache_dir,
                             log_path=Path(args.out).with_suffix(".log.jsonl"))
    classifier.save_model(model, args.out)
    best = max(h["val_prauc_macro"] for h in model.training_history)
    print(f"checkpoint at {args.out}; best val macro PR-AUC {best:.3f}")
    return 0


def _cmd_train_generator(args) -> int:
    cfg = load_config(args.config)
    from .pipeline.experiments import load_task_sets

    sets = load_task_sets(cfg)
    rate = cfg.generator.profile.sample_rate_hz
    buffers = [load_audio(rec.audio_path, rate) for rec in sets.train.records]
    if args.kind == "hn":
        from .generators.harmonic import HNConfig, hn_train, save_hn_model

        hn_cfg = HNConfig(sample_rate_hz=rate, seed=cfg.seeds[0], epochs=args.epochs)
        model = hn_train(buffers, hn_cfg)
        save_hn_model(model, args.out)
        print(f"hn checkpoint at {args.out}; final loss {model.loss_history[-1]:.4f}")
    else:
        from .generators.tiered import TieredConfig, save_tiered_model, tiered_train

        t_cfg = TieredConfig(sample_rate_hz=rate, seed=cfg.seeds[0], epochs=args.epochs)
        model = tiered_train(buffers, t_cfg)
        save_tiered_model(model, args.out)
        print(f"tiered checkpoint at {args.out}; final loss {model.loss_history[-1]:.4f}")
    return 0


def _cmd_plan(args) -> int:
    from .augmentor import AugmentationPolicy, build_plan
    from .pipeline.experiments import load_task_sets

    cfg = load_config(args.config)
    sets = load_task_sets(cfg)
    policy = cfg.policy if args.fraction is None else AugmentationPolicy(args.fraction, seed=cfg.policy.seed)
    plan = build_plan(sets.train.records, sets.vocabulary, policy, cfg.generator.profile)
    plan.save(args.out)
    print(
        f"plan at {args.out}: {len(plan.entries)} samples, "
        f"{plan.total_duration_s / 3600.0:.2f} h total ({plan.per_class_duration_s:.0f} s/class)"
    )
    return 0


def _cmd_generate(args) -> int:
    from .augmentor import AugmentationPlan, execute_plan
    from .pipeline.experiments import build_generator, load_task_sets

    cfg = load_config(args.config)
    sets = load_task_sets(cfg)
    plan = AugmentationPlan.load(args.plan)
    generator = build_generator(cfg, sets.vocabulary)
    _, report = execute_plan(plan, generator, sets.train.records, sets.vocabulary, args.out)
    print(f"generated {report.generated} samples ({report.retried} retried, {len(report.shortfall)} failed)")
    return 0 if report.shortfall_fraction <= 0.5 else 2


def _cmd_baseline_run(args) -> int:
    from .pipeline.experiments import run_baseline

    cfg = load_config(args.config)
    report = run_baseline(cfg)
    print(f"baseline report at {cfg.output_dir / 'baseline' / 'report.json'}")
    for name, value in report.values().items():
        print(f"  {name}: {value:.4f}")
    return 0


def _cmd_augment_run(args) -> int:
    from .pipeline.experiments import build_generator, load_task_sets, run_augmented

    cfg = load_config(args.config)
    generator = build_generator(cfg, load_task_sets(cfg).vocabulary)
    report = run_augmented(cfg, generator)
    print(f"augmented report at {cfg.output_dir / ('augmented_' + generator.profile.name) / 'report.json'}")
    for name, value in report.values().items():
        print(f"  {name}: {value:.4f}")
    return 0


def _cmd_compare(args) -> int:
    from .pipeline.experiments import compare

    baseline = MetricReport.load(args.baseline)
    augmented = []
    for item in args.augmented:
        if "=" not in item:
            raise ValueError(f"--augmented expects NAME=path, got {item!r}")
        name, path = item.split("=", 1)
        augmented.append((name, MetricReport.load(path)))
    table = compare(baseline, augmented, mode=args.mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(table.to_csv())
    (out / "comparison.txt").write_text(table.to_text())
    print(table.to_text())
    return 0


def _cmd_classify_generated(args) -> int:
    from . import classifier
    from .generators.base import external_scan
    from .pipeline.experiments import classify_generated
    from .pipeline.reports import save_confusion

    model = classifier.load_model(args.checkpoint)
    samples = external_scan(args.samples_dir, model.vocabulary)
    cm, histogram = classify_generated(model, samples)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_confusion(cm, model.vocabulary.classes, out / "confusion.png", out / "confusion.csv")
    (out / "prediction_histogram.json").write_text(json.dumps(histogram, indent=2))
    diag = float(cm.normalized.diagonal().mean())
    print(f"confusion written to {out}; diagonal mean {diag:.3f}")
    return 0


def _cmd_report(args) -> int:
    from .pipeline.experiments import compare

    root = Path(args.run_dir)
    baseline_path = root / "baseline" / "report.json"
    if not baseline_path.is_file():
        raise FileNotFoundError(f"no baseline report under {root}")
    baseline = MetricReport.load(baseline_path)
    augmented = [
        (run.name.removeprefix("augmented_"), MetricReport.load(run / "report.json"))
        for run in sorted(root.glob("augmented_*"))
        if (run / "report.json").is_file()
    ]
    out = Path(args.out) if args.out else root
    if augmented:
        table = compare(baseline, augmented, mode=args.mode)
        (out / "comparison.csv").write_text(table.to_csv())
        (out / "comparison.txt").write_text(table.to_text())
        print(table.to_text())
    else:
        print("no augmented runs found; baseline only")
        for name, value in baseline.values().items():
            print(f"  {name}: {value:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="augmuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate metadata and write a normalized snapshot")
    p.add_argument("--metadata-dir", required=True)
    p.add_argument("--stem", default="tracks")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("relabel", help="map mood/theme tags to arousal/valence quadrants")
    p.add_argument("--metadata-dir", required=True)
    p.add_argument("--stem", default="tracks")
    p.add_argument("--mapping", required=True)
    p.add_argument("--keep-multi-quadrant", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_relabel)

    p = sub.add_parser("synth-corpus", help="write the synthetic oracle corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--hours", type=float, default=2.0)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--track-seconds", type=float, default=30.0)
    p.set_defaults(fn=_cmd_synth_corpus)

    p = sub.add_parser("train-classifier", help="train one tagger and save its checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train_classifier)

    p = sub.add_parser("train-generator", help="train a generator on the corpus train split")
    p.add_argument("--config", required=True)
    p.add_argument("--kind", choices=("hn", "tiered"), required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train_generator)

    p = sub.add_parser("plan", help="build the class-balanced augmentation plan")
    p.add_argument("--config", required=True)
    p.add_argument("--fraction", type=float, default=None, help="override policy budget fraction")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("generate", help="execute a plan and persist the samples")
    p.add_argument("--config", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_generate)

    p = sub.add_parser("baseline-run", help="train/evaluate on the unaugmented corpus")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_baseline_run)

    p = sub.add_parser("augment-run", help="plan, generate, train, evaluate")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_augment_run)

    p = sub.add_parser("compare", help="baseline vs augmented reports with highlights")
    p.add_argument("--baseline", required=True)
    p.add_argument("--augmented", nargs="+", required=True, metavar="NAME=path")
    p.add_argument("--mode", choices=("relative", "absolute"), default="relative")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("classify-generated", help="confusion matrix of generated samples")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_classify_generated)

    p = sub.add_parser("report", help="re-render comparison tables from a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--mode", choices=("relative", "absolute"), default="relative")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
