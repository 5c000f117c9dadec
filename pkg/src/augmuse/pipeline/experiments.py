"""Experiment orchestration: baseline runs, augmented runs, comparisons.

Every run owns its output directory (lock file), snapshots its resolved
config, and persists per-trial artifacts (plans, manifests, checkpoints,
reports) so any result can be re-derived from disk alone.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import classifier, metrics
from ..augmentor import AugmentationPolicy, build_plan, execute_plan
from ..classifier import LabeledSet, TrainedModel
from ..corpus import LabelVocabulary, build_vocabulary, load_splits
from ..emotionmap import load_mapping, relabel
from ..generators.base import GeneratedSample, Generator
from ..metrics import ConfusionMatrix, MetricReport
from .config import ExperimentConfig
from .synthetic import CorpusInfo, noise_generator, synthetic_generator_for


@dataclass(frozen=True)
class TaskSets:
    train: LabeledSet
    validation: LabeledSet
    test: LabeledSet
    vocabulary: LabelVocabulary
    dropped: dict[str, int]


def load_task_sets(cfg: ExperimentConfig) -> TaskSets:
    """Corpus splits under the configured label task."""
    splits = load_splits(cfg.metadata_dir, cfg.metadata_stem)
    for needed in ("train", "validation", "test"):
        if needed not in splits:
            raise FileNotFoundError(f"missing {cfg.metadata_stem}_{needed}.tsv under {cfg.metadata_dir}")
    dropped: dict[str, int] = {}
    if cfg.label_task == "emotional":
        mapping = load_mapping(cfg.mapping_path)
        relabelled = {}
        for split, records in splits.items():
            result = relabel(records, mapping, keep_multi_quadrant=cfg.keep_multi_quadrant)
            relabelled[split] = list(result.records)
            dropped[split] = len(result.dropped)
            vocabulary = result.vocabulary
        splits = relabelled
    else:
        vocabulary = build_vocabulary([rec for records in splits.values() for rec in records])
    return TaskSets(
        train=LabeledSet.from_records(splits["train"], vocabulary),
        validation=LabeledSet.from_records(splits["validation"], vocabulary),
        test=LabeledSet.from_records(splits["test"], vocabulary),
        vocabulary=vocabulary,
        dropped=dropped,
    )


@contextmanager
def _run_lock(run_dir: Path):
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / ".lock"
    try:
        lock.touch(exist_ok=False)
    except FileExistsError:
        raise RuntimeError(f"run directory {run_dir} is locked by another run (remove {lock} if stale)") from None
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _eval_checksum(sets: TaskSets) -> str:
    """Fingerprint of the validation+test material an augmentation must not touch."""
    digest = hashlib.sha256()
    for labeled in (sets.validation, sets.test):
        for rec in labeled.records:
            stat = Path(rec.audio_path).stat() if Path(rec.audio_path).is_file() else None
            digest.update(
                f"{rec.track_id}|{rec.audio_path}|{rec.duration_s!r}|{sorted(rec.tags)}|"
                f"{stat.st_size if stat else 'missing'}\n".encode()
            )
    return digest.hexdigest()


def evaluate_model(
    model: TrainedModel, val_set: LabeledSet, test_set: LabeledSet, cache_dir: Path | None
) -> MetricReport:
    """Validation-tuned thresholds, then the six-number report on test."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val_scores = classifier.predict(model, val_set.records, cache_dir)
        thresholds = metrics.select_thresholds(val_scores.scores, val_set.labels)
        test_scores = classifier.predict(model, test_set.records, cache_dir)
        return metrics.metric_report(test_scores.scores, test_set.labels, thresholds)


def average_reports(reports: Sequence[MetricReport]) -> MetricReport:
    """Element-wise arithmetic mean across trials; identity for one trial."""
    if not reports:
        raise ValueError("no reports to average")
    first = reports[0]
    excluded: dict[str, tuple[int, ...]] = {}
    for rep in reports:
        for key, classes in rep.excluded.items():
            excluded[key] = tuple(sorted(set(excluded.get(key, ())) | set(classes)))
    return MetricReport(
        **{name: float(np.mean([getattr(r, name) for r in reports])) for name in MetricReport.METRIC_FIELDS},
        thresholds=tuple(np.mean([r.thresholds for r in reports], axis=0).tolist()),
        n_tracks=first.n_tracks,
        n_classes=first.n_classes,
        excluded=excluded,
    )


def _classifier_config(cfg: ExperimentConfig, n_classes: int, seed: int) -> classifier.ClassifierConfig:
    return replace(cfg.classifier, num_classes=n_classes, seed=seed)


def run_baseline(cfg: ExperimentConfig, run_name: str = "baseline") -> MetricReport:
    """One classifier per seed on the unaugmented train split, reports averaged."""
    sets = load_task_sets(cfg)
    run_dir = cfg.output_dir / run_name
    with _run_lock(run_dir):
        cfg.snapshot(run_dir / "config.json")
        (run_dir / "checksums.json").write_text(json.dumps({"eval_material": _eval_checksum(sets)}, indent=2))
        reports = []
        for trial, seed in enumerate(cfg.seeds):
            trial_dir = run_dir / f"trial_{seed}"
            trial_dir.mkdir(parents=True, exist_ok=True)
            try:
                model = classifier.train(
                    sets.train,
                    sets.validation,
                    _classifier_config(cfg, len(sets.vocabulary), seed),
                    cache_dir=cfg.cache_dir,
                    log_path=trial_dir / "train_log.jsonl",
                )
            except Exception as exc:
                raise RuntimeError(f"baseline trial {trial} (seed {seed}) failed: {exc}") from exc
            classifier.save_model(model, trial_dir / "checkpoint.pt")
            report = evaluate_model(model, sets.validation, sets.test, cfg.cache_dir)
            report.save(trial_dir / "report.json")
            reports.append(report)
        averaged = average_reports(reports)
        averaged.save(run_dir / "report.json")
    return averaged


def run_augmented(cfg: ExperimentConfig, generator: Generator, run_name: str | None = None) -> MetricReport:
    """Per trial: plan -> generate -> train on the enlarged set -> evaluate.

    Validation and test material is checksummed before and after; a plan
    shortfall above 50% aborts the experiment as incomparable.
    """
    sets = load_task_sets(cfg)
    run_name = run_name or f"augmented_{generator.profile.name}"
    run_dir = cfg.output_dir / run_name
    with _run_lock(run_dir):
        cfg.snapshot(run_dir / "config.json")
        checksum_before = _eval_checksum(sets)
        (run_dir / "checksums.json").write_text(json.dumps({"eval_material": checksum_before}, indent=2))
        reports = []
        for trial, seed in enumerate(cfg.seeds):
            trial_dir = run_dir / f"trial_{seed}"
            trial_dir.mkdir(parents=True, exist_ok=True)
            policy = AugmentationPolicy(budget_fraction=cfg.policy.budget_fraction, seed=seed)
            plan = build_plan(sets.train.records, sets.vocabulary, policy, generator.profile)
            plan.save(trial_dir / "plan.json")
            augmented_records, exec_report = execute_plan(
                plan, generator, sets.train.records, sets.vocabulary, trial_dir / "samples"
            )
            (trial_dir / "shortfall.json").write_text(
                json.dumps(
                    {
                        "generated": exec_report.generated,
                        "retried": exec_report.retried,
                        "shortfall": [e.source_track_id for e in exec_report.shortfall],
                        "fraction": exec_report.shortfall_fraction,
                    },
                    indent=2,
                )
            )
            if exec_report.shortfall_fraction > 0.5:
                raise RuntimeError(
                    f"trial {trial}: {exec_report.shortfall_fraction:.0%} of the plan failed; "
                    "experiment is no longer comparable"
                )
            augmented_set = LabeledSet.from_records(augmented_records, sets.vocabulary)
            try:
                model = classifier.train(
                    augmented_set,
                    sets.validation,
                    _classifier_config(cfg, len(sets.vocabulary), seed),
                    cache_dir=cfg.cache_dir,
                    log_path=trial_dir / "train_log.jsonl",
                )
            except Exception as exc:
                raise RuntimeError(f"augmented trial {trial} (seed {seed}) failed: {exc}") from exc
            classifier.save_model(model, trial_dir / "checkpoint.pt")
            report = evaluate_model(model, sets.validation, sets.test, cfg.cache_dir)
            report.save(trial_dir / "report.json")
            reports.append(report)
        if _eval_checksum(load_task_sets(cfg)) != checksum_before:
            raise RuntimeError("validation/test material changed during the augmentation run")
        averaged = average_reports(reports)
        averaged.save(run_dir / "report.json")
    return averaged


@dataclass(frozen=True)
class ComparisonEntry:
    method: str
    metric: str
    baseline: float
    augmented: float
    delta_absolute: float
    delta_relative: float
    highlighted: bool


@dataclass(frozen=True)
class ComparisonTable:
    entries: tuple[ComparisonEntry, ...]
    mode: str  # 'relative' or 'absolute' highlight threshold

    def to_csv(self) -> str:
        """Wide layout mirroring the results table: one method per row."""
        lines = ["method," + ",".join(MetricReport.METRIC_FIELDS) + ",highlighted"]
        by_method: dict[str, dict[str, ComparisonEntry]] = {}
        for e in self.entries:
            by_method.setdefault(e.method, {})[e.metric] = e
        baseline_row = next(iter(by_method.values()))
        lines.append(
            "baseline,"
            + ",".join(f"{baseline_row[m].baseline:.6f}" for m in MetricReport.METRIC_FIELDS)
            + ","
        )
        for method, row in by_method.items():
            highlights = ";".join(m for m in MetricReport.METRIC_FIELDS if row[m].highlighted)
            lines.append(
                f"{method},"
                + ",".join(f"{row[m].augmented:.6f}" for m in MetricReport.METRIC_FIELDS)
                + f",{highlights}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        """Annotated table; '*' marks cells at or above the highlight threshold."""
        width = 16
        header = "method".ljust(width) + "".join(m.rjust(width) for m in MetricReport.METRIC_FIELDS)
        by_method: dict[str, dict[str, ComparisonEntry]] = {}
        for e in self.entries:
            by_method.setdefault(e.method, {})[e.metric] = e
        first = next(iter(by_method.values()))
        rows = [header, "baseline".ljust(width) + "".join(f"{first[m].baseline:.4f}".rjust(width) for m in MetricReport.METRIC_FIELDS)]
        for method, row in by_method.items():
            cells = []
            for m in MetricReport.METRIC_FIELDS:
                mark = "*" if row[m].highlighted else ""
                cells.append(f"{row[m].augmented:.4f}{mark}".rjust(width))
            rows.append(method.ljust(width) + "".join(cells))
        return "\n".join(rows) + "\n"


def compare(
    baseline: MetricReport,
    augmented: Sequence[tuple[str, MetricReport]],
    mode: str = "relative",
    threshold: float = 0.01,
) -> ComparisonTable:
    """Deltas per metric with highlight flags for improvements >= threshold."""
    if mode not in ("relative", "absolute"):
        raise ValueError("mode must be 'relative' or 'absolute'")
    entries = []
    for name, report in augmented:
        if report.n_classes != baseline.n_classes:
            raise ValueError(f"report {name!r} has {report.n_classes} classes, baseline {baseline.n_classes}")
        for metric_name in MetricReport.METRIC_FIELDS:
            base = getattr(baseline, metric_name)
            aug = getattr(report, metric_name)
            delta_abs = aug - base
            delta_rel = delta_abs / base if base > 0 else float("inf") * np.sign(delta_abs) if delta_abs else 0.0
            highlighted = (delta_rel if mode == "relative" else delta_abs) >= threshold
            entries.append(
                ComparisonEntry(
                    method=name,
                    metric=metric_name,
                    baseline=base,
                    augmented=aug,
                    delta_absolute=delta_abs,
                    delta_relative=delta_rel,
                    highlighted=highlighted,
                )
            )
    return ComparisonTable(entries=tuple(entries), mode=mode)


def classify_generated(
    model: TrainedModel, samples: Sequence[GeneratedSample]
) -> tuple[ConfusionMatrix, dict[str, int]]:
    """Argmax-classify generated audio against its inherited labels."""
    if not samples:
        raise ValueError("no generated samples to classify")
    scores = classifier.predict(model, [s.audio for s in samples])
    predicted = scores.scores.argmax(axis=1)
    true = np.array([s.inherited_label for s in samples])
    cm = metrics.confusion(predicted, true, len(model.vocabulary))
    histogram = {
        model.vocabulary.classes[i]: int(count)
        for i, count in enumerate(np.bincount(predicted, minlength=len(model.vocabulary)))
    }
    return cm, histogram


def build_generator(cfg: ExperimentConfig, vocabulary: LabelVocabulary | None = None) -> Generator:
    """Instantiate the configured generator (trained models load from disk)."""
    spec = cfg.generator
    if spec.kind == "matched_synthetic":
        info = CorpusInfo.load(cfg.metadata_dir)
        return synthetic_generator_for(info, spec.profile.sample_length_s)
    if spec.kind == "white_noise":
        return noise_generator(spec.profile.sample_rate_hz, spec.profile.sample_length_s, spec.noise_amplitude)
    if spec.kind == "hn":
        from ..generators.harmonic import HNGenerator, load_hn_model

        if spec.model_path is None:
            raise ValueError("generator.model_path is required for kind 'hn'")
        return HNGenerator(profile=spec.profile, model=load_hn_model(spec.model_path))
    if spec.kind == "tiered":
        from ..generators.tiered import TieredGenerator, load_tiered_model

        if spec.model_path is None:
            raise ValueError("generator.model_path is required for kind 'tiered'")
        return TieredGenerator(profile=spec.profile, model=load_tiered_model(spec.model_path), temperature=spec.temperature)
    if spec.kind == "external":
        from .external_pool import ExternalPoolGenerator

        if spec.external_dir is None:
            raise ValueError("generator.external_dir is required for kind 'external'")
        if vocabulary is None:
            vocabulary = load_task_sets(cfg).vocabulary
        return ExternalPoolGenerator.from_directory(spec.profile, spec.external_dir, vocabulary)
    raise ValueError(f"unknown generator kind {spec.kind!r}")
