"""Class-balanced augmentation planning and execution.

The budget is a fixed fraction of train-split duration, split equally per
class; priming/reconstruction sources are drawn without replacement across
the whole plan, so no real track seeds two generated samples.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import AudioBuffer, LabelVocabulary, TrackRecord, load_audio
from .generators.base import (
    GeneratedSample,
    GenerationError,
    GenerationRequest,
    Generator,
    GeneratorProfile,
    generate,
    sample_relpath,
    write_samples,
)


class PlanError(Exception):
    """Raised when a plan cannot be built from the given corpus."""


@dataclass(frozen=True)
class AugmentationPolicy:
    budget_fraction: float = 0.05
    per_class_equal: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.budget_fraction <= 1.0:
            raise ValueError("budget_fraction must be in (0, 1]")
        if not self.per_class_equal:
            raise ValueError("only per-class-equal budgets are supported")


@dataclass(frozen=True)
class PlanEntry:
    class_index: int
    source_track_id: str
    seed: int


@dataclass(frozen=True)
class AugmentationPlan:
    entries: tuple[PlanEntry, ...]
    per_class_duration_s: float
    total_duration_s: float
    profile: GeneratorProfile
    policy: AugmentationPolicy

    def to_json(self) -> str:
        return json.dumps(
            {
                "policy": asdict(self.policy),
                "profile": asdict(self.profile),
                "per_class_duration_s": self.per_class_duration_s,
                "total_duration_s": self.total_duration_s,
                "entries": [asdict(e) for e in self.entries],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "AugmentationPlan":
        raw = json.loads(text)
        return cls(
            entries=tuple(PlanEntry(**e) for e in raw["entries"]),
            per_class_duration_s=raw["per_class_duration_s"],
            total_duration_s=raw["total_duration_s"],
            profile=GeneratorProfile(**raw["profile"]),
            policy=AugmentationPolicy(**raw["policy"]),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "AugmentationPlan":
        return cls.from_json(Path(path).read_text())


def build_plan(
    train_set: Sequence[TrackRecord],
    vocabulary: LabelVocabulary,
    policy: AugmentationPolicy,
    profile: GeneratorProfile,
) -> AugmentationPlan:
    """Per-class duration target = fraction x train duration / n_classes.

    Sample counts round to nearest (minimum 1); sources are drawn uniformly
    without replacement from each class's train tracks, never reusing a track
    across the plan. Deterministic for a fixed policy seed.
    """
    if not train_set:
        raise PlanError("empty train set")
    train_duration = sum(rec.duration_s for rec in train_set)
    per_class_target = policy.budget_fraction * train_duration / len(vocabulary)
    samples_per_class = max(1, int(np.floor(per_class_target / profile.sample_length_s + 0.5)))
    if per_class_target <= 0:
        raise PlanError("zero budget after rounding")

    by_class: dict[int, list[str]] = {i: [] for i in range(len(vocabulary))}
    for rec in train_set:
        for tag in rec.tags:
            idx = vocabulary.index_of.get(tag)
            if idx is not None:
                by_class[idx].append(rec.track_id)

    rng = np.random.default_rng(policy.seed)
    seed_seq = np.random.SeedSequence(policy.seed)
    used: set[str] = set()
    entries: list[PlanEntry] = []
    entry_seeds = iter(seed_seq.generate_state(samples_per_class * len(vocabulary) * 2).tolist())
    for class_index in range(len(vocabulary)):
        eligible = sorted(set(by_class[class_index]) - used)
        if len(eligible) < samples_per_class:
            raise PlanError(
                f"class {vocabulary.classes[class_index]!r} has only {len(eligible)} unused source "
                f"tracks, plan needs {samples_per_class}"
            )
        chosen = rng.choice(eligible, size=samples_per_class, replace=False)
        for source in chosen:
            used.add(str(source))
            entries.append(PlanEntry(class_index=class_index, source_track_id=str(source), seed=int(next(entry_seeds))))

    per_class_duration = samples_per_class * profile.sample_length_s
    return AugmentationPlan(
        entries=tuple(entries),
        per_class_duration_s=per_class_duration,
        total_duration_s=per_class_duration * len(vocabulary),
        profile=profile,
        policy=policy,
    )


@dataclass(frozen=True)
class ExecutionReport:
    generated: int
    shortfall: tuple[PlanEntry, ...]
    retried: int

    @property
    def shortfall_fraction(self) -> float:
        total = self.generated + len(self.shortfall)
        return len(self.shortfall) / total if total else 0.0


def _crop_source(buffer: AudioBuffer, n_samples: int, rng: np.random.Generator) -> AudioBuffer:
    """Random fixed-length crop; short sources are zero-padded at the end."""
    if len(buffer.samples) <= n_samples:
        padded = np.pad(buffer.samples, (0, n_samples - len(buffer.samples)))
        return AudioBuffer(padded.astype(np.float32), buffer.sample_rate_hz)
    start = int(rng.integers(0, len(buffer.samples) - n_samples + 1))
    return AudioBuffer(buffer.samples[start : start + n_samples], buffer.sample_rate_hz)


def execute_plan(
    plan: AugmentationPlan,
    generator: Generator,
    train_set: Sequence[TrackRecord],
    vocabulary: LabelVocabulary,
    out_dir: str | Path,
) -> tuple[list[TrackRecord], ExecutionReport]:
    """Generate every entry, persist WAVs + manifest, return the enlarged set.

    Generated tracks carry exactly one tag (the target class); their WAVs stay
    at the generator's rate and are resampled to the classifier's working rate
    at decode time like any other corpus track. Individual failures retry once
    with a fresh seed, then count toward the shortfall report.
    """
    if generator.profile != plan.profile:
        raise PlanError(f"generator profile {generator.profile} != plan profile {plan.profile}")
    out_dir = Path(out_dir)
    profile = plan.profile
    needs_source = profile.mode in ("primed", "reconstruction")
    source_len = profile.prime_length if profile.mode == "primed" else profile.sample_length
    records_by_id = {rec.track_id: rec for rec in train_set}

    produced: list[GeneratedSample] = []
    augmented: list[TrackRecord] = list(train_set)
    shortfall: list[PlanEntry] = []
    retried = 0
    for entry in plan.entries:
        source_buffer = None
        if needs_source:
            source_rec = records_by_id.get(entry.source_track_id)
            if source_rec is None:
                raise PlanError(f"plan source {entry.source_track_id!r} missing from train set")
            decoded = load_audio(source_rec.audio_path, profile.sample_rate_hz)
            source_buffer = _crop_source(decoded, source_len, np.random.default_rng(entry.seed))

        sample = None
        for attempt, seed in enumerate((entry.seed, entry.seed + 1_000_003)):
            try:
                sample = generate(
                    generator,
                    GenerationRequest(
                        target_class=entry.class_index,
                        seed=seed,
                        source_track_id=entry.source_track_id,
                        prime_or_source=source_buffer,
                    ),
                )
                break
            except GenerationError as exc:
                if attempt == 0:
                    retried += 1
                    continue
                warnings.warn(f"plan entry failed twice, recorded as shortfall: {exc}")
        if sample is None:
            shortfall.append(entry)
            continue
        produced.append(sample)

    paths = write_samples(produced, out_dir, vocabulary)
    for sample, path in zip(produced, paths):
        rel = sample_relpath(sample, vocabulary)
        augmented.append(
            TrackRecord(
                track_id=f"gen_{rel.parent.parent.name}_{vocabulary.classes[sample.inherited_label]}_{rel.stem}",
                audio_path=path,
                duration_s=len(sample.audio.samples) / sample.audio.sample_rate_hz,
                tags=frozenset([vocabulary.classes[sample.inherited_label]]),
                split="train",
            )
        )
    report = ExecutionReport(generated=len(produced), shortfall=tuple(shortfall), retried=retried)
    return augmented, report
