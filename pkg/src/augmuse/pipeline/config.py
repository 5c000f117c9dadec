"""Experiment configuration: one TOML file with a section per module.

The only environment variable consulted is AUGMUSE_CACHE_DIR, a fallback for
``features.cache_dir``.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..augmentor import AugmentationPolicy
from ..classifier import ClassifierConfig
from ..features import MelConfig
from ..generators.base import GeneratorProfile

GENERATOR_KINDS = ("hn", "tiered", "external", "matched_synthetic", "white_noise")
LABEL_TASKS = ("mood_theme", "emotional")


class ConfigError(Exception):
    """Raised for invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    profile: GeneratorProfile
    model_path: Path | None = None  # trained hn/tiered checkpoint
    external_dir: Path | None = None  # pre-generated samples (external kind)
    temperature: float = 1.0
    noise_amplitude: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    metadata_dir: Path
    label_task: str
    classifier: ClassifierConfig
    policy: AugmentationPolicy
    generator: GeneratorSpec
    output_dir: Path
    trials: int = 2
    seeds: tuple[int, ...] = (0, 1)
    mapping_path: Path | None = None
    keep_multi_quadrant: bool = False
    cache_dir: Path | None = None
    metadata_stem: str = "tracks"
    highlight_mode: str = "relative"
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.seeds) != self.trials:
            raise ConfigError(f"{self.trials} trials need {self.trials} seeds, got {len(self.seeds)}")
        if self.label_task not in LABEL_TASKS:
            raise ConfigError(f"label_task must be one of {LABEL_TASKS}")
        if self.highlight_mode not in ("relative", "absolute"):
            raise ConfigError("highlight_mode must be 'relative' or 'absolute'")
        if self.label_task == "emotional" and self.mapping_path is None:
            raise ConfigError("emotional task requires emotionmap.mapping_path")

    def snapshot(self, path: Path) -> None:
        payload = asdict(self)
        payload = json.loads(json.dumps(payload, default=str))
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2))


def _resolve(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else (base / path)


def load_config(path: str | Path, num_classes_hint: int | None = None) -> ExperimentConfig:
    """Parse and validate a TOML experiment config.

    Relative paths resolve against the config file's directory. num_classes
    is normally derived from the corpus at run time; the hint short-circuits
    that for tools that need a classifier config up front.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    with path.open("rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    base = path.parent

    corpus_sec = raw.get("corpus", {})
    metadata_dir = _resolve(base, corpus_sec.get("metadata_dir"))
    if metadata_dir is None:
        raise ConfigError("corpus.metadata_dir is required")
    if not metadata_dir.is_dir():
        raise ConfigError(f"corpus.metadata_dir does not exist: {metadata_dir}")
    label_task = corpus_sec.get("label_task", "mood_theme")

    emotion_sec = raw.get("emotionmap", {})
    mapping_path = _resolve(base, emotion_sec.get("mapping_path"))
    if mapping_path is not None and not mapping_path.is_file():
        raise ConfigError(f"emotionmap.mapping_path does not exist: {mapping_path}")

    feat_sec = raw.get("features", {})
    mel = MelConfig(
        sample_rate_hz=int(feat_sec.get("sample_rate_hz", 16000)),
        window=int(feat_sec.get("mel_window", 1024)),
        hop=int(feat_sec.get("mel_hop", 512)),
        n_mels=int(feat_sec.get("n_mels", 96)),
        fmin_hz=float(feat_sec.get("fmin_hz", 20.0)),
        fmax_hz=float(feat_sec.get("fmax_hz", 7600.0)),
    )
    cache_dir = _resolve(base, feat_sec.get("cache_dir"))
    if cache_dir is None and os.environ.get("AUGMUSE_CACHE_DIR"):
        cache_dir = Path(os.environ["AUGMUSE_CACHE_DIR"])

    clf_sec = raw.get("classifier", {})
    classifier = ClassifierConfig(
        num_classes=int(clf_sec.get("num_classes", num_classes_hint or 1)),
        backbone_width=int(clf_sec.get("backbone_width", 8)),
        num_conv_blocks=int(clf_sec.get("num_conv_blocks", 3)),
        attention_heads=int(clf_sec.get("attention_heads", 2)),
        window_s=float(clf_sec.get("window_s", 10.0)),
        learning_rate=float(clf_sec.get("learning_rate", 2e-3)),
        batch_size=int(clf_sec.get("batch_size", 32)),
        max_epochs=int(clf_sec.get("max_epochs", 30)),
        patience=int(clf_sec.get("patience", 5)),
        windows_per_track=int(clf_sec.get("windows_per_track", 2)),
        seed=int(clf_sec.get("seed", 0)),
        mel=mel,
    )

    aug_sec = raw.get("augmentor", {})
    policy = AugmentationPolicy(
        budget_fraction=float(aug_sec.get("budget_fraction", 0.05)),
        seed=int(aug_sec.get("seed", 0)),
    )

    gen_sec = raw.get("generator", {})
    kind = gen_sec.get("kind", "matched_synthetic")
    if kind not in GENERATOR_KINDS:
        raise ConfigError(f"generator.kind must be one of {GENERATOR_KINDS}")
    mode = {"hn": "reconstruction", "tiered": "primed", "external": "external"}.get(kind, "reconstruction")
    profile = GeneratorProfile(
        name=gen_sec.get("name", kind),
        mode=gen_sec.get("mode", mode),
        sample_length_s=float(gen_sec.get("sample_length_s", 10.0 if mode == "primed" else 4.0)),
        prime_length_s=float(gen_sec.get("prime_length_s", 4.0 if mode == "primed" else 0.0)),
        sample_rate_hz=int(gen_sec.get("sample_rate_hz", mel.sample_rate_hz)),
    )
    model_path = _resolve(base, gen_sec.get("model_path"))
    if model_path is not None and not model_path.is_file():
        raise ConfigError(f"generator.model_path does not exist: {model_path}")
    external_dir = _resolve(base, gen_sec.get("external_dir"))
    if external_dir is not None and not external_dir.is_dir():
        raise ConfigError(f"generator.external_dir does not exist: {external_dir}")
    generator = GeneratorSpec(
        kind=kind,
        profile=profile,
        model_path=model_path,
        external_dir=external_dir,
        temperature=float(gen_sec.get("temperature", 1.0)),
        noise_amplitude=float(gen_sec.get("noise_amplitude", 0.1)),
    )

    pipe_sec = raw.get("pipeline", {})
    trials = int(pipe_sec.get("trials", 2))
    seeds = tuple(int(s) for s in pipe_sec.get("seeds", list(range(trials))))
    output_dir = _resolve(base, pipe_sec.get("output_dir", "runs"))

    return ExperimentConfig(
        metadata_dir=metadata_dir,
        label_task=label_task,
        classifier=classifier,
        policy=policy,
        generator=generator,
        output_dir=output_dir,
        trials=trials,
        seeds=seeds,
        mapping_path=mapping_path,
        keep_multi_quadrant=bool(emotion_sec.get("keep_multi_quadrant", False)),
        cache_dir=cache_dir,
        metadata_stem=corpus_sec.get("stem", "tracks"),
        highlight_mode=pipe_sec.get("highlight_mode", "relative"),
        extra={k: v for k, v in raw.items() if k not in
               ("corpus", "emotionmap", "features", "classifier", "augmentor", "generator", "pipeline")},
    )
