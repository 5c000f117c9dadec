"""Generator plug-in contract, sample persistence, and the external adapter.

Every generator owns a GeneratorProfile and implements
``generate(request) -> GeneratedSample``. The module-level :func:`generate`
wrapper is the single enforcement point for the contract: request/profile
consistency going in, audio invariants and provenance coming out.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..audioio import write_wav
from ..corpus import AudioBuffer, LabelVocabulary, load_audio

MODES = ("primed", "reconstruction", "external")


class GenerationError(Exception):
    """Generator failure with provenance attached."""

    def __init__(self, message: str, provenance: "Provenance | None" = None):
        super().__init__(message if provenance is None else f"{message} [{provenance}]")
        self.provenance = provenance


@dataclass(frozen=True)
class GeneratorProfile:
    name: str
    mode: str
    sample_length_s: float
    prime_length_s: float
    sample_rate_hz: int

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.sample_length_s <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("sample length and rate must be positive")
        if self.mode == "primed":
            if not 0 < self.prime_length_s < self.sample_length_s:
                raise ValueError("primed mode needs 0 < prime_length_s < sample_length_s")
        elif self.prime_length_s != 0:
            raise ValueError(f"{self.mode} mode requires prime_length_s == 0")

    @property
    def sample_length(self) -> int:
        return int(round(self.sample_length_s * self.sample_rate_hz))

    @property
    def prime_length(self) -> int:
        return int(round(self.prime_length_s * self.sample_rate_hz))


# Table-sourced reference profiles. The upstream Jukebox pipeline primed with
# 8 s of audio, but the external adapter only reads finished files, hence
# prime_length_s = 0 here.
SAMPLERNN_PROFILE = GeneratorProfile("samplernn", "primed", 10.0, 4.0, 16000)
DDSP_PROFILE = GeneratorProfile("ddsp", "reconstruction", 4.0, 0.0, 16000)
JUKEBOX_PROFILE = GeneratorProfile("jukebox", "external", 24.0, 0.0, 44100)


@dataclass(frozen=True)
class GenerationRequest:
    target_class: int
    seed: int
    source_track_id: str = ""
    prime_or_source: AudioBuffer | None = None
    requested_length_s: float | None = None


@dataclass(frozen=True)
class Provenance:
    generator: str
    source_track_id: str
    seed: int
    mode: str

    def __str__(self) -> str:
        return f"{self.generator}/{self.mode} seed={self.seed} source={self.source_track_id or '-'}"


@dataclass(frozen=True)
class GeneratedSample:
    audio: AudioBuffer
    inherited_label: int
    provenance: Provenance
    flags: tuple[str, ...] = ()


@runtime_checkable
class Generator(Protocol):
    profile: GeneratorProfile

    def generate(self, request: GenerationRequest) -> GeneratedSample: ...


def generate(generator: Generator, request: GenerationRequest) -> GeneratedSample:
    """Run one generation with contract checks on both sides."""
    profile = generator.profile
    provenance = Provenance(profile.name, request.source_track_id, request.seed, profile.mode)
    if request.target_class < 0:
        raise GenerationError("target class must be a vocabulary index", provenance)
    if profile.mode in ("primed", "reconstruction"):
        if request.prime_or_source is None:
            raise GenerationError(f"{profile.mode} mode needs source audio", provenance)
        if request.prime_or_source.sample_rate_hz != profile.sample_rate_hz:
            raise GenerationError(
                f"source rate {request.prime_or_source.sample_rate_hz} != profile rate {profile.sample_rate_hz}",
                provenance,
            )
        expected = profile.prime_length if profile.mode == "primed" else profile.sample_length
        if len(request.prime_or_source.samples) != expected:
            raise GenerationError(
                f"source length {len(request.prime_or_source.samples)} != expected {expected} samples",
                provenance,
            )
    try:
        sample = generator.generate(request)
    except GenerationError:
        raise
    except Exception as exc:
        raise GenerationError(f"generation failed: {exc}", provenance) from exc

    target_len = int(round((request.requested_length_s or profile.sample_length_s) * profile.sample_rate_hz))
    audio = sample.audio
    if abs(len(audio.samples) - target_len) > 1:
        raise GenerationError(f"output length {len(audio.samples)} != planned {target_len} +- 1", provenance)
    if not np.all(np.isfinite(audio.samples)) or float(np.max(np.abs(audio.samples))) > 1.0 + 1e-6:
        raise GenerationError("output audio must be finite and within [-1, 1]", provenance)
    if sample.inherited_label != request.target_class:
        raise GenerationError(
            f"inherited label {sample.inherited_label} != target {request.target_class}", provenance
        )
    return sample


def sample_relpath(sample: GeneratedSample, vocabulary: LabelVocabulary) -> Path:
    class_name = vocabulary.classes[sample.inherited_label]
    prov = sample.provenance
    stem = f"{prov.seed}_{prov.source_track_id or 'none'}"
    return Path(prov.generator) / class_name / f"{stem}.wav"


def write_samples(
    samples: Sequence[GeneratedSample],
    run_dir: str | Path,
    vocabulary: LabelVocabulary,
) -> list[Path]:
    """Persist under <run>/<generator>/<class>/<seed>_<source>.wav plus a manifest."""
    run_dir = Path(run_dir)
    paths: list[Path] = []
    manifest = run_dir / "manifest.jsonl"
    manifest.parent.mkdir(parents=True, exist_ok=True)
    with manifest.open("a") as fh:
        for sample in samples:
            rel = sample_relpath(sample, vocabulary)
            path = run_dir / rel
            write_wav(path, sample.audio.samples, sample.audio.sample_rate_hz)
            fh.write(
                json.dumps(
                    {
                        **asdict(sample.provenance),
                        "class_index": sample.inherited_label,
                        "class_name": vocabulary.classes[sample.inherited_label],
                        "path": str(rel),
                        "n_samples": len(sample.audio.samples),
                        "sample_rate_hz": sample.audio.sample_rate_hz,
                        "flags": list(sample.flags),
                    }
                )
                + "\n"
            )
            paths.append(path)
    return paths


def external_scan(directory: str | Path, vocabulary: LabelVocabulary) -> list[GeneratedSample]:
    """Adopt pre-generated audio laid out as <class_name>/<sample>.wav."""
    directory = Path(directory)
    if not directory.is_dir():
        raise GenerationError(f"no such sample directory: {directory}")
    samples: list[GeneratedSample] = []
    for class_dir in sorted(p for p in directory.iterdir() if p.is_dir()):
        if class_dir.name not in vocabulary.index_of:
            raise GenerationError(
                f"directory {class_dir.name!r} is not a class; valid classes: {list(vocabulary.classes)}"
            )
        label = vocabulary.index_of[class_dir.name]
        for wav in sorted(class_dir.glob("*.wav")):
            buffer = load_audio(wav, target_rate_hz=_wav_rate(wav))
            samples.append(
                GeneratedSample(
                    audio=buffer,
                    inherited_label=label,
                    provenance=Provenance(f"external:{directory.name}", wav.stem, 0, "external"),
                )
            )
    if not samples:
        warnings.warn(f"external scan of {directory} found no samples", stacklevel=2)
    return samples


def _wav_rate(path: Path) -> int:
    from ..audioio import read_wav

    return read_wav(path)[1]
