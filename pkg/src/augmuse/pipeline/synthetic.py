"""Synthetic corpus oracle and the desk-scale reference generators.

Each synthetic class has a distinctive harmonic signature (fundamental band,
harmonic decay, noise floor) with per-track random variation, so classes are
separable by construction. The matched generator samples the same
class-conditional process, which makes it the positive control for
augmentation experiments; the white-noise generator is the label-free
negative control.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..audioio import write_wav
from ..corpus import AudioBuffer, LabelVocabulary, TrackRecord, save_metadata
from ..features import MelConfig, mel_spectrogram
from ..generators.base import GeneratedSample, GenerationRequest, GeneratorProfile, Provenance

_F0_CENTERS = (110.0, 220.0, 440.0, 880.0)
_DECAYS = (1.6, 0.7, 1.2, 0.9)
_NOISE_DB = (-45.0, -25.0, -35.0, -18.0)


@dataclass(frozen=True)
class ClassSignature:
    name: str
    f0_center_hz: float
    harmonic_decay: float
    noise_floor_db: float


@dataclass(frozen=True)
class CorpusInfo:
    root: Path
    classes: tuple[ClassSignature, ...]
    sample_rate_hz: int
    seed: int
    centroid_accuracy: float

    def save(self) -> None:
        payload = {
            "classes": [asdict(c) for c in self.classes],
            "sample_rate_hz": self.sample_rate_hz,
            "seed": self.seed,
            "centroid_accuracy": self.centroid_accuracy,
        }
        (self.root / "corpus_info.json").write_text(json.dumps(payload, indent=2))

    @classmethod
    def load(cls, root: str | Path) -> "CorpusInfo":
        root = Path(root)
        raw = json.loads((root / "corpus_info.json").read_text())
        return cls(
            root=root,
            classes=tuple(ClassSignature(**c) for c in raw["classes"]),
            sample_rate_hz=raw["sample_rate_hz"],
            seed=raw["seed"],
            centroid_accuracy=raw["centroid_accuracy"],
        )


def class_signatures(n_classes: int) -> tuple[ClassSignature, ...]:
    if not 1 <= n_classes <= 16:
        raise ValueError("n_classes must be in [1, 16]")
    sigs = []
    for k in range(n_classes):
        base = _F0_CENTERS[k % 4]
        # Classes beyond the four fundamental bands shift by a third of an octave.
        f0 = base * 2 ** ((k // 4) / 3.0)
        sigs.append(
            ClassSignature(
                name=f"sig{k:02d}",
                f0_center_hz=f0,
                harmonic_decay=_DECAYS[k % 4] * (1.0 + 0.2 * (k // 4)),
                noise_floor_db=_NOISE_DB[k % 4] + 2.0 * (k // 4),
            )
        )
    return tuple(sigs)


def synth_class_track(sig: ClassSignature, duration_s: float, rate: int, rng: np.random.Generator) -> np.ndarray:
    """One random track from a class's distribution (float32 in [-1, 1])."""
    n = int(round(duration_s * rate))
    t = np.arange(n) / rate

    # Piecewise fundamental inside the class band (+-1/4 octave) with vibrato.
    n_notes = max(1, int(round(duration_s / rng.uniform(0.8, 1.6))))
    note_f0 = sig.f0_center_hz * 2 ** rng.uniform(-0.25, 0.25, size=n_notes)
    f0 = np.repeat(note_f0, int(np.ceil(n / n_notes)))[:n]
    vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(4.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    f0 = f0 * vibrato

    phase = 2 * np.pi * np.cumsum(f0) / rate
    decay = sig.harmonic_decay * rng.uniform(0.85, 1.15)
    x = np.zeros(n)
    for k in range(1, 13):
        weight = float(k) ** -decay
        mask = k * f0 < rate / 2
        x += weight * np.sin(k * phase + rng.uniform(0, 2 * np.pi)) * mask

    envelope = 0.55 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.2, 0.8) * t + rng.uniform(0, 2 * np.pi))
    x = x / np.max(np.abs(x)) * envelope
    noise_amp = 10 ** ((sig.noise_floor_db + rng.uniform(-3.0, 3.0)) / 20.0)
    x = x + noise_amp * rng.standard_normal(n)
    peak = np.max(np.abs(x))
    if peak > 1.0:
        x = x / peak
    return x.astype(np.float32)


def _centroid_accuracy(
    buffers_by_split: dict[str, list[tuple[int, np.ndarray]]], mel_cfg: MelConfig, rate: int
) -> float:
    """Nearest-centroid classification of mean mel vectors, train vs held-out."""
    def mean_mel(samples: np.ndarray) -> np.ndarray:
        return mel_spectrogram(AudioBuffer(samples, rate), mel_cfg).frames.mean(axis=0)

    train = [(label, mean_mel(s)) for label, s in buffers_by_split["train"]]
    held = [(label, mean_mel(s)) for split in ("validation", "test") for label, s in buffers_by_split[split]]
    n_classes = max(label for label, _ in train) + 1
    centroids = np.stack(
        [np.mean([v for label, v in train if label == k], axis=0) for k in range(n_classes)]
    )
    correct = sum(
        1 for label, v in held if int(np.argmin(np.linalg.norm(centroids - v, axis=1))) == label
    )
    return correct / max(1, len(held))


def make_synthetic_corpus(
    out_dir: str | Path,
    n_classes: int = 4,
    hours: float = 2.0,
    rate: int = 16000,
    seed: int = 0,
    track_s: float = 30.0,
) -> CorpusInfo:
    """Write WAVs plus train/validation/test metadata TSVs (80/10/10)."""
    if hours > 4:
        raise ValueError("synthetic corpora are capped at 4 hours")
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    sigs = class_signatures(n_classes)
    rng = np.random.default_rng(seed)

    n_tracks = max(n_classes * 5, int(round(hours * 3600.0 / track_s)))
    records: dict[str, list[TrackRecord]] = {"train": [], "validation": [], "test": []}
    sampled: dict[str, list[tuple[int, np.ndarray]]] = {"train": [], "validation": [], "test": []}
    per_class = [np.nonzero(np.arange(n_tracks) % n_classes == k)[0] for k in range(n_classes)]
    split_of = {}
    for class_tracks in per_class:
        n_val = max(1, int(round(len(class_tracks) * 0.1)))
        n_test = max(1, int(round(len(class_tracks) * 0.1)))
        for pos, track_idx in enumerate(class_tracks):
            if pos < len(class_tracks) - n_val - n_test:
                split_of[track_idx] = "train"
            elif pos < len(class_tracks) - n_test:
                split_of[track_idx] = "validation"
            else:
                split_of[track_idx] = "test"

    for i in range(n_tracks):
        label = i % n_classes
        samples = synth_class_track(sigs[label], track_s, rate, rng)
        track_id = f"synth_{i:05d}"
        split = split_of[i]
        write_wav(audio_dir / f"{track_id}.wav", samples, rate)
        records[split].append(
            TrackRecord(
                track_id=track_id,
                # metadata-relative, so corpora are relocatable and seeds give
                # byte-identical metadata regardless of the output root
                audio_path=Path("audio") / f"{track_id}.wav",
                duration_s=len(samples) / rate,
                tags=frozenset([sigs[label].name]),
                split=split,
            )
        )
        sampled[split].append((label, samples))

    for split, recs in records.items():
        save_metadata(recs, out_dir / f"tracks_{split}.tsv")

    mel_cfg = MelConfig(sample_rate_hz=rate, fmax_hz=min(7600.0, rate / 2 - 100.0))
    accuracy = _centroid_accuracy(sampled, mel_cfg, rate)
    info = CorpusInfo(
        root=out_dir,
        classes=sigs,
        sample_rate_hz=rate,
        seed=seed,
        centroid_accuracy=accuracy,
    )
    info.save()
    return info


def corpus_vocabulary(info: CorpusInfo) -> LabelVocabulary:
    return LabelVocabulary(sorted(sig.name for sig in info.classes))


@dataclass
class SyntheticClassGenerator:
    """Matched-distribution oracle: fresh samples from the class's own process.

    Declared as reconstruction mode so plans assign it sources, but the source
    audio only feeds provenance - output audio is resampled from the class
    distribution, which is the point of the positive control.
    """

    profile: GeneratorProfile
    classes: tuple[ClassSignature, ...]

    def generate(self, request: GenerationRequest) -> GeneratedSample:
        rng = np.random.default_rng(request.seed)
        samples = synth_class_track(
            self.classes[request.target_class],
            request.requested_length_s or self.profile.sample_length_s,
            self.profile.sample_rate_hz,
            rng,
        )
        return GeneratedSample(
            audio=AudioBuffer(samples, self.profile.sample_rate_hz),
            inherited_label=request.target_class,
            provenance=Provenance(self.profile.name, request.source_track_id, request.seed, self.profile.mode),
        )


@dataclass
class WhiteNoiseGenerator:
    """Label-uninformative control: class-labeled gaussian noise."""

    profile: GeneratorProfile
    amplitude: float = 0.1

    def generate(self, request: GenerationRequest) -> GeneratedSample:
        rng = np.random.default_rng(request.seed)
        n = int(round((request.requested_length_s or self.profile.sample_length_s) * self.profile.sample_rate_hz))
        samples = np.clip(self.amplitude * rng.standard_normal(n), -1.0, 1.0).astype(np.float32)
        return GeneratedSample(
            audio=AudioBuffer(samples, self.profile.sample_rate_hz),
            inherited_label=request.target_class,
            provenance=Provenance(self.profile.name, request.source_track_id, request.seed, self.profile.mode),
        )


def synthetic_generator_for(info: CorpusInfo, sample_length_s: float = 10.0) -> SyntheticClassGenerator:
    profile = GeneratorProfile("matched_synthetic", "reconstruction", sample_length_s, 0.0, info.sample_rate_hz)
    return SyntheticClassGenerator(profile=profile, classes=info.classes)


def noise_generator(rate: int, sample_length_s: float = 10.0, amplitude: float = 0.1) -> WhiteNoiseGenerator:
    profile = GeneratorProfile("white_noise", "reconstruction", sample_length_s, 0.0, rate)
    return WhiteNoiseGenerator(profile=profile, amplitude=amplitude)
