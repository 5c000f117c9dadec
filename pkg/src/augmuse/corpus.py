"""Corpus ingestion: metadata tables, audio decoding, splits, label vocabulary.

Metadata lives in one tab-separated file per split with a header row
``track_id  path  duration  tags`` (tags comma-separated), mirroring the
public MTG-Jamendo layout. Metadata operations never decode audio.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .audioio import AudioDecodeError, Decoder, read_wav

SPLITS = ("train", "validation", "test")

_COLUMNS = ("track_id", "path", "duration", "tags")


class MetadataError(Exception):
    """Raised for unreadable metadata files or malformed rows."""


@dataclass(frozen=True)
class TrackRecord:
    """One labeled corpus item; audio stays on disk until explicitly decoded."""

    track_id: str
    audio_path: Path
    duration_s: float
    tags: frozenset[str]
    split: str

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError(f"track {self.track_id}: non-positive duration")
        if self.split not in SPLITS:
            raise ValueError(f"track {self.track_id}: unknown split {self.split!r}")

    def with_tags(self, tags: Iterable[str]) -> "TrackRecord":
        return replace(self, tags=frozenset(tags))


@dataclass(frozen=True)
class AudioBuffer:
    """Mono float32 waveform in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        if self.samples.ndim != 1 or len(self.samples) < 1:
            raise ValueError("samples must be a non-empty 1-D array")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


class LabelVocabulary:
    """Ordered set of class names with a tag -> index bijection."""

    def __init__(self, classes: Sequence[str]):
        classes = tuple(classes)
        if len(set(classes)) != len(classes):
            raise ValueError("duplicate classes in vocabulary")
        self.classes = classes
        self.index_of = {name: i for i, name in enumerate(classes)}

    def __len__(self) -> int:
        return len(self.classes)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LabelVocabulary) and self.classes == other.classes

    def __repr__(self) -> str:
        return f"LabelVocabulary({list(self.classes)!r})"

    def multi_hot(self, tags: Iterable[str]) -> np.ndarray:
        """Binary vector over the vocabulary; unknown tags are ignored."""
        bits = np.zeros(len(self.classes), dtype=np.float32)
        for tag in tags:
            idx = self.index_of.get(tag)
            if idx is not None:
                bits[idx] = 1.0
        return bits

    def label_matrix(self, records: Sequence[TrackRecord]) -> np.ndarray:
        return np.stack([self.multi_hot(r.tags) for r in records]) if records else np.zeros((0, len(self)), dtype=np.float32)


def load_metadata(table_path: str | Path, split_name: str) -> list[TrackRecord]:
    """Parse one split's TSV into TrackRecords; malformed rows raise with line numbers."""
    table_path = Path(table_path)
    if split_name not in SPLITS:
        raise MetadataError(f"unknown split {split_name!r}; expected one of {SPLITS}")
    if not table_path.is_file():
        raise MetadataError(f"no such metadata file: {table_path}")

    with table_path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise MetadataError(f"{table_path}: empty metadata file") from None
        missing = [c for c in _COLUMNS if c not in header]
        if missing:
            raise MetadataError(f"{table_path}: missing column(s) {missing}")
        col = {name: header.index(name) for name in _COLUMNS}

        records: list[TrackRecord] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) <= max(col.values()):
                raise MetadataError(f"{table_path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            track_id = row[col["track_id"]].strip()
            if not track_id:
                raise MetadataError(f"{table_path}:{lineno}: empty track_id")
            try:
                duration = float(row[col["duration"]])
            except ValueError:
                raise MetadataError(f"{table_path}:{lineno}: non-numeric duration {row[col['duration']]!r}") from None
            if duration <= 0:
                raise MetadataError(f"{table_path}:{lineno}: non-positive duration {duration}")
            tags = frozenset(t.strip() for t in row[col["tags"]].split(",") if t.strip())
            if not tags:
                raise MetadataError(f"{table_path}:{lineno}: empty tag list")
            records.append(
                TrackRecord(
                    track_id=track_id,
                    audio_path=Path(row[col["path"]]),
                    duration_s=duration,
                    tags=tags,
                    split=split_name,
                )
            )
    return records


def save_metadata(records: Sequence[TrackRecord], table_path: str | Path) -> None:
    """Write records back in the ingestion TSV schema (normalized snapshot)."""
    table_path = Path(table_path)
    table_path.parent.mkdir(parents=True, exist_ok=True)
    with table_path.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(_COLUMNS)
        for rec in records:
            writer.writerow([rec.track_id, str(rec.audio_path), repr(rec.duration_s), ",".join(sorted(rec.tags))])


def load_splits(metadata_dir: str | Path, stem: str = "tracks") -> dict[str, list[TrackRecord]]:
    """Load ``<stem>_<split>.tsv`` for every split present under a directory.

    Relative audio paths in the tables resolve against the metadata directory,
    so corpora can be moved wholesale.
    """
    metadata_dir = Path(metadata_dir)
    out: dict[str, list[TrackRecord]] = {}
    for split in SPLITS:
        path = metadata_dir / f"{stem}_{split}.tsv"
        if path.is_file():
            out[split] = [
                rec if rec.audio_path.is_absolute() else replace(rec, audio_path=metadata_dir / rec.audio_path)
                for rec in load_metadata(path, split)
            ]
    if not out:
        raise MetadataError(f"no {stem}_<split>.tsv files under {metadata_dir}")
    return out


def load_audio(path: str | Path, target_rate_hz: int, decoder: Decoder | None = None) -> AudioBuffer:
    """Decode to a mono buffer at target_rate_hz.

    Multichannel audio is averaged; peak normalization applies only when the
    decoded signal exceeds full scale.
    """
    from . import features  # local import: features depends on this module's types

    if target_rate_hz <= 0:
        raise ValueError("target_rate_hz must be positive")
    if decoder is not None:
        samples, rate = decoder(Path(path))
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size == 0:
            raise AudioDecodeError(f"zero-length audio: {path}")
    else:
        samples, rate = read_wav(path)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    buffer = AudioBuffer(samples=samples.astype(np.float32), sample_rate_hz=rate)
    buffer = features.resample(buffer, target_rate_hz)
    peak = float(np.max(np.abs(buffer.samples))) if len(buffer.samples) else 0.0
    if peak > 1.0:
        buffer = AudioBuffer(samples=(buffer.samples / peak).astype(np.float32), sample_rate_hz=buffer.sample_rate_hz)
    return buffer


def build_vocabulary(records: Sequence[TrackRecord]) -> LabelVocabulary:
    """Lexicographically sorted union of all tags."""
    if not records:
        raise ValueError("cannot build a vocabulary from zero records")
    tags: set[str] = set()
    for rec in records:
        tags |= rec.tags
    return LabelVocabulary(sorted(tags))


def split_durations(records: Sequence[TrackRecord]) -> dict[str, float]:
    """Total duration per split, in hours. Every track counts once."""
    hours = {split: 0.0 for split in SPLITS}
    for rec in records:
        hours[rec.split] += rec.duration_s
    return {split: seconds / 3600.0 for split, seconds in hours.items()}
