"""Relabel mood/theme tags into the four arousal/valence quadrant classes.

The shipped ``data/quadrant_map.tsv`` is a reconstruction built from each
tag's circumplex placement; substitute your own table via ``load_mapping``
for any study where the exact grouping matters. Tags with no clear
placement are intentionally absent from the file.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import LabelVocabulary, TrackRecord

QUADRANTS = (
    "activated_pleasant",
    "activated_unpleasant",
    "deactivated_pleasant",
    "deactivated_unpleasant",
)


class MappingError(Exception):
    """Raised for malformed or conflicting quadrant mapping files."""


@dataclass(frozen=True)
class MoodQuadrantMap:
    entries: Mapping[str, str]
    source: Path


@dataclass(frozen=True)
class DroppedTrack:
    track_id: str
    reason: str


@dataclass(frozen=True)
class RelabelResult:
    records: tuple[TrackRecord, ...]
    vocabulary: LabelVocabulary
    dropped: tuple[DroppedTrack, ...]


def default_mapping_path() -> Path:
    return Path(str(resources.files("augmuse").joinpath("data/quadrant_map.tsv")))


def load_mapping(path: str | Path) -> MoodQuadrantMap:
    """Parse a two-column TSV (tag, quadrant); conflicts and bad names reject."""
    path = Path(path)
    if not path.is_file():
        raise MappingError(f"no such mapping file: {path}")
    entries: dict[str, str] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and [c.strip().lower() for c in row[:2]] == ["tag", "quadrant"]:
                continue
            if len(row) < 2:
                raise MappingError(f"{path}:{lineno}: expected two columns")
            tag, quadrant = row[0].strip(), row[1].strip()
            if quadrant not in QUADRANTS:
                raise MappingError(f"{path}:{lineno}: unknown quadrant {quadrant!r}; expected one of {QUADRANTS}")
            if tag in entries and entries[tag] != quadrant:
                raise MappingError(f"{path}:{lineno}: tag {tag!r} maps to both {entries[tag]!r} and {quadrant!r}")
            entries[tag] = quadrant
    return MoodQuadrantMap(entries=entries, source=path)


def relabel(
    records: Sequence[TrackRecord],
    mapping: MoodQuadrantMap,
    keep_multi_quadrant: bool = False,
) -> RelabelResult:
    """Swap each track's tags for the quadrants they induce.

    Tracks whose tags hit no quadrant are dropped; tracks hitting several
    quadrants are dropped too unless ``keep_multi_quadrant`` turns them into
    multi-label items. Drops are reported, never raised.
    """
    kept: list[TrackRecord] = []
    dropped: list[DroppedTrack] = []
    for rec in records:
        quadrants = sorted({mapping.entries[t] for t in rec.tags if t in mapping.entries})
        if not quadrants:
            dropped.append(DroppedTrack(rec.track_id, "no quadrant"))
        elif len(quadrants) > 1 and not keep_multi_quadrant:
            dropped.append(DroppedTrack(rec.track_id, f"multiple quadrants: {','.join(quadrants)}"))
        else:
            kept.append(rec.with_tags(quadrants))
    return RelabelResult(
        records=tuple(kept),
        vocabulary=LabelVocabulary(QUADRANTS),
        dropped=tuple(dropped),
    )


def write_drop_report(dropped: Sequence[DroppedTrack], path: str | Path) -> None:
    """Line-oriented JSON, one exclusion per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for item in dropped:
            fh.write(json.dumps({"track_id": item.track_id, "reason": item.reason}) + "\n")


def quadrant_durations(records: Sequence[TrackRecord]) -> dict[str, float]:
    """Hours of audio per quadrant (multi-label tracks count toward each)."""
    hours = {q: 0.0 for q in QUADRANTS}
    for rec in records:
        for tag in rec.tags:
            if tag in hours:
                hours[tag] += rec.duration_s / 3600.0
    return hours
