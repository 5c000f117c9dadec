"""Adapter that serves pre-generated audio through the generator contract.

Fills the role of generators whose sampling machinery is out of scope
(large pretrained models): audio produced elsewhere is scanned from the
class-directory layout and dealt out per class, each file used once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..corpus import AudioBuffer, LabelVocabulary
from ..features import resample
from ..generators.base import (
    GeneratedSample,
    GenerationError,
    GenerationRequest,
    GeneratorProfile,
    Provenance,
    external_scan,
)


@dataclass
class ExternalPoolGenerator:
    profile: GeneratorProfile
    pools: dict[int, list[GeneratedSample]]
    cursors: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_directory(
        cls, profile: GeneratorProfile, directory, vocabulary: LabelVocabulary
    ) -> "ExternalPoolGenerator":
        pools: dict[int, list[GeneratedSample]] = {}
        for sample in external_scan(directory, vocabulary):
            pools.setdefault(sample.inherited_label, []).append(sample)
        return cls(profile=profile, pools=pools)

    def generate(self, request: GenerationRequest) -> GeneratedSample:
        pool = self.pools.get(request.target_class, [])
        cursor = self.cursors.get(request.target_class, 0)
        if cursor >= len(pool):
            raise GenerationError(
                f"external pool exhausted for class {request.target_class} "
                f"({len(pool)} samples available)"
            )
        self.cursors[request.target_class] = cursor + 1
        sample = pool[cursor]

        audio = sample.audio
        if audio.sample_rate_hz != self.profile.sample_rate_hz:
            audio = resample(audio, self.profile.sample_rate_hz)
        target_len = self.profile.sample_length
        flags = list(sample.flags)
        if len(audio.samples) > target_len:
            audio = AudioBuffer(audio.samples[:target_len], audio.sample_rate_hz)
        elif len(audio.samples) < target_len:
            audio = AudioBuffer(
                np.pad(audio.samples, (0, target_len - len(audio.samples))), audio.sample_rate_hz
            )
            flags.append("padded_to_profile_length")
        return GeneratedSample(
            audio=audio,
            inherited_label=request.target_class,
            provenance=Provenance(
                self.profile.name, sample.provenance.source_track_id, request.seed, "external"
            ),
            flags=tuple(flags),
        )
