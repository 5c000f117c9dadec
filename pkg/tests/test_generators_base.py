import json
from dataclasses import dataclass

import numpy as np
import pytest

from augmuse.audioio import write_wav
from augmuse.corpus import AudioBuffer, LabelVocabulary
from augmuse.generators.base import (
    GeneratedSample,
    GenerationError,
    GenerationRequest,
    GeneratorProfile,
    Provenance,
    external_scan,
    generate,
    write_samples,
)

RATE = 16000


@dataclass
class EchoPrimeGenerator:
    """Primed stub: prime verbatim plus a deterministic seeded continuation."""

    profile: GeneratorProfile

    def generate(self, request: GenerationRequest) -> GeneratedSample:
        total = int(round((request.requested_length_s or self.profile.sample_length_s) * RATE))
        rng = np.random.default_rng(request.seed)
        continuation = rng.uniform(-0.5, 0.5, total - len(request.prime_or_source.samples))
        samples = np.concatenate([request.prime_or_source.samples, continuation]).astype(np.float32)
        return GeneratedSample(
            audio=AudioBuffer(samples, RATE),
            inherited_label=request.target_class,
            provenance=Provenance(self.profile.name, request.source_track_id, request.seed, "primed"),
        )


@pytest.fixture
def primed_profile():
    return GeneratorProfile("stub", "primed", 1.0, 0.4, RATE)


@pytest.fixture
def prime():
    return AudioBuffer(np.linspace(-0.9, 0.9, int(0.4 * RATE)).astype(np.float32), RATE)


def test_profile_invariants():
    with pytest.raises(ValueError):
        GeneratorProfile("x", "primed", 4.0, 4.0, RATE)  # prime not < length
    with pytest.raises(ValueError):
        GeneratorProfile("x", "reconstruction", 4.0, 1.0, RATE)  # recon needs prime 0
    with pytest.raises(ValueError):
        GeneratorProfile("x", "freeform", 4.0, 0.0, RATE)


def test_primed_output_keeps_prime_verbatim(primed_profile, prime):
    gen = EchoPrimeGenerator(primed_profile)
    sample = generate(gen, GenerationRequest(target_class=2, seed=5, prime_or_source=prime))
    assert len(sample.audio.samples) == RATE
    assert np.array_equal(sample.audio.samples[: len(prime.samples)], prime.samples)
    assert sample.inherited_label == 2


def test_generate_deterministic_per_seed(primed_profile, prime):
    gen = EchoPrimeGenerator(primed_profile)
    a = generate(gen, GenerationRequest(0, seed=7, prime_or_source=prime))
    b = generate(gen, GenerationRequest(0, seed=7, prime_or_source=prime))
    assert np.array_equal(a.audio.samples, b.audio.samples)


def test_generate_rejects_missing_or_mismatched_source(primed_profile, prime):
    gen = EchoPrimeGenerator(primed_profile)
    with pytest.raises(GenerationError, match="needs source audio"):
        generate(gen, GenerationRequest(0, seed=1))
    wrong_rate = AudioBuffer(prime.samples, 8000)
    with pytest.raises(GenerationError, match="source rate"):
        generate(gen, GenerationRequest(0, seed=1, prime_or_source=wrong_rate))
    wrong_len = AudioBuffer(prime.samples[:100], RATE)
    with pytest.raises(GenerationError, match="source length"):
        generate(gen, GenerationRequest(0, seed=1, prime_or_source=wrong_len))


def test_generate_enforces_output_contract(primed_profile, prime):
    @dataclass
    class ShortOutput:
        profile: GeneratorProfile

        def generate(self, request):
            return GeneratedSample(
                audio=AudioBuffer(np.zeros(100, dtype=np.float32), RATE),
                inherited_label=request.target_class,
                provenance=Provenance("bad", "", request.seed, "primed"),
            )

    with pytest.raises(GenerationError, match="output length"):
        generate(ShortOutput(primed_profile), GenerationRequest(0, seed=1, prime_or_source=prime))

    @dataclass
    class WrongLabel:
        profile: GeneratorProfile

        def generate(self, request):
            return GeneratedSample(
                audio=AudioBuffer(np.zeros(RATE, dtype=np.float32), RATE),
                inherited_label=request.target_class + 1,
                provenance=Provenance("bad", "", request.seed, "primed"),
            )

    with pytest.raises(GenerationError, match="inherited label"):
        generate(WrongLabel(primed_profile), GenerationRequest(0, seed=1, prime_or_source=prime))

    @dataclass
    class Clipping:
        profile: GeneratorProfile

        def generate(self, request):
            return GeneratedSample(
                audio=AudioBuffer(np.full(RATE, 2.0, dtype=np.float32), RATE),
                inherited_label=request.target_class,
                provenance=Provenance("bad", "", request.seed, "primed"),
            )

    with pytest.raises(GenerationError, match="within"):
        generate(Clipping(primed_profile), GenerationRequest(0, seed=1, prime_or_source=prime))


def test_generation_error_carries_provenance(primed_profile, prime):
    @dataclass
    class Exploding:
        profile: GeneratorProfile

        def generate(self, request):
            raise RuntimeError("boom")

    with pytest.raises(GenerationError, match="stub/primed seed=3 source=trackX"):
        generate(Exploding(primed_profile), GenerationRequest(0, seed=3, source_track_id="trackX", prime_or_source=prime))


def test_write_samples_layout_and_manifest(tmp_path):
    vocab = LabelVocabulary(["calm", "dark"])
    sample = GeneratedSample(
        audio=AudioBuffer(np.zeros(100, dtype=np.float32), RATE),
        inherited_label=1,
        provenance=Provenance("gen1", "src9", 42, "primed"),
        flags=("test_flag",),
    )
    paths = write_samples([sample], tmp_path, vocab)
    assert paths == [tmp_path / "gen1" / "dark" / "42_src9.wav"]
    assert paths[0].is_file()
    manifest = [json.loads(line) for line in (tmp_path / "manifest.jsonl").read_text().splitlines()]
    assert manifest[0]["class_name"] == "dark"
    assert manifest[0]["generator"] == "gen1"
    assert manifest[0]["seed"] == 42
    assert manifest[0]["flags"] == ["test_flag"]


def test_external_scan_happy_path(tmp_path):
    vocab = LabelVocabulary(["happy", "sad"])
    for i in range(3):
        write_wav(tmp_path / "happy" / f"s{i}.wav", np.zeros(200, dtype=np.float32) + 0.1, RATE)
    samples = external_scan(tmp_path, vocab)
    assert len(samples) == 3
    assert all(s.inherited_label == 0 for s in samples)
    assert all(s.provenance.mode == "external" for s in samples)


def test_external_scan_empty_warns(tmp_path):
    vocab = LabelVocabulary(["happy"])
    with pytest.warns(UserWarning, match="no samples"):
        assert external_scan(tmp_path, vocab) == []


def test_external_scan_unknown_class_rejected(tmp_path):
    vocab = LabelVocabulary(["happy"])
    (tmp_path / "notaclass").mkdir()
    with pytest.raises(GenerationError, match="valid classes.*happy"):
        external_scan(tmp_path, vocab)
