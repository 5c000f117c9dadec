import numpy as np
import pytest

from augmuse.corpus import AudioBuffer
from augmuse.generators.base import GeneratorProfile, GenerationRequest, generate
from augmuse.generators.tiered import (
    TieredConfig,
    TieredGenerator,
    held_out_cross_entropy,
    load_tiered_model,
    mu_law_decode,
    mu_law_encode,
    next_symbol_accuracy,
    save_tiered_model,
    tiered_continue,
    tiered_train,
)

RATE = 16000
PATTERN = np.array([0.0, 0.5, -0.5, 0.9, -0.9, 0.2, -0.2, 0.7], dtype=np.float32)


def pattern_audio(repeats):
    return AudioBuffer(np.tile(PATTERN, repeats), RATE)


@pytest.fixture(scope="module")
def pattern_model():
    cfg = TieredConfig(
        frame_top=8,
        frame_mid=4,
        hidden_size=48,
        embed_size=16,
        seq_len=64,
        batch_size=8,
        epochs=4,
        steps_per_epoch=40,
        seed=1,
    )
    return tiered_train([pattern_audio(2000)], cfg)


# -- mu-law ---------------------------------------------------------------------

def test_mu_law_zero_maps_near_zero():
    decoded = mu_law_decode(mu_law_encode(np.array([0.0])))
    assert abs(decoded[0]) <= 1.0 / 255.0


def test_mu_law_roundtrip_bound_on_grid():
    grid = np.linspace(-1.0, 1.0, 100_000)
    err = np.abs(mu_law_decode(mu_law_encode(grid)) - grid)
    assert err.max() <= 0.025


def test_mu_law_endpoints_exact():
    decoded = mu_law_decode(mu_law_encode(np.array([-1.0, 1.0])))
    assert np.allclose(decoded, [-1.0, 1.0], atol=1e-6)


def test_mu_law_rejects_out_of_range():
    with pytest.raises(ValueError):
        mu_law_encode(np.array([1.5]))


# -- training --------------------------------------------------------------------

def test_pattern_accuracy_above_99(pattern_model):
    accuracy = next_symbol_accuracy(pattern_model, pattern_audio(200))
    assert accuracy >= 0.99


def test_held_out_cross_entropy_beats_uniform(pattern_model):
    assert held_out_cross_entropy(pattern_model, pattern_audio(100)) <= np.log(256)


def test_smoke_one_epoch_returns_history():
    cfg = TieredConfig(frame_top=8, frame_mid=4, hidden_size=16, embed_size=8,
                       seq_len=32, batch_size=4, epochs=1, steps_per_epoch=3, seed=0)
    model = tiered_train([pattern_audio(100)], cfg)
    assert len(model.loss_history) == 1
    assert np.isfinite(model.loss_history[0])


def test_seed_changes_losses():
    cfg = dict(frame_top=8, frame_mid=4, hidden_size=16, embed_size=8,
               seq_len=32, batch_size=4, epochs=1, steps_per_epoch=5)
    a = tiered_train([pattern_audio(100)], TieredConfig(seed=0, **cfg))
    b = tiered_train([pattern_audio(100)], TieredConfig(seed=1, **cfg))
    assert a.loss_history != b.loss_history


# -- continuation -----------------------------------------------------------------

def test_primed_continuation_prefix_exact(pattern_model):
    prime = pattern_audio(100)  # 800 samples, 0.05 s
    out = tiered_continue(pattern_model, prime, total_length_s=0.1, temperature=1.0, seed=3)
    assert len(out.samples) == 1600
    roundtripped = mu_law_decode(mu_law_encode(prime.samples))
    assert np.array_equal(out.samples[:800], roundtripped)


def test_greedy_decoding_seed_independent(pattern_model):
    prime = pattern_audio(100)
    a = tiered_continue(pattern_model, prime, 0.1, temperature=0.0, seed=1)
    b = tiered_continue(pattern_model, prime, 0.1, temperature=0.0, seed=999)
    assert np.array_equal(a.samples, b.samples)


def test_sampling_seeds_differ(pattern_model):
    prime = pattern_audio(100)
    a = tiered_continue(pattern_model, prime, 0.1, temperature=1.0, seed=1)
    b = tiered_continue(pattern_model, prime, 0.1, temperature=1.0, seed=2)
    c = tiered_continue(pattern_model, prime, 0.1, temperature=1.0, seed=1)
    assert np.array_equal(a.samples, c.samples)
    assert not np.array_equal(a.samples, b.samples)


def test_continuation_follows_learned_pattern(pattern_model):
    prime = pattern_audio(100)
    out = tiered_continue(pattern_model, prime, 0.1, temperature=0.0, seed=0)
    expected = np.tile(mu_law_decode(mu_law_encode(PATTERN)), 100)
    assert np.mean(np.abs(out.samples[800:] - expected) < 0.05) >= 0.95


def test_prime_rate_mismatch_rejected(pattern_model):
    prime = AudioBuffer(np.tile(PATTERN, 100), 8000)
    with pytest.raises(ValueError, match="Hz"):
        tiered_continue(pattern_model, prime, 0.1)


def test_generator_plugin_contract(pattern_model):
    profile = GeneratorProfile("tiered_stub", "primed", 0.1, 0.05, RATE)
    gen = TieredGenerator(profile=profile, model=pattern_model, temperature=1.0)
    prime = pattern_audio(100)
    sample = generate(gen, GenerationRequest(target_class=1, seed=4, prime_or_source=prime))
    assert sample.inherited_label == 1
    assert len(sample.audio.samples) == 1600


def test_save_load_roundtrip(tmp_path, pattern_model):
    path = tmp_path / "tiered.pt"
    save_tiered_model(pattern_model, path)
    loaded = load_tiered_model(path)
    prime = pattern_audio(100)
    a = tiered_continue(pattern_model, prime, 0.1, temperature=0.0)
    b = tiered_continue(loaded, prime, 0.1, temperature=0.0)
    assert np.array_equal(a.samples, b.samples)
