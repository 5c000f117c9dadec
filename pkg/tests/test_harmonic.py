import numpy as np
import pytest
import torch

from augmuse.corpus import AudioBuffer
from augmuse.generators.base import GeneratorProfile, GenerationRequest, generate
from augmuse.generators.harmonic import (
    HNConfig,
    HNGenerator,
    decode_controls,
    hn_reconstruct,
    hn_train,
    load_hn_model,
    multiscale_spectral_loss,
    reconstruction_loss,
    save_hn_model,
    silence_loss,
)

RATE = 16000

FAST_CFG = HNConfig(epochs=3, steps_per_epoch=20, batch_size=8, segment_s=1.0, seed=0)


def tone_track(seconds, rng, f0_lo=150.0, f0_hi=500.0):
    n = int(seconds * RATE)
    t = np.arange(n) / RATE
    f0 = rng.uniform(f0_lo, f0_hi)
    decay = rng.uniform(0.8, 1.6)
    amp = 0.35 * (1 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.2, 1.0) * t + rng.uniform(0, 6)))
    x = np.zeros(n)
    for k in range(1, 9):
        if k * f0 < RATE / 2:
            x += (k**-decay) * np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 6))
    x = amp * x / np.max(np.abs(x)) * 0.9
    x += rng.normal(0, 0.003, n)
    return AudioBuffer(np.clip(x, -1, 1).astype(np.float32), RATE)


@pytest.fixture(scope="module")
def tone_model():
    rng = np.random.default_rng(1)
    train = [tone_track(4.0, rng) for _ in range(12)]
    return hn_train(train, FAST_CFG)


def test_multiscale_loss_zero_for_identical():
    x = torch.randn(2, 8000)
    assert float(multiscale_spectral_loss(x, x)) == 0.0


def test_train_produces_decreasing_loss(tone_model):
    history = tone_model.loss_history
    assert len(history) == FAST_CFG.epochs
    assert history[-1] < history[0]
    assert all(np.isfinite(history))


def test_trained_model_beats_silence_baseline(tone_model):
    rng = np.random.default_rng(2)
    held = [tone_track(2.0, rng) for _ in range(4)]
    rec = reconstruction_loss(tone_model, held)
    sil = silence_loss(held, tone_model.config)
    assert rec <= sil / 5.0


def test_reconstruction_preserves_tone_frequency(tone_model):
    rng = np.random.default_rng(3)
    source = tone_track(2.0, rng, f0_lo=435.0, f0_hi=445.0)
    sample = hn_reconstruct(tone_model, source)
    spec = np.abs(np.fft.rfft(sample.audio.samples * np.hanning(len(sample.audio.samples))))
    freqs = np.arange(len(spec)) * RATE / len(sample.audio.samples)
    src_spec = np.abs(np.fft.rfft(source.samples * np.hanning(len(source.samples))))
    src_peak = freqs[src_spec.argmax()]
    assert abs(freqs[spec.argmax()] - src_peak) <= 0.01 * src_peak


def test_seed_changes_training_loss():
    rng = np.random.default_rng(5)
    train = [tone_track(2.0, rng) for _ in range(4)]
    quick = dict(epochs=1, steps_per_epoch=5, batch_size=4, segment_s=1.0)
    a = hn_train(train, HNConfig(seed=0, **quick))
    b = hn_train(train, HNConfig(seed=1, **quick))
    assert a.loss_history != b.loss_history


def test_training_on_silence_learns_silence():
    silent = [AudioBuffer(np.zeros(RATE * 2, dtype=np.float32), RATE) for _ in range(4)]
    model = hn_train(silent, HNConfig(epochs=2, steps_per_epoch=15, batch_size=4, segment_s=1.0, seed=0))
    controls = decode_controls(model, silent[0])
    assert controls.harmonic_amps.mean() < 1e-2
    rec = reconstruction_loss(model, silent[:1])
    rng = np.random.default_rng(0)
    tone_scale = silence_loss([tone_track(2.0, rng)], model.config)
    assert rec <= 1e-3 * tone_scale


def test_reconstruction_flags_noise_only(tone_model):
    rng = np.random.default_rng(6)
    noise = AudioBuffer(rng.uniform(-0.4, 0.4, RATE).astype(np.float32), RATE)
    sample = hn_reconstruct(tone_model, noise)
    assert "noise_only" in sample.flags


def test_reconstruction_flags_polyphony(tone_model):
    # Inharmonic partials: no common fundamental for YIN to lock onto.
    t = np.arange(RATE * 2) / RATE
    chord = sum(np.sin(2 * np.pi * f * t) for f in (220.0, 311.13, 466.16))
    chord = (0.3 * chord / np.max(np.abs(chord))).astype(np.float32)
    sample = hn_reconstruct(tone_model, AudioBuffer(chord, RATE))
    assert "polyphonic_approximation" in sample.flags or "noise_only" in sample.flags


def test_reconstruction_reports_clip_fraction(tone_model):
    rng = np.random.default_rng(7)
    sample = hn_reconstruct(tone_model, tone_track(1.0, rng))
    assert any(f.startswith("clip_fraction=") for f in sample.flags)
    assert np.max(np.abs(sample.audio.samples)) <= 1.0


def test_zero_length_source_rejected(tone_model):
    with pytest.raises(ValueError):
        hn_reconstruct(tone_model, AudioBuffer(np.zeros(10, dtype=np.float32), RATE))


def test_decoded_distribution_rows_sum_to_one(tone_model):
    rng = np.random.default_rng(8)
    controls = decode_controls(tone_model, tone_track(1.0, rng))
    assert np.max(np.abs(controls.harmonic_distribution.sum(axis=1) - 1.0)) <= 1e-6


def test_generator_plugin_reconstruction_length(tone_model):
    profile = GeneratorProfile("hn_stub", "reconstruction", 2.0, 0.0, RATE)
    gen = HNGenerator(profile=profile, model=tone_model)
    rng = np.random.default_rng(9)
    source = tone_track(2.0, rng)
    sample = generate(gen, GenerationRequest(target_class=3, seed=0, prime_or_source=source))
    assert sample.inherited_label == 3
    assert len(sample.audio.samples) == len(source.samples)


def test_save_load_roundtrip(tmp_path, tone_model):
    path = tmp_path / "hn.pt"
    save_hn_model(tone_model, path)
    loaded = load_hn_model(path)
    rng = np.random.default_rng(10)
    source = tone_track(1.0, rng)
    a = hn_reconstruct(tone_model, source, seed=4)
    b = hn_reconstruct(loaded, source, seed=4)
    assert np.array_equal(a.audio.samples, b.audio.samples)
