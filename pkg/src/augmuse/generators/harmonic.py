"""Harmonic-plus-noise reconstructor: controls in, synthesizer parameters out.

An autoencoder in the DDSP mold: deterministic F0/loudness extraction plus a
learned per-frame latent feed a decoder that emits global amplitude, the
harmonic distribution, and noise-band magnitudes. Training minimizes a
multi-scale spectral loss between input audio and its resynthesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from ..corpus import AudioBuffer
from ..features import ControlTrack, MelConfig, estimate_f0, loudness, mel_spectrogram
from .base import GeneratedSample, GenerationRequest, GeneratorProfile, Provenance
from .synth import SynthControls, filtered_noise_batch, harmonic_stack_batch

DEFAULT_FFT_SIZES = (2048, 1024, 512, 256, 128, 64)


def exp_sigmoid(x: torch.Tensor, max_value: float = 2.0, threshold: float = 1e-10) -> torch.Tensor:
    """Smooth non-negative squashing with a long low tail."""
    return max_value * torch.sigmoid(x) ** np.log(10.0) + threshold


def multiscale_spectral_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    fft_sizes: Sequence[int] = DEFAULT_FFT_SIZES,
    log_eps: float = 1e-6,
) -> torch.Tensor:
    """Sum over FFT sizes of L1 distance between magnitude spectrograms plus
    L1 between their logs. 75% overlap at every scale."""
    total = pred.new_zeros(())
    for n_fft in fft_sizes:
        hop = max(1, n_fft // 4)
        window = torch.hann_window(n_fft, dtype=pred.dtype)
        spec_p = torch.stft(pred, n_fft, hop, window=window, center=True, return_complex=True).abs()
        spec_t = torch.stft(target, n_fft, hop, window=window, center=True, return_complex=True).abs()
        total = total + (spec_p - spec_t).abs().mean()
        total = total + (torch.log(spec_p + log_eps) - torch.log(spec_t + log_eps)).abs().mean()
    return total


@dataclass(frozen=True)
class HNConfig:
    sample_rate_hz: int = 16000
    frame_rate_hz: float = 250.0
    n_harmonics: int = 64
    n_noise_bands: int = 65
    z_dim: int = 16
    hidden_size: int = 128
    n_mels: int = 48
    learning_rate: float = 1e-3
    batch_size: int = 8
    segment_s: float = 1.0
    epochs: int = 10
    steps_per_epoch: int = 30
    seed: int = 0
    f0_range_hz: tuple[float, float] = (50.0, 2000.0)
    voicing_threshold: float = 0.5
    polyphony_confidence: float = 0.93
    loss_fft_sizes: tuple[int, ...] = DEFAULT_FFT_SIZES

    @property
    def hop(self) -> int:
        hop = int(round(self.sample_rate_hz / self.frame_rate_hz))
        if hop * self.frame_rate_hz != self.sample_rate_hz:
            raise ValueError("frame_rate_hz must divide sample_rate_hz")
        return hop

    def mel_config(self) -> MelConfig:
        return MelConfig(
            sample_rate_hz=self.sample_rate_hz,
            window=4 * self.hop,
            hop=self.hop,
            n_mels=self.n_mels,
            fmax_hz=min(7600.0, self.sample_rate_hz / 2 - 100.0),
        )


class HNNet(nn.Module):
    """Conv encoder for z plus a per-frame MLP decoder into synth controls."""

    def __init__(self, cfg: HNConfig):
        super().__init__()
        self.cfg = cfg
        h = cfg.hidden_size
        self.encoder = nn.Sequential(
            nn.Conv1d(cfg.n_mels, h, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.Conv1d(h, cfg.z_dim, kernel_size=3, padding=1),
        )
        self.decoder_in = nn.Linear(2 + cfg.z_dim, h)
        self.decoder_hidden = nn.Linear(h, h)
        self.head_amp = nn.Linear(h, 1)
        self.head_dist = nn.Linear(h, cfg.n_harmonics)
        self.head_noise = nn.Linear(h, cfg.n_noise_bands)

    def encode(self, mel: torch.Tensor) -> torch.Tensor:
        """mel [B, T, n_mels] -> z [B, T, z_dim]."""
        return self.encoder(mel.transpose(1, 2)).transpose(1, 2)

    def decode(
        self, f0: torch.Tensor, loud: torch.Tensor, z: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Per-frame controls: amp [B, T], distribution [B, T, K], noise [B, T, M]."""
        f0_scaled = torch.log1p(f0) / np.log1p(self.cfg.sample_rate_hz / 2.0)
        loud_scaled = (loud + 120.0) / 120.0
        x = torch.cat([f0_scaled.unsqueeze(2), loud_scaled.unsqueeze(2), z], dim=2)
        x = torch.relu(self.decoder_in(x))
        x = torch.relu(self.decoder_hidden(x))
        # Unvoiced frames (f0 = 0) synthesize nothing harmonic; gating the
        # amplitude keeps it well-defined there instead of gradient-dead.
        amp = exp_sigmoid(self.head_amp(x))[:, :, 0] * (f0 > 0).to(x.dtype)
        dist = exp_sigmoid(self.head_dist(x))
        dist = dist / dist.sum(dim=2, keepdim=True)
        noise = exp_sigmoid(self.head_noise(x) - 5.0)
        return amp, dist, noise

    def forward(self, mel: torch.Tensor, f0: torch.Tensor, loud: torch.Tensor):
        return self.decode(f0, loud, self.encode(mel))


@dataclass
class HNModel:
    net: HNNet
    config: HNConfig
    loss_history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class _Controls:
    f0: np.ndarray
    confidence: np.ndarray
    loud: np.ndarray
    mel: np.ndarray


def _extract_controls(buffer: AudioBuffer, cfg: HNConfig) -> _Controls:
    f0, conf = estimate_f0(buffer, cfg.frame_rate_hz, cfg.f0_range_hz, voicing_threshold=cfg.voicing_threshold)
    loud = loudness(buffer, cfg.frame_rate_hz)
    mel = mel_spectrogram(buffer, cfg.mel_config())
    return _Controls(f0=f0.values, confidence=conf.values, loud=loud.values, mel=mel.frames)


def _synthesize(
    net: HNNet,
    controls: _Controls,
    n_samples: int,
    noise_blocks: torch.Tensor,
) -> torch.Tensor:
    cfg = net.cfg
    f0 = torch.from_numpy(controls.f0).unsqueeze(0)
    loud = torch.from_numpy(controls.loud).unsqueeze(0)
    mel = torch.from_numpy(controls.mel).unsqueeze(0)
    amp, dist, noise_mags = net(mel, f0, loud)
    harm = harmonic_stack_batch(f0, amp, dist, cfg.sample_rate_hz, n_samples)
    noise = filtered_noise_batch(noise_mags, noise_blocks)
    return (harm + noise)[0]


def hn_train(train_set: Sequence[AudioBuffer], cfg: HNConfig) -> HNModel:
    """Multi-scale spectral reconstruction training; seed-deterministic."""
    if not train_set:
        raise ValueError("empty training set")
    seg_len = int(round(cfg.segment_s * cfg.sample_rate_hz))
    seg_len -= seg_len % cfg.hop
    seg_frames = seg_len // cfg.hop

    audio_segments: list[np.ndarray] = []
    control_segments: list[_Controls] = []
    for buf in train_set:
        if buf.sample_rate_hz != cfg.sample_rate_hz:
            raise ValueError(f"training audio at {buf.sample_rate_hz} Hz, config wants {cfg.sample_rate_hz}")
        controls = _extract_controls(buf, cfg)
        for start in range(0, len(buf.samples) - seg_len + 1, seg_len):
            fstart = start // cfg.hop
            audio_segments.append(buf.samples[start : start + seg_len])
            control_segments.append(
                _Controls(
                    f0=controls.f0[fstart : fstart + seg_frames],
                    confidence=controls.confidence[fstart : fstart + seg_frames],
                    loud=controls.loud[fstart : fstart + seg_frames],
                    mel=controls.mel[fstart : fstart + seg_frames],
                )
            )
    if not audio_segments:
        raise ValueError(f"no training segment of {cfg.segment_s} s fits the given audio")

    torch.manual_seed(cfg.seed)
    net = HNNet(cfg)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    noise_gen = torch.Generator().manual_seed(cfg.seed)

    f0_all = torch.from_numpy(np.stack([c.f0 for c in control_segments]))
    loud_all = torch.from_numpy(np.stack([c.loud for c in control_segments]))
    mel_all = torch.from_numpy(np.stack([c.mel for c in control_segments]))
    audio_all = torch.from_numpy(np.stack(audio_segments))

    history: list[float] = []
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for _ in range(cfg.steps_per_epoch):
            idx = torch.from_numpy(rng.integers(0, len(audio_segments), size=cfg.batch_size))
            amp, dist, noise_mags = net(mel_all[idx], f0_all[idx], loud_all[idx])
            harm = harmonic_stack_batch(f0_all[idx], amp, dist, cfg.sample_rate_hz, seg_len)
            blocks = torch.rand((cfg.batch_size, seg_frames, cfg.hop), generator=noise_gen) * 2.0 - 1.0
            pred = harm + filtered_noise_batch(noise_mags, blocks)
            loss = multiscale_spectral_loss(pred, audio_all[idx], cfg.loss_fft_sizes)
            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged (non-finite loss) at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
        history.append(float(np.mean(epoch_losses)))
    return HNModel(net=net, config=cfg, loss_history=history)


def reconstruction_loss(model: HNModel, buffers: Sequence[AudioBuffer], seed: int = 0) -> float:
    """Mean multi-scale spectral loss of resynthesis over the given audio."""
    losses = [
        float(
            multiscale_spectral_loss(
                torch.from_numpy(hn_reconstruct(model, buf, seed=seed).audio.samples[: _trim(buf, model.config)]),
                torch.from_numpy(buf.samples[: _trim(buf, model.config)]),
                model.config.loss_fft_sizes,
            )
        )
        for buf in buffers
    ]
    return float(np.mean(losses))


def silence_loss(buffers: Sequence[AudioBuffer], cfg: HNConfig) -> float:
    """Loss of the all-zero baseline output on the same audio."""
    losses = [
        float(
            multiscale_spectral_loss(
                torch.zeros(_trim(buf, cfg)), torch.from_numpy(buf.samples[: _trim(buf, cfg)]), cfg.loss_fft_sizes
            )
        )
        for buf in buffers
    ]
    return float(np.mean(losses))


def _trim(buffer: AudioBuffer, cfg: HNConfig) -> int:
    return len(buffer.samples) - len(buffer.samples) % cfg.hop


def hn_reconstruct(
    model: HNModel,
    source: AudioBuffer,
    target_class: int = 0,
    source_track_id: str = "",
    seed: int = 0,
) -> GeneratedSample:
    """Encode, decode, resynthesize; clipping and voicing anomalies are flagged."""
    cfg = model.config
    if source.sample_rate_hz != cfg.sample_rate_hz:
        raise ValueError(f"source at {source.sample_rate_hz} Hz, model wants {cfg.sample_rate_hz}")
    n_samples = _trim(source, cfg)
    if n_samples < cfg.hop:
        raise ValueError("source too short to reconstruct")
    trimmed = AudioBuffer(source.samples[:n_samples], cfg.sample_rate_hz)
    controls = _extract_controls(trimmed, cfg)

    with torch.no_grad():
        noise_gen = torch.Generator().manual_seed(seed)
        blocks = torch.rand((1, n_samples // cfg.hop, cfg.hop), generator=noise_gen) * 2.0 - 1.0
        audio = _synthesize(model.net, controls, n_samples, blocks).numpy()

    flags: list[str] = []
    voiced = controls.f0 > 0
    if not voiced.any():
        flags.append("noise_only")
    elif float(controls.confidence[voiced].mean()) < cfg.polyphony_confidence:
        flags.append("polyphonic_approximation")
    clip_fraction = float(np.mean(np.abs(audio) > 1.0))
    flags.append(f"clip_fraction={clip_fraction:.4f}")
    if clip_fraction > 0.05:
        flags.append("heavy_clipping")
    audio = np.clip(audio, -1.0, 1.0).astype(np.float32)

    return GeneratedSample(
        audio=AudioBuffer(samples=audio, sample_rate_hz=cfg.sample_rate_hz),
        inherited_label=target_class,
        provenance=Provenance("hn_reconstructor", source_track_id, seed, "reconstruction"),
        flags=tuple(flags),
    )


def decode_controls(model: HNModel, source: AudioBuffer) -> SynthControls:
    """Expose the decoder's control decomposition for a source (analysis aid)."""
    cfg = model.config
    n_samples = _trim(source, cfg)
    trimmed = AudioBuffer(source.samples[:n_samples], cfg.sample_rate_hz)
    controls = _extract_controls(trimmed, cfg)
    with torch.no_grad():
        f0 = torch.from_numpy(controls.f0).unsqueeze(0)
        loud = torch.from_numpy(controls.loud).unsqueeze(0)
        z = model.net.encode(torch.from_numpy(controls.mel).unsqueeze(0))
        amp, dist, noise = model.net.decode(f0, loud, z)
    return SynthControls(
        f0=ControlTrack(controls.f0, cfg.frame_rate_hz, "f0_hz"),
        loudness=ControlTrack(controls.loud, cfg.frame_rate_hz, "loudness_db"),
        z=z[0].numpy(),
        harmonic_amps=amp[0].numpy(),
        harmonic_distribution=dist[0].numpy(),
        noise_mags=noise[0].numpy(),
    )


HN_CHECKPOINT_FORMAT = "augmuse-hn/1"


def save_hn_model(model: HNModel, path) -> None:
    from dataclasses import asdict
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": HN_CHECKPOINT_FORMAT,
            "config": asdict(model.config),
            "state_dict": model.net.state_dict(),
            "loss_history": model.loss_history,
        },
        path,
    )


def load_hn_model(path) -> HNModel:
    payload = torch.load(path, weights_only=False)
    if payload.get("format") != HN_CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {payload.get('format')!r}")
    raw = dict(payload["config"])
    raw["f0_range_hz"] = tuple(raw["f0_range_hz"])
    raw["loss_fft_sizes"] = tuple(raw["loss_fft_sizes"])
    cfg = HNConfig(**raw)
    net = HNNet(cfg)
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return HNModel(net=net, config=cfg, loss_history=payload["loss_history"])


@dataclass
class HNGenerator:
    """Reconstruction-mode plug-in around a trained harmonic-plus-noise model."""

    profile: GeneratorProfile
    model: HNModel

    def generate(self, request: GenerationRequest) -> GeneratedSample:
        assert request.prime_or_source is not None
        sample = hn_reconstruct(
            self.model,
            request.prime_or_source,
            target_class=request.target_class,
            source_track_id=request.source_track_id,
            seed=request.seed,
        )
        return GeneratedSample(
            audio=sample.audio,
            inherited_label=sample.inherited_label,
            provenance=Provenance(self.profile.name, request.source_track_id, request.seed, self.profile.mode),
            flags=sample.flags,
        )
