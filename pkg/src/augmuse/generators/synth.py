"""Harmonic-plus-noise synthesis primitives.

The torch cores are differentiable and shared by the reconstructor's
training loss; the module-level functions are the plain numpy surface. All
phase accumulation happens in float64 so synthesized sinusoids track their
closed forms to well below 1e-3 over multi-second renders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..corpus import AudioBuffer
from ..features import ControlTrack


@dataclass(frozen=True)
class SynthControls:
    """Full control decomposition for one audio segment, one shared frame rate."""

    f0: ControlTrack
    loudness: ControlTrack
    z: np.ndarray  # [frames, z_dim] latent
    harmonic_amps: np.ndarray  # [frames] global amplitude A
    harmonic_distribution: np.ndarray  # [frames, K] weights c_k, rows sum to 1
    noise_mags: np.ndarray  # [frames, M] noise filter magnitude response

    def __post_init__(self) -> None:
        frames = len(self.f0.values)
        for name, arr in (
            ("loudness", self.loudness.values),
            ("z", self.z),
            ("harmonic_amps", self.harmonic_amps),
            ("harmonic_distribution", self.harmonic_distribution),
            ("noise_mags", self.noise_mags),
        ):
            if arr.shape[0] != frames:
                raise ValueError(f"{name} has {arr.shape[0]} frames, f0 has {frames}")
        if self.f0.frame_rate_hz != self.loudness.frame_rate_hz:
            raise ValueError("all control tracks must share one frame rate")
        if np.any(self.harmonic_amps < 0) or np.any(self.noise_mags < 0):
            raise ValueError("amplitudes and noise magnitudes must be non-negative")
        if np.any(self.harmonic_distribution < 0):
            raise ValueError("harmonic distribution weights must be non-negative")
        sums = self.harmonic_distribution.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ValueError("harmonic distribution rows must sum to 1")

    @property
    def frame_rate_hz(self) -> float:
        return self.f0.frame_rate_hz


def _upsample_linear_batch(frames: torch.Tensor, n_samples: int) -> torch.Tensor:
    """Linear interpolation of [B, T, C] frame controls to [B, n_samples, C]."""
    t = frames.transpose(1, 2)  # [B, C, T]
    if t.shape[-1] == 1:
        return frames.expand(-1, n_samples, -1)
    out = torch.nn.functional.interpolate(t, size=n_samples, mode="linear", align_corners=True)
    return out.transpose(1, 2)


def harmonic_stack_batch(
    f0_frames: torch.Tensor,
    amp_frames: torch.Tensor,
    dist_frames: torch.Tensor,
    sample_rate_hz: int,
    n_samples: int,
) -> torch.Tensor:
    """Differentiable bank of harmonic oscillators over a batch.

    x[t] = A(t) sum_k c_k(t) sin(2 pi k * cumulative f0 / rate), with any
    harmonic at or above Nyquist muted sample-by-sample. Inputs are
    [B, T] / [B, T] / [B, T, K]; output is [B, n_samples]. Phase accumulates
    in float64 and is reduced mod 2 pi before the harmonic multiply, so the
    compute dtype can stay float32 without phase blow-up.
    """
    dtype = dist_frames.dtype
    n_harmonics = dist_frames.shape[2]
    f0_up = _upsample_linear_batch(f0_frames.unsqueeze(2), n_samples)[:, :, 0]
    amp_up = _upsample_linear_batch(amp_frames.unsqueeze(2), n_samples)[:, :, 0]
    dist_up = _upsample_linear_batch(dist_frames, n_samples)

    # Exclusive cumulative phase: phase[0] = 0.
    omega = f0_up.to(torch.float64) * (2.0 * np.pi / sample_rate_hz)
    phase = torch.remainder(torch.cumsum(omega, dim=1) - omega, 2.0 * np.pi).to(dtype)

    k = torch.arange(1, n_harmonics + 1, dtype=torch.float64)
    audible = (f0_up.to(torch.float64)[:, :, None] * k[None, None, :] < sample_rate_hz / 2.0).to(dtype)

    partial_phase = torch.remainder(phase[:, :, None] * k.to(dtype)[None, None, :], 2.0 * np.pi)
    return amp_up * torch.sum(torch.sin(partial_phase) * dist_up * audible, dim=2)


def harmonic_stack(
    f0_frames: torch.Tensor,
    amp_frames: torch.Tensor,
    dist_frames: torch.Tensor,
    sample_rate_hz: int,
    n_samples: int,
) -> torch.Tensor:
    """Single-signal wrapper around :func:`harmonic_stack_batch`."""
    return harmonic_stack_batch(
        f0_frames.unsqueeze(0), amp_frames.unsqueeze(0), dist_frames.unsqueeze(0), sample_rate_hz, n_samples
    )[0]


def _band_kernel(n_bands: int, n_bins: int, dtype: torch.dtype) -> torch.Tensor:
    """[n_bands, n_bins] overlapping cos^2 bumps forming a partition of unity."""
    spacing = (n_bins - 1) / (n_bands - 1)
    bins = torch.arange(n_bins, dtype=torch.float64)
    centers = torch.arange(n_bands, dtype=torch.float64) * spacing
    u = (bins[None, :] - centers[:, None]) / spacing
    kernel = torch.cos(np.pi / 2.0 * u.clamp(-1.0, 1.0)) ** 2
    kernel = torch.where(u.abs() < 1.0, kernel, torch.zeros_like(kernel))
    return kernel.to(dtype)


def filtered_noise_batch(
    mag_frames: torch.Tensor,
    noise_blocks: torch.Tensor,
    fir_length: int = 257,
) -> torch.Tensor:
    """Differentiable per-frame FIR filtering of noise blocks, overlap-added.

    mag_frames: [B, T, M] band magnitudes, spread across the FIR's frequency
    bins by overlapping raised-cosine bumps (a lone band stays concentrated
    while flat magnitudes stay exactly flat). noise_blocks: [B, T, block].
    Returns [B, T * block] with the linear-phase delay removed.
    """
    dtype = mag_frames.dtype
    batch, n_frames, block = noise_blocks.shape
    n_samples = n_frames * block

    n_bins = fir_length // 2 + 1
    if mag_frames.shape[2] != n_bins:
        mags = mag_frames @ _band_kernel(mag_frames.shape[2], n_bins, dtype)
    else:
        mags = mag_frames
    ir = torch.fft.irfft(
        mags.to(torch.complex128 if dtype == torch.float64 else torch.complex64), n=fir_length, dim=2
    )
    ir = torch.roll(ir, fir_length // 2, dims=2)
    ir = ir * torch.hann_window(fir_length, periodic=False, dtype=dtype)

    out_len = block + fir_length - 1
    fft_len = 1 << int(np.ceil(np.log2(out_len)))
    conv = torch.fft.irfft(
        torch.fft.rfft(noise_blocks, n=fft_len, dim=2) * torch.fft.rfft(ir, n=fft_len, dim=2),
        n=fft_len,
        dim=2,
    )[:, :, :out_len]

    total = (n_frames - 1) * block + out_len
    folded = torch.nn.functional.fold(
        conv.transpose(1, 2),  # [B, out_len, T] patches
        output_size=(1, total),
        kernel_size=(1, out_len),
        stride=(1, block),
    ).reshape(batch, total)
    delay = fir_length // 2
    return folded[:, delay : delay + n_samples]


def filtered_noise(
    mag_frames: torch.Tensor,
    sample_rate_hz: int,
    n_samples: int,
    seed: int,
    fir_length: int = 257,
) -> torch.Tensor:
    """Seeded single-signal wrapper around :func:`filtered_noise_batch`."""
    n_frames = mag_frames.shape[0]
    block = n_samples // n_frames
    if block * n_frames != n_samples:
        raise ValueError(f"n_samples {n_samples} must be a multiple of n_frames {n_frames}")
    gen = torch.Generator().manual_seed(seed)
    noise = torch.rand((1, n_frames, block), generator=gen, dtype=torch.float64).to(mag_frames.dtype) * 2.0 - 1.0
    return filtered_noise_batch(mag_frames.unsqueeze(0), noise, fir_length)[0]


def _frames_to_samples(n_frames: int, frame_rate_hz: float, sample_rate_hz: int) -> int:
    hop = int(round(sample_rate_hz / frame_rate_hz))
    return n_frames * hop


def harmonic_synth(
    f0: ControlTrack,
    harmonic_amps: np.ndarray,
    harmonic_distribution: np.ndarray,
    sample_rate_hz: int,
) -> AudioBuffer:
    """Render the harmonic stack from frame-rate controls."""
    if np.any(f0.values < 0):
        raise ValueError("f0 must be non-negative (0 encodes unvoiced)")
    if np.any(np.asarray(harmonic_amps) < 0) or np.any(np.asarray(harmonic_distribution) < 0):
        raise ValueError("amplitudes and distribution weights must be non-negative")
    n_samples = _frames_to_samples(len(f0.values), f0.frame_rate_hz, sample_rate_hz)
    audio = harmonic_stack(
        torch.as_tensor(f0.values, dtype=torch.float64),
        torch.as_tensor(np.asarray(harmonic_amps), dtype=torch.float64),
        torch.as_tensor(np.asarray(harmonic_distribution), dtype=torch.float64),
        sample_rate_hz,
        n_samples,
    )
    return AudioBuffer(samples=audio.numpy().astype(np.float32), sample_rate_hz=sample_rate_hz)


def noise_synth(
    noise_mags: np.ndarray,
    sample_rate_hz: int,
    seed: int,
    frame_rate_hz: float = 250.0,
) -> AudioBuffer:
    """Render per-frame filtered noise from [frames, M] band magnitudes."""
    noise_mags = np.asarray(noise_mags, dtype=np.float64)
    if noise_mags.ndim != 2:
        raise ValueError("noise_mags must be [frames, bands]")
    if np.any(noise_mags < 0):
        raise ValueError("noise magnitudes must be non-negative")
    n_samples = _frames_to_samples(noise_mags.shape[0], frame_rate_hz, sample_rate_hz)
    audio = filtered_noise(torch.as_tensor(noise_mags), sample_rate_hz, n_samples, seed)
    return AudioBuffer(samples=audio.numpy().astype(np.float32), sample_rate_hz=sample_rate_hz)


def render_controls(controls: SynthControls, sample_rate_hz: int, seed: int) -> AudioBuffer:
    """Harmonic plus noise, summed (no clipping here; callers decide policy)."""
    harmonic = harmonic_synth(controls.f0, controls.harmonic_amps, controls.harmonic_distribution, sample_rate_hz)
    noise = noise_synth(controls.noise_mags, sample_rate_hz, seed, controls.frame_rate_hz)
    n = min(len(harmonic.samples), len(noise.samples))
    return AudioBuffer(samples=harmonic.samples[:n] + noise.samples[:n], sample_rate_hz=sample_rate_hz)
