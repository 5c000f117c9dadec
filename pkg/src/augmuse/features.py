"""Deterministic signal processing: resampling, mel-spectrograms, loudness, F0.

All operations are pure functions of (audio, config); repeated calls return
bit-identical arrays, which is what makes the disk cache safe.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .corpus import AudioBuffer

CONTROL_KINDS = ("f0_hz", "loudness_db", "confidence")

LOUDNESS_FLOOR_DB = -120.0


@dataclass(frozen=True)
class MelConfig:
    sample_rate_hz: int = 16000
    window: int = 1024
    hop: int = 512
    n_mels: int = 96
    fmin_hz: float = 20.0
    fmax_hz: float = 7600.0
    log_eps: float = 1e-6

    @property
    def frame_rate_hz(self) -> float:
        return self.sample_rate_hz / self.hop

    def fingerprint(self) -> str:
        payload = repr((self.sample_rate_hz, self.window, self.hop, self.n_mels, self.fmin_hz, self.fmax_hz, self.log_eps))
        return hashlib.sha1(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray  # [num_frames, n_mels] log-magnitudes
    frame_rate_hz: float
    config_fingerprint: str


@dataclass(frozen=True)
class ControlTrack:
    values: np.ndarray
    frame_rate_hz: float
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in CONTROL_KINDS:
            raise ValueError(f"unknown control kind {self.kind!r}")


def resample(buffer: AudioBuffer, target_rate_hz: int) -> AudioBuffer:
    """Band-limited polyphase resample; identity when rates already match."""
    if target_rate_hz <= 0:
        raise ValueError("target_rate_hz must be positive")
    if not (4_000 <= target_rate_hz <= 192_000):
        raise ValueError(f"target rate {target_rate_hz} outside [4000, 192000]")
    if target_rate_hz == buffer.sample_rate_hz:
        return buffer
    ratio = Fraction(target_rate_hz, buffer.sample_rate_hz)
    out = resample_poly(buffer.samples.astype(np.float64), ratio.numerator, ratio.denominator)
    return AudioBuffer(samples=out.astype(np.float32), sample_rate_hz=target_rate_hz)


def frame_count(n_samples: int, hop: int) -> int:
    """Center-framing rule: one frame per hop whose center index lies in [0, n)."""
    return -(-n_samples // hop)


def _frame_centered(samples: np.ndarray, window: int, hop: int) -> np.ndarray:
    """[n_frames, window] slices centered at multiples of hop, reflection-padded."""
    n = len(samples)
    n_frames = frame_count(n, hop)
    half = window // 2
    padded = np.pad(samples.astype(np.float64), (half, half + window), mode="reflect")
    idx = np.arange(n_frames)[:, None] * hop + np.arange(window)[None, :]
    return padded[idx]


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Triangular filters [n_mels, n_bins] (peak 1) and their center frequencies."""
    n_bins = cfg.window // 2 + 1
    bin_hz = np.arange(n_bins) * cfg.sample_rate_hz / cfg.window
    corners = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2))
    bank = np.zeros((cfg.n_mels, n_bins))
    for j in range(cfg.n_mels):
        lo, center, hi = corners[j], corners[j + 1], corners[j + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        bank[j] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank, corners[1:-1]


def mel_spectrogram(buffer: AudioBuffer, cfg: MelConfig | None = None) -> MelSpectrogram:
    """STFT magnitude -> mel filterbank -> log(x + eps)."""
    cfg = cfg or MelConfig()
    if buffer.sample_rate_hz != cfg.sample_rate_hz:
        raise ValueError(f"buffer rate {buffer.sample_rate_hz} != mel config rate {cfg.sample_rate_hz}")
    if len(buffer.samples) < cfg.window:
        raise ValueError(f"buffer ({len(buffer.samples)} samples) shorter than one window ({cfg.window})")
    frames = _frame_centered(buffer.samples, cfg.window, cfg.hop)
    win = np.hanning(cfg.window + 1)[:-1]
    mags = np.abs(np.fft.rfft(frames * win, axis=1))
    bank, _ = mel_filterbank(cfg)
    mel = np.log(mags @ bank.T + cfg.log_eps)
    return MelSpectrogram(
        frames=mel.astype(np.float32),
        frame_rate_hz=cfg.frame_rate_hz,
        config_fingerprint=cfg.fingerprint(),
    )


def a_weighting_db(freq_hz: np.ndarray) -> np.ndarray:
    """IEC 61672 A-weighting curve in dB (0 dB near 1 kHz)."""
    f = np.asarray(freq_hz, dtype=np.float64)
    f2 = np.maximum(f, 1e-6) ** 2
    ra = (12194.0**2 * f2**2) / (
        (f2 + 20.6**2)
        * np.sqrt((f2 + 107.7**2) * (f2 + 737.9**2))
        * (f2 + 12194.0**2)
    )
    return 20.0 * np.log10(np.maximum(ra, 1e-30)) + 2.0


def loudness(buffer: AudioBuffer, frame_rate_hz: float, window: int = 1024) -> ControlTrack:
    """Per-frame A-weighted log RMS power in dB, floored at -120 dB."""
    rate = buffer.sample_rate_hz
    hop = int(round(rate / frame_rate_hz))
    if hop < 1:
        raise ValueError("frame_rate_hz too high for the sample rate")
    frames = _frame_centered(buffer.samples, window, hop)
    win = np.hanning(window + 1)[:-1]
    spec = np.abs(np.fft.rfft(frames * win, axis=1))
    freqs = np.arange(spec.shape[1]) * rate / window
    weights = 10.0 ** (a_weighting_db(freqs) / 20.0)
    weighted = spec * weights[None, :]
    # Parseval scaling so an unweighted full-scale sine reads ~-3 dB.
    power = (weighted[:, 0] ** 2 + 2.0 * np.sum(weighted[:, 1:-1] ** 2, axis=1) + weighted[:, -1] ** 2) / (
        window * np.sum(win**2)
    )
    db = 10.0 * np.log10(power + 10.0 ** (LOUDNESS_FLOOR_DB / 10.0))
    db = np.maximum(db, LOUDNESS_FLOOR_DB)
    return ControlTrack(values=db.astype(np.float32), frame_rate_hz=frame_rate_hz, kind="loudness_db")


def estimate_f0(
    buffer: AudioBuffer,
    frame_rate_hz: float,
    f0_range_hz: tuple[float, float] = (50.0, 2000.0),
    voicing_threshold: float = 0.85,
) -> tuple[ControlTrack, ControlTrack]:
    """YIN-style F0 with parabolic interpolation; unvoiced frames emit f0 = 0.

    Confidence is 1 minus the cumulative-mean-normalized difference at the
    chosen lag; frames below ``voicing_threshold`` are unvoiced.
    """
    rate = buffer.sample_rate_hz
    f0_min, f0_max = f0_range_hz
    if not (20.0 < f0_min < f0_max < rate / 2):
        raise ValueError(f"f0 range {f0_range_hz} outside (20, {rate / 2})")
    hop = int(round(rate / frame_rate_hz))
    tau_min = max(2, int(rate / f0_max))
    tau_max = int(np.ceil(rate / f0_min))
    window = 2 * tau_max
    seg = window + tau_max + 1

    n = len(buffer.samples)
    n_frames = frame_count(n, hop)
    half = seg // 2
    padded = np.pad(buffer.samples.astype(np.float64), (half, half + seg))
    idx = np.arange(n_frames)[:, None] * hop + np.arange(seg)[None, :]
    frames = padded[idx]

    # Difference function d(tau) = E(0) + E(tau) - 2 r(tau), via FFT correlation.
    sq = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(frames**2, axis=1)], axis=1)
    energy = sq[:, window : window + tau_max + 1] - sq[:, 0 : tau_max + 1]
    nfft = 1 << int(np.ceil(np.log2(seg + window)))
    spec_full = np.fft.rfft(frames, n=nfft, axis=1)
    spec_win = np.fft.rfft(frames[:, :window], n=nfft, axis=1)
    corr = np.fft.irfft(np.conj(spec_win) * spec_full, n=nfft, axis=1)[:, : tau_max + 1]
    diff = energy[:, :1] + energy - 2.0 * corr
    diff = np.maximum(diff, 0.0)

    # Cumulative-mean normalization; d'(0) := 1.
    cum = np.cumsum(diff[:, 1:], axis=1)
    taus = np.arange(1, tau_max + 1, dtype=np.float64)
    cmndf = np.ones_like(diff)
    cmndf[:, 1:] = diff[:, 1:] * taus[None, :] / np.maximum(cum, 1e-12)

    trough_threshold = 0.1  # classic YIN absolute threshold
    band = cmndf[:, tau_min : tau_max + 1]
    interior = band[:, 1:-1]
    is_min = (interior <= band[:, :-2]) & (interior <= band[:, 2:])
    candidates = is_min & (interior < trough_threshold)
    # First sufficiently deep trough, else the global minimum of the band.
    first = np.argmax(candidates, axis=1)
    has_candidate = candidates.any(axis=1)
    fallback = np.argmin(band, axis=1)
    tau_star = np.where(has_candidate, first + 1 + tau_min, fallback + tau_min)

    rows = np.arange(n_frames)
    tau_star = np.clip(tau_star, tau_min, tau_max - 1)
    d_prev = cmndf[rows, tau_star - 1]
    d_mid = cmndf[rows, tau_star]
    d_next = cmndf[rows, tau_star + 1]
    denom = d_prev - 2.0 * d_mid + d_next
    offset = np.where(np.abs(denom) > 1e-12, 0.5 * (d_prev - d_next) / np.where(denom == 0, 1.0, denom), 0.0)
    offset = np.clip(offset, -0.5, 0.5)

    confidence = np.clip(1.0 - cmndf[rows, tau_star], 0.0, 1.0)
    # Digital silence yields a zero difference function (cmndf ~ 0 everywhere);
    # gate on frame energy before trusting it.
    silent = np.sqrt(energy[:, 0] / window) < 1e-4
    confidence = np.where(silent, 0.0, confidence)
    voiced = confidence >= voicing_threshold
    f0 = np.where(voiced, rate / (tau_star + offset), 0.0)
    f0 = np.where((f0 >= f0_min) & (f0 <= f0_max), f0, 0.0)
    confidence = np.where(f0 > 0, confidence, np.minimum(confidence, voicing_threshold - 1e-6))

    return (
        ControlTrack(values=f0.astype(np.float32), frame_rate_hz=frame_rate_hz, kind="f0_hz"),
        ControlTrack(values=confidence.astype(np.float32), frame_rate_hz=frame_rate_hz, kind="confidence"),
    )


class FeatureCache:
    """Disk cache for per-track feature arrays, keyed by (track_id, fingerprint).

    Entries are .npy files: magic \\x93NUMPY, format version, then a header
    recording shape/dtype - enough to validate on read.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, track_id: str, fingerprint: str) -> Path:
        safe = re.sub(r"[^A-Za-z0-9_.-]", "_", track_id)
        if safe != track_id:
            safe = f"{safe}-{hashlib.sha1(track_id.encode()).hexdigest()[:8]}"
        return self.directory / f"{safe}__{fingerprint}.npy"

    def get(self, track_id: str, fingerprint: str) -> np.ndarray | None:
        path = self._path(track_id, fingerprint)
        if not path.is_file():
            return None
        return np.load(path)

    def put(self, track_id: str, fingerprint: str, array: np.ndarray) -> None:
        np.save(self._path(track_id, fingerprint), array)
