"""WAV reading/writing and decoder hooks.

Reads 16/24/32-bit integer PCM and 32/64-bit float WAV via scipy; other
codecs can be plugged in through a decoder callable. All audio is exposed
as float arrays in [-1, 1].
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

import numpy as np
from scipy.io import wavfile

# A decoder maps a file path to (samples [n] or [n, channels] float, rate).
Decoder = Callable[[Path], tuple[np.ndarray, int]]


class AudioDecodeError(Exception):
    """Raised when an audio file cannot be decoded."""


_INT_SCALE = {
    np.dtype(np.int16): 2.0**15,
    np.dtype(np.int32): 2.0**31,
    np.dtype(np.uint8): None,  # offset binary, handled separately
}


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a WAV file to float64 samples in [-1, 1] (shape [n] or [n, ch]).

    24-bit PCM arrives from scipy upshifted into int32, so the int32 scale
    applies to both depths.
    """
    path = Path(path)
    if not path.is_file():
        raise AudioDecodeError(f"no such audio file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except Exception as exc:
        raise AudioDecodeError(f"cannot decode {path}: {exc}") from exc
    if data.size == 0:
        raise AudioDecodeError(f"zero-length audio: {path}")
    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.int16, np.int32):
        samples = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioDecodeError(f"unsupported WAV sample format {data.dtype} in {path}")
    if not np.all(np.isfinite(samples)):
        raise AudioDecodeError(f"non-finite samples in {path}")
    return samples, int(rate)


def write_wav(path: str | Path, samples: np.ndarray, rate: int) -> None:
    """Write mono or multichannel float samples as 16-bit PCM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype(np.int16)
    wavfile.write(str(path), int(rate), pcm)
