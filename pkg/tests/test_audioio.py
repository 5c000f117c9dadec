import struct

import numpy as np
import pytest
from scipy.io import wavfile

from augmuse.audioio import AudioDecodeError, read_wav, write_wav


def write_pcm24(path, samples, rate):
    """Hand-rolled 24-bit PCM WAV (scipy cannot write this depth)."""
    ints = np.clip(np.round(samples * (2**23 - 1)), -(2**23), 2**23 - 1).astype(np.int32)
    payload = b"".join(struct.pack("<i", v)[:3] for v in ints)
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 3, 3, 24))
        fh.write(b"data" + struct.pack("<I", len(payload)) + payload)


def test_write_read_roundtrip_16bit(tmp_path):
    samples = np.linspace(-1.0, 1.0, 1000).astype(np.float32)
    path = tmp_path / "a.wav"
    write_wav(path, samples, 16000)
    read, rate = read_wav(path)
    assert rate == 16000
    # half-step quantization plus the 32767/32768 scale mismatch
    assert np.max(np.abs(read - samples)) <= 1.5 / 32768


def test_read_24bit_pcm(tmp_path):
    samples = np.array([0.0, 0.5, -0.5, 0.999, -0.999])
    path = tmp_path / "b.wav"
    write_pcm24(path, samples, 22050)
    read, rate = read_wav(path)
    assert rate == 22050
    assert np.max(np.abs(read - samples)) < 1e-4


def test_read_float32(tmp_path):
    samples = np.array([0.0, 1.5, -1.5], dtype=np.float32)  # out of range preserved
    path = tmp_path / "c.wav"
    wavfile.write(path, 8000, samples)
    read, rate = read_wav(path)
    assert np.allclose(read, samples)


def test_read_stereo_shape(tmp_path):
    stereo = np.stack([np.ones(100), -np.ones(100)], axis=1).astype(np.float32)
    path = tmp_path / "d.wav"
    wavfile.write(path, 44100, stereo)
    read, _ = read_wav(path)
    assert read.shape == (100, 2)


def test_missing_file_raises():
    with pytest.raises(AudioDecodeError):
        read_wav("/nonexistent/file.wav")


def test_corrupt_file_raises(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"not a wav at all")
    with pytest.raises(AudioDecodeError):
        read_wav(path)
