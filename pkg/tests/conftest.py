import numpy as np
import pytest

from augmuse.corpus import AudioBuffer
from augmuse.pipeline.synthetic import make_synthetic_corpus


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """Small (12 min) 4-class synthetic corpus shared across test modules."""
    root = tmp_path_factory.mktemp("mini_corpus")
    info = make_synthetic_corpus(root, n_classes=4, hours=0.2, rate=16000, seed=11, track_s=30.0)
    return info


def sine_buffer(freq_hz: float, seconds: float = 1.0, rate: int = 16000, amplitude: float = 0.8) -> AudioBuffer:
    t = np.arange(int(seconds * rate)) / rate
    return AudioBuffer((amplitude * np.sin(2 * np.pi * freq_hz * t)).astype(np.float32), rate)


@pytest.fixture
def sine_440():
    return sine_buffer(440.0)
