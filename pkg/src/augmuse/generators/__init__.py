from .base import (
    DDSP_PROFILE,
    JUKEBOX_PROFILE,
    SAMPLERNN_PROFILE,
    GeneratedSample,
    GenerationError,
    GenerationRequest,
    Generator,
    GeneratorProfile,
    Provenance,
    external_scan,
    generate,
    write_samples,
)
from .harmonic import HNConfig, HNGenerator, HNModel, hn_reconstruct, hn_train, load_hn_model, save_hn_model
from .synth import SynthControls, harmonic_synth, noise_synth
from .tiered import (
    TieredConfig,
    TieredGenerator,
    TieredModel,
    load_tiered_model,
    mu_law_decode,
    mu_law_encode,
    save_tiered_model,
    tiered_continue,
    tiered_train,
)

__all__ = [
    "DDSP_PROFILE",
    "JUKEBOX_PROFILE",
    "SAMPLERNN_PROFILE",
    "GeneratedSample",
    "GenerationError",
    "GenerationRequest",
    "Generator",
    "GeneratorProfile",
    "HNConfig",
    "HNGenerator",
    "HNModel",
    "Provenance",
    "SynthControls",
    "TieredConfig",
    "TieredGenerator",
    "TieredModel",
    "external_scan",
    "generate",
    "harmonic_synth",
    "hn_reconstruct",
    "hn_train",
    "load_hn_model",
    "load_tiered_model",
    "mu_law_decode",
    "mu_law_encode",
    "noise_synth",
    "save_hn_model",
    "save_tiered_model",
    "tiered_continue",
    "tiered_train",
    "write_samples",
]
