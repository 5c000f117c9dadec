from .config import ExperimentConfig, load_config
from .experiments import (
    ComparisonTable,
    classify_generated,
    compare,
    run_augmented,
    run_baseline,
)
from .synthetic import (
    SyntheticClassGenerator,
    WhiteNoiseGenerator,
    make_synthetic_corpus,
    synthetic_generator_for,
)

__all__ = [
    "ComparisonTable",
    "ExperimentConfig",
    "SyntheticClassGenerator",
    "WhiteNoiseGenerator",
    "classify_generated",
    "compare",
    "load_config",
    "make_synthetic_corpus",
    "run_augmented",
    "run_baseline",
    "synthetic_generator_for",
]
