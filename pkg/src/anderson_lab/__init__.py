"""Finite-volume random Schrödinger operators: spectral shift, overlaps and localization statistics."""

from .config import ConfigError, ModelConfig, SingleSiteLaw, Tolerances, load_model_config
from .mc import EstimatorResult, RealizationError, mc_expectation
from .model import (DisorderRealization, Hamiltonian, apply_perturbation, build_hamiltonian,
                    restrict_dirichlet, sample_realization)
from .spectral import SpectralData, counting_function, eig, operator_norm, resolvent_block, schatten_norm

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ModelConfig", "SingleSiteLaw", "Tolerances", "load_model_config",
    "EstimatorResult", "RealizationError", "mc_expectation",
    "DisorderRealization", "Hamiltonian", "apply_perturbation", "build_hamiltonian",
    "restrict_dirichlet", "sample_realization",
    "SpectralData", "counting_function", "eig", "operator_norm", "resolvent_block", "schatten_norm",
    "__version__",
]
