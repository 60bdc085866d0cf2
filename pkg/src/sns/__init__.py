"""Pseudo-spectral toolkit for the stochastic Navier-Stokes equation on the 2D torus."""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    ContractViolation,
    ResourceError,
    SpectralField,
    TensorField,
    TorusGrid,
    leray_project,
    nonlinear_term,
    sym_tensor,
    to_physical,
    to_spectral,
)
from .lp import BesovIndex, DyadicSystem, besov_norm, dyadic_system, freq_project, lp_block  # noqa: E402
from .noise import NoiseSpectrum, NoiseStream, StochasticConvolution  # noqa: E402
from .config import ExperimentConfig, load_config, parse_config  # noqa: E402
from .solver import NumericalBlowUp, run_trajectory  # noqa: E402

__all__ = [
    "ContractViolation",
    "ResourceError",
    "SpectralField",
    "TensorField",
    "TorusGrid",
    "leray_project",
    "nonlinear_term",
    "sym_tensor",
    "to_physical",
    "to_spectral",
    "BesovIndex",
    "DyadicSystem",
    "besov_norm",
    "dyadic_system",
    "freq_project",
    "lp_block",
    "NoiseSpectrum",
    "NoiseStream",
    "StochasticConvolution",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "NumericalBlowUp",
    "run_trajectory",
]
