"""Backward Euler for the stochastic Allen-Cahn equation with additive
Q-Wiener noise, in the sine eigenbasis of the Dirichlet Laplacian on (0, 1)."""

from .config import RunConfig, parse_config, serialize_config
from .convolution import convolution_error_experiment, discrete_convolution
from .errors import BasisMismatch, ConfigError, HypothesisError, NewtonDivergence, ProvenanceMismatch
from .noise import NoiseSpec, WienerRecord, coarsen, hs_norm, sample_coupled_convolution, sample_increments
from .rates import RateReport, fit_rate
from .scheme import (
    PotentialParams,
    SchemeParams,
    Trajectory,
    backward_euler_step,
    default_initial,
    reference_solution,
    simulate_path,
)
from .spectral import EigenBasis, SpectralField, build_basis

__all__ = [
    "BasisMismatch", "ConfigError", "EigenBasis", "HypothesisError", "NewtonDivergence", "NoiseSpec",
    "PotentialParams", "ProvenanceMismatch", "RateReport", "RunConfig", "SchemeParams", "SpectralField",
    "Trajectory", "WienerRecord", "backward_euler_step", "build_basis", "coarsen", "convolution_error_experiment",
    "default_initial", "discrete_convolution", "fit_rate", "hs_norm", "parse_config", "reference_solution",
    "sample_coupled_convolution", "sample_increments", "serialize_config", "simulate_path",
]
