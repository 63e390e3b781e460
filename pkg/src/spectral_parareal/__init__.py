"""Parareal with spectral coarse solvers built from (randomized) SVDs of the
fine transfer operators, together with P1 finite-element heat problems, error
bounds and an experiment harness."""

from .coarse import EulerCoarse, SpectralCoarse, ZeroCoarse, fourier_coarse
from .experiment import ConfigError, ExperimentConfig, load_config, run, write_outputs
from .fem import PRESETS, assemble, build_problem, fourier_reference
from .linalg import EUCLIDEAN, InnerProduct
from .parareal import (
    BoundsInput,
    aposteriori_bound,
    apriori_bound,
    initialize,
    invariant_subspace_check,
    iterate,
    sequential_reference,
)
from .propagators import AffinePropagator, make_propagators
from .rsvd import RsvdConfig, exact_truncated_svd, randomized_svd

__version__ = "0.1.0"

__all__ = [
    "AffinePropagator",
    "BoundsInput",
    "ConfigError",
    "EUCLIDEAN",
    "EulerCoarse",
    "ExperimentConfig",
    "InnerProduct",
    "PRESETS",
    "RsvdConfig",
    "SpectralCoarse",
    "ZeroCoarse",
    "aposteriori_bound",
    "apriori_bound",
    "assemble",
    "build_problem",
    "exact_truncated_svd",
    "fourier_coarse",
    "fourier_reference",
    "initialize",
    "invariant_subspace_check",
    "iterate",
    "load_config",
    "make_propagators",
    "randomized_svd",
    "run",
    "sequential_reference",
    "write_outputs",
]
