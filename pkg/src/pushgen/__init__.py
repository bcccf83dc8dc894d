"""Generative models as smooth push-forwards of a uniform latent law.

Samplers, generator families, contaminated data synthesis, integral
probability metrics (exact W1 included), chain-rule constants, the ERM
generator and the Monte Carlo studies that check its error rates.
"""
__version__ = "0.1.0"

from .contamination import DataSpec, Dataset, HuberMixture, CustomPoints, synthesize, synthesize_huber
from .erm import ErmGenerator, ErmProblem, ErmSolution, audit_oracle_inequality, empirical_objective, fit
from .exceptions import PushgenError
from .generators import GeneratorSpec, affine, coordinate_trig, identity
from .ipm import IpmSpec, distance, projection_ipm, w1_empirical, w1_exact_1d, walpha_ipm
from .measures import DiscreteMeasure, UniformInterval
from .sampling import SeedPolicy, Stream, sample_latent
from .smoothness import composition_constant, verify_composition_bound
from .experiments import (contamination_sweep, huber_indistinguishability_check, lower_bound_check,
                          noise_sweep, rate_study)

__all__ = [
    "CustomPoints", "DataSpec", "Dataset", "DiscreteMeasure", "ErmGenerator", "ErmProblem", "ErmSolution",
    "GeneratorSpec", "HuberMixture", "IpmSpec", "PushgenError", "SeedPolicy", "Stream", "UniformInterval",
    "affine", "audit_oracle_inequality", "composition_constant", "contamination_sweep", "coordinate_trig",
    "distance", "empirical_objective", "fit", "huber_indistinguishability_check", "identity",
    "lower_bound_check", "noise_sweep", "projection_ipm", "rate_study", "sample_latent", "synthesize",
    "synthesize_huber", "verify_composition_bound", "w1_empirical", "w1_exact_1d", "walpha_ipm",
]
