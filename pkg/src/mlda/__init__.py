"""Multilevel delayed-acceptance MCMC with an adaptive coarse-model error correction."""

from .aem import BiasModel, BiasPairModel, bias_sample, corrected_log_likelihood, offline_moments, update_moments
from .diagnostics import acceptance_rate, autocorrelation, effective_sample_size, es_per_second
from .estimator import MultilevelSamples, error_trace, mlda_estimate, standard_estimate
from .model import (
    ContractViolation,
    EvaluationError,
    LevelPartition,
    LevelState,
    ModelHierarchy,
    PosteriorLevel,
    join_state,
    log_likelihood,
    log_posterior,
    split_state,
)
from .proposals import (
    DemczProposal,
    IdentityFineProposal,
    PriorFineProposal,
    RandomWalkFineProposal,
    RandomWalkProposal,
    SubchainPmf,
)
from .random_field import CovarianceKernel, KLExpansion, realize_field
from .rng import stream
from .samplers import ChainRecord, MldaConfig, StartupError, da_run, mh_run, mlda_run, rst_run, tlda_run

__all__ = [
    "BiasModel", "BiasPairModel", "ChainRecord", "ContractViolation", "CovarianceKernel", "DemczProposal",
    "EvaluationError", "IdentityFineProposal", "KLExpansion", "LevelPartition", "LevelState", "MldaConfig",
    "ModelHierarchy", "MultilevelSamples", "PosteriorLevel", "PriorFineProposal", "RandomWalkFineProposal",
    "RandomWalkProposal", "StartupError", "SubchainPmf", "acceptance_rate", "autocorrelation", "bias_sample",
    "corrected_log_likelihood", "da_run", "effective_sample_size", "error_trace", "es_per_second",
    "join_state", "log_likelihood", "log_posterior", "mh_run", "mlda_estimate", "mlda_run", "offline_moments",
    "realize_field", "rst_run", "split_state", "standard_estimate", "stream", "tlda_run", "update_moments",
]
