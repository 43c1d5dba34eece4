"""Hidden Potts image segmentation fitted by Monte Carlo EM."""

from .core import Lattice, ModelParams, SufficientStats, build_lattice, complete_loglik, sufficient_stats
from .inference import (
    ObservedInformation,
    PosteriorSummary,
    assess_fit,
    louis_information,
    observed_loglik,
    posterior_summary,
    select_model,
    standard_errors,
    threshold_map,
)
from .mcem import BondCurve, FitResult, McemConfig, estimate_bond_curve, fit, log_partition
from .sampler import exact_enumerate, sw_posterior_sweep, sw_prior_sweep
from .seeding import chain_rng, derive_seed

__version__ = "0.1.0"

__all__ = [
    "BondCurve", "FitResult", "Lattice", "McemConfig", "ModelParams", "ObservedInformation", "PosteriorSummary",
    "SufficientStats", "assess_fit", "build_lattice", "chain_rng", "complete_loglik", "derive_seed",
    "estimate_bond_curve", "exact_enumerate", "fit", "log_partition", "louis_information", "observed_loglik",
    "posterior_summary", "select_model", "standard_errors", "sufficient_stats", "sw_posterior_sweep",
    "sw_prior_sweep", "threshold_map",
]
