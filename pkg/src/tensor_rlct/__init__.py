"""RLCT upper bounds and Monte Carlo RLCT estimates for the CP tensor model."""

from .bayes_model import (
    Dataset,
    PriorSpec,
    draw_true_params,
    log_likelihood,
    log_prior,
    sample_dataset,
)
from .gen_error import (
    LambdaEstimate,
    TrialResult,
    estimate_gn,
    estimate_lambda,
    predictive_log_density,
)
from .mcmc import McmcConfig, PosteriorSamples, log_posterior_unnorm, run_chain
from .rlct_bounds import RlctBound, reference_bounds, rrr_rlct, tensor_rlct_bound
from .tensor_core import CpParams, ModelSpec, compose, frobenius_sq, kl_divergence

__version__ = "0.1.0"
