"""Monte Carlo estimation of the Bayesian generalization error.

For one training set the generalization error is

    G_n = E_x[ log p(x | w0) - log (1/S) sum_s p(x | w_s) ],

with ``x`` drawn from the true model and ``w_s`` posterior draws.  The RLCT
estimate for a cell is ``n`` times the mean of ``G_n`` over trials.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .bayes_model import LOG_2PI, PriorSpec, draw_true_params, log_likelihood, sample_dataset
from .mcmc import DivergenceError, McmcConfig, PosteriorSamples, run_chain
from .seeding import derive_seed
from .tensor_core import CpParams, DimensionError, ModelSpec, compose

__all__ = [
    "TrialResult",
    "LambdaEstimate",
    "predictive_log_density",
    "estimate_gn",
    "run_trial",
    "estimate_lambda",
]

TEST_CHUNK = 2000

# Stream labels for derive_seed.
TRUTH, DATA, CHAIN, TEST = 0, 1, 2, 3


@dataclass
class TrialResult:
    g_n: float
    n_test: int
    mc_stderr: float
    redraw: int = 0
    dataset: int = 0
    accept_rate: float = float("nan")
    rhat: float = float("nan")
    ess: float = float("nan")

    def __post_init__(self):
        if self.n_test < 1:
            raise ValueError("n_test must be >= 1")
        if not self.mc_stderr >= 0:
            raise ValueError("mc_stderr must be nonnegative")


@dataclass
class LambdaEstimate:
    spec: ModelSpec
    trials: list = field(default_factory=list)
    truth_redraws: int = 5

    def __post_init__(self):
        if not self.trials:
            raise ValueError("LambdaEstimate needs at least one trial")

    @property
    def g_values(self) -> np.ndarray:
        return np.array([t.g_n for t in self.trials])

    @property
    def lambda_hat(self) -> float:
        return float(self.spec.n * np.mean(self.g_values))

    @property
    def lambda_std(self) -> float:
        """Standard deviation across trials, scaled by ``n``; 0 for one trial."""
        g = self.g_values
        if g.size < 2:
            return 0.0
        return float(self.spec.n * np.std(g, ddof=1))

    @property
    def lambda_stderr(self) -> float:
        return self.lambda_std / math.sqrt(len(self.trials))

    @property
    def accept_rate(self) -> float:
        return float(np.mean([t.accept_rate for t in self.trials]))

    @property
    def rhat(self) -> float:
        """Worst split-R-hat over trials."""
        return float(np.max([t.rhat for t in self.trials]))


def _log_mixture(x_flat: np.ndarray, means: np.ndarray, means_sq: np.ndarray) -> np.ndarray:
    # ||x - m||^2 expanded; rows of x_flat against rows of means
    sq = (
        np.einsum("ts,ts->t", x_flat, x_flat)[:, None]
        - 2.0 * (x_flat @ means.T)
        + means_sq[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    size = x_flat.shape[1]
    return (
        logsumexp(-0.5 * sq, axis=1)
        - math.log(means.shape[0])
        - 0.5 * size * LOG_2PI
    )


def predictive_log_density(x, samples: PosteriorSamples) -> float:
    """Log of the posterior-averaged density at a single tensor ``x``."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    x = np.asarray(x, dtype=float)
    if x.shape != samples.dims:
        raise DimensionError(f"tensor shape {x.shape} does not match {samples.dims}")
    ll = [log_likelihood(x, w) for w in samples]
    return float(logsumexp(ll) - math.log(len(ll)))


def predictive_log_density_batch(xs, samples: PosteriorSamples) -> np.ndarray:
    """``predictive_log_density`` for a stack of tensors of shape ``(t, I, J, K)``."""
    xs = np.asarray(xs, dtype=float)
    if xs.shape[1:] != samples.dims:
        raise DimensionError(f"tensor shape {xs.shape[1:]} does not match {samples.dims}")
    means = samples.tensors.reshape(len(samples), -1)
    means_sq = np.einsum("sd,sd->s", means, means)
    flat = xs.reshape(xs.shape[0], -1)
    out = np.empty(xs.shape[0])
    for start in range(0, flat.shape[0], TEST_CHUNK):
        stop = start + TEST_CHUNK
        out[start:stop] = _log_mixture(flat[start:stop], means, means_sq)
    return out


def estimate_gn(w0: CpParams, samples: PosteriorSamples, n_test: int, seed) -> TrialResult:
    """Monte Carlo estimate of ``G_n`` with ``n_test`` fresh draws from the truth."""
    if n_test < 1:
        raise ValueError(f"n_test must be >= 1, got {n_test}")
    w0.check_dims(samples.dims)
    rng = np.random.default_rng(seed)
    mean = compose(w0)
    noise = rng.standard_normal((n_test, *mean.shape))
    xs = mean + noise
    flat_noise = noise.reshape(n_test, -1)
    log_true = -0.5 * mean.size * LOG_2PI - 0.5 * np.einsum("ts,ts->t", flat_noise, flat_noise)
    diff = log_true - predictive_log_density_batch(xs, samples)
    stderr = float(np.std(diff, ddof=1) / math.sqrt(n_test)) if n_test > 1 else 0.0
    return TrialResult(g_n=float(diff.mean()), n_test=n_test, mc_stderr=stderr)


def run_trial(spec: ModelSpec, prior: PriorSpec, mcmc: McmcConfig, seed: int,
              redraw: int, dataset: int, n_test: int = 10000,
              trace_path=None) -> TrialResult:
    """One (truth redraw, dataset) trial; fully determined by its arguments."""
    w0 = draw_true_params(spec, derive_seed(seed, spec.key(), redraw, TRUTH))
    if not prior.contains(w0):
        raise ValueError(
            f"prior support (half width {prior.scale}) does not contain the true parameter"
        )
    data = sample_dataset(w0, spec.n, derive_seed(seed, spec.key(), redraw, dataset, DATA),
                          spec=spec)
    cfg = McmcConfig(**{**mcmc.__dict__,
                        "seed": derive_seed(seed, spec.key(), redraw, dataset, CHAIN)})
    try:
        samples = run_chain(data, prior, cfg, truth=w0, record_trace=trace_path is not None)
    except DivergenceError as exc:
        raise DivergenceError(f"redraw {redraw}, dataset {dataset}: {exc}") from exc
    if trace_path is not None:
        samples.output.write_trace(trace_path)
    result = estimate_gn(w0, samples, n_test,
                         derive_seed(seed, spec.key(), redraw, dataset, TEST))
    result.redraw, result.dataset = redraw, dataset
    result.accept_rate, result.rhat, result.ess = samples.accept_rate, samples.rhat, samples.ess
    return result


def estimate_lambda(spec: ModelSpec, prior: PriorSpec, mcmc: McmcConfig,
                    datasets_per_cell: int = 2, truth_redraws: int = 5, seed: int = 0,
                    n_test: int = 10000, executor: Executor | None = None) -> LambdaEstimate:
    """Estimate the RLCT of one cell as ``n`` times the mean ``G_n`` over trials.

    Trials are indexed by (truth redraw, dataset); each derives its own seeds
    from ``seed``, so the result does not depend on ``executor``.
    """
    if datasets_per_cell < 1 or truth_redraws < 1:
        raise ValueError("datasets_per_cell and truth_redraws must be >= 1")
    jobs = [(r, d) for r in range(truth_redraws) for d in range(datasets_per_cell)]
    if executor is None:
        trials = [run_trial(spec, prior, mcmc, seed, r, d, n_test) for r, d in jobs]
    else:
        futures = [executor.submit(run_trial, spec, prior, mcmc, seed, r, d, n_test)
                   for r, d in jobs]
        trials = [f.result() for f in futures]
    return LambdaEstimate(spec, trials, truth_redraws)
