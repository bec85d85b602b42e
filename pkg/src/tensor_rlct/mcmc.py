"""Posterior sampling for the CP model by adaptive random-walk Metropolis.

The proposal perturbs every coordinate with ``N(0, step^2)`` noise.  The step
size of each chain is tuned during burn-in only and frozen afterwards, so the
retained draws come from a fixed Metropolis kernel.  All chains are advanced
together as one ``(chains, dim)`` array.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bayes_model import LOG_2PI, Dataset, PriorSpec, log_prior
from .diagnostics import effective_sample_size, split_rhat
from .tensor_core import CpParams, DimensionError, ModelSpec, compose_batch

__all__ = [
    "ConfigError",
    "DivergenceError",
    "McmcConfig",
    "SamplerOutput",
    "PosteriorSamples",
    "metropolis",
    "log_posterior_unnorm",
    "batch_log_posterior",
    "run_chain",
]

INIT_PAD_SCALE = 0.1


class ConfigError(ValueError):
    """Inconsistent sampler or experiment configuration."""


class DivergenceError(RuntimeError):
    """The log target evaluated to NaN."""


@dataclass(frozen=True)
class McmcConfig:
    total_iters: int = 30000
    burn_in: int = 10000
    thin: int = 20
    target_samples: int = 1000
    initial_step: float = 0.05
    adapt_window: int = 50
    target_accept: float = 0.3
    chains: int = 4
    seed: int = 0
    adapt: bool = True
    init: str = "truth"
    overdispersed_scale: float = 1.0

    def __post_init__(self):
        for name in ("total_iters", "thin", "target_samples", "chains", "adapt_window"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.burn_in < self.total_iters:
            raise ConfigError(
                f"burn_in must satisfy 0 <= burn_in < total_iters, got "
                f"burn_in={self.burn_in}, total_iters={self.total_iters}"
            )
        if self.per_chain_kept * self.chains < self.target_samples or (
            self.per_chain_kept < math.ceil(self.target_samples / self.chains)
        ):
            raise ConfigError(
                f"(total_iters - burn_in) / thin = {self.per_chain_kept} retained draws per "
                f"chain cannot supply target_samples={self.target_samples} over "
                f"{self.chains} chains"
            )
        if not self.initial_step > 0:
            raise ConfigError(f"initial_step must be positive, got {self.initial_step}")
        if not 0 < self.target_accept < 1:
            raise ConfigError(f"target_accept must lie in (0, 1), got {self.target_accept}")
        if self.init not in ("truth", "overdispersed"):
            raise ConfigError(f"init must be 'truth' or 'overdispersed', got {self.init!r}")

    @property
    def per_chain_kept(self) -> int:
        return (self.total_iters - self.burn_in) // self.thin


@dataclass
class SamplerOutput:
    """Pooled draws of a flat parameter vector plus run statistics."""

    draws: np.ndarray
    accept_rate: float
    chain_accept: np.ndarray
    final_step: np.ndarray
    rhat: float
    ess: float
    kept_log_target: np.ndarray
    trace: np.ndarray | None = field(default=None, repr=False)

    def write_trace(self, path) -> None:
        """CSV with one row per (iteration, chain)."""
        if self.trace is None:
            raise ValueError("sampler was run without trace recording")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "chain", "log_posterior", "step", "accepted"])
            for t, rows in enumerate(self.trace):
                for c, (lp, step, acc) in enumerate(rows):
                    writer.writerow([t, c, repr(float(lp)), repr(float(step)), int(acc)])


def _pool_indices(n_kept: int, count: int) -> np.ndarray:
    return (np.arange(count) * n_kept) // count


def metropolis(
    log_target: Callable[[np.ndarray], np.ndarray],
    init,
    config: McmcConfig,
    record_trace: bool = False,
) -> SamplerOutput:
    """Run ``config.chains`` random-walk Metropolis chains.

    Parameters
    ----------
    log_target : callable
        Maps a ``(chains, dim)`` array to the ``(chains,)`` unnormalized log
        density.  ``-inf`` marks points outside the support.
    init : array_like, shape (chains, dim)
        Starting states; each must have finite log density.
    config : McmcConfig
    record_trace : bool
        Keep per-iteration log density, step and accept flag.

    Returns
    -------
    SamplerOutput
        ``draws`` has shape ``(config.target_samples, dim)``, chain-major.
    """
    rng = np.random.default_rng(config.seed)
    x = np.array(init, dtype=float)
    if x.ndim != 2 or x.shape[0] != config.chains:
        raise ConfigError(f"init must have shape ({config.chains}, dim), got {x.shape}")
    c, d = x.shape
    lp = np.asarray(log_target(x), dtype=float)
    if np.isnan(lp).any():
        raise DivergenceError("log target is NaN at the initial state")
    if not np.isfinite(lp).all():
        raise ConfigError("initial state lies outside the support of the target")

    step = np.full(c, float(config.initial_step))
    window_acc = np.zeros(c)
    post_acc = np.zeros(c)
    n_kept = config.per_chain_kept
    kept = np.empty((c, n_kept, d))
    kept_lp = np.empty((c, n_kept))
    trace = np.empty((config.total_iters, c, 3)) if record_trace else None
    burn_in, thin, window = config.burn_in, config.thin, config.adapt_window

    for t in range(config.total_iters):
        prop = x + step[:, None] * rng.standard_normal((c, d))
        lp_prop = np.asarray(log_target(prop), dtype=float)
        if np.isnan(lp_prop).any():
            raise DivergenceError(f"log target is NaN at iteration {t}")
        accept = np.log(rng.random(c)) < lp_prop - lp
        x[accept] = prop[accept]
        lp[accept] = lp_prop[accept]
        if trace is not None:
            trace[t, :, 0] = lp
            trace[t, :, 1] = step
            trace[t, :, 2] = accept
        if t < burn_in:
            window_acc += accept
            if config.adapt and (t + 1) % window == 0:
                step *= np.exp(0.5 * (window_acc / window - config.target_accept))
                window_acc[:] = 0.0
        else:
            post_acc += accept
            k, r = divmod(t - burn_in + 1, thin)
            if r == 0 and k <= n_kept:
                kept[:, k - 1] = x
                kept_lp[:, k - 1] = lp

    n_post = config.total_iters - burn_in
    base, extra = divmod(config.target_samples, c)
    pooled = []
    for chain in range(c):
        count = base + (1 if chain < extra else 0)
        pooled.append(kept[chain, _pool_indices(n_kept, count)])
    chain_accept = post_acc / n_post
    return SamplerOutput(
        draws=np.concatenate(pooled, axis=0),
        accept_rate=float(chain_accept.mean()),
        chain_accept=chain_accept,
        final_step=step,
        rhat=split_rhat(kept_lp),
        ess=effective_sample_size(kept_lp),
        kept_log_target=kept_lp,
        trace=trace,
    )


class PosteriorSamples:
    """Posterior draws of ``(A, B, C)`` for one dataset.

    Stored as stacked factor arrays of shape ``(S, I, H)``, ``(S, J, H)`` and
    ``(S, K, H)``.  Indexing and iteration yield ``CpParams``.
    """

    def __init__(self, A, B, C, accept_rate=float("nan"), rhat=float("nan"),
                 ess=float("nan"), output: SamplerOutput | None = None):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.C = np.asarray(C, dtype=float)
        if not (self.A.shape[0] == self.B.shape[0] == self.C.shape[0]):
            raise DimensionError("factor stacks hold different sample counts")
        if not (self.A.shape[2] == self.B.shape[2] == self.C.shape[2]):
            raise DimensionError("factor stacks have different ranks")
        self.accept_rate = accept_rate
        self.rhat = rhat
        self.ess = ess
        self.output = output
        self._tensors = None

    @classmethod
    def from_params(cls, params, **kwargs) -> "PosteriorSamples":
        params = list(params)
        if not params:
            raise ValueError("need at least one sample")
        return cls(
            np.stack([p.A for p in params]),
            np.stack([p.B for p in params]),
            np.stack([p.C for p in params]),
            **kwargs,
        )

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.A.shape[1], self.B.shape[1], self.C.shape[1])

    @property
    def rank(self) -> int:
        return self.A.shape[2]

    def __len__(self):
        return self.A.shape[0]

    def __getitem__(self, s) -> CpParams:
        return CpParams(self.A[s], self.B[s], self.C[s])

    def __iter__(self):
        return (self[s] for s in range(len(self)))

    @property
    def tensors(self) -> np.ndarray:
        """Composed means, shape ``(S, I, J, K)``."""
        if self._tensors is None:
            self._tensors = compose_batch(self.A, self.B, self.C)
        return self._tensors


def _split_batch(w: np.ndarray, dims, rank):
    I, J, K = dims
    c = w.shape[0]
    a, b = I * rank, (I + J) * rank
    return (
        w[:, :a].reshape(c, I, rank),
        w[:, a:b].reshape(c, J, rank),
        w[:, b:].reshape(c, K, rank),
    )


def batch_log_posterior(data: Dataset | None, prior: PriorSpec, dims, rank):
    """Vectorized unnormalized log posterior over flat parameter rows.

    Uses the sufficient statistics ``sum_i X_i`` and ``sum_i ||X_i||^2``, so
    the cost per evaluation does not depend on ``n``.
    """
    size = int(np.prod(dims))
    if data is not None:
        if tuple(data.spec.dims) != tuple(dims):
            raise DimensionError(f"dataset dims {data.spec.dims} do not match {tuple(dims)}")
        n = len(data)
        total = data.total.ravel()
        const = -0.5 * n * size * LOG_2PI - 0.5 * data.sum_sq
    scale = prior.scale
    d = sum(dims) * rank
    gauss_const = -d * (math.log(scale) + 0.5 * LOG_2PI)

    def log_target(w: np.ndarray) -> np.ndarray:
        if prior.kind == "gaussian":
            out = -0.5 * np.einsum("cd,cd->c", w, w) / scale**2 + gauss_const
        else:
            inside = np.max(np.abs(w), axis=1) <= scale
            out = np.where(inside, 0.0, -np.inf)
        if data is not None:
            T = compose_batch(*_split_batch(w, dims, rank)).reshape(w.shape[0], size)
            out = out + const + T @ total - 0.5 * n * np.einsum("cs,cs->c", T, T)
        return out

    return log_target


def log_posterior_unnorm(w: CpParams, data: Dataset | None, prior: PriorSpec) -> float:
    """``log prior(w) + sum_i log p(X_i | w)``; ``data=None`` is the empty sample."""
    lp = log_prior(w, prior)
    if data is None or lp == -math.inf:
        return lp
    w.check_dims(data.spec.dims)
    resid = data.tensors - np.einsum("ih,jh,kh->ijk", w.A, w.B, w.C)
    return lp - 0.5 * data.tensors.size * LOG_2PI - 0.5 * float(np.sum(resid * resid))


def initial_states(config: McmcConfig, spec: ModelSpec, prior: PriorSpec,
                   truth: CpParams | None, rng: np.random.Generator) -> np.ndarray:
    """Starting rows for each chain.

    With ``config.init == "truth"`` each chain starts at ``truth`` padded with
    ``H - H0`` columns of ``N(0, 0.1^2)`` entries; otherwise every entry is
    ``N(0, overdispersed_scale^2)``.
    """
    dims, H = spec.dims, spec.H
    rows = []
    for _ in range(config.chains):
        if config.init == "truth" and truth is not None:
            truth.check_dims(dims)
            if truth.rank > H:
                raise DimensionError(f"truth rank {truth.rank} exceeds model rank {H}")
            pad = H - truth.rank
            mats = [
                np.hstack([m, INIT_PAD_SCALE * rng.standard_normal((m.shape[0], pad))])
                for m in (truth.A, truth.B, truth.C)
            ]
            rows.append(CpParams(*mats).to_vector())
        else:
            rows.append(config.overdispersed_scale * rng.standard_normal(sum(dims) * H))
    init = np.array(rows)
    if prior.kind == "uniform_box":
        init = np.clip(init, -0.99 * prior.scale, 0.99 * prior.scale)
    return init


def run_chain(data: Dataset, prior: PriorSpec, config: McmcConfig,
              truth: CpParams | None = None, record_trace: bool = False) -> PosteriorSamples:
    """Sample the posterior of the rank-``data.spec.H`` model given ``data``."""
    spec = data.spec
    init_rng = np.random.default_rng([config.seed, 1])
    init = initial_states(config, spec, prior, truth, init_rng)
    out = metropolis(batch_log_posterior(data, prior, spec.dims, spec.H), init, config,
                     record_trace=record_trace)
    A, B, C = _split_batch(out.draws, spec.dims, spec.H)
    return PosteriorSamples(A, B, C, accept_rate=out.accept_rate, rhat=out.rhat,
                            ess=out.ess, output=out)
