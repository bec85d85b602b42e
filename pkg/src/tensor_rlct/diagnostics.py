"""Convergence diagnostics for multi-chain MCMC output."""

from __future__ import annotations

import numpy as np

__all__ = ["split_rhat", "effective_sample_size"]


def split_rhat(chains) -> float:
    """Split-R-hat of a scalar quantity.

    Parameters
    ----------
    chains : array_like, shape (n_chains, n_draws)
        Draws of one scalar per chain.  Each chain is cut in half, so at
        least four draws per chain are needed.

    Returns
    -------
    float
        The potential scale reduction factor; ``nan`` if undefined.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected (n_chains, n_draws), got shape {x.shape}")
    half = x.shape[1] // 2
    if half < 2:
        return float("nan")
    x = np.concatenate([x[:, :half], x[:, -half:]], axis=0)
    m, n = x.shape
    within = np.mean(np.var(x, axis=1, ddof=1))
    between = n * np.var(np.mean(x, axis=1), ddof=1)
    if within == 0:
        return 1.0 if between == 0 else float("inf")
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def _autocorr(x: np.ndarray) -> np.ndarray:
    """Autocorrelation of each row, via zero-padded FFT."""
    n = x.shape[-1]
    centered = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, size, axis=-1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n] / n
    with np.errstate(invalid="ignore", divide="ignore"):
        return acov / acov[..., :1]


def effective_sample_size(chains) -> float:
    """Multi-chain ESS with Geyer's initial positive sequence truncation."""
    x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    m, n = x.shape
    if n < 4:
        return float(m * n)
    chain_var = np.var(x, axis=1, ddof=1)
    within = chain_var.mean()
    if within == 0:
        return float(m * n)
    var_plus = within * (n - 1) / n
    if m > 1:
        var_plus += np.var(x.mean(axis=1), ddof=1)
    acf = _autocorr(x)
    rho = 1.0 - (within - np.mean(chain_var[:, None] * acf, axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    # Sum consecutive pairs while they stay positive.
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)
