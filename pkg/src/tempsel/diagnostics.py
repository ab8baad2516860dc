"""Sampler diagnostics: kinetic temperature summaries and rank-normalized split-R-hat.

R-hat is computed on a scalar per draw (the posterior energy), which is
invariant to permutations of the network weights.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from tempsel.errors import DegenerateInputError, InvalidInputError


def kinetic_summary(sample_set, discard_burn_in: bool = False) -> float:
    """Mean of the kinetic-temperature trace over the whole chain (or after burn-in)."""
    trace = np.asarray(getattr(sample_set, "kinetic_trace", sample_set), dtype=float)
    if discard_burn_in:
        trace = trace[sample_set.burn_in_steps:]
    if trace.size == 0:
        raise InvalidInputError("empty kinetic trace")
    return float(np.mean(trace))


def split_chains(series) -> np.ndarray:
    """``(C, S)`` -> ``(2C, S // 2)``, dropping the last draw when S is odd."""
    a = np.asarray(series, dtype=float)
    if a.ndim != 2:
        raise InvalidInputError("expected a (chains, draws) array")
    half = a.shape[1] // 2
    return np.concatenate([a[:, :half], a[:, half:2 * half]], axis=0)


def rank_normalize(values: np.ndarray) -> np.ndarray:
    """Phi^-1((r - 3/8) / (N + 1/4)) on pooled average ranks."""
    r = rankdata(values, method="average").reshape(values.shape)
    return ndtri((r - 0.375) / (values.size + 0.25))


def split_rhat(series, rank_normalized: bool = True) -> float:
    """Split-R-hat for ``series`` of shape ``(chains, draws)``.

    Needs at least 2 chains of at least 4 draws.  With ``m`` draws per
    half-chain, ``W`` the mean within-half variance and ``B`` m times the
    variance of half-chain means, returns sqrt(((m - 1)/m W + B/m) / W),
    computed on pooled rank-normal scores (default) or on the raw values.

    Rank normalisation makes the statistic invariant to monotone transforms
    but also bounds it: two completely separated chains give about 1.83
    however far apart they are.  The raw-value form keeps growing with the
    separation.
    """
    a = np.asarray(series, dtype=float)
    if a.ndim != 2 or a.shape[0] < 2 or a.shape[1] < 4:
        raise InvalidInputError("need at least 2 chains with at least 4 draws each")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("non-finite energies")
    z = split_chains(a)
    if rank_normalized:
        z = rank_normalize(z)
    m = z.shape[1]
    W = np.mean(np.var(z, axis=1, ddof=1))
    if not W > 0:
        raise DegenerateInputError("zero within-chain variance")
    B = m * np.var(np.mean(z, axis=1), ddof=1)
    return float(np.sqrt(((m - 1) / m * W + B / m) / W))


def split_rhat_rank_normalized(series) -> float:
    """Rank-normalized split-R-hat: ranks pooled over all half-chains, z = Phi^-1((r - 3/8) / (N + 1/4))."""
    return split_rhat(series, rank_normalized=True)


def energy_series(sample_sets) -> np.ndarray:
    """Stack the energy traces of several chains, truncated to a common length."""
    traces = [np.asarray(s.energy_trace, dtype=float) for s in sample_sets]
    S = min(len(t) for t in traces)
    return np.stack([t[:S] for t in traces])
