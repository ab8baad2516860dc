import math
from statistics import NormalDist, mean, variance

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tempsel.diagnostics import (energy_series, kinetic_summary, split_chains, split_rhat,
                                 split_rhat_rank_normalized)
from tempsel.errors import DegenerateInputError, InvalidInputError
from tempsel.sgmcmc import PosteriorSampleSet, SamplerConfig


def rhat_oracle(chains):
    """Independent pure-Python evaluation of rank-normalized split-R-hat."""
    S = len(chains[0]) // 2 * 2
    subs = []
    for c in chains:
        subs += [list(c[: S // 2]), list(c[S // 2: S])]
    pooled = sorted((v, i, j) for i, sub in enumerate(subs) for j, v in enumerate(sub))
    N = len(pooled)
    ranks = {}
    k = 0
    while k < N:
        l = k
        while l + 1 < N and pooled[l + 1][0] == pooled[k][0]:
            l += 1
        for t in range(k, l + 1):
            ranks[pooled[t][1:]] = (k + l) / 2 + 1
        k = l + 1
    nd = NormalDist()
    z = [[nd.inv_cdf((ranks[(i, j)] - 0.375) / (N + 0.25)) for j in range(len(sub))] for i, sub in enumerate(subs)]
    m = S // 2
    W = mean(variance(zz) for zz in z)
    B = m * variance([mean(zz) for zz in z])
    return math.sqrt(((m - 1) / m * W + B / m) / W)


def test_matches_oracle(rng):
    for _ in range(20):
        C, S = int(rng.integers(2, 5)), int(rng.integers(4, 40))
        a = rng.standard_normal((C, S)) + rng.uniform(0, 2, (C, 1))
        a[0, :3] = a[1, :3]  # some ties
        assert abs(split_rhat_rank_normalized(a) - rhat_oracle(a)) < 1e-12


def test_same_distribution_chains(rng):
    assert 0.99 <= split_rhat_rank_normalized(rng.standard_normal((2, 10000))) <= 1.01


def test_offset_chains(rng):
    a = rng.standard_normal((2, 10000))
    a[1] += 10
    r = split_rhat_rank_normalized(a)
    assert abs(r - rhat_oracle(a)) < 1e-9
    # Rank normalisation saturates: for two fully separated chains the half-chain
    # means of the scores are +-E|Z| and the within variance is 1 - 2/pi.
    w = 1 - 2 / math.pi
    b = 4 * (2 / math.pi) / 3
    assert abs(r - math.sqrt(1 + b / w)) < 0.01
    assert split_rhat(a, rank_normalized=False) > 3


def test_raw_split_rhat_matches_formula(rng):
    a = rng.standard_normal((3, 400)) + np.array([[0.0], [0.3], [-0.2]])
    z = split_chains(a)
    m = z.shape[1]
    W = z.var(axis=1, ddof=1).mean()
    B = m * z.mean(axis=1).var(ddof=1)
    assert abs(split_rhat(a, rank_normalized=False) - math.sqrt(((m - 1) / m * W + B / m) / W)) < 1e-12


def test_identical_subchains():
    seq = np.array([0.3, -1.0, 2.0, 0.5, 1.1])
    a = np.tile(np.concatenate([seq, seq]), (3, 1))
    m = 5
    assert abs(split_rhat_rank_normalized(a) - math.sqrt((m - 1) / m)) < 1e-12


def test_degenerate_and_invalid():
    with pytest.raises(DegenerateInputError):
        split_rhat_rank_normalized(np.ones((2, 10)))
    with pytest.raises(InvalidInputError):
        split_rhat_rank_normalized(np.ones((1, 10)))
    with pytest.raises(InvalidInputError):
        split_rhat_rank_normalized(np.zeros((2, 3)))


def test_odd_length_drops_last():
    a = np.arange(14.0).reshape(2, 7)
    s = split_chains(a)
    assert s.shape == (4, 3)
    np.testing.assert_array_equal(s[0], [0, 1, 2]) and np.testing.assert_array_equal(s[2], [3, 4, 5])


@given(st.integers(0, 2**32 - 1), st.sampled_from([np.exp, np.arctan, lambda v: v**3 + v, lambda v: 7 * v - 2]))
@settings(max_examples=40, deadline=None)
def test_monotone_transform_invariance(seed, f):
    a = np.random.default_rng(seed).standard_normal((3, 200))
    assert abs(split_rhat_rank_normalized(f(a)) - split_rhat_rank_normalized(a)) < 1e-12


def test_chain_permutation_invariance(rng):
    a = rng.standard_normal((4, 100)) + np.arange(4)[:, None] * 0.3
    assert abs(split_rhat_rank_normalized(a[[2, 0, 3, 1]]) - split_rhat_rank_normalized(a)) < 1e-12


def test_monotone_in_offset(rng):
    base = rng.standard_normal((2, 500))
    vals = []
    for off in np.linspace(0, 5, 11):
        a = base.copy()
        a[1] += off
        vals.append(split_rhat_rank_normalized(a))
    assert np.all(np.diff(vals) >= -1e-12)


def fake_set(kinetic, burn=0, energies=(1.0, 2.0)):
    cfg = SamplerConfig(cycle_length_epochs=1, ramp_start_epoch=0, ramp_end_epoch=0, burn_in_epochs=0, total_epochs=2)
    return PosteriorSampleSet(np.zeros((len(energies), 1)), np.asarray(kinetic, float), np.asarray(energies, float),
                              cfg, 0, burn_in_steps=burn)


def test_kinetic_summary():
    assert kinetic_summary(fake_set([0.3] * 10)) == pytest.approx(0.3, abs=1e-15)
    assert kinetic_summary(fake_set([0.5, 1.5])) == 1.0
    assert kinetic_summary(fake_set([9.0, 1.0, 1.0], burn=1), discard_burn_in=True) == 1.0
    with pytest.raises(InvalidInputError):
        kinetic_summary(fake_set([]))


def test_kinetic_summary_long_chain():
    from tempsel.analytic import ToyGaussianEnergy
    from tempsel.dataset import LabeledDataset
    from tempsel.sgmcmc import run_chain

    y = np.random.default_rng(0).standard_normal(100)
    cfg = SamplerConfig(learning_rate=0.01, momentum_decay=0.9, cycle_length_epochs=100, ramp_start_epoch=0,
                        ramp_end_epoch=0, burn_in_epochs=1000, total_epochs=31000, seed=1)
    s = run_chain(ToyGaussianEnergy(1.0, 1.0), LabeledDataset(np.zeros((100, 1)), y), cfg)
    assert abs(kinetic_summary(s, discard_burn_in=True) - 1.0) < 0.05


def test_energy_series_truncates():
    a, b = fake_set([1.0], energies=[1.0, 2.0, 3.0]), fake_set([1.0], energies=[4.0, 5.0])
    np.testing.assert_array_equal(energy_series([a, b]), [[1, 2], [4, 5]])
