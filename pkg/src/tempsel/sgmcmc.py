"""SGHMC sampling of exp(-U(theta) / T).

Symplectic Euler on the momentum SDE with a linear temperature ramp during
burn-in, a constant step size h0 until burn-in ends and a cyclical cosine
step size afterwards.  One sample is kept at the last step of every cycle.

The sampler only needs an *energy* object exposing ``num_params``,
``layer_slices()``, ``value(theta, data)`` and
``minibatch_grad(theta, batch, n_total)``; see
:class:`tempsel.model.PosteriorEnergy`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from tempsel.dataset import LabeledDataset
from tempsel.errors import ConfigError, DivergenceError, InvalidInputError

logger = logging.getLogger(__name__)

MASS_FLOOR = 1e-8


@dataclass(frozen=True)
class SamplerConfig:
    learning_rate: float = 1e-3
    momentum_decay: float = 0.98
    batch_size: Optional[int] = None  # None: full batch
    cycle_length_epochs: int = 200
    ramp_start_epoch: int = 4800
    ramp_end_epoch: int = 5000
    burn_in_epochs: int = 10000
    total_epochs: int = 30000
    target_T: float = 1.0
    preconditioner: str = "identity"
    grad_clip_norm: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 <= self.momentum_decay < 1:
            raise ConfigError("momentum_decay must lie in [0, 1)")
        if not self.target_T > 0:
            raise ConfigError("target_T must be positive")
        if not (0 <= self.ramp_start_epoch <= self.ramp_end_epoch <= self.burn_in_epochs < self.total_epochs):
            raise ConfigError("need 0 <= ramp_start <= ramp_end <= burn_in < total epochs")
        if self.cycle_length_epochs < 1 or (self.total_epochs - self.burn_in_epochs) % self.cycle_length_epochs:
            raise ConfigError("cycle_length_epochs must divide total_epochs - burn_in_epochs")
        if self.preconditioner not in ("identity", "layerwise"):
            raise ConfigError(f"unknown preconditioner {self.preconditioner!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if not self.grad_clip_norm > 0:
            raise ConfigError("grad_clip_norm must be positive")

    @property
    def num_samples(self) -> int:
        return (self.total_epochs - self.burn_in_epochs) // self.cycle_length_epochs

    def step_size(self, n_train: int) -> float:
        """h0 = sqrt(learning_rate / n_train)."""
        return math.sqrt(self.learning_rate / n_train)

    def friction(self, n_train: int) -> float:
        """gamma = (1 - momentum_decay) / h0."""
        return (1.0 - self.momentum_decay) / self.step_size(n_train)

    def steps_per_epoch(self, n_train: int) -> int:
        b = n_train if self.batch_size is None else min(self.batch_size, n_train)
        return math.ceil(n_train / b)


@dataclass(frozen=True, eq=False)
class ChainState:
    theta: np.ndarray
    momentum: np.ndarray
    mass_diag: np.ndarray
    step_index: int = 0

    @classmethod
    def initial(cls, theta) -> "ChainState":
        theta = np.array(theta, dtype=float)
        return cls(theta, np.zeros_like(theta), np.ones_like(theta), 0)


@dataclass(eq=False)
class PosteriorSampleSet:
    samples: np.ndarray  # (S, p)
    kinetic_trace: np.ndarray  # one entry per step
    energy_trace: np.ndarray  # U(theta) at each kept sample
    config: SamplerConfig
    seed: int
    chain_id: int = 0
    burn_in_steps: int = 0
    mass_diag: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)


def clip_by_norm(g: np.ndarray, max_norm: Optional[float]) -> np.ndarray:
    if max_norm is None:
        return g
    norm = float(np.sqrt(g @ g))
    if norm > max_norm:
        return g * (max_norm / norm)
    return g


def sghmc_step(state: ChainState, grad_U_tilde, h: float, T: float, gamma: float, rng,
               grad_clip_norm: Optional[float] = None) -> ChainState:
    """One symplectic Euler update: momentum first, then position with the new momentum."""
    if not (h > 0 and T >= 0 and gamma >= 0):
        raise InvalidInputError(f"need h > 0, T >= 0, gamma >= 0 (got {h}, {T}, {gamma})")
    g = clip_by_norm(np.asarray(grad_U_tilde, dtype=float), grad_clip_norm)
    m = (1.0 - h * gamma) * state.momentum - h * g
    if T > 0:
        m = m + math.sqrt(2.0 * gamma * h * T) * np.sqrt(state.mass_diag) * rng.standard_normal(m.shape)
    theta = state.theta + h * m / state.mass_diag
    step = state.step_index + 1
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(m))):
        raise DivergenceError(f"non-finite chain state after step {step}", step=step)
    return ChainState(theta, m, state.mass_diag, step)


def temperature_schedule(epoch: int, config: SamplerConfig) -> float:
    """0 before the ramp, linear during it, target_T afterwards."""
    rs, re_ = config.ramp_start_epoch, config.ramp_end_epoch
    if epoch < rs:
        return 0.0
    if epoch >= re_:
        return config.target_T
    return config.target_T * (epoch - rs) / (re_ - rs)


def step_size_schedule(t: int, config: SamplerConfig, n_train: int) -> float:
    """h0 during burn-in, then h0 * (1 + cos(pi * frac)) / 2 within each cycle."""
    h0 = config.step_size(n_train)
    spe = config.steps_per_epoch(n_train)
    burn = config.burn_in_epochs * spe
    if t < burn:
        return h0
    cycle = config.cycle_length_epochs * spe
    frac = ((t - burn) % cycle) / cycle
    return h0 * 0.5 * (1.0 + math.cos(math.pi * frac))


def kinetic_temperature(momentum, mass_diag) -> float:
    """m^T M^-1 m / dim(m)."""
    momentum = np.asarray(momentum, dtype=float)
    mass_diag = np.asarray(mass_diag, dtype=float)
    if momentum.shape != mass_diag.shape:
        raise InvalidInputError("momentum and mass have different lengths")
    return float(np.sum(momentum**2 / mass_diag) / momentum.size)


def layerwise_preconditioner_estimate(grad_samples, layer_slices: Sequence[slice]) -> np.ndarray:
    """Per-layer constant mass equal to the RMS gradient entry of that layer, floored at 1e-8.

    ``layer_slices`` may also be a :class:`~tempsel.network.NetworkSpec`.
    """
    if hasattr(layer_slices, "layer_slices"):
        layer_slices = layer_slices.layer_slices()
    G = np.atleast_2d(np.asarray(grad_samples, dtype=float))
    if G.shape[0] < 1:
        raise InvalidInputError("need at least one gradient sample")
    mass = np.empty(G.shape[1])
    for sl in layer_slices:
        rms = math.sqrt(float(np.mean(G[:, sl] ** 2)))
        mass[sl] = max(rms, MASS_FLOOR)
    return mass


class _RMSAccumulator:
    def __init__(self, layer_slices, p):
        self.slices = list(layer_slices)
        self.sq = np.zeros(p)
        self.count = 0

    def add(self, g):
        self.sq += g * g
        self.count += 1

    def mass(self):
        mean_sq = self.sq / max(self.count, 1)
        mass = np.empty_like(mean_sq)
        for sl in self.slices:
            mass[sl] = max(math.sqrt(float(np.mean(mean_sq[sl]))), MASS_FLOOR)
        return mass


def _batches(n, batch_size, rng):
    if batch_size is None or batch_size >= n:
        yield None
        return
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def chain_rngs(seed: int, chain_id: int = 0):
    """Independent (noise, minibatch) generators for one chain."""
    noise_ss, batch_ss = np.random.SeedSequence([int(seed), int(chain_id)]).spawn(2)
    return np.random.default_rng(noise_ss), np.random.default_rng(batch_ss)


def run_chain(energy, train: LabeledDataset, config: SamplerConfig, theta0=None,
              chain_id: int = 0) -> PosteriorSampleSet:
    """Run one SGHMC chain for ``config.total_epochs`` epochs and keep one sample per cycle."""
    n = len(train)
    if n == 0:
        raise InvalidInputError("empty training set")
    if theta0 is None:
        theta0 = np.zeros(energy.num_params)
    noise_rng, batch_rng = chain_rngs(config.seed, chain_id)
    h0 = config.step_size(n)
    gamma = config.friction(n)
    spe = config.steps_per_epoch(n)
    cycle_steps = config.cycle_length_epochs * spe
    burn_steps = config.burn_in_epochs * spe
    total_steps = config.total_epochs * spe
    bs = config.batch_size
    clip = config.grad_clip_norm

    state = ChainState.initial(theta0)
    layerwise = config.preconditioner == "layerwise"
    acc = _RMSAccumulator(energy.layer_slices(), state.theta.size) if layerwise else None
    if layerwise and config.ramp_start_epoch == 0:
        for idx in _batches(n, bs, batch_rng):
            batch = train if idx is None else train.subset(idx)
            acc.add(energy.minibatch_grad(state.theta, batch, n))
        state = replace(state, mass_diag=acc.mass())
        acc = None

    kinetic = np.empty(total_steps)
    samples, energies = [], []

    def partial():
        return PosteriorSampleSet(
            np.array(samples).reshape(len(samples), -1), kinetic[:state.step_index].copy(),
            np.array(energies), config, config.seed, chain_id, burn_steps, state.mass_diag)

    t = 0
    for epoch in range(config.total_epochs):
        if acc is not None and epoch == config.ramp_start_epoch:
            state = replace(state, mass_diag=acc.mass())
            acc = None
        T = temperature_schedule(epoch, config)
        for idx in _batches(n, bs, batch_rng):
            batch = train if idx is None else train.subset(idx)
            g = energy.minibatch_grad(state.theta, batch, n)
            if acc is not None:
                acc.add(g)
            h = step_size_schedule(t, config, n) if t >= burn_steps else h0
            try:
                state = sghmc_step(state, g, h, T, gamma, noise_rng, clip)
            except DivergenceError as err:
                err.partial = partial()
                raise
            kinetic[t] = kinetic_temperature(state.momentum, state.mass_diag)
            t += 1
            if t > burn_steps and (t - burn_steps) % cycle_steps == 0:
                samples.append(state.theta.copy())
                energies.append(energy.value(state.theta, train))
    logger.debug("chain %d finished: %d samples, h0=%.3g gamma=%.3g", chain_id, len(samples), h0, gamma)
    out = partial()
    out.meta.update(h0=h0, gamma=gamma, steps_per_epoch=spe, n_train=n)
    return out


def config_dict(config: SamplerConfig) -> dict:
    return asdict(config)
