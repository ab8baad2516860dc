"""Temperature selection by maximum likelihood of the tempered model.

:func:`select_mle` runs momentum SGD jointly over the network weights and
log beta, keeping the snapshot with the best validation log-likelihood.
:func:`select_map` adds a (1/n) log-prior term; :func:`select_posthoc` keeps
the weights fixed and solves the one-dimensional problem in log beta.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from tempsel import network
from tempsel.dataset import LabeledDataset
from tempsel.errors import ConfigError, DivergenceError, InvalidInputError
from tempsel.model import (
    LOG_BETA_MAX,
    LOG_BETA_MIN,
    InverseTemperature,
    PriorSpec,
    TemperedModel,
    clamp_log_beta,
)
from tempsel.sgmcmc import clip_by_norm

logger = logging.getLogger(__name__)

Schedule = Union[str, Tuple[Tuple[int, float], ...]]

TRACE_COLUMNS = ("epoch", "train_loglik", "valid_loglik", "beta")


@dataclass(frozen=True)
class SelectConfig:
    """SGD settings.  ``scheduler`` is ``"cosine"``, ``"constant"`` or a tuple of (epoch, multiplier)."""

    learning_rate: float = 1e-2
    scheduler: Schedule = "cosine"
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: Optional[int] = None
    total_epochs: int = 1000
    grad_clip_norm: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.total_epochs < 1:
            raise ConfigError("total_epochs must be >= 1")
        if not self.grad_clip_norm > 0:
            raise ConfigError("grad_clip_norm must be positive")
        if isinstance(self.scheduler, str):
            if self.scheduler not in ("cosine", "constant"):
                raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        else:
            pieces = tuple((int(e), float(m)) for e, m in self.scheduler)
            object.__setattr__(self, "scheduler", pieces)

    @property
    def eval_every(self) -> int:
        return max(1, self.total_epochs // 20)

    def lr_at(self, epoch: int, step: int, total_steps: int) -> float:
        if self.scheduler == "cosine":
            return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
        if self.scheduler == "constant":
            return self.learning_rate
        mult = 1.0
        for e, m in self.scheduler:
            if epoch >= e:
                mult = m
        return self.learning_rate * mult


@dataclass(eq=False)
class SelectionResult:
    theta_star: np.ndarray
    beta_star: InverseTemperature
    trace: np.ndarray  # rows of TRACE_COLUMNS
    flags: Tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def best_valid_loglik(self) -> float:
        return float(np.max(self.trace[:, 2]))


def _mean_loglik(model, theta, beta, data):
    return float(np.mean(model.loglik(theta, beta, data)))


def _batches(n, batch_size, rng):
    if batch_size is None or batch_size >= n:
        yield None
        return
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _run_sgd(train, valid, model, config, prior: Optional[PriorSpec], theta0, learn_beta=True):
    if len(train) == 0 or len(valid) == 0:
        raise InvalidInputError("train and valid splits must be nonempty")
    rng = np.random.default_rng(config.seed)
    if theta0 is None:
        theta0 = network.init_params(model.spec, np.random.SeedSequence([config.seed, 1]))
    theta = np.array(theta0, dtype=float)
    if theta.shape != (model.num_params,):
        raise InvalidInputError("theta0 does not match the network")
    log_beta = 0.0
    p = theta.size
    velocity = np.zeros(p + 1)
    n = len(train)
    spe = 1 if config.batch_size is None else math.ceil(n / min(config.batch_size, n))
    total_steps = config.total_epochs * spe

    def record(epoch):
        beta = math.exp(log_beta)
        return (epoch, _mean_loglik(model, theta, beta, train), _mean_loglik(model, theta, beta, valid), beta)

    rows = [record(0)]
    best = (rows[0][2], theta.copy(), log_beta)
    hit_upper = hit_lower = False
    step = 0
    for epoch in range(1, config.total_epochs + 1):
        for idx in _batches(n, config.batch_size, rng):
            batch = train if idx is None else train.subset(idx)
            value, g_theta, g_lb = model.sum_loglik_grad(theta, math.exp(log_beta), batch)
            b = len(batch)
            value, g_theta, g_lb = value / b, g_theta / b, g_lb / b
            if prior is not None:
                value += prior.logpdf(theta) / n
                g_theta = g_theta + prior.grad_logpdf(theta) / n
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite objective {value} at step {step}", step=step, value=value)
            g = clip_by_norm(np.append(g_theta, g_lb if learn_beta else 0.0), config.grad_clip_norm)
            velocity = config.momentum * velocity + g
            update = velocity.copy()
            update[:p] -= config.weight_decay * theta
            lr = config.lr_at(epoch - 1, step, total_steps)
            theta = theta + lr * update[:p]
            raw = log_beta + lr * update[p]
            log_beta = clamp_log_beta(raw)
            hit_upper |= raw > LOG_BETA_MAX
            hit_lower |= raw < LOG_BETA_MIN
            step += 1
        if epoch % config.eval_every == 0 or epoch == config.total_epochs:
            row = record(epoch)
            if not (math.isfinite(row[1]) and math.isfinite(row[2])):
                raise DivergenceError(f"non-finite log-likelihood at epoch {epoch}", step=step,
                                      value=row[1] if not math.isfinite(row[1]) else row[2])
            rows.append(row)
            if row[2] > best[0]:
                best = (row[2], theta.copy(), log_beta)
    flags = []
    if hit_upper:
        flags.append("hit_upper_clamp")
    if hit_lower:
        flags.append("hit_lower_clamp")
    beta_flags = [f for f, cond in (("at_upper_bound", best[2] >= LOG_BETA_MAX),
                                    ("at_lower_bound", best[2] <= LOG_BETA_MIN)) if cond]
    return SelectionResult(best[1], InverseTemperature(best[2], tuple(beta_flags)),
                           np.array(rows, dtype=float), tuple(flags), {"steps": step})


def select_mle(train: LabeledDataset, valid: LabeledDataset, model: TemperedModel,
               config: SelectConfig, theta0=None) -> SelectionResult:
    """Jointly maximise the mean tempered log-likelihood over weights and log beta.

    Starts from beta = 1.  Weight decay acts on the weights only.  Validation
    is checked every ``max(1, total_epochs // 20)`` epochs and the best
    snapshot (earliest on ties) is returned.
    """
    return _run_sgd(train, valid, model, config, None, theta0)


def select_map(train: LabeledDataset, valid: LabeledDataset, model: TemperedModel, prior: PriorSpec,
               config: SelectConfig, theta0=None) -> SelectionResult:
    """As :func:`select_mle` with (1/n) log p(theta) added to the objective."""
    if config.weight_decay != 0:
        raise ConfigError("select_map with nonzero weight_decay would regularise twice")
    return _run_sgd(train, valid, model, config, prior, theta0)


def train_fixed_beta(train: LabeledDataset, valid: LabeledDataset, model: TemperedModel,
                     config: SelectConfig, theta0=None) -> SelectionResult:
    """Ordinary SGD training at beta = 1 (log beta frozen); the baseline for :func:`select_posthoc`."""
    return _run_sgd(train, valid, model, config, None, theta0, learn_beta=False)


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-6):
    """Maximise a unimodal ``f`` on [lo, hi]; returns (argmax, value)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    candidates = [(f(x), x), (f(lo), lo), (f(hi), hi)]
    fx, x = max(candidates)
    return x, fx


def select_posthoc(theta_fixed, valid: LabeledDataset, model: TemperedModel,
                   tol: float = 1e-6) -> InverseTemperature:
    """Maximise the mean validation log-likelihood over log beta with the weights held fixed."""
    if len(valid) == 0:
        raise InvalidInputError("empty validation set")
    model._check(np.asarray(theta_fixed, dtype=float), valid)
    out = model.outputs(theta_fixed, valid.inputs)
    y = valid.targets

    def objective(lb):
        return float(np.mean(model.head.logpdf(out, y, math.exp(lb))))

    probe = [objective(lb) for lb in np.linspace(LOG_BETA_MIN, LOG_BETA_MAX, 9)]
    if max(probe) - min(probe) <= 1e-12 * (1.0 + abs(probe[0])):
        return InverseTemperature(0.0, ("flat_objective",))
    lb, _ = golden_section_max(objective, LOG_BETA_MIN, LOG_BETA_MAX, tol)
    flags = []
    if lb >= LOG_BETA_MAX - tol:
        flags.append("at_upper_bound")
    if lb <= LOG_BETA_MIN + tol:
        flags.append("at_lower_bound")
    return InverseTemperature(lb, tuple(flags))
