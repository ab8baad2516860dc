"""Tempered likelihood heads, the tempered model, the prior and the posterior energy.

The tempered model raises the base likelihood to the power beta and
renormalises over y.  For a Gaussian head with variance sigma2 that is a
Gaussian with variance sigma2 / beta; for a softmax head it multiplies the
logits by beta.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
from scipy.special import logsumexp

from tempsel import network
from tempsel.dataset import LabeledDataset
from tempsel.errors import InvalidInputError
from tempsel.network import NetworkSpec

LOG_BETA_MIN = -10.0
LOG_BETA_MAX = 10.0
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class InverseTemperature:
    """beta stored through its logarithm.

    ``flags`` carries solver annotations such as ``"at_upper_bound"`` or
    ``"flat_objective"``.
    """

    log_beta: float
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        if not np.isfinite(self.log_beta):
            raise InvalidInputError(f"log_beta must be finite, got {self.log_beta}")
        object.__setattr__(self, "log_beta", float(self.log_beta))

    @classmethod
    def from_beta(cls, beta: float, flags=()) -> "InverseTemperature":
        if not beta > 0:
            raise InvalidInputError(f"beta must be positive, got {beta}")
        return cls(float(np.log(beta)), tuple(flags))

    @property
    def beta(self) -> float:
        return float(np.exp(self.log_beta))

    @property
    def temperature(self) -> float:
        return float(np.exp(-self.log_beta))


def clamp_log_beta(log_beta: float) -> float:
    return float(min(max(log_beta, LOG_BETA_MIN), LOG_BETA_MAX))


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("non-finite input")


def tempered_gaussian_logpdf(y, mu, sigma2: float, beta: float):
    """log N(y | mu, sigma2 / beta), elementwise."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    _check_finite(y, mu, sigma2, beta)
    if not (sigma2 > 0 and beta > 0):
        raise InvalidInputError("sigma2 and beta must be positive")
    out = 0.5 * np.log(beta) - 0.5 * (LOG_2PI + np.log(sigma2)) - beta * (y - mu) ** 2 / (2.0 * sigma2)
    return out if out.ndim else float(out)


def tempered_softmax(logits, beta: float) -> np.ndarray:
    """softmax(beta * logits) along the last axis, max-shifted for stability."""
    logits = np.asarray(logits, dtype=float)
    _check_finite(logits, beta)
    if logits.shape[-1] < 2:
        raise InvalidInputError("need at least two classes")
    z = beta * logits
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def tempered_log_softmax(logits, beta: float) -> np.ndarray:
    z = beta * np.asarray(logits, dtype=float)
    return z - logsumexp(z, axis=-1, keepdims=True)


@dataclass(frozen=True)
class GaussianHead:
    sigma2: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise InvalidInputError(f"sigma2 must be positive and finite, got {self.sigma2}")

    output_dim = 1
    task = "regression"

    def logpdf(self, out, y, beta):
        return tempered_gaussian_logpdf(y, out[:, 0], self.sigma2, beta)

    def grads(self, out, y, beta):
        """Per-example d/d(output) and d/d(log beta) of the tempered log-density."""
        r = y - out[:, 0]
        d_out = (beta * r / self.sigma2)[:, None]
        d_logbeta = 0.5 - beta * r**2 / (2.0 * self.sigma2)
        return d_out, d_logbeta


@dataclass(frozen=True)
class SoftmaxHead:
    num_classes: int

    def __post_init__(self):
        if int(self.num_classes) < 2:
            raise InvalidInputError("num_classes must be >= 2")

    task = "classification"

    @property
    def output_dim(self) -> int:
        return self.num_classes

    def logpdf(self, out, y, beta):
        logp = tempered_log_softmax(out, beta)
        return logp[np.arange(len(y)), y]

    def grads(self, out, y, beta):
        p = tempered_softmax(out, beta)
        onehot = np.zeros_like(p)
        onehot[np.arange(len(y)), y] = 1.0
        d_out = beta * (onehot - p)
        f_y = out[np.arange(len(y)), y]
        d_logbeta = beta * (f_y - np.sum(p * out, axis=1))
        return d_out, d_logbeta


Head = Union[GaussianHead, SoftmaxHead]


@dataclass(frozen=True)
class TemperedModel:
    """A feature network composed with a likelihood head."""

    spec: NetworkSpec
    head: Head

    def __post_init__(self):
        if self.spec.output_dim != self.head.output_dim:
            raise InvalidInputError(
                f"network output width {self.spec.output_dim} does not match head width "
                f"{self.head.output_dim}"
            )

    @property
    def num_params(self) -> int:
        return self.spec.num_params

    def outputs(self, theta, X) -> np.ndarray:
        return network.forward(self.spec, theta, X)

    def loglik(self, theta, beta: float, data: LabeledDataset) -> np.ndarray:
        """Per-example tempered log-likelihood."""
        self._check(theta, data)
        return self.head.logpdf(self.outputs(theta, data.inputs), data.targets, beta)

    def _check(self, theta, data):
        if data.dim != self.spec.input_dim:
            raise InvalidInputError(f"data has {data.dim} features, network expects {self.spec.input_dim}")
        if np.shape(theta) != (self.spec.num_params,):
            raise InvalidInputError(f"theta has shape {np.shape(theta)}, expected ({self.spec.num_params},)")
        if isinstance(self.head, SoftmaxHead) and data.num_classes is None:
            raise InvalidInputError("softmax head needs class-labelled data")

    def sum_loglik_grad(self, theta, beta: float, data: LabeledDataset):
        """Sum over the batch of the tempered log-likelihood and its gradients."""
        self._check(theta, data)
        if len(data) == 0:
            raise InvalidInputError("empty batch")
        saved = {}

        def cot(out):
            d_out, d_logbeta = self.head.grads(out, data.targets, beta)
            saved["out"], saved["d_logbeta"] = out, d_logbeta
            return d_out

        _, g_theta = network.forward_and_vjp(self.spec, theta, data.inputs, cot)
        value = np.sum(self.head.logpdf(saved["out"], data.targets, beta))
        return float(value), g_theta, float(np.sum(saved["d_logbeta"]))


def tempered_loglik_grad(model: TemperedModel, theta, beta: float, batch: LabeledDataset):
    """Mean tempered log-likelihood over ``batch`` with gradients in theta and log beta."""
    value, g_theta, g_logbeta = model.sum_loglik_grad(theta, beta, batch)
    n = len(batch)
    return value / n, g_theta / n, g_logbeta / n


@dataclass(frozen=True)
class PriorSpec:
    """Zero-mean isotropic Gaussian over all weights."""

    variance: float = 1.0

    def __post_init__(self):
        if not (self.variance > 0):
            raise InvalidInputError(f"prior variance must be positive, got {self.variance}")

    def logpdf(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(-0.5 * theta.size * (LOG_2PI + np.log(self.variance)) - theta @ theta / (2 * self.variance))

    def grad_logpdf(self, theta) -> np.ndarray:
        return -np.asarray(theta, dtype=float) / self.variance


def posterior_energy(theta, prior: PriorSpec, model: TemperedModel, data: LabeledDataset) -> float:
    """U(theta) = -log p(theta) - sum log p(y | x, theta), with the untempered likelihood."""
    u = -prior.logpdf(theta)
    if len(data):
        u -= float(np.sum(model.loglik(theta, 1.0, data)))
    return u


def minibatch_energy_grad(theta, prior: PriorSpec, model: TemperedModel, minibatch: LabeledDataset,
                          n_total: int) -> np.ndarray:
    """Unbiased estimate of grad U from a minibatch, likelihood term rescaled by n_total / b."""
    b = len(minibatch)
    if b == 0:
        raise InvalidInputError("empty minibatch")
    if n_total < b:
        raise InvalidInputError(f"n_total={n_total} is smaller than the minibatch ({b})")
    _, g_lik, _ = model.sum_loglik_grad(theta, 1.0, minibatch)
    return -prior.grad_logpdf(theta) - (n_total / b) * g_lik


@dataclass(frozen=True)
class PosteriorEnergy:
    """Bundles model and prior into the energy interface the sampler consumes."""

    model: TemperedModel
    prior: PriorSpec = field(default_factory=PriorSpec)

    @property
    def num_params(self) -> int:
        return self.model.num_params

    def layer_slices(self):
        return self.model.spec.layer_slices()

    def value(self, theta, data: LabeledDataset) -> float:
        return posterior_energy(theta, self.prior, self.model, data)

    def minibatch_grad(self, theta, batch: LabeledDataset, n_total: int) -> np.ndarray:
        return minibatch_energy_grad(theta, self.prior, self.model, batch, n_total)
