"""Closed-form reference results used to validate samplers, selectors and predictive densities.

Three families:

* the toy Gaussian-mean model (tempered posterior, PPD, and the optimal
  temperatures under the squared 2-Wasserstein and KL criteria),
* conjugate linear regression (tempered posterior, tempered-model predictive
  density and the lower bound on its LPD),
* finite models where the derivative of the LPD with respect to beta can be
  enumerated exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from tempsel.dataset import LabeledDataset
from tempsel.errors import InvalidInputError

LOG_2PI = np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# toy Gaussian mean model


@dataclass(frozen=True)
class ToyGaussianSetup:
    """n observations with mean ``xbar`` from N(0, tau2), modelled as N(mu, sigma2), prior N(0, sigma2_p)."""

    n: int
    xbar: float
    sigma2: float
    tau2: float
    sigma2_p: float

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("n must be >= 1")
        if min(self.sigma2, self.tau2, self.sigma2_p) <= 0:
            raise InvalidInputError("variances must be positive")

    @property
    def precision(self) -> float:
        """1/sigma2_p + n/sigma2, the untempered posterior precision."""
        return 1.0 / self.sigma2_p + self.n / self.sigma2

    @property
    def shrunk_mean(self) -> float:
        return self.xbar / (self.sigma2 / (self.n * self.sigma2_p) + 1.0)


class OptimalTemperature(NamedTuple):
    T: float
    boundary: bool


def toy_posterior(setup: ToyGaussianSetup, T: float) -> Tuple[float, float]:
    if not T > 0:
        raise InvalidInputError("T must be positive")
    return setup.shrunk_mean, T / setup.precision


def toy_ppd(setup: ToyGaussianSetup, T: float) -> Tuple[float, float]:
    mean, var = toy_posterior(setup, T)
    return mean, var + setup.sigma2


def toy_w2(setup: ToyGaussianSetup, T: float) -> float:
    # Squared form: mean gap^2 + var_ppd + tau2 - 2 tau sqrt(var_ppd).
    mean, var_ppd = toy_ppd(setup, T)
    return mean**2 + var_ppd + setup.tau2 - 2.0 * np.sqrt(setup.tau2) * np.sqrt(var_ppd)


def toy_kl(setup: ToyGaussianSetup, T: float) -> float:
    """KL(truth || PPD)."""
    mean, v = toy_ppd(setup, T)
    ratio = setup.tau2 / v
    return mean**2 / (2.0 * v) + 0.5 * (ratio - 1.0 - np.log(ratio))


def toy_tstar_w2(setup: ToyGaussianSetup) -> OptimalTemperature:
    t = (setup.tau2 - setup.sigma2) * setup.precision
    return OptimalTemperature(t, False) if t > 0 else OptimalTemperature(0.0, True)


def toy_tstar_kl(setup: ToyGaussianSetup) -> OptimalTemperature:
    t = (setup.n * setup.xbar / setup.sigma2) ** 2 / setup.precision + (setup.tau2 - setup.sigma2) * setup.precision
    return OptimalTemperature(t, False) if t > 0 else OptimalTemperature(0.0, True)


@dataclass(frozen=True)
class ToyGaussianEnergy:
    """Posterior energy of the toy model over a single scalar parameter (the mean).

    Targets of the dataset are the observations; inputs are ignored.
    """

    sigma2: float
    sigma2_p: float

    num_params = 1

    def layer_slices(self):
        return [slice(0, 1)]

    def value(self, theta, data: LabeledDataset) -> float:
        mu = np.float64(theta[0])
        x = data.targets
        u = 0.5 * (LOG_2PI + np.log(self.sigma2_p)) + mu**2 / (2 * self.sigma2_p)
        u += len(x) * 0.5 * (LOG_2PI + np.log(self.sigma2)) + np.sum((x - mu) ** 2) / (2 * self.sigma2)
        return float(u)

    def minibatch_grad(self, theta, batch: LabeledDataset, n_total: int) -> np.ndarray:
        b = len(batch)
        if b == 0 or n_total < b:
            raise InvalidInputError("bad minibatch size")
        mu = float(theta[0])
        g = mu / self.sigma2_p - (n_total / b) * np.sum(batch.targets - mu) / self.sigma2
        return np.array([g])


# ---------------------------------------------------------------------------
# conjugate linear regression


@dataclass(frozen=True, eq=False)
class ConjugateLinRegSetup:
    """y = X theta + noise with known sigma2 and prior N(0, sigma2_p I)."""

    X: np.ndarray
    y: np.ndarray
    sigma2: float
    sigma2_p: float

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError("X and y row counts differ")
        if self.sigma2 <= 0 or self.sigma2_p <= 0:
            raise InvalidInputError("variances must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        A = X.T @ X + (self.sigma2 / self.sigma2_p) * np.eye(X.shape[1])
        cf = cho_factor(A)
        object.__setattr__(self, "_cho", cf)
        object.__setattr__(self, "_Sigma", cho_solve(cf, np.eye(X.shape[1])))
        object.__setattr__(self, "_mean", cho_solve(cf, X.T @ y))

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def Sigma(self) -> np.ndarray:
        """(X^T X + sigma2/sigma2_p I)^-1."""
        return self._Sigma

    @property
    def theta_map(self) -> np.ndarray:
        return self._mean


def linreg_tempered_posterior(setup: ConjugateLinRegSetup, beta: float):
    """Mean and covariance of the tempered posterior; the mean does not depend on beta."""
    if not beta > 0:
        raise InvalidInputError("beta must be positive")
    return setup.theta_map.copy(), (setup.sigma2 / beta) * setup.Sigma


def linreg_sample_posterior(setup: ConjugateLinRegSetup, beta: float, size: int, rng) -> np.ndarray:
    """Exact draws ``(size, d)`` from the tempered posterior."""
    mean, cov = linreg_tempered_posterior(setup, beta)
    L = np.linalg.cholesky(cov)
    z = rng.standard_normal((size, setup.dim))
    return mean + z @ L.T


def _leverage(setup, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X, np.einsum("ij,jk,ik->i", X, setup.Sigma, X)


def linreg_tmpd_logdensity(setup: ConjugateLinRegSetup, beta: float, x, y):
    """log N(y | x^T theta_map, (sigma2/beta)(1 + x^T Sigma x)), rowwise for a batch."""
    if not beta > 0:
        raise InvalidInputError("beta must be positive")
    single = np.ndim(x) == 1
    X, lev = _leverage(setup, x)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    var = setup.sigma2 / beta * (1.0 + lev)
    out = -0.5 * (LOG_2PI + np.log(var)) - (y - X @ setup.theta_map) ** 2 / (2.0 * var)
    return float(out[0]) if single else out


def lemma1_bound_gap(setup: ConjugateLinRegSetup, beta: float, X_test, y_test):
    """Empirical tempered-model LPD and its lower bound; returns ``(lhs, rhs, lhs - rhs)``.

    The bound is the mean tempered log-density at the MAP estimate minus half
    the mean of log(1 + x^T Sigma x).
    """
    X, lev = _leverage(setup, X_test)
    y = np.asarray(y_test, dtype=float).ravel()
    lhs = float(np.mean(linreg_tmpd_logdensity(setup, beta, X, y)))
    var = setup.sigma2 / beta
    at_map = -0.5 * (LOG_2PI + np.log(var)) - (y - X @ setup.theta_map) ** 2 / (2.0 * var)
    rhs = float(np.mean(at_map) - 0.5 * np.mean(np.log1p(lev)))
    return lhs, rhs, lhs - rhs


# ---------------------------------------------------------------------------
# finite models


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """Finite parameter set with prior masses and conditionals over a finite alphabet.

    ``cond[k, i, j]`` is p(y=j | x=i, theta_k); ``truth[i, j]`` is q(x=i, y=j);
    ``data`` is an ``(m, 2)`` integer array of observed (x, y) index pairs.
    """

    prior: np.ndarray
    cond: np.ndarray
    truth: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        prior = np.asarray(self.prior, dtype=float)
        cond = np.asarray(self.cond, dtype=float)
        truth = np.asarray(self.truth, dtype=float)
        data = np.asarray(self.data, dtype=np.int64).reshape(-1, 2)
        if cond.ndim != 3 or cond.shape[0] != prior.shape[0] or truth.shape != cond.shape[1:]:
            raise InvalidInputError("inconsistent shapes")
        if np.any(prior <= 0) or np.any(cond <= 0) or np.any(truth < 0):
            raise InvalidInputError("masses and densities must be positive")
        if not (np.isclose(prior.sum(), 1.0) and np.isclose(truth.sum(), 1.0)
                and np.allclose(cond.sum(axis=2), 1.0)):
            raise InvalidInputError("distributions must be normalised")
        for a, name in ((prior, "prior"), (cond, "cond"), (truth, "truth"), (data, "data")):
            object.__setattr__(self, name, a)

    def log_joint(self) -> np.ndarray:
        """log p(D, theta_k) for each atom."""
        lp = np.log(self.prior)
        if len(self.data):
            lp = lp + np.log(self.cond[:, self.data[:, 0], self.data[:, 1]]).sum(axis=1)
        return lp


def _tempered_log_weights(model: DiscreteModel, beta: float):
    lj = model.log_joint()
    lw = beta * lj
    return lj, lw - logsumexp(lw)


def discrete_lpd(model: DiscreteModel, beta: float) -> float:
    """Exact LPD under the truth of the standard-model PPD at inverse temperature beta."""
    _, lw = _tempered_log_weights(model, beta)
    # log sum_k w_k p(y | x, theta_k) for each alphabet cell
    log_ppd = logsumexp(lw[:, None, None] + np.log(model.cond), axis=0)
    return float(np.sum(model.truth * log_ppd))


def discrete_grad_lpd(model: DiscreteModel, beta: float) -> float:
    """d LPD / d beta by the posterior-update identity, enumerated exactly.

    E_q[ E_{p_beta(theta | D + (x, y))} log p(D, theta) ] - E_{p_beta(theta | D)} log p(D, theta).
    """
    if not beta > 0:
        raise InvalidInputError("beta must be positive")
    lj, lw = _tempered_log_weights(model, beta)
    base = float(np.exp(lw) @ lj)
    # once-updated posterior for every alphabet cell
    lw_upd = lw[:, None, None] + np.log(model.cond)
    lw_upd = lw_upd - logsumexp(lw_upd, axis=0, keepdims=True)
    updated = np.einsum("kij,k->ij", np.exp(lw_upd), lj)
    return float(np.sum(model.truth * updated) - base)


def central_difference(f, x: float, h: float) -> float:
    """Five-point central difference of a scalar function (truncation error O(h^4))."""
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def random_discrete_model(rng, max_atoms: int = 8, max_alphabet: int = 6, max_data: int = 6) -> DiscreteModel:
    """Random finite model: 2..max_atoms atoms, each of the x and y alphabets of size <= max_alphabet."""
    K = int(rng.integers(2, max_atoms + 1))
    nx, ny = int(rng.integers(1, max_alphabet + 1)), int(rng.integers(2, max_alphabet + 1))
    prior = rng.dirichlet(np.ones(K))
    cond = rng.dirichlet(np.ones(ny), size=(K, nx))
    truth = rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny)
    m = int(rng.integers(0, max_data + 1))
    data = np.stack([rng.integers(0, nx, m), rng.integers(0, ny, m)], axis=1)
    return DiscreteModel(prior, cond, truth, data)


def lemma2_check(model: DiscreteModel, beta: float, rel_step: float = 1e-3):
    """(identity, finite difference) for d LPD / d beta at ``beta``."""
    fd = central_difference(lambda b: discrete_lpd(model, b), beta, rel_step * beta)
    return discrete_grad_lpd(model, beta), fd


def random_linreg_setup(rng, max_n: int = 40, max_dim: int = 5):
    """Random well-specified conjugate regression; returns (setup, true weights)."""
    n, d = int(rng.integers(5, max_n + 1)), int(rng.integers(1, max_dim + 1))
    w = rng.standard_normal(d)
    sigma2 = float(rng.uniform(0.1, 2.0))
    X, y = linreg_truth_draws(w, sigma2, n, rng)
    return ConjugateLinRegSetup(X, y, sigma2, float(rng.uniform(0.1, 5.0))), w


def linreg_truth_draws(w, sigma2: float, size: int, rng):
    """(X, y) with x ~ N(0, I) and y = x^T w + N(0, sigma2)."""
    w = np.asarray(w, dtype=float)
    X = rng.standard_normal((size, w.size))
    return X, X @ w + np.sqrt(sigma2) * rng.standard_normal(size)
