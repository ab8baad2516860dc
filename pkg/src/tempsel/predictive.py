"""Posterior predictive densities built from a set of weight samples.

``SM`` averages the standard (untempered) model over the samples; ``TM``
averages the tempered model at the selected beta.  Both are equal-weight
mixtures evaluated in log space.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from tempsel.dataset import LabeledDataset
from tempsel.errors import InvalidInputError
from tempsel.model import GaussianHead, SoftmaxHead, TemperedModel, tempered_softmax

logger = logging.getLogger(__name__)

PAPER_BETA_GRID = (0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0)


@dataclass(eq=False)
class PredictiveDensity:
    kind: str  # "SM" or "TM"
    samples: np.ndarray  # (S, p)
    model: TemperedModel
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("SM", "TM"):
            raise InvalidInputError(f"kind must be SM or TM, got {self.kind!r}")
        s = getattr(self.samples, "samples", self.samples)  # accept a PosteriorSampleSet
        s = np.atleast_2d(np.asarray(s, dtype=float))
        if s.shape[0] == 0:
            raise InvalidInputError("no samples")
        if s.shape[1] != self.model.num_params:
            raise InvalidInputError("sample width does not match the model")
        self.samples = s
        if not self.beta > 0:
            raise InvalidInputError("beta must be positive")

    @property
    def component_beta(self) -> float:
        return 1.0 if self.kind == "SM" else self.beta

    def outputs(self, X) -> np.ndarray:
        """Network outputs ``(S, n, d_out)`` for every sample."""
        return sample_outputs(self.samples, self.model, X)

    def component_logpdf(self, data: LabeledDataset, outputs=None) -> np.ndarray:
        """``(S, n)`` log-densities of each mixture component."""
        out = self.outputs(data.inputs) if outputs is None else outputs
        return np.stack([self.model.head.logpdf(o, data.targets, self.component_beta) for o in out])

    def logdensity(self, data: LabeledDataset, outputs=None) -> np.ndarray:
        comp = self.component_logpdf(data, outputs)
        return logsumexp(comp, axis=0) - np.log(comp.shape[0])

    def point_predict(self, X, outputs=None) -> np.ndarray:
        out = self.outputs(X) if outputs is None else outputs
        if isinstance(self.model.head, GaussianHead):
            return out[:, :, 0].mean(axis=0)
        probs = tempered_softmax(out, self.component_beta).mean(axis=0)
        return np.argmax(probs, axis=1)


def sample_outputs(samples, model: TemperedModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.stack([model.outputs(s, X) for s in np.atleast_2d(samples)])


def _point(x, y, num_classes=None):
    return LabeledDataset(np.atleast_2d(np.asarray(x, dtype=float)), np.atleast_1d(y), "test", num_classes)


def _classes(pd):
    head = pd.model.head
    return head.num_classes if isinstance(head, SoftmaxHead) else None


def smpd_logdensity(pd: PredictiveDensity, x, y) -> float:
    """log (1/S) sum_s p(y | x, theta_s)."""
    if pd.kind != "SM":
        raise InvalidInputError("expected an SM predictive density")
    return float(pd.logdensity(_point(x, y, _classes(pd)))[0])


def tmpd_logdensity(pd: PredictiveDensity, x, y) -> float:
    """log (1/S) sum_s p(y | x, theta_s, beta)."""
    if pd.kind != "TM":
        raise InvalidInputError("expected a TM predictive density")
    return float(pd.logdensity(_point(x, y, _classes(pd)))[0])


def lpd(pd: PredictiveDensity, test: LabeledDataset, outputs=None) -> float:
    if len(test) == 0:
        raise InvalidInputError("empty test set")
    return float(np.mean(pd.logdensity(test, outputs)))


def point_predict(pd: PredictiveDensity, x):
    single = np.ndim(x) == 1
    yhat = pd.point_predict(np.atleast_2d(x))
    return yhat[0] if single else yhat


def mse(pd: PredictiveDensity, test: LabeledDataset, outputs=None) -> float:
    if not isinstance(pd.model.head, GaussianHead):
        raise InvalidInputError("mse needs a regression head")
    return float(np.mean((test.targets - pd.point_predict(test.inputs, outputs)) ** 2))


def accuracy(pd: PredictiveDensity, test: LabeledDataset, outputs=None) -> float:
    if not isinstance(pd.model.head, SoftmaxHead):
        raise InvalidInputError("accuracy needs a softmax head")
    return float(np.mean(pd.point_predict(test.inputs, outputs) == test.targets))


def point_metric_name(model: TemperedModel) -> str:
    return "mse" if isinstance(model.head, GaussianHead) else "accuracy"


def evaluate(samples, model: TemperedModel, beta: float, data: LabeledDataset) -> Dict[str, float]:
    """LPD of both predictive densities and the point metric on ``data``.

    Keys: ``lpd_sm``, ``lpd_tm`` and ``mse`` (regression) or ``accuracy`` /
    ``accuracy_tm`` (classification; argmax of the averaged SM or TM probabilities).
    """
    sm = PredictiveDensity("SM", samples, model)
    tm = PredictiveDensity("TM", sm.samples, model, beta)
    out = sm.outputs(data.inputs)
    metrics = {"lpd_sm": lpd(sm, data, out), "lpd_tm": lpd(tm, data, out)}
    if point_metric_name(model) == "mse":
        metrics["mse"] = mse(sm, data, out)  # identical for SM and TM
    else:
        metrics["accuracy"] = accuracy(sm, data, out)
        metrics["accuracy_tm"] = accuracy(tm, data, out)
    return metrics


@dataclass
class GridRow:
    beta: float
    valid: Dict[str, float] = field(default_factory=dict)
    test: Dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0
    failed: bool = False
    error: str = ""


@dataclass
class GridResult:
    rows: List[GridRow]
    selected_beta: Dict[str, float]
    point_metric: str

    @property
    def betas(self) -> np.ndarray:
        return np.array([r.beta for r in self.rows])

    def column(self, split: str, metric: str) -> np.ndarray:
        return np.array([getattr(r, split).get(metric, np.nan) for r in self.rows])


def maximize_metric(metric: str) -> bool:
    """Every reported metric is better when larger, except the squared error."""
    return metric != "mse"


def _select(rows: Sequence[GridRow], metric: str, maximize: bool) -> Optional[float]:
    best = None
    for r in sorted((r for r in rows if not r.failed), key=lambda r: r.beta):
        v = r.valid[metric]
        if not np.isfinite(v):
            continue
        if best is None or (v > best[0] if maximize else v < best[0]):
            best = (v, r.beta)
    return None if best is None else best[1]


def grid_search(beta_grid, pipeline: Callable, valid: LabeledDataset, test: LabeledDataset,
                model: TemperedModel) -> GridResult:
    """One sampler run per beta via ``pipeline(beta) -> samples``; pick beta per validation metric.

    A failing beta is recorded and skipped.  Ties go to the smaller beta.
    """
    beta_grid = [float(b) for b in beta_grid]
    if not beta_grid:
        raise InvalidInputError("empty beta grid")
    rows = []
    for beta in beta_grid:
        t0 = time.perf_counter()
        row = GridRow(beta)
        try:
            samples = pipeline(beta)
            row.valid = evaluate(samples, model, beta, valid)
            row.test = evaluate(samples, model, beta, test)
        except Exception as exc:  # noqa: BLE001 - recorded in the row
            logger.warning("grid beta=%g failed: %s", beta, exc)
            row.failed, row.error = True, f"{type(exc).__name__}: {exc}"
        row.seconds = time.perf_counter() - t0
        rows.append(row)
    metrics = next((list(r.valid) for r in rows if not r.failed), [])
    selected = {m: _select(rows, m, maximize_metric(m)) for m in metrics}
    return GridResult(rows, selected, point_metric_name(model))
