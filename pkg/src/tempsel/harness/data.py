"""Dataset ingestion, splitting/standardisation and synthetic generators."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from tempsel import network
from tempsel.dataset import LabeledDataset
from tempsel.errors import InvalidInputError
from tempsel.model import tempered_softmax
from tempsel.network import NetworkSpec


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Affine feature/target transform fitted on the training split only."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float
    fitted_on: str = "train"
    fitted_rows: int = 0

    @classmethod
    def fit(cls, X, y=None) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        x_scale = X.std(axis=0, ddof=1) if len(X) > 1 else np.ones(X.shape[1])
        x_scale = np.where(x_scale > 0, x_scale, 1.0)
        if y is None:
            y_mean, y_scale = 0.0, 1.0
        else:
            y = np.asarray(y, dtype=float)
            y_mean = float(y.mean())
            y_scale = float(y.std(ddof=1)) if len(y) > 1 else 1.0
            y_scale = y_scale if y_scale > 0 else 1.0
        return cls(X.mean(axis=0), x_scale, y_mean, y_scale, "train", len(X))

    def transform(self, data: LabeledDataset) -> LabeledDataset:
        X = (data.inputs - self.x_mean) / self.x_scale
        if data.num_classes is None:
            y = (data.targets - self.y_mean) / self.y_scale
        else:
            y = data.targets
        return LabeledDataset(X, y, data.split, data.num_classes)

    def inverse_targets(self, y):
        return np.asarray(y, dtype=float) * self.y_scale + self.y_mean


class Splits(NamedTuple):
    train: LabeledDataset
    valid: LabeledDataset
    test: LabeledDataset
    transform: Optional[Standardizer]


def split_sizes(n: int, fractions: Sequence[float]) -> Tuple[int, int, int]:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not np.isclose(sum(fractions), 1.0):
        raise InvalidInputError(f"split fractions must be three non-negative numbers summing to 1: {fractions}")
    n_train = int(round(fractions[0] * n))
    n_valid = int(round(fractions[1] * n))
    n_test = n - n_train - n_valid
    if min(n_train, n_valid, n_test) < 1:
        raise InvalidInputError(f"split of {n} rows by {fractions} leaves an empty split")
    return n_train, n_valid, n_test


def split_dataset(data: LabeledDataset, fractions=(0.8, 0.1, 0.1), seed=0, standardize=True) -> Splits:
    """Shuffle with ``seed``, split, and standardise with train statistics."""
    n_train, n_valid, _ = split_sizes(len(data), fractions)
    perm = np.random.default_rng(seed).permutation(len(data))
    parts = [perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:]]
    train, valid, test = (
        LabeledDataset(data.inputs[p], data.targets[p], tag, data.num_classes)
        for p, tag in zip(parts, ("train", "valid", "test"))
    )
    if not standardize:
        return Splits(train, valid, test, None)
    tf = Standardizer.fit(train.inputs, train.targets if data.num_classes is None else None)
    return Splits(tf.transform(train), tf.transform(valid), tf.transform(test), tf)


def read_table(path, delimiter=None):
    """Header plus numeric rows from a delimited text file."""
    with open(path, newline="") as fh:
        text = fh.read()
    if delimiter is None:
        try:
            delimiter = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",;\t ").delimiter
        except (csv.Error, IndexError):
            delimiter = ","
    rows = [r for r in csv.reader(text.splitlines(), delimiter=delimiter) if any(c.strip() for c in r)]
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InvalidInputError(f"{path}:{i}: expected {len(header)} columns, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise InvalidInputError(f"{path}:{i}: non-numeric cell {cell!r} in column {header[j]!r}") from None
    return header, values


def ingest_tabular(path, target_column: str, split_fractions=(0.8, 0.1, 0.1), seed=0,
                   num_classes: Optional[int] = None, delimiter=None) -> Splits:
    """Load a delimited numeric table and return standardised train/valid/test splits.

    Regression targets are standardised with train statistics; class targets
    (``num_classes`` given) are left as integer indices.
    """
    header, values = read_table(path, delimiter)
    if target_column not in header:
        raise InvalidInputError(f"{path}: no column named {target_column!r} (have {header})")
    j = header.index(target_column)
    X = np.delete(values, j, axis=1)
    data = LabeledDataset(X, values[:, j], "train", num_classes)
    return split_dataset(data, split_fractions, seed)


@dataclass(frozen=True, eq=False)
class Teacher:
    """Fixed random ReLU network used to generate synthetic targets or logits."""

    spec: NetworkSpec
    theta: np.ndarray

    def __call__(self, X) -> np.ndarray:
        return network.forward(self.spec, self.theta, X)


def make_teacher(d: int, out_dim: int = 1, hidden: int = 32, seed=0, normalize=True) -> Teacher:
    """Random teacher; with ``normalize`` its outputs are scaled to unit variance under N(0, I) inputs."""
    ss = np.random.SeedSequence([int(seed), 7])
    init_ss, ref_ss = ss.spawn(2)
    spec = NetworkSpec((d, hidden, out_dim))
    theta = network.init_params(spec, init_ss)
    # random nonzero biases so the ReLU units are not all centred
    rng = np.random.default_rng(init_ss.spawn(1)[0])
    layers = network.unflatten(spec, theta)
    layers = [(W, rng.normal(0.0, 0.5, size=b.shape)) for W, b in layers]
    if normalize:
        ref = np.random.default_rng(ref_ss).standard_normal((20000, d))
        out = network.forward(spec, network.flatten(layers), ref)
        scale = 1.0 / float(np.mean(out.std(axis=0)))
        W, b = layers[-1]
        layers[-1] = (W * scale, b * scale)
    return Teacher(spec, network.flatten(layers))


def synth_regression(n: int, d: int, tau2: float, generator: str = "linear", seed=0,
                     hidden: int = 32, split: str = "train") -> LabeledDataset:
    """x ~ N(0, I_d), y = g(x) + N(0, tau2); g is unit-norm linear or a unit-variance teacher MLP."""
    if tau2 < 0:
        raise InvalidInputError("tau2 must be non-negative")
    g, _ = regression_truth(d, generator, seed, hidden)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    X = rng.standard_normal((n, d))
    y = g(X) + np.sqrt(tau2) * rng.standard_normal(n)
    return LabeledDataset(X, y, split)


def regression_truth(d: int, generator: str, seed=0, hidden: int = 32):
    """The noiseless mean function used by :func:`synth_regression` and its description."""
    if generator == "linear":
        w = np.random.default_rng(np.random.SeedSequence([int(seed), 5])).standard_normal(d)
        w /= np.linalg.norm(w)
        return (lambda X: np.asarray(X, dtype=float) @ w), {"weights": w}
    if generator == "mlp-teacher":
        teacher = make_teacher(d, 1, hidden, seed)
        return (lambda X: teacher(X)[:, 0]), {"teacher": teacher}
    raise InvalidInputError(f"unknown generator {generator!r}")


def synth_classification(n: int, d: int, num_classes: int, beta_true: float = 1.0, seed=0,
                         hidden: int = 32, teacher: Optional[Teacher] = None,
                         split: str = "train") -> Tuple[LabeledDataset, Teacher]:
    """Labels drawn from tempered_softmax(teacher(x), beta_true)."""
    if teacher is None:
        teacher = make_teacher(d, num_classes, hidden, seed)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 13]))
    X = rng.standard_normal((n, d))
    p = tempered_softmax(teacher(X), beta_true)
    u = rng.random(n)[:, None]
    y = np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), num_classes - 1)
    return LabeledDataset(X, y, split, num_classes), teacher
