from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from tempsel.errors import InvalidInputError

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Inputs ``(n, d)`` with targets ``(n,)``.

    Targets are floats for regression and integer class indices for
    classification; ``num_classes`` is set only in the latter case.
    """

    inputs: np.ndarray
    targets: np.ndarray
    split: str = "train"
    num_classes: Optional[int] = None

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise InvalidInputError(f"inputs must be 2-D, got shape {X.shape}")
        if self.split not in SPLITS:
            raise InvalidInputError(f"unknown split tag {self.split!r}")
        if self.num_classes is None:
            y = np.asarray(self.targets, dtype=float).ravel()
        else:
            y = np.asarray(self.targets).ravel()
            if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidInputError("class targets must be integers")
            y = y.astype(np.int64)
            if y.size and (y.min() < 0 or y.max() >= self.num_classes):
                raise InvalidInputError(f"class index out of range [0, {self.num_classes})")
        if y.shape[0] != X.shape[0]:
            raise InvalidInputError(f"{X.shape[0]} input rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset contains non-finite entries")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.inputs[idx], self.targets[idx], self.split, self.num_classes)

    def concat(self, other: "LabeledDataset") -> "LabeledDataset":
        return LabeledDataset(
            np.vstack([self.inputs, other.inputs]),
            np.concatenate([self.targets, other.targets]),
            self.split,
            self.num_classes,
        )
