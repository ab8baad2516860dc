"""Dense ReLU networks with a flat parameter vector and a hand-written reverse pass.

Parameters are stored layer-major; within a layer the weight matrix (shape
``(w_out, w_in)``, row-major) comes first, followed by the bias.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from tempsel.errors import InvalidInputError


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths ``(d_in, hidden..., d_out)``; ReLU on hidden layers.

    Two widths give a purely affine map, which is how linear-mean models are
    expressed.
    """

    layer_widths: Tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise InvalidInputError("need at least input and output widths")
        if any(w < 1 for w in widths):
            raise InvalidInputError(f"all widths must be >= 1, got {widths}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def num_params(self) -> int:
        w = self.layer_widths
        return sum((w[i] + 1) * w[i + 1] for i in range(self.num_layers))

    def layer_slices(self) -> List[slice]:
        """Slice of the flat vector covering each layer (weights and bias)."""
        out, start = [], 0
        w = self.layer_widths
        for i in range(self.num_layers):
            size = (w[i] + 1) * w[i + 1]
            out.append(slice(start, start + size))
            start += size
        return out

    def describe(self) -> str:
        return "dense-relu:" + "-".join(str(w) for w in self.layer_widths)


def unflatten(spec: NetworkSpec, theta: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size != spec.num_params:
        raise InvalidInputError(
            f"parameter vector has shape {theta.shape}, expected ({spec.num_params},)"
        )
    layers = []
    w = spec.layer_widths
    for i, sl in enumerate(spec.layer_slices()):
        block = theta[sl]
        n_w = w[i] * w[i + 1]
        layers.append((block[:n_w].reshape(w[i + 1], w[i]), block[n_w:]))
    return layers


def flatten(layers: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in layers])


def init_params(spec: NetworkSpec, seed) -> np.ndarray:
    """He initialisation: weights ~ N(0, 2/fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    w = spec.layer_widths
    layers = []
    for i in range(spec.num_layers):
        W = rng.normal(0.0, np.sqrt(2.0 / w[i]), size=(w[i + 1], w[i]))
        layers.append((W, np.zeros(w[i + 1])))
    return flatten(layers)


def _as_batch(spec: NetworkSpec, x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise InvalidInputError(f"input has shape {x.shape}, expected (..., {spec.input_dim})")
    return X, single


def _forward_cache(layers, X):
    acts = [X]
    h = X
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = h @ W.T + b
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def forward(spec: NetworkSpec, theta: np.ndarray, x) -> np.ndarray:
    """Evaluate the network on one input ``(d,)`` or a batch ``(n, d)``."""
    X, single = _as_batch(spec, x)
    out = _forward_cache(unflatten(spec, theta), X)[-1]
    return out[0] if single else out


def forward_and_vjp(spec: NetworkSpec, theta: np.ndarray, x, cotangent_fn):
    """Forward pass, then pull back ``cotangent_fn(outputs)`` through the network.

    Returns ``(outputs, grad_theta)``; the gradient is summed over the batch.
    Avoids a second forward pass when the cotangent depends on the outputs.
    """
    X, single = _as_batch(spec, x)
    layers = unflatten(spec, theta)
    acts = _forward_cache(layers, X)
    out = acts[-1]
    cot = np.asarray(cotangent_fn(out[0] if single else out), dtype=float)
    cot = cot.reshape(out.shape)
    return (out[0] if single else out), _backward(layers, acts, cot)


def _backward(layers, acts, cot):
    grads = [None] * len(layers)
    delta = cot
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        h_in = acts[i]
        grads[i] = (delta.T @ h_in, delta.sum(axis=0))
        if i > 0:
            delta = delta @ W
            # ReLU subgradient at exactly 0 is 0.
            delta = delta * (acts[i] > 0.0)
    return flatten(grads)


def vjp(spec: NetworkSpec, theta: np.ndarray, x, output_cotangent) -> np.ndarray:
    """Gradient of ``<cotangent, forward(theta, x)>`` with respect to theta.

    For a batch input the cotangent has shape ``(n, d_out)`` and the
    per-example gradients are summed.
    """
    X, single = _as_batch(spec, x)
    cot = np.asarray(output_cotangent, dtype=float)
    expected = (spec.output_dim,) if single else (X.shape[0], spec.output_dim)
    if cot.shape != expected:
        raise InvalidInputError(f"cotangent has shape {cot.shape}, expected {expected}")
    layers = unflatten(spec, theta)
    acts = _forward_cache(layers, X)
    return _backward(layers, acts, cot.reshape(X.shape[0], spec.output_dim))
