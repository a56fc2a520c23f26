"""Minimal differentiable feed-forward classifier.

A model is a chain of dense layers with tanh or relu between them and a
linear head producing one logit per class.  Everything is float64 numpy and
fully deterministic given (layout, seed), which keeps finite-difference
gradient checks exact and reruns bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError, NumericError
from .util import read_json, write_json

ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class Layout:
    """Architecture descriptor: layer sizes from input to class count.

    Teacher and main models are built from the same Layout instance, which is
    what makes their parameterizations identical by construction.
    """

    sizes: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ConfigurationError(f"layout needs at least input and output sizes, got {self.sizes}")
        if any(int(s) < 1 for s in self.sizes):
            raise ConfigurationError(f"layer sizes must be positive, got {self.sizes}")
        if self.sizes[-1] < 2:
            raise ConfigurationError(f"class count must be >= 2, got {self.sizes[-1]}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def num_classes(self) -> int:
        return self.sizes[-1]


class Model:
    """A feed-forward classifier with explicit weight/bias arrays."""

    def __init__(self, layout: Layout, seed: int, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.layout = layout
        self.seed = int(seed)
        self.weights = weights
        self.biases = biases

    @property
    def num_classes(self) -> int:
        return self.layout.num_classes

    @property
    def input_dim(self) -> int:
        return self.layout.input_dim

    @property
    def hidden_dim(self) -> int:
        """Width of the last hidden representation (input dim for linear models)."""
        return self.layout.sizes[-2]

    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def flat_params(self) -> np.ndarray:
        """All parameters as one vector, layer order, row-major weights then bias."""
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b.ravel())
        return np.concatenate(chunks)

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.num_params():
            raise InputError(f"expected {self.num_params()} parameters, got {flat.size}")
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos : pos + b.size].copy()
            pos += b.size


def init_model(layout: Layout, seed: int) -> Model:
    """Build a model with parameters drawn uniform(-s, s), s = sqrt(6/(fan_in+fan_out)).

    Identical (layout, seed) pairs produce bit-identical parameters.
    """
    rng = np.random.default_rng(int(seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(layout.sizes[:-1], layout.sizes[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-s, s, size=fan_out))
    return Model(layout, seed, weights, biases)


def _as_batch(x: np.ndarray, input_dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise InputError(f"expected input of dimension {input_dim}, got shape {x.shape}")
    return x, single


def forward_full(model: Model, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Forward pass keeping intermediates for backprop.

    Returns (logits, activations, preacts) where activations[0] is the input
    batch and activations[-1] is the last hidden representation.
    """
    batch, _ = _as_batch(x, model.input_dim)
    activations = [batch]
    preacts = []
    a = batch
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        if i == last:
            return z, activations, preacts
        preacts.append(z)
        a = np.tanh(z) if model.layout.activation == "tanh" else np.maximum(z, 0.0)
        activations.append(a)
    raise AssertionError("unreachable")


def forward(model: Model, x: np.ndarray) -> np.ndarray:
    """Compute logits for a single example (1-D) or a batch (2-D)."""
    batch, single = _as_batch(x, model.input_dim)
    logits, _, _ = forward_full(model, batch)
    return logits[0] if single else logits


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis; rejects non-finite input."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax requires finite logits")
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def predict(model: Model, x: np.ndarray) -> np.ndarray:
    """Predicted class indices; ties broken by lowest index (np.argmax)."""
    logits = forward(model, x)
    return np.argmax(np.atleast_2d(logits), axis=1)


def save_model(model: Model, path: str) -> None:
    """Persist as JSON: layout, seed, flat parameter array."""
    write_json(
        path,
        {
            "layout": {"sizes": list(model.layout.sizes), "activation": model.layout.activation},
            "seed": model.seed,
            "parameters": [float(v) for v in model.flat_params()],
        },
    )


def load_model(path: str) -> Model:
    doc = read_json(path)
    layout = Layout(tuple(doc["layout"]["sizes"]), doc["layout"]["activation"])
    model = init_model(layout, doc["seed"])
    model.set_flat_params(np.asarray(doc["parameters"], dtype=np.float64))
    return model
