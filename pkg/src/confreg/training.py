"""Mini-batch SGD with exact backpropagation for every supported objective.

The loop is a pure function of (model seed, schedule seed, data, loss spec):
epoch shuffles come from a dedicated generator, updates are plain gradient
steps, and history records mean training loss plus in-distribution eval
accuracy per epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses as L
from .baselines import Gate, learned_mixin_batch, poe_batch, reweight_batch_loss
from .errors import ConfigurationError, InputError
from .model import Model, forward_full, softmax


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int
    batch_size: int
    learning_rate: float
    seed: int

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch size must be >= 1, got {self.batch_size}")
        # lr = 0 is tolerated as an explicit no-op schedule
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning rate must be >= 0, got {self.learning_rate}")


@dataclass
class TrainResult:
    history: list[dict]
    best_epoch: int
    gate: Gate | None = None


def batch_loss_and_grads(
    model: Model,
    inputs: np.ndarray,
    gold: np.ndarray,
    spec: L.LossSpec,
    batch_index: np.ndarray,
    gate: Gate | None = None,
):
    """Scalar batch loss plus gradients for every parameter the loss touches.

    Returns (loss, weight grads, bias grads, (du, dc) or None).
    """
    logits, activations, preacts = forward_full(model, inputs)
    probs = softmax(logits)

    dhidden_extra = None
    gate_grads = None
    if spec.kind == L.HARD_CE:
        loss, dlogits = L.hard_ce_batch(gold, probs)
    elif spec.kind == L.SOFT_CE:
        loss, dlogits = L.soft_ce_batch(spec.soft_targets[batch_index], probs)
    elif spec.kind == L.POE:
        loss, dlogits = poe_batch(gold, probs, spec.biased_dists[batch_index])
    elif spec.kind == L.REWEIGHT_BATCH:
        loss, dlogits = reweight_batch_loss(spec.reweight_gold_probs[batch_index], probs, gold)
    elif spec.kind == L.LEARNED_MIXIN:
        biased_logprobs = np.log(L.clamp_probs(spec.biased_dists[batch_index]))
        hidden = activations[-1]
        loss, dlogits, dhidden_extra, du, dc = learned_mixin_batch(
            gold, logits, biased_logprobs, hidden, gate, spec.mixin_weight
        )
        gate_grads = (du, dc)
    else:
        raise ConfigurationError(f"unknown loss kind {spec.kind!r}")

    grads_w, grads_b = _backward(model, activations, preacts, dlogits, dhidden_extra)
    return loss, grads_w, grads_b, gate_grads


def _backward(model, activations, preacts, dlogits, dhidden_extra=None):
    """Backpropagate d(batch loss)/d(logits) through the dense stack."""
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    delta = dlogits
    for layer in range(len(model.weights) - 1, -1, -1):
        a_in = activations[layer]
        grads_w[layer] = a_in.T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer == 0:
            break
        da = delta @ model.weights[layer].T
        if layer == len(model.weights) - 1 and dhidden_extra is not None:
            da = da + dhidden_extra
        if model.layout.activation == "tanh":
            delta = da * (1.0 - activations[layer] ** 2)
        else:
            delta = da * (preacts[layer - 1] > 0)
    return grads_w, grads_b


def evaluate_accuracy(model: Model, inputs: np.ndarray, gold: np.ndarray) -> float:
    logits, _, _ = forward_full(model, inputs)
    predicted = np.argmax(logits, axis=1)
    return float(np.mean(predicted == np.asarray(gold)))


def train(
    model: Model,
    inputs: np.ndarray,
    gold: np.ndarray,
    spec: L.LossSpec,
    schedule: TrainSchedule,
    eval_inputs: np.ndarray | None = None,
    eval_gold: np.ndarray | None = None,
) -> TrainResult:
    """Train `model` in place; returns per-epoch history and the gate, if any.

    `best_epoch` is the earliest epoch with the highest eval accuracy (falls
    back to the lowest-loss epoch without an eval split); callers default to
    the final-epoch parameters and may use the history to revisit that choice.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.int64)
    n = inputs.shape[0]
    if n == 0:
        raise InputError("training data must be nonempty")
    if np.any(gold < 0) or np.any(gold >= model.num_classes):
        raise InputError(f"labels out of range [0, {model.num_classes})")
    spec.validate(n, model.num_classes)

    gate = Gate.zeros(model.hidden_dim) if spec.kind == L.LEARNED_MIXIN else None
    rng = np.random.default_rng(schedule.seed)
    lr = schedule.learning_rate
    history = []

    for epoch in range(schedule.epochs):
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, schedule.batch_size):
            idx = perm[start : start + schedule.batch_size]
            loss, grads_w, grads_b, gate_grads = batch_loss_and_grads(
                model, inputs[idx], gold[idx], spec, idx, gate
            )
            epoch_losses.append(loss)
            for layer in range(len(model.weights)):
                model.weights[layer] -= lr * grads_w[layer]
                model.biases[layer] -= lr * grads_b[layer]
            if gate_grads is not None:
                du, dc = gate_grads
                gate.u -= lr * du
                gate.c -= lr * dc
        entry = {"epoch": epoch, "loss": float(np.mean(epoch_losses))}
        if eval_inputs is not None:
            entry["eval_accuracy"] = evaluate_accuracy(model, eval_inputs, eval_gold)
        history.append(entry)

    if eval_inputs is not None:
        accs = [h["eval_accuracy"] for h in history]
        best_epoch = int(np.argmax(accs))
    else:
        best_epoch = int(np.argmin([h["loss"] for h in history]))
    return TrainResult(history=history, best_epoch=best_epoch, gate=gate)
