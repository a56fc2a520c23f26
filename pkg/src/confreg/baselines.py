"""Competing debiasing objectives: product-of-expert, learned-mixin, batch
reweighting, and plain self-distillation.

Biased-model outputs are precomputed and frozen; gradients only reach the
main model (and, for learned-mixin, its gate).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .debias import SoftTarget, compute_soft_targets
from .errors import ConfigurationError, InputError, NumericError
from .losses import clamp_probs, entropy, one_hot


@dataclass
class EnsembleOutput:
    """Combined distribution plus the pieces it was assembled from."""

    combined: np.ndarray
    main_logprobs: np.ndarray
    biased_logprobs: np.ndarray
    gate: float | None = None


@dataclass
class Gate:
    """Learned-mixin gate: g(x) = softplus(u . h + c) on the last hidden state."""

    u: np.ndarray
    c: float = 0.0

    @staticmethod
    def zeros(hidden_dim: int) -> "Gate":
        return Gate(u=np.zeros(hidden_dim), c=0.0)

    def preact(self, hidden: np.ndarray) -> np.ndarray:
        return np.asarray(hidden, dtype=np.float64) @ self.u + self.c

    def value(self, hidden: np.ndarray) -> np.ndarray:
        return _softplus(self.preact(hidden))

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.u.ravel(), [self.c]])

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        self.u = flat[:-1].copy()
        self.c = float(flat[-1])


def _softplus(a: np.ndarray) -> np.ndarray:
    # log(1 + e^a) computed without overflow for large |a|
    return np.logaddexp(0.0, a)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def poe_combine(main: np.ndarray, biased: np.ndarray) -> EnsembleOutput:
    """Normalized element-wise product of the two distributions."""
    main = np.asarray(main, dtype=np.float64)
    biased = np.asarray(biased, dtype=np.float64)
    if main.shape != biased.shape:
        raise InputError(f"length mismatch: main {main.shape} vs biased {biased.shape}")
    log_main = np.log(clamp_probs(main))
    log_biased = np.log(clamp_probs(biased))
    prod = np.exp(log_main + log_biased)
    return EnsembleOutput(
        combined=prod / prod.sum(axis=-1, keepdims=True),
        main_logprobs=log_main,
        biased_logprobs=log_biased,
    )


def poe_batch(gold: np.ndarray, probs: np.ndarray, biased_dists: np.ndarray) -> tuple[float, np.ndarray]:
    """Hard cross entropy on the combined distribution; gradient w.r.t. main logits.

    Shifting logits by a constant leaves softmax unchanged, so the gradient
    reduces to (combined - one_hot)/n exactly as in plain cross entropy.
    """
    gold = np.asarray(gold, dtype=np.int64)
    n, k = probs.shape
    combined = poe_combine(probs, biased_dists).combined
    rows = np.arange(n)
    losses = -np.log(clamp_probs(combined))[rows, gold]
    grad = combined.copy()
    grad[rows, gold] -= 1.0
    return float(losses.mean()), grad / n


def learned_mixin_batch(
    gold: np.ndarray,
    logits: np.ndarray,
    biased_logprobs: np.ndarray,
    hidden: np.ndarray,
    gate: Gate,
    weight: float,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, float]:
    """Gated ensemble loss with entropy penalty.

    loss_i = -log softmax(log p_i + g_i * log b_i)[gold_i]
             + weight * H(softmax(g_i * log b_i))

    Returns (mean loss, d/dlogits, d/dhidden, d/du, d/dc); the hidden-state
    gradient flows back into the trunk because g depends on it.
    """
    if weight < 0:
        raise ConfigurationError(f"entropy-penalty weight must be >= 0, got {weight}")
    gold = np.asarray(gold, dtype=np.int64)
    n, k = logits.shape
    rows = np.arange(n)

    preact = gate.preact(hidden)
    g = _softplus(preact)
    log_p = _log_softmax(logits)
    combined = _log_softmax(log_p + g[:, None] * biased_logprobs)
    q = np.exp(combined)

    scaled = g[:, None] * biased_logprobs
    r = np.exp(_log_softmax(scaled))
    ent = entropy(r)

    losses = -combined[rows, gold] + weight * ent
    loss = float(np.mean(losses))

    q_minus = q.copy()
    q_minus[rows, gold] -= 1.0
    dlogits = q_minus / n

    # d loss_i / d g_i: ensemble term plus entropy-penalty term
    log_r = np.log(clamp_probs(r))
    dent_ds = -r * (log_r + ent[:, None])
    dg = np.sum(q_minus * biased_logprobs, axis=1) + weight * np.sum(dent_ds * biased_logprobs, axis=1)
    dpre = dg * _sigmoid(preact) / n

    du = hidden.T @ dpre
    dc = float(np.sum(dpre))
    dhidden = np.outer(dpre, gate.u)
    return loss, dlogits, dhidden, du, dc


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a, dtype=np.float64)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def learned_mixin_loss(
    main_logprobs: np.ndarray,
    biased_logprobs: np.ndarray,
    gate_value: float,
    gold: int,
    weight: float,
) -> float:
    """Single-example learned-mixin loss for a fixed gate value."""
    if weight < 0:
        raise ConfigurationError(f"entropy-penalty weight must be >= 0, got {weight}")
    main_logprobs = np.asarray(main_logprobs, dtype=np.float64)
    biased_logprobs = np.asarray(biased_logprobs, dtype=np.float64)
    if main_logprobs.shape != biased_logprobs.shape:
        raise InputError("length mismatch between main and biased log-probabilities")
    k = main_logprobs.shape[-1]
    target = one_hot(gold, k)
    combined = _log_softmax(main_logprobs + gate_value * biased_logprobs)
    penalty = weight * entropy(np.exp(_log_softmax(gate_value * biased_logprobs)))
    return float(-np.sum(target * combined) + penalty)


def reweight_batch_loss(
    teacher_gold_probs: np.ndarray,
    probs: np.ndarray,
    gold: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Cross entropy with per-example weights normalized within the batch.

    Weights come from the (scaled) teacher probability on the gold label, so
    examples the teacher solves mostly through the bias contribute less.
    """
    teacher_gold_probs = np.asarray(teacher_gold_probs, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.int64)
    if teacher_gold_probs.size == 0:
        raise InputError("batch must be nonempty")
    total = float(teacher_gold_probs.sum())
    if total <= 0:
        raise NumericError("all batch weights are zero; cannot normalize")
    weights = teacher_gold_probs / total

    n, k = probs.shape
    rows = np.arange(n)
    losses = -np.log(clamp_probs(probs))[rows, gold]
    loss = float(np.sum(weights * losses))

    targets = np.zeros_like(probs)
    targets[rows, gold] = 1.0
    grad = weights[:, None] * (probs - targets)
    return loss, grad


def self_distill_targets(
    ids: Sequence[str],
    gold: np.ndarray,
    teacher_dists: np.ndarray,
) -> list[SoftTarget]:
    """Distillation targets with the scaling switched off (beta = 0 everywhere)."""
    betas = np.zeros(len(ids))
    return compute_soft_targets(ids, gold, teacher_dists, biased_dists=None, betas=betas)
