"""Training objectives as pure functions of (targets, model outputs).

Batch variants return (scalar loss, gradient w.r.t. logits for that scalar)
so the trainer and the finite-difference checks share one contract.  All
probabilities are clamped to [1e-12, 1] before logs or powers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError

PROB_FLOOR = 1e-12

HARD_CE = "hard_ce"
SOFT_CE = "soft_ce"
POE = "poe"
LEARNED_MIXIN = "learned_mixin"
REWEIGHT_BATCH = "reweight_batch"
LOSS_KINDS = (HARD_CE, SOFT_CE, POE, LEARNED_MIXIN, REWEIGHT_BATCH)


def clamp_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(p, dtype=np.float64), PROB_FLOOR, 1.0)


def one_hot(index: int, num_classes: int) -> np.ndarray:
    if not 0 <= int(index) < num_classes:
        raise InputError(f"class index {index} out of range [0, {num_classes})")
    v = np.zeros(num_classes)
    v[int(index)] = 1.0
    return v


def check_prob_dist(p: np.ndarray, num_classes: int | None = None, tol: float = 1e-9) -> np.ndarray:
    """Validate a probability vector: entries in [0,1], sums to 1 within tol, K >= 2."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise InputError(f"probability vector must be 1-D with length >= 2, got shape {p.shape}")
    if num_classes is not None and p.size != num_classes:
        raise InputError(f"expected length {num_classes}, got {p.size}")
    if not np.all(np.isfinite(p)) or np.any(p < -tol) or np.any(p > 1.0 + tol):
        raise InputError("probability entries must lie in [0, 1]")
    if abs(float(p.sum()) - 1.0) > tol:
        raise InputError(f"probabilities must sum to 1, got {p.sum()!r}")
    return p


def entropy(dist: np.ndarray) -> float | np.ndarray:
    """Shannon entropy in nats along the last axis."""
    p = clamp_probs(dist)
    h = -np.sum(np.asarray(dist) * np.log(p), axis=-1)
    return float(h) if np.ndim(h) == 0 else h


@dataclass
class LossSpec:
    """Names a training objective and carries its frozen auxiliary data.

    Auxiliary arrays are aligned with the training-set row order.  The
    entropy-penalty weight only applies to the learned-mixin objective.
    """

    kind: str
    soft_targets: np.ndarray | None = None
    biased_dists: np.ndarray | None = None
    reweight_gold_probs: np.ndarray | None = None
    mixin_weight: float = field(default=0.03)

    def validate(self, n: int, num_classes: int) -> None:
        if self.kind not in LOSS_KINDS:
            raise ConfigurationError(f"unknown loss kind {self.kind!r}, expected one of {LOSS_KINDS}")
        if self.mixin_weight < 0:
            raise ConfigurationError(f"entropy-penalty weight must be >= 0, got {self.mixin_weight}")
        if self.kind == SOFT_CE:
            if self.soft_targets is None:
                raise ConfigurationError("soft_ce loss requires soft targets")
            if self.soft_targets.shape != (n, num_classes):
                raise ConfigurationError(
                    f"soft targets must have shape ({n}, {num_classes}), got {self.soft_targets.shape}"
                )
        if self.kind in (POE, LEARNED_MIXIN):
            if self.biased_dists is None:
                raise ConfigurationError(f"{self.kind} loss requires biased-model outputs")
            if self.biased_dists.shape != (n, num_classes):
                raise ConfigurationError(
                    f"biased outputs must have shape ({n}, {num_classes}), got {self.biased_dists.shape}"
                )
        if self.kind == REWEIGHT_BATCH:
            if self.reweight_gold_probs is None:
                raise ConfigurationError("reweight_batch loss requires teacher gold probabilities")
            if self.reweight_gold_probs.shape != (n,):
                raise ConfigurationError(
                    f"teacher gold probabilities must have shape ({n},), got {self.reweight_gold_probs.shape}"
                )


# ---------------------------------------------------------------------------
# Batch objectives (scalar loss + d loss / d logits)
# ---------------------------------------------------------------------------


def soft_ce_batch(targets: np.ndarray, probs: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross entropy -t . log p over a batch; gradient is (p - t)/n."""
    targets = np.asarray(targets, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if targets.shape != probs.shape:
        raise InputError(f"target shape {targets.shape} != prediction shape {probs.shape}")
    n = probs.shape[0]
    losses = -np.sum(targets * np.log(clamp_probs(probs)), axis=1)
    return float(losses.mean()), (probs - targets) / n


def hard_ce_batch(gold: np.ndarray, probs: np.ndarray) -> tuple[float, np.ndarray]:
    gold = np.asarray(gold, dtype=np.int64)
    k = probs.shape[1]
    if np.any(gold < 0) or np.any(gold >= k):
        raise InputError(f"gold labels out of range [0, {k})")
    targets = np.zeros_like(probs)
    targets[np.arange(gold.size), gold] = 1.0
    return soft_ce_batch(targets, probs)


# ---------------------------------------------------------------------------
# Single-distribution conveniences
# ---------------------------------------------------------------------------


def soft_ce(target: np.ndarray, student_probs: np.ndarray) -> float:
    """Cross entropy between a soft target and one predicted distribution."""
    target = np.asarray(target, dtype=np.float64)
    student_probs = np.asarray(student_probs, dtype=np.float64)
    if target.shape != student_probs.shape:
        raise InputError(f"length mismatch: target {target.shape} vs student {student_probs.shape}")
    loss, _ = soft_ce_batch(target[None, :], student_probs[None, :])
    return loss


def hard_ce(gold: int, student_probs: np.ndarray) -> float:
    """Cross entropy against a one-hot target; equals soft_ce(one_hot(gold), p)."""
    student_probs = np.asarray(student_probs, dtype=np.float64)
    return soft_ce(one_hot(gold, student_probs.shape[-1]), student_probs)
