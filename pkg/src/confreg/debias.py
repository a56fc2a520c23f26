"""Bias weights, bias-weighted scaling, and one-time soft-target generation.

The pipeline: a biased model scores how bias-predictable each training
example is (the probability it assigns to the gold label), that score drives
an exponent that flattens the teacher's output distribution, and the student
is then trained against the flattened distributions instead of one-hot
labels.  Targets are computed once and persisted as JSONL.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, InputError
from .losses import clamp_probs
from .util import atomic_write_text


@dataclass(frozen=True)
class SoftTarget:
    """Per-example training target: scaled teacher distribution plus its bias weight.

    The raw teacher distribution is retained so downstream analysis can audit
    how much each target was flattened.
    """

    example_id: str
    beta: float
    teacher: tuple[float, ...]
    target: tuple[float, ...]


def bias_weight(biased_dist: np.ndarray, gold: int) -> float:
    """The biased model's probability on the ground-truth label."""
    biased_dist = np.asarray(biased_dist, dtype=np.float64)
    if not 0 <= int(gold) < biased_dist.shape[-1]:
        raise InputError(f"gold index {gold} out of range [0, {biased_dist.shape[-1]})")
    return float(biased_dist[int(gold)])


def scale_distribution(dist: np.ndarray, beta: float) -> np.ndarray:
    """Flatten a distribution by exponent (1 - beta) and renormalize.

    beta = 0 is the identity (up to clamping); beta = 1 is exactly uniform.
    The map x -> x**(1-beta) is strictly increasing for beta < 1, so entry
    ordering (and hence the argmax) is preserved.
    """
    if not 0.0 <= beta <= 1.0:
        raise InputError(f"scaling weight must lie in [0, 1], got {beta}")
    p = clamp_probs(dist)
    scaled = np.power(p, 1.0 - float(beta))
    return scaled / scaled.sum(axis=-1, keepdims=True)


def compute_soft_targets(
    ids: Sequence[str],
    gold: np.ndarray,
    teacher_dists: np.ndarray,
    biased_dists: Mapping[str, np.ndarray] | np.ndarray,
    betas: np.ndarray | None = None,
) -> list[SoftTarget]:
    """Build one SoftTarget per example.

    `biased_dists` may be a mapping keyed by example id (the persisted file
    format) or an aligned array.  Passing `betas` directly bypasses the bias
    model entirely, which is how plain self-distillation (beta = 0) reuses
    this code path.
    """
    teacher_dists = np.asarray(teacher_dists, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.int64)
    if betas is None:
        if isinstance(biased_dists, Mapping):
            missing = [i for i in ids if i not in biased_dists]
            if missing:
                raise DataError(f"missing biased-model outputs for ids: {', '.join(missing)}")
            biased = np.stack([np.asarray(biased_dists[i], dtype=np.float64) for i in ids])
        else:
            biased = np.asarray(biased_dists, dtype=np.float64)
        betas = biased[np.arange(gold.size), gold]
    betas = np.asarray(betas, dtype=np.float64)

    targets = []
    for i, example_id in enumerate(ids):
        scaled = scale_distribution(teacher_dists[i], float(betas[i]))
        targets.append(
            SoftTarget(
                example_id=str(example_id),
                beta=float(betas[i]),
                teacher=tuple(float(v) for v in teacher_dists[i]),
                target=tuple(float(v) for v in scaled),
            )
        )
    return targets


def write_soft_targets(path: str, targets: Sequence[SoftTarget]) -> None:
    """Persist targets as JSONL, atomically; identical inputs give identical bytes."""
    lines = []
    for t in targets:
        lines.append(
            json.dumps(
                {"id": t.example_id, "beta": t.beta, "teacher": list(t.teacher), "target": list(t.target)}
            )
        )
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_soft_targets(path: str) -> list[SoftTarget]:
    targets = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                targets.append(
                    SoftTarget(
                        example_id=str(doc["id"]),
                        beta=float(doc["beta"]),
                        teacher=tuple(float(v) for v in doc["teacher"]),
                        target=tuple(float(v) for v in doc["target"]),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: malformed soft-target record: {exc}") from exc
    return targets


def make_soft_targets(
    teacher,
    inputs: np.ndarray,
    ids: Sequence[str],
    gold: np.ndarray,
    biased_dists: Mapping[str, np.ndarray],
    path: str,
) -> list[SoftTarget]:
    """Run the teacher over the training inputs, scale, and persist.

    One-time preprocessing: reruns on unchanged inputs rewrite the same bytes.
    """
    from .model import forward, softmax

    teacher_dists = softmax(forward(teacher, inputs))
    targets = compute_soft_targets(ids, gold, teacher_dists, biased_dists)
    write_soft_targets(path, targets)
    return targets


def run_confreg(config, out_dir: str):
    """Run the full confidence-regularization experiment for a config.

    Stages per seed: train teacher with hard cross entropy, train the biased
    model on bias features only, scale the teacher outputs into soft targets,
    then train a fresh main model against the targets.  Returns the RunRecord.
    """
    from dataclasses import replace

    from . import pipeline

    return pipeline.run_experiment(replace(config, method="confreg"), out_dir)
