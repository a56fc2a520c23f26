"""Synthetic biased datasets: generation, splits, JSONL persistence.

Two modes.  Vector mode draws Gaussian class clusters and appends a one-hot
"shortcut" feature that agrees with the label with probability rho on the
train and in-distribution splits but is uniform on the out-of-distribution
split.  Text-pair mode renders the same shortcut as lexical overlap between
a premise and a hypothesis, with class identity carried by content tokens.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DataError
from .util import atomic_write_text

VECTOR = "vector"
TEXTPAIR = "textpair"
MODES = (VECTOR, TEXTPAIR)

ALIGNED = "biased-aligned"
BIAS_FREE = "bias-free"

# Distance scale of the class means; fixed rather than configurable so the
# content signal strength is comparable across experiments.
SIGNAL_SCALE = 2.0

_FILLER_POOL = tuple(f"w{j:02d}" for j in range(40))
_SIGNAL_POOL_SIZE = 6
_PREMISE_FILLER = 5
_PREMISE_SIGNAL = 2
_HYPOTHESIS_LEN = 4


@dataclass(frozen=True)
class Example:
    example_id: str
    label: int
    subset: str
    x: tuple[float, ...] | None = None
    premise: tuple[str, ...] | None = None
    hypothesis: tuple[str, ...] | None = None


@dataclass
class Dataset:
    examples: list[Example]
    num_classes: int
    mode: str

    def __len__(self) -> int:
        return len(self.examples)

    def ids(self) -> list[str]:
        return [e.example_id for e in self.examples]

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.examples], dtype=np.int64)

    def subsets(self) -> list[str]:
        return [e.subset for e in self.examples]

    def feature_matrix(self) -> np.ndarray:
        if self.mode != VECTOR:
            raise DataError("feature_matrix is only defined for vector datasets")
        return np.array([e.x for e in self.examples], dtype=np.float64)


@dataclass(frozen=True)
class GenConfig:
    num_classes: int = 3
    train_size: int = 3000
    eval_size: int = 1000
    signal_dim: int = 10
    noise: float = 1.0
    bias_strength: float = 0.9
    mode: str = VECTOR
    seed: int = 0

    def __post_init__(self):
        k = self.num_classes
        if k < 2:
            raise ConfigurationError(f"need at least 2 classes, got {k}")
        if not (1.0 / k) <= self.bias_strength <= 1.0:
            raise ConfigurationError(
                f"bias strength must lie in [1/{k}, 1], got {self.bias_strength}"
            )
        if self.train_size < k or self.eval_size < k:
            raise ConfigurationError("split sizes must be at least the class count")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.mode == VECTOR and self.signal_dim < k:
            raise ConfigurationError("vector mode needs signal_dim >= num_classes")
        if self.noise < 0:
            raise ConfigurationError(f"noise must be >= 0, got {self.noise}")


def _draw_bias_classes(rng, labels: np.ndarray, k: int, rho: float, uniform: bool) -> np.ndarray:
    """Shortcut class per example: equal to the label w.p. rho, else uniform
    over the remaining classes; fully uniform on the OOD split."""
    n = labels.size
    if uniform:
        return rng.integers(0, k, size=n)
    aligned = rng.random(n) < rho
    offsets = rng.integers(1, k, size=n)
    return np.where(aligned, labels, (labels + offsets) % k)


def _gen_vector_split(rng, cfg: GenConfig, n: int, prefix: str, ood: bool) -> Dataset:
    k, d = cfg.num_classes, cfg.signal_dim
    means = np.zeros((k, d))
    means[np.arange(k), np.arange(k)] = SIGNAL_SCALE

    labels = rng.integers(0, k, size=n)
    signal = means[labels] + rng.normal(0.0, cfg.noise, size=(n, d))
    bias_class = _draw_bias_classes(rng, labels, k, cfg.bias_strength, uniform=ood)
    bias_block = np.zeros((n, k))
    bias_block[np.arange(n), bias_class] = 1.0
    x = np.concatenate([signal, bias_block], axis=1)

    examples = []
    for i in range(n):
        subset = ALIGNED if bias_class[i] == labels[i] else BIAS_FREE
        examples.append(
            Example(
                example_id=f"{prefix}-{i:06d}",
                label=int(labels[i]),
                subset=subset,
                x=tuple(float(v) for v in x[i]),
            )
        )
    return Dataset(examples, num_classes=k, mode=VECTOR)


def _signal_tokens(k: int) -> list[tuple[str, ...]]:
    return [tuple(f"sig{c}_{j}" for j in range(_SIGNAL_POOL_SIZE)) for c in range(k)]


def _gen_textpair_split(rng, cfg: GenConfig, n: int, prefix: str, ood: bool) -> Dataset:
    k = cfg.num_classes
    pools = _signal_tokens(k)
    labels = rng.integers(0, k, size=n)
    bias_class = _draw_bias_classes(rng, labels, k, cfg.bias_strength, uniform=ood)

    examples = []
    for i in range(n):
        y = int(labels[i])
        filler = [str(t) for t in rng.choice(_FILLER_POOL, size=_PREMISE_FILLER, replace=False)]
        content = [str(t) for t in rng.choice(pools[y], size=_PREMISE_SIGNAL, replace=False)]
        premise = filler + content
        order = rng.permutation(len(premise))
        premise = [premise[j] for j in order]

        # overlap is the shortcut: present exactly when the shortcut class is 0
        high_overlap = bias_class[i] == 0
        if high_overlap:
            picks = np.sort(rng.choice(len(premise), size=_HYPOTHESIS_LEN, replace=False))
            hypothesis = [premise[j] for j in picks]
        else:
            fresh = [str(t) for t in rng.choice(_FILLER_POOL, size=_HYPOTHESIS_LEN - 1, replace=False)]
            extra = str(rng.choice(pools[y]))
            hypothesis = fresh + [extra]

        subset = ALIGNED if bias_class[i] == y else BIAS_FREE
        examples.append(
            Example(
                example_id=f"{prefix}-{i:06d}",
                label=y,
                subset=subset,
                premise=tuple(premise),
                hypothesis=tuple(hypothesis),
            )
        )
    return Dataset(examples, num_classes=k, mode=TEXTPAIR)


def gen_synthetic(cfg: GenConfig) -> dict[str, Dataset]:
    """Generate {train, indist_eval, ood_eval}; deterministic per config."""
    rng = np.random.default_rng(cfg.seed)
    gen = _gen_vector_split if cfg.mode == VECTOR else _gen_textpair_split
    return {
        "train": gen(rng, cfg, cfg.train_size, "train", ood=False),
        "indist_eval": gen(rng, cfg, cfg.eval_size, "indist", ood=False),
        "ood_eval": gen(rng, cfg, cfg.eval_size, "ood", ood=True),
    }


def gen_extra_pool(cfg: GenConfig, size: int, seed: int) -> Dataset:
    """An OOD-style labeled pool used to augment the training split."""
    rng = np.random.default_rng(seed)
    pool_cfg = replace(cfg, seed=seed)
    gen = _gen_vector_split if pool_cfg.mode == VECTOR else _gen_textpair_split
    return gen(rng, pool_cfg, size, "extra", ood=True)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _example_to_doc(e: Example, mode: str) -> dict:
    if mode == VECTOR:
        return {"id": e.example_id, "x": list(e.x), "label": e.label, "subset": e.subset}
    return {
        "id": e.example_id,
        "premise": list(e.premise),
        "hypothesis": list(e.hypothesis),
        "label": e.label,
        "subset": e.subset,
    }


def write_dataset(dataset: Dataset, path: str) -> None:
    lines = [json.dumps(_example_to_doc(e, dataset.mode)) for e in dataset.examples]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dataset(path: str, num_classes: int | None = None) -> Dataset:
    """Read a JSONL dataset; pass `num_classes` to enforce the label range.

    Without it the class count is inferred as max(label) + 1 (at least 2).
    """
    examples = []
    mode = None
    max_label = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                doc = json.loads(raw)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            try:
                label = int(doc["label"])
                if "x" in doc:
                    line_mode = VECTOR
                    ex = Example(
                        example_id=str(doc["id"]),
                        label=label,
                        subset=str(doc.get("subset", "")),
                        x=tuple(float(v) for v in doc["x"]),
                    )
                else:
                    line_mode = TEXTPAIR
                    ex = Example(
                        example_id=str(doc["id"]),
                        label=label,
                        subset=str(doc.get("subset", "")),
                        premise=tuple(str(t) for t in doc["premise"]),
                        hypothesis=tuple(str(t) for t in doc["hypothesis"]),
                    )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad example record: {exc}") from exc
            if label < 0 or (num_classes is not None and label >= num_classes):
                bound = num_classes if num_classes is not None else "inferred range"
                raise DataError(f"{path}:{lineno}: label {label} out of range [0, {bound})")
            if mode is None:
                mode = line_mode
            elif mode != line_mode:
                raise DataError(f"{path}:{lineno}: mixed payload kinds in one dataset")
            max_label = max(max_label, label)
            examples.append(ex)
    if not examples:
        raise DataError(f"{path}: dataset is empty")
    k = num_classes if num_classes is not None else max(max_label + 1, 2)
    return Dataset(examples, num_classes=k, mode=mode)


def augment(train: Dataset, extra: Dataset, fraction: float, seed: int) -> Dataset:
    """Append a seeded random floor(fraction * |extra|) subset of `extra`."""
    if not 0.0 <= fraction <= 1.0:
        raise ConfigurationError(f"fraction must lie in [0, 1], got {fraction}")
    if train.num_classes != extra.num_classes:
        raise DataError(
            f"incompatible class counts: {train.num_classes} vs {extra.num_classes}"
        )
    if train.mode != extra.mode:
        raise DataError(f"incompatible payload kinds: {train.mode} vs {extra.mode}")
    count = int(fraction * len(extra.examples))
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(extra.examples), size=count, replace=False) if count else []
    chosen = [extra.examples[int(i)] for i in sorted(picks)]
    return Dataset(train.examples + chosen, num_classes=train.num_classes, mode=train.mode)
