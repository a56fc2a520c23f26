"""Evaluation: subset accuracies, expected calibration error, reliability
bins, and bias-weight histograms.

Confidence is the probability of the predicted (max) label.  Bins partition
(0, 1] into equal right-closed widths; empty bins contribute zero.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, MetricError

HIGH_BETA_THRESHOLD = 0.8


@dataclass(frozen=True)
class PredictionRecord:
    example_id: str
    predicted: int
    confidence: float
    correct: bool
    subset: str


@dataclass
class ReliabilityBins:
    n_bins: int
    counts: list[int]
    mean_confidence: list[float]
    accuracy: list[float]

    def total(self) -> int:
        return sum(self.counts)


@dataclass
class BiasHistogram:
    n_bins: int
    counts: list[int]
    fraction_high: float


def records_from_probs(
    ids: Sequence[str],
    probs: np.ndarray,
    gold: np.ndarray,
    subsets: Sequence[str],
) -> list[PredictionRecord]:
    """Build prediction records; argmax ties break toward the lowest index."""
    probs = np.asarray(probs, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.int64)
    predicted = np.argmax(probs, axis=1)
    confidence = probs[np.arange(len(ids)), predicted]
    return [
        PredictionRecord(
            example_id=str(ids[i]),
            predicted=int(predicted[i]),
            confidence=float(confidence[i]),
            correct=bool(predicted[i] == gold[i]),
            subset=str(subsets[i]),
        )
        for i in range(len(ids))
    ]


def _select(records: Sequence[PredictionRecord], subset: str | None) -> list[PredictionRecord]:
    if subset is None:
        chosen = list(records)
    else:
        chosen = [r for r in records if r.subset == subset]
    if not chosen:
        raise MetricError(f"no records selected (subset={subset!r})")
    return chosen


def accuracy(records: Sequence[PredictionRecord], subset: str | None = None) -> float:
    chosen = _select(records, subset)
    return float(np.mean([r.correct for r in chosen]))


def _bin_index(confidence: float, n_bins: int) -> int:
    # right-closed bins over (0, 1]: bin b covers (b/n, (b+1)/n]
    idx = math.ceil(confidence * n_bins) - 1
    return min(max(idx, 0), n_bins - 1)


def ece(records: Sequence[PredictionRecord], n_bins: int = 10) -> float:
    """Expected calibration error: bin-weighted |accuracy - mean confidence|."""
    if n_bins < 1:
        raise InputError(f"n_bins must be >= 1, got {n_bins}")
    chosen = _select(records, None)
    bins = reliability_histogram(chosen, n_bins)
    n = bins.total()
    return float(
        sum(
            (bins.counts[b] / n) * abs(bins.accuracy[b] - bins.mean_confidence[b])
            for b in range(n_bins)
            if bins.counts[b]
        )
    )


def reliability_histogram(records: Sequence[PredictionRecord], n_bins: int = 10) -> ReliabilityBins:
    if n_bins < 1:
        raise InputError(f"n_bins must be >= 1, got {n_bins}")
    chosen = _select(records, None)
    counts = [0] * n_bins
    conf_sum = [0.0] * n_bins
    correct_sum = [0] * n_bins
    for r in chosen:
        b = _bin_index(r.confidence, n_bins)
        counts[b] += 1
        conf_sum[b] += r.confidence
        correct_sum[b] += int(r.correct)
    mean_conf = [conf_sum[b] / counts[b] if counts[b] else 0.0 for b in range(n_bins)]
    acc = [correct_sum[b] / counts[b] if counts[b] else 0.0 for b in range(n_bins)]
    return ReliabilityBins(n_bins=n_bins, counts=counts, mean_confidence=mean_conf, accuracy=acc)


def bias_weight_histogram(weights: Sequence[float], n_bins: int = 10) -> BiasHistogram:
    """Equal-width histogram of bias weights plus the fraction above 0.8."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0:
        raise MetricError("no bias weights to histogram")
    if np.any(weights < 0) or np.any(weights > 1):
        raise InputError("bias weights must lie in [0, 1]")
    counts = [0] * n_bins
    for w in weights:
        counts[_bin_index(float(w), n_bins)] += 1
    fraction_high = float(np.mean(weights > HIGH_BETA_THRESHOLD))
    return BiasHistogram(n_bins=n_bins, counts=counts, fraction_high=fraction_high)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def write_reliability_csv(bins: ReliabilityBins, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count", "mean_conf", "accuracy"])
        for b in range(bins.n_bins):
            writer.writerow(
                [
                    repr(b / bins.n_bins),
                    repr((b + 1) / bins.n_bins),
                    bins.counts[b],
                    repr(bins.mean_confidence[b]),
                    repr(bins.accuracy[b]),
                ]
            )


def read_reliability_csv(path: str) -> ReliabilityBins:
    counts, mean_conf, acc = [], [], []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            counts.append(int(row["count"]))
            mean_conf.append(float(row["mean_conf"]))
            acc.append(float(row["accuracy"]))
    return ReliabilityBins(n_bins=len(counts), counts=counts, mean_confidence=mean_conf, accuracy=acc)


def write_bias_histogram_csv(hist: BiasHistogram, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for b in range(hist.n_bins):
            writer.writerow([repr(b / hist.n_bins), repr((b + 1) / hist.n_bins), hist.counts[b]])
        writer.writerow(["fraction_above_0.8", "", repr(hist.fraction_high)])
