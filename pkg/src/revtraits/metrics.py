"""Evaluation metrics comparing predicted trait scores against a reference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Optional, Sequence

from .errors import MetricError

HIGH_THRESHOLD = 0.75  # strict: exactly 0.75 is not High
LOW_THRESHOLD = 0.25   # strict: exactly 0.25 is not Low


@dataclass(frozen=True)
class PairedScores:
    """Reference/predicted score pairs aligned by (physician, trait)."""

    reference: tuple[float, ...]
    predicted: tuple[float, ...]

    def __post_init__(self):
        if len(self.reference) != len(self.predicted):
            raise ValueError("reference and predicted must have equal length")
        if not self.reference:
            raise MetricError("no score pairs", code="E_EMPTY")
        for v in self.reference + self.predicted:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"score {v} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.reference)


def paired(reference: Sequence[Optional[float]],
           predicted: Sequence[Optional[float]]) -> PairedScores:
    """Align two score sequences, dropping pairs where either side is missing."""
    if len(reference) != len(predicted):
        raise ValueError("reference and predicted must have equal length")
    kept = [(y, p) for y, p in zip(reference, predicted) if y is not None and p is not None]
    if not kept:
        raise MetricError("no complete score pairs", code="E_EMPTY")
    return PairedScores(
        reference=tuple(y for y, _ in kept),
        predicted=tuple(p for _, p in kept),
    )


def mae(p: PairedScores) -> float:
    return sum(abs(y - yh) for y, yh in zip(p.reference, p.predicted)) / len(p)


def rmse(p: PairedScores) -> float:
    return math.sqrt(sum((y - yh) ** 2 for y, yh in zip(p.reference, p.predicted)) / len(p))


def accuracy(reference_labels: Sequence[Hashable], predicted_labels: Sequence[Hashable]) -> float:
    if len(reference_labels) != len(predicted_labels):
        raise ValueError("label sequences must have equal length")
    if not reference_labels:
        raise MetricError("no labels", code="E_EMPTY")
    matches = sum(1 for a, b in zip(reference_labels, predicted_labels) if a == b)
    return matches / len(reference_labels)


@dataclass(frozen=True)
class HighLowAgreement:
    """Rates are None when the corresponding reference subset is empty."""

    high_rate: Optional[float]
    low_rate: Optional[float]


def high_low_agreement(p: PairedScores) -> HighLowAgreement:
    """Agreement on extreme classifications, conditioned on the reference."""
    high_pairs = [(y, yh) for y, yh in zip(p.reference, p.predicted) if y > HIGH_THRESHOLD]
    low_pairs = [(y, yh) for y, yh in zip(p.reference, p.predicted) if y < LOW_THRESHOLD]
    high_rate = (
        sum(1 for _, yh in high_pairs if yh > HIGH_THRESHOLD) / len(high_pairs)
        if high_pairs else None
    )
    low_rate = (
        sum(1 for _, yh in low_pairs if yh < LOW_THRESHOLD) / len(low_pairs)
        if low_pairs else None
    )
    return HighLowAgreement(high_rate=high_rate, low_rate=low_rate)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise ValueError("sequences must have equal length")
    n = len(x)
    if n < 2:
        raise MetricError("pearson requires n >= 2", code="E_EMPTY")
    mean_x = sum(x) / n
    mean_y = sum(y) / n
    dx = [v - mean_x for v in x]
    dy = [v - mean_y for v in y]
    var_x = sum(d * d for d in dx)
    var_y = sum(d * d for d in dy)
    if var_x == 0.0 or var_y == 0.0:
        raise MetricError("zero variance in an argument", code="E_DEGENERATE")
    return sum(a * b for a, b in zip(dx, dy)) / math.sqrt(var_x * var_y)


def cohens_kappa(a_labels: Sequence[Hashable], b_labels: Sequence[Hashable]) -> float:
    """Chance-corrected agreement from the two raters' marginals."""
    if len(a_labels) != len(b_labels):
        raise ValueError("label sequences must have equal length")
    n = len(a_labels)
    if n == 0:
        raise MetricError("no labels", code="E_EMPTY")
    p_o = sum(1 for a, b in zip(a_labels, b_labels) if a == b) / n
    labels = set(a_labels) | set(b_labels)
    p_e = sum(
        (sum(1 for v in a_labels if v == lab) / n) * (sum(1 for v in b_labels if v == lab) / n)
        for lab in labels
    )
    if p_e == 1.0:
        raise MetricError("degenerate marginals (chance agreement = 1)", code="E_DEGENERATE")
    return (p_o - p_e) / (1.0 - p_e)
