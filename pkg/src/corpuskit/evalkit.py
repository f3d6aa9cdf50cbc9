"""Benchmark metric computation and aggregate scoring.

Covers exact-match accuracy, mean absolute deviation for numeric targets,
micro token F1 for set-valued extraction tasks, 10-bin expected calibration
error, judge-agreement MAE, and the aggregate formulas that sum benchmark
scores (deviation metrics negated, lower being better) and mix in an
instruction-following score at fixed weights.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

_TOKEN_SPLIT = re.compile(r"[,\s]+")


@dataclass
class PredictionRecord:
    id: str
    predicted: object  # str label, numeric value, or token-set string
    gold: object
    confidence: Optional[float] = None
    correct: Optional[bool] = None

    def is_correct(self) -> bool:
        if self.correct is not None:
            return self.correct
        return self.predicted == self.gold


class Metric(str, Enum):
    accuracy = "accuracy"
    mad = "mad"
    f1 = "f1"


@dataclass(frozen=True)
class BenchmarkScore:
    name: str
    value: float
    metric: Metric

    def __post_init__(self):
        if self.metric in (Metric.accuracy, Metric.f1) and not 0 <= self.value <= 1:
            raise ValueError(f"{self.name}: {self.metric.value} must lie in [0, 1]")
        if self.metric is Metric.mad and self.value < 0:
            raise ValueError(f"{self.name}: mad must be >= 0")


def _require_records(records: Sequence) -> Sequence:
    if not records:
        raise ValueError("no records to score")
    return records


def accuracy(records: Sequence[PredictionRecord]) -> float:
    """Mean exact-match rate over label predictions."""
    records = _require_records(records)
    return sum(r.predicted == r.gold for r in records) / len(records)


def mad(records: Sequence[PredictionRecord]) -> float:
    """Mean absolute deviation over numeric predictions (lower is better)."""
    records = _require_records(records)
    return sum(abs(float(r.predicted) - float(r.gold)) for r in records) / len(records)


def split_tokens(value: object) -> set[str]:
    """Token set from a string (comma/whitespace separated) or iterable."""
    if isinstance(value, str):
        return {t for t in _TOKEN_SPLIT.split(value) if t}
    return set(value)


def token_f1(records: Sequence[PredictionRecord]) -> float:
    """Micro-averaged F1 over predicted vs gold token sets."""
    records = _require_records(records)
    tp = fp = fn = 0
    for r in records:
        pred, gold = split_tokens(r.predicted), split_tokens(r.gold)
        tp += len(pred & gold)
        fp += len(pred - gold)
        fn += len(gold - pred)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


METRIC_FUNCS = {Metric.accuracy: accuracy, Metric.mad: mad, Metric.f1: token_f1}


# ---------------------------------------------------------------------------
# Expected calibration error
# ---------------------------------------------------------------------------


@dataclass
class CalibrationBin:
    count: int = 0
    confidence_sum: float = 0.0
    correct_sum: int = 0

    @property
    def mean_confidence(self) -> float:
        return self.confidence_sum / self.count if self.count else 0.0

    @property
    def accuracy(self) -> float:
        return self.correct_sum / self.count if self.count else 0.0


@dataclass
class CalibrationReport:
    num_bins: int
    per_bin: list[CalibrationBin] = field(default_factory=list)
    ece: float = 0.0

    def to_dict(self) -> dict:
        return {
            "num_bins": self.num_bins,
            "ece": self.ece,
            "bins": [
                {
                    "count": b.count,
                    "mean_confidence": b.mean_confidence,
                    "accuracy": b.accuracy,
                }
                for b in self.per_bin
            ],
        }


def ece(records: Sequence[PredictionRecord], num_bins: int = 10) -> CalibrationReport:
    """Bin-weighted mean |accuracy - confidence| gap.

    Bins are [b/B, (b+1)/B) with the last bin closed at 1.0. Every record
    must carry a confidence; correctness falls back to predicted == gold.
    """
    records = _require_records(records)
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    bins = [CalibrationBin() for _ in range(num_bins)]
    for r in records:
        if r.confidence is None:
            raise ValueError(f"record {r.id!r} has no confidence")
        if not 0 <= r.confidence <= 1:
            raise ValueError(f"record {r.id!r} confidence outside [0, 1]")
        index = min(int(r.confidence * num_bins), num_bins - 1)
        b = bins[index]
        b.count += 1
        b.confidence_sum += r.confidence
        b.correct_sum += int(r.is_correct())
    total = len(records)
    value = sum(
        (b.count / total) * abs(b.accuracy - b.mean_confidence) for b in bins if b.count
    )
    return CalibrationReport(num_bins=num_bins, per_bin=bins, ece=value)


# ---------------------------------------------------------------------------
# Aggregate formulas
# ---------------------------------------------------------------------------


def aggregate_cyber(
    scores: Sequence[BenchmarkScore],
    expected: Optional[Sequence[str]] = None,
) -> float:
    """Sum of benchmark scores with every deviation-metric score negated.

    Exactly one score per benchmark; when `expected` names the configured
    benchmark set, missing or extra entries are errors.
    """
    names = [s.name for s in scores]
    if len(names) != len(set(names)):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate benchmark scores: {dupes}")
    if expected is not None:
        missing = sorted(set(expected) - set(names))
        extra = sorted(set(names) - set(expected))
        if missing or extra:
            raise ValueError(f"benchmark set mismatch: missing {missing}, extra {extra}")
    return sum(-s.value if s.metric is Metric.mad else s.value for s in scores)


def aggregate_weighted(
    mt_bench: float, cyber_agg: float, w_mt: float = 0.3, w_cyber: float = 0.7
) -> float:
    """Weighted mix of an instruction-following score and the domain aggregate."""
    if not math.isclose(w_mt + w_cyber, 1.0, abs_tol=1e-9):
        raise ValueError(f"weights must sum to 1, got {w_mt + w_cyber}")
    return w_mt * mt_bench + w_cyber * cyber_agg


def mae_agreement(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """Mean absolute difference between two aligned score lists."""
    if len(scores_a) != len(scores_b):
        raise ValueError(f"length mismatch: {len(scores_a)} vs {len(scores_b)}")
    if not scores_a:
        raise ValueError("no scores to compare")
    return sum(abs(a - b) for a, b in zip(scores_a, scores_b)) / len(scores_a)


def improvement_pct(new: float, old: float) -> str:
    """Relative change formatted the way benchmark tables print it."""
    pct = (new - old) / old * 100
    arrow = "↑" if pct >= 0 else "↓"
    return f"{arrow}{abs(pct):.1f}%"


# ---------------------------------------------------------------------------
# Prediction-record JSONL
# ---------------------------------------------------------------------------


def load_prediction_jsonl(path: str | Path) -> list[PredictionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            data = json.loads(line)
            records.append(
                PredictionRecord(
                    id=str(data["id"]),
                    predicted=data["predicted"],
                    gold=data["gold"],
                    confidence=data.get("confidence"),
                    correct=data.get("correct"),
                )
            )
    return records
