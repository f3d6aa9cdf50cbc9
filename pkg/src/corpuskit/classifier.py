"""Binary domain-relevance classifier and threshold calibration.

A hashed n-gram logistic model stands in for a small transformer encoder:
the filtering procedure (negative sampling, score binning, threshold
selection) is encoder-agnostic, and external score columns can be swapped
in wherever a stronger scorer is available.

Features are L2-normalized hashed term frequencies over word 1-2 grams.
Training is plain per-sample SGD on logistic loss with a seeded shuffle,
single-threaded by contract so identical data and seed reproduce the same
weights bit for bit.
"""

from __future__ import annotations

import json
import logging
import math
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import xxhash

from .corpus import Document
from .tokenizer import tokenize

logger = logging.getLogger(__name__)

DEFAULT_FEATURE_DIM = 1 << 20

# Score bin edges, descending; widths shrink toward low scores where the
# population explodes. The 0.003 / 0.001 anchors match the operating range
# where relevance ratios typically cross 50%.
DEFAULT_BIN_EDGES = (
    1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1,
    0.05, 0.03, 0.01, 0.003, 0.001, 0.0,
)

_MAGIC = b"CKLC"
_VERSION = 1
_EPS = 1e-15


@dataclass
class LinearClassifier:
    feature_dim: int = DEFAULT_FEATURE_DIM
    weights: np.ndarray = None  # float32 [feature_dim]
    bias: float = 0.0
    hash_seed: int = 0
    ngram_range: tuple[int, int] = (1, 2)

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.zeros(self.feature_dim, dtype=np.float32)
        if self.weights.shape != (self.feature_dim,):
            raise ValueError("weights length must equal feature_dim")

    # -- features ---------------------------------------------------------

    def _ngrams(self, tokens: list[str]):
        lo, hi = self.ngram_range
        for n in range(lo, hi + 1):
            for i in range(len(tokens) - n + 1):
                yield " ".join(tokens[i : i + n])

    def features(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        """Sparse L2-normalized hashed term-frequency vector (indices, values)."""
        counts: dict[int, int] = {}
        for gram in self._ngrams(tokenize(text)):
            idx = xxhash.xxh64_intdigest(gram, self.hash_seed) % self.feature_dim
            counts[idx] = counts.get(idx, 0) + 1
        if not counts:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float32)
        idx = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
        val = np.fromiter(counts.values(), dtype=np.float32, count=len(counts))
        val /= np.float32(np.sqrt(np.float64(val @ val)))
        return idx, val

    # -- scoring ------------------------------------------------------------

    def margin(self, text: str) -> float:
        idx, val = self.features(text)
        return float(self.weights[idx] @ val) + self.bias

    def score_text(self, text: str) -> float:
        p = 1.0 / (1.0 + math.exp(-self.margin(text)))
        return min(max(p, _EPS), 1.0 - _EPS)

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path):
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IQQBB", _VERSION, self.feature_dim,
                                 self.hash_seed, *self.ngram_range))
            fh.write(self.weights.astype("<f4").tobytes())
            fh.write(struct.pack("<f", self.bias))

    @classmethod
    def load(cls, path: str | Path) -> "LinearClassifier":
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise ValueError("not a corpuskit classifier file")
            version, dim, seed, lo, hi = struct.unpack("<IQQBB", fh.read(22))
            if version != _VERSION:
                raise ValueError(f"unsupported classifier file version {version}")
            weights = np.frombuffer(fh.read(dim * 4), dtype="<f4").copy()
            (bias,) = struct.unpack("<f", fh.read(4))
        return cls(feature_dim=dim, weights=weights, bias=float(bias),
                   hash_seed=seed, ngram_range=(lo, hi))


def score(model: LinearClassifier, doc: Document) -> float:
    """Relevance score in (0, 1); empty content scores the bias alone."""
    if not doc.content.strip():
        logger.warning("scoring empty-content document %s: bias-only score", doc.url)
    return model.score_text(doc.content)


def assemble_training_set(
    positives: Iterable[Document],
    background: Iterable[Document],
    neg_ratio: int = 10,
    seed: int = 0,
) -> list[tuple[Document, int]]:
    """Label positives 1 and a seeded background sample (neg_ratio x) 0, shuffled."""
    pos = list(positives)
    bg = list(background)
    needed = neg_ratio * len(pos)
    if len(bg) < needed:
        raise ValueError(
            f"background too small: need {needed} documents, have {len(bg)} "
            f"(short by {needed - len(bg)})"
        )
    rng = random.Random(seed)
    negatives = rng.sample(bg, needed)
    data = [(d, 1) for d in pos] + [(d, 0) for d in negatives]
    rng.shuffle(data)
    return data


@dataclass
class TrainResult:
    model: LinearClassifier
    train_accuracy: float


def train_classifier(
    data: Sequence[tuple[Document, int]],
    epochs: int = 5,
    lr: float = 0.5,
    seed: int = 0,
    feature_dim: int = DEFAULT_FEATURE_DIM,
    hash_seed: int = 0,
    ngram_range: tuple[int, int] = (1, 2),
    shuffle: bool = True,
) -> TrainResult:
    """Fit by seeded per-sample SGD on logistic loss.

    shuffle=False keeps the given sample order (useful when the caller
    already shuffled, e.g. assemble_training_set output).
    """
    labels = {y for _, y in data}
    if labels != {0, 1}:
        raise ValueError("training data must contain both classes")
    model = LinearClassifier(feature_dim=feature_dim, hash_seed=hash_seed,
                             ngram_range=ngram_range)
    cached = [(model.features(doc.content), y) for doc, y in data]
    rng = random.Random(seed)
    order = list(range(len(cached)))
    for _ in range(epochs):
        if shuffle:
            rng.shuffle(order)
        for i in order:
            (idx, val), y = cached[i]
            m = float(model.weights[idx] @ val) + model.bias
            p = 1.0 / (1.0 + math.exp(-m))
            g = p - y
            model.weights[idx] -= np.float32(lr * g) * val
            model.bias -= lr * g
    correct = 0
    for (idx, val), y in cached:
        m = float(model.weights[idx] @ val) + model.bias
        correct += int((m > 0) == bool(y))
    return TrainResult(model=model, train_accuracy=correct / len(cached))


# ---------------------------------------------------------------------------
# Scored-corpus files: input JSONL plus an added score column
# ---------------------------------------------------------------------------


def write_scored_jsonl(
    docs: Iterable[Document], model: LinearClassifier, path: str | Path
) -> int:
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            record = doc.to_record()
            record["score"] = score(model, doc)
            if not doc.content.strip():
                record["empty_content"] = True
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
            written += 1
    return written


def read_scored_jsonl(path: str | Path) -> list[tuple[Document, float]]:
    from .corpus import document_from_record

    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            out.append((document_from_record(record), float(record["score"])))
    return out


# ---------------------------------------------------------------------------
# Bin-sampled relevance calibration and threshold selection
# ---------------------------------------------------------------------------


@dataclass
class BinStat:
    low: float
    high: float
    sampled: int
    relevant: int
    ratio: Optional[float]  # None for an empty bin

    def to_dict(self) -> dict:
        return {
            "low": self.low,
            "high": self.high,
            "sampled": self.sampled,
            "relevant": self.relevant,
            "ratio": self.ratio,
        }


@dataclass
class BinReport:
    bins: list[BinStat] = field(default_factory=list)  # descending by score
    threshold_selected: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "bins": [b.to_dict() for b in self.bins],
            "threshold_selected": self.threshold_selected,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BinReport":
        bins = [BinStat(**b) for b in data["bins"]]
        return cls(bins=bins, threshold_selected=data.get("threshold_selected"))


def bin_calibration(
    scored: Iterable[tuple[Document, float]],
    edges: Sequence[float] = DEFAULT_BIN_EDGES,
    sample_per_bin: int = 50,
    labeler: Callable[[Document], bool] = None,
    seed: int = 0,
) -> BinReport:
    """Sample each score bin and measure the labeler's relevance ratio.

    Bins are (low, high] between consecutive edges, processed from the top
    score down; empty bins record ratio None rather than zero. The labeler
    is pluggable (an external judge client in production, a fixture in
    tests).
    """
    if labeler is None:
        raise ValueError("a labeler callable is required")
    edges = sorted(set(edges), reverse=True)
    if len(edges) < 2:
        raise ValueError("need at least two bin edges")
    items = list(scored)
    rng = random.Random(seed)
    report = BinReport()
    for high, low in zip(edges, edges[1:]):
        population = [doc for doc, s in items if low < s <= high]
        if not population:
            report.bins.append(BinStat(low=low, high=high, sampled=0, relevant=0, ratio=None))
            continue
        chosen = rng.sample(population, min(sample_per_bin, len(population)))
        relevant = sum(1 for doc in chosen if labeler(doc))
        report.bins.append(
            BinStat(low=low, high=high, sampled=len(chosen), relevant=relevant,
                    ratio=relevant / len(chosen))
        )
    return report


def select_threshold(report: BinReport, min_ratio: float = 0.5) -> float:
    """Lowest bin edge such that every populated bin above it stays relevant.

    Walks bins from the highest score down, extending the threshold while
    each populated bin has ratio >= min_ratio; empty bins are skipped. The
    first populated bin falling below min_ratio stops the walk.
    """
    if not 0 < min_ratio < 1:
        raise ValueError("min_ratio must be in (0, 1)")
    best: Optional[float] = None
    for stat in sorted(report.bins, key=lambda b: -b.high):
        if stat.ratio is None:
            continue
        if stat.ratio >= min_ratio:
            best = stat.low
        else:
            break
    if best is None:
        raise ValueError(f"no bin reaches relevance ratio {min_ratio}")
    return best
