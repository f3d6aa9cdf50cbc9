"""Order-N language model with perplexity scoring for quality filtering.

Smoothing is either add-k or interpolated Kneser-Ney with a fixed discount
(default 0.75). Kneser-Ney is the default for realistic corpora; add-k is
provided for tiny desk corpora where count-of-count statistics degenerate.

Conventions (all fixed so that perplexity thresholds are reproducible):
  - text is tokenized by corpuskit.tokenizer.tokenize
  - each non-empty line of a document is one sentence
  - at order >= 2 a sentence is padded with N-1 <s> tokens and one </s>;
    </s> is scored, pad <s> tokens are context only
  - at order 1 there is no padding and no </s> in the event space
  - tokens unseen in training map to <unk>

Kneser-Ney details: the top level keeps raw counts; each lower level uses
continuation counts (distinct left extensions in the raw level above),
except grams starting with <s>, which keep raw counts because they can
never occur as continuations. The unigram level interpolates down to the
uniform distribution over the event vocabulary, so every probability is
strictly positive and every conditional distribution sums to one.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Union

from .corpus import Document
from .filters import FilterReport
from .tokenizer import tokenize

UNK = "<unk>"
BOS = "<s>"
EOS = "</s>"

_MAGIC = b"CKLM"
_VERSION = 1


@dataclass(frozen=True)
class AddK:
    k: float = 1.0

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("add-k smoothing requires k > 0")


@dataclass(frozen=True)
class KneserNey:
    discount: float = 0.75

    def __post_init__(self):
        if not 0 < self.discount < 1:
            raise ValueError("Kneser-Ney discount must be in (0, 1)")


Smoothing = Union[AddK, KneserNey]


@dataclass(frozen=True)
class PerplexityThreshold:
    source: str
    max_perplexity: float

    def __post_init__(self):
        if not self.max_perplexity > 0:
            raise ValueError("max_perplexity must be > 0")


def _sentences(docs: Iterable[Document]) -> Iterator[list[str]]:
    for doc in docs:
        for line in doc.content.split("\n"):
            tokens = tokenize(line)
            if tokens:
                yield tokens


class NGramModel:
    """Trained n-gram model; read-only after training, safe for parallel scoring."""

    def __init__(self, order: int, smoothing: Smoothing):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        self.smoothing = smoothing
        self.vocab: set[str] = set()        # event vocabulary (includes <unk>, excludes <s>)
        # add-k state
        self._counts: dict[tuple, int] = {}
        self._ctx_totals: dict[tuple, int] = {}
        # kneser-ney state: per level 1..N
        self._probs: list[dict[tuple, float]] = []
        self._backoffs: list[dict[tuple, float]] = []

    # -- training -----------------------------------------------------------

    @classmethod
    def train(cls, corpus: Iterable[Document], order: int = 5,
              smoothing: Smoothing | None = None) -> "NGramModel":
        smoothing = smoothing if smoothing is not None else KneserNey()
        model = cls(order, smoothing)
        raw: list[Counter] = [Counter() for _ in range(order + 1)]  # raw[n], 1-based
        n_sentences = 0
        for tokens in _sentences(corpus):
            n_sentences += 1
            model.vocab.update(tokens)
            if order == 1:
                padded = tokens
            else:
                padded = [BOS] * (order - 1) + tokens + [EOS]
            for n in range(1, order + 1):
                counter = raw[n]
                for i in range(len(padded) - n + 1):
                    counter[tuple(padded[i : i + n])] += 1
        if n_sentences == 0:
            raise ValueError("cannot train on an empty corpus")
        model.vocab.add(UNK)
        if order >= 2:
            model.vocab.add(EOS)
        if isinstance(smoothing, AddK):
            model._fit_addk(raw)
        else:
            model._fit_kneser_ney(raw)
        return model

    def _fit_addk(self, raw: list[Counter]):
        self._counts = dict(raw[self.order])
        totals: dict[tuple, int] = {}
        for gram, count in self._counts.items():
            ctx = gram[:-1]
            totals[ctx] = totals.get(ctx, 0) + count
        self._ctx_totals = totals

    def _fit_kneser_ney(self, raw: list[Counter]):
        order, d = self.order, self.smoothing.discount
        vocab_size = len(self.vocab)

        # adjusted counts per level: raw at the top, continuation below
        tables: list[dict[tuple, int]] = [dict() for _ in range(order + 1)]
        tables[order] = {g: c for g, c in raw[order].items() if g[-1] != BOS}
        for n in range(order - 1, 0, -1):
            left_ext: dict[tuple, set] = {}
            for gram in raw[n + 1]:
                if gram[-1] == BOS:
                    continue
                left_ext.setdefault(gram[1:], set()).add(gram[0])
            level: dict[tuple, int] = {}
            for gram, count in raw[n].items():
                if gram[-1] == BOS:
                    continue
                if gram[0] == BOS:
                    # never occurs as a continuation; keep the raw count
                    level[gram] = count
                else:
                    level[gram] = len(left_ext[gram])
            tables[n] = level

        # denominators and interpolation weights per level
        self._probs = [dict() for _ in range(order + 1)]
        self._backoffs = [dict() for _ in range(order + 1)]
        denom: list[dict[tuple, int]] = [dict() for _ in range(order + 1)]
        distinct: list[dict[tuple, int]] = [dict() for _ in range(order + 1)]
        for n in range(1, order + 1):
            for gram, count in tables[n].items():
                ctx = gram[:-1]
                denom[n][ctx] = denom[n].get(ctx, 0) + count
                distinct[n][ctx] = distinct[n].get(ctx, 0) + 1
            for ctx in denom[n]:
                self._backoffs[n][ctx] = d * distinct[n][ctx] / denom[n][ctx]

        # unigram probabilities for the full event vocabulary; the uniform
        # term guarantees a strictly positive floor (covers <unk>)
        d1 = denom[1].get((), 0)
        lam1 = self._backoffs[1].get((), 1.0)
        for token in self.vocab:
            c = tables[1].get((token,), 0)
            base = max(c - d, 0.0) / d1 if d1 else 0.0
            self._probs[1][(token,)] = base + lam1 / vocab_size

        # higher levels bottom-up; stored probabilities embed interpolation
        for n in range(2, order + 1):
            for gram, count in tables[n].items():
                ctx = gram[:-1]
                p_low = self._lookup(ctx[1:], gram[-1], n - 1)
                self._probs[n][gram] = (
                    max(count - d, 0.0) / denom[n][ctx]
                    + self._backoffs[n][ctx] * p_low
                )

    # -- probability queries --------------------------------------------------

    def _lookup(self, ctx: tuple, token: str, n: int) -> float:
        """Backoff query at level n (len(ctx) == n - 1); token already in vocab."""
        gram = ctx + (token,)
        stored = self._probs[n].get(gram)
        if stored is not None:
            return stored
        if n == 1:
            # every event token has a stored unigram; only reachable for
            # tokens outside the vocabulary, which callers must map to <unk>
            raise KeyError(f"token {token!r} not in vocabulary")
        bo = self._backoffs[n].get(ctx, 1.0)
        return bo * self._lookup(ctx[1:], token, n - 1)

    def prob(self, context: tuple[str, ...], token: str) -> float:
        """P(token | context); context must hold order-1 tokens (any strings).

        Context and token are mapped into the vocabulary (<s> allowed in
        context for sentence starts); unknown tokens become <unk>.
        """
        if len(context) != self.order - 1:
            raise ValueError(f"context must have {self.order - 1} tokens")
        ctx = tuple(
            t if (t in self.vocab or t == BOS) else UNK for t in context
        )
        w = token if token in self.vocab else UNK
        if isinstance(self.smoothing, AddK):
            k, v = self.smoothing.k, len(self.vocab)
            count = self._counts.get(ctx + (w,), 0)
            total = self._ctx_totals.get(ctx, 0)
            return (count + k) / (total + k * v)
        return self._lookup(ctx, w, self.order)

    def perplexity(self, text: str) -> float:
        """exp of mean negative log-likelihood per scored token.

        Scored tokens include </s> at each sentence end (order >= 2) and
        exclude pad <s>. Raises ValueError when the text has no tokens.
        """
        log_sum = 0.0
        n_scored = 0
        for line in text.split("\n"):
            tokens = tokenize(line)
            if not tokens:
                continue
            mapped = [t if t in self.vocab else UNK for t in tokens]
            if self.order == 1:
                for w in mapped:
                    log_sum += math.log(self.prob((), w))
                    n_scored += 1
            else:
                history = [BOS] * (self.order - 1)
                for w in mapped + [EOS]:
                    ctx = tuple(history[-(self.order - 1):])
                    log_sum += math.log(self.prob(ctx, w))
                    n_scored += 1
                    history.append(w)
        if n_scored == 0:
            raise ValueError("cannot score empty text")
        return math.exp(-log_sum / n_scored)

    # -- serialization --------------------------------------------------------

    def save(self, path: str | Path):
        """Single-file container: versioned header, vocab, per-order tables."""
        tokens = sorted(self.vocab | ({BOS} if self.order >= 2 else set()))
        ids = {t: i for i, t in enumerate(tokens)}
        out = bytearray()
        out += _MAGIC
        out += struct.pack("<II", _VERSION, self.order)
        if isinstance(self.smoothing, AddK):
            out += struct.pack("<Bd", 0, self.smoothing.k)
        else:
            out += struct.pack("<Bd", 1, self.smoothing.discount)
        out += struct.pack("<II", len(tokens), len(self.vocab))
        for t in tokens:
            raw = t.encode("utf-8")
            out += struct.pack("<I", len(raw))
            out += raw
        if isinstance(self.smoothing, AddK):
            entries = sorted(self._counts.items(), key=lambda kv: tuple(ids[t] for t in kv[0]))
            out += struct.pack("<Q", len(entries))
            for gram, count in entries:
                out += struct.pack(f"<{self.order}IQ", *(ids[t] for t in gram), count)
        else:
            for n in range(1, self.order + 1):
                probs = sorted(self._probs[n].items(), key=lambda kv: tuple(ids[t] for t in kv[0]))
                out += struct.pack("<Q", len(probs))
                for gram, p in probs:
                    out += struct.pack(f"<{n}Id", *(ids[t] for t in gram), p)
                backs = sorted(self._backoffs[n].items(), key=lambda kv: tuple(ids[t] for t in kv[0]))
                out += struct.pack("<Q", len(backs))
                for ctx, b in backs:
                    if n == 1:
                        out += struct.pack("<d", b)
                    else:
                        out += struct.pack(f"<{n - 1}Id", *(ids[t] for t in ctx), b)
        with open(path, "wb") as fh:
            fh.write(bytes(out))

    @classmethod
    def load(cls, path: str | Path) -> "NGramModel":
        with open(path, "rb") as fh:
            data = fh.read()
        off = 0

        def take(fmt):
            nonlocal off
            size = struct.calcsize(fmt)
            values = struct.unpack_from(fmt, data, off)
            off += size
            return values

        if data[:4] != _MAGIC:
            raise ValueError("not a corpuskit LM file")
        off = 4
        version, order = take("<II")
        if version != _VERSION:
            raise ValueError(f"unsupported LM file version {version}")
        tag, param = take("<Bd")
        smoothing: Smoothing = AddK(param) if tag == 0 else KneserNey(param)
        n_tokens, n_event = take("<II")
        tokens = []
        for _ in range(n_tokens):
            (length,) = take("<I")
            tokens.append(data[off : off + length].decode("utf-8"))
            off += length
        model = cls(order, smoothing)
        model.vocab = set(tokens) - {BOS}
        if len(model.vocab) != n_event:
            raise ValueError("corrupt LM file: vocabulary size mismatch")
        if tag == 0:
            (n_entries,) = take("<Q")
            for _ in range(n_entries):
                values = take(f"<{order}IQ")
                gram = tuple(tokens[i] for i in values[:-1])
                model._counts[gram] = values[-1]
            totals: dict[tuple, int] = {}
            for gram, count in model._counts.items():
                ctx = gram[:-1]
                totals[ctx] = totals.get(ctx, 0) + count
            model._ctx_totals = totals
        else:
            model._probs = [dict() for _ in range(order + 1)]
            model._backoffs = [dict() for _ in range(order + 1)]
            for n in range(1, order + 1):
                (n_probs,) = take("<Q")
                for _ in range(n_probs):
                    values = take(f"<{n}Id")
                    gram = tuple(tokens[i] for i in values[:-1])
                    model._probs[n][gram] = values[-1]
                (n_backs,) = take("<Q")
                for _ in range(n_backs):
                    if n == 1:
                        (b,) = take("<d")
                        model._backoffs[1][()] = b
                    else:
                        values = take(f"<{n - 1}Id")
                        ctx = tuple(tokens[i] for i in values[:-1])
                        model._backoffs[n][ctx] = values[-1]
        return model


def train(corpus: Iterable[Document], order: int = 5,
          smoothing: Smoothing | None = None) -> NGramModel:
    return NGramModel.train(corpus, order=order, smoothing=smoothing)


def perplexity(model: NGramModel, text: str) -> float:
    return model.perplexity(text)


def lm_filter(
    docs: Iterable[Document],
    model: NGramModel,
    thresholds: Iterable[PerplexityThreshold],
    default_threshold: float | None = None,
) -> tuple[list[Document], FilterReport]:
    """Keep documents whose perplexity is at or below their source threshold.

    Every document source needs a threshold unless default_threshold is set;
    documents with no tokens at all are dropped under their own rule.
    """
    by_source = {t.source: t.max_perplexity for t in thresholds}
    report = FilterReport()
    kept: list[Document] = []
    for doc in docs:
        report.docs_in += 1
        limit = by_source.get(doc.source, default_threshold)
        if limit is None:
            raise ValueError(f"no perplexity threshold for source {doc.source!r}")
        try:
            ppl = model.perplexity(doc.content)
        except ValueError:
            report.drop_doc("empty")
            continue
        if ppl <= limit:
            report.docs_out += 1
            kept.append(doc)
        else:
            report.drop_doc("perplexity")
    return kept, report
