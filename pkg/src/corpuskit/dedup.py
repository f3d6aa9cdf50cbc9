"""MinHash-LSH fuzzy deduplication and exact n-gram decontamination.

Signatures hold one 64-bit minimum per hash function (112 by default),
banded for LSH into 14 bands of 8 rows, which targets pairs at roughly 75%
Jaccard similarity: a pair fully matching any band is a duplicate candidate,
giving detection probability 1 - (1 - s^r)^b.

Hashing scheme: each shingle gets a base 64-bit hash (a mixed polynomial
over per-token xxh64 values), and slot i rehashes the base with an affine
map a_i * h + b_i over 2^64 (a_i odd), with (a_i, b_i) drawn from an RNG
seeded by the config seed. Candidate band collisions are confirmed with a
full slice comparison, so 64-bit bucket-hash collisions cannot create
false duplicate pairs.

Decontamination shares the module tokenizer so overlap counts line up with
everything else in the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import xxhash

from .corpus import Document
from .tokenizer import tokenize

_U64 = np.uint64
_MASK64 = (1 << 64) - 1
# odd multipliers for the rolling shingle hash and width salting
_ROLL = 0x9E3779B97F4A7C15
_WIDTH_SALT = 0xD6E8FEB86659FD93


@dataclass(frozen=True)
class LshConfig:
    shingle_size: int = 5
    num_hashes: int = 112
    num_bands: int = 14
    rows_per_band: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.num_bands * self.rows_per_band != self.num_hashes:
            raise ValueError(
                f"num_bands ({self.num_bands}) x rows_per_band ({self.rows_per_band}) "
                f"must equal num_hashes ({self.num_hashes})"
            )
        if self.shingle_size < 1:
            raise ValueError("shingle_size must be >= 1")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in 64 bits")


@dataclass
class MinHashSignature:
    doc_id: int
    values: np.ndarray  # uint64, length num_hashes


def shingles(text: str, k: int) -> set[str]:
    """Deduplicated word k-grams; shorter documents yield one whole-text shingle."""
    if k < 1:
        raise ValueError("k must be >= 1")
    tokens = tokenize(text)
    if not tokens:
        return set()
    if len(tokens) < k:
        return {" ".join(tokens)}
    return {" ".join(tokens[i : i + k]) for i in range(len(tokens) - k + 1)}


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64 arrays."""
    x = x.copy()
    x ^= x >> _U64(30)
    x *= _U64(0xBF58476D1CE4E5B9)
    x ^= x >> _U64(27)
    x *= _U64(0x94D049BB133111EB)
    x ^= x >> _U64(31)
    return x


def _token_hash(token: str, seed: int) -> int:
    return xxhash.xxh64_intdigest(token, seed)


def _window_hashes(token_hashes: np.ndarray, k: int) -> np.ndarray:
    """Base hash per k-token window (Horner polynomial, then mixed).

    A sequence shorter than k collapses to a single whole-sequence hash;
    the window width is folded in so shingles of different lengths cannot
    alias.
    """
    n = len(token_hashes)
    width = min(n, k)
    m = n - width + 1
    acc = token_hashes[:m].copy()
    for t in range(1, width):
        acc *= _U64(_ROLL)
        acc += token_hashes[t : t + m]
    acc ^= _U64((_WIDTH_SALT * width) & _MASK64)
    return _mix64(acc)


def _slot_params(cfg: LshConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    a = rng.integers(0, 1 << 64, size=cfg.num_hashes, dtype=np.uint64) | _U64(1)
    b = rng.integers(0, 1 << 64, size=cfg.num_hashes, dtype=np.uint64)
    return a, b


def _shingle_bases(shingle_set: Iterable[str], cfg: LshConfig) -> np.ndarray:
    bases = []
    for shingle in shingle_set:
        tokens = shingle.split(" ")
        th = np.fromiter(
            (_token_hash(t, cfg.seed) for t in tokens), dtype=np.uint64, count=len(tokens)
        )
        bases.append(_window_hashes(th, len(tokens))[0])
    return np.array(bases, dtype=np.uint64)


def signature(shingle_set: set[str], cfg: LshConfig, doc_id: int = 0) -> MinHashSignature:
    """MinHash signature of a shingle set; deterministic given cfg.seed."""
    if not shingle_set:
        raise ValueError("cannot sign an empty shingle set")
    bases = _shingle_bases(sorted(shingle_set), cfg)
    a, b = _slot_params(cfg)
    values = (a[:, None] * bases[None, :] + b[:, None]).min(axis=1)
    return MinHashSignature(doc_id=doc_id, values=values)


def signatures_for_texts(
    texts: Iterable[str], cfg: LshConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Batch signature computation.

    Returns (matrix [n_signed, num_hashes], doc_ids); documents that
    tokenize to nothing are skipped (they have no shingles and can never
    collide). Minima over the window multiset equal minima over the shingle
    set, so this path is bitwise-consistent with signature().
    """
    token_cache: dict[str, int] = {}
    seed = cfg.seed
    chunks: list[np.ndarray] = []
    lengths: list[int] = []
    ids: list[int] = []
    for doc_id, text in enumerate(texts):
        tokens = tokenize(text)
        if not tokens:
            continue
        th = np.empty(len(tokens), dtype=np.uint64)
        for i, tok in enumerate(tokens):
            h = token_cache.get(tok)
            if h is None:
                h = _token_hash(tok, seed)
                token_cache[tok] = h
            th[i] = h
        windows = _window_hashes(th, cfg.shingle_size)
        chunks.append(windows)
        lengths.append(len(windows))
        ids.append(doc_id)
    if not ids:
        return np.empty((0, cfg.num_hashes), dtype=np.uint64), np.empty(0, dtype=np.int64)
    flat = np.concatenate(chunks)
    offsets = np.zeros(len(lengths), dtype=np.int64)
    np.cumsum(lengths[:-1], out=offsets[1:])
    a, b = _slot_params(cfg)
    matrix = np.empty((len(ids), cfg.num_hashes), dtype=np.uint64)
    for i in range(cfg.num_hashes):
        matrix[:, i] = np.minimum.reduceat(a[i] * flat + b[i], offsets)
    return matrix, np.array(ids, dtype=np.int64)


_SIG_MAGIC = b"CKSG"
_SIG_VERSION = 1


def save_signatures(matrix: np.ndarray, ids: np.ndarray, cfg: LshConfig,
                    path) -> None:
    """Persist signatures: header with the config, then fixed-width records."""
    import struct

    with open(path, "wb") as fh:
        fh.write(_SIG_MAGIC)
        fh.write(struct.pack(
            "<IIIIIQQ", _SIG_VERSION, cfg.shingle_size, cfg.num_hashes,
            cfg.num_bands, cfg.rows_per_band, cfg.seed, len(ids),
        ))
        fh.write(np.asarray(ids, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(matrix, dtype="<u8").tobytes())


def load_signatures(path) -> tuple[np.ndarray, np.ndarray, LshConfig]:
    import struct

    with open(path, "rb") as fh:
        if fh.read(4) != _SIG_MAGIC:
            raise ValueError("not a corpuskit signature file")
        header = struct.calcsize("<IIIIIQQ")
        version, shingle, hashes, bands, rows, seed, count = struct.unpack(
            "<IIIIIQQ", fh.read(header)
        )
        if version != _SIG_VERSION:
            raise ValueError(f"unsupported signature file version {version}")
        cfg = LshConfig(shingle_size=shingle, num_hashes=hashes,
                        num_bands=bands, rows_per_band=rows, seed=seed)
        ids = np.frombuffer(fh.read(count * 8), dtype="<i8").copy()
        matrix = np.frombuffer(fh.read(count * hashes * 8), dtype="<u8").copy()
    return matrix.reshape(count, hashes), ids, cfg


class ClusterSet:
    """Union-find over document ids; the smallest id is each cluster's root."""

    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        if x not in self.parent:
            self.parent[x] = x
            return x
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:  # path compression
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int):
        px, py = self.find(x), self.find(y)
        root = min(px, py)
        self.parent[px] = self.parent[py] = root

    def clusters(self) -> dict[int, list[int]]:
        """Clusters of size >= 2, keyed by their smallest member."""
        groups: dict[int, list[int]] = {}
        for x in self.parent:
            groups.setdefault(self.find(x), []).append(x)
        return {root: sorted(members) for root, members in groups.items() if len(members) >= 2}

    def is_removable(self, x: int) -> bool:
        """True when x belongs to a cluster and is not its representative."""
        return x in self.parent and self.find(x) != x


def find_duplicates(
    signatures: Iterable[MinHashSignature] | tuple[np.ndarray, np.ndarray],
    cfg: LshConfig,
) -> ClusterSet:
    """Band the signatures and union documents sharing any full band.

    Accepts either a stream of MinHashSignature or the (matrix, ids) pair
    from signatures_for_texts. Band buckets are keyed by a salted 64-bit
    fold of the band slice; a full slice equality check confirms each
    candidate, so bucket-hash collisions never produce false positives.
    """
    if isinstance(signatures, tuple):
        matrix, ids = signatures
        if matrix.shape[0] and matrix.shape[1] != cfg.num_hashes:
            raise ValueError(
                f"signature matrix has {matrix.shape[1]} columns, "
                f"expected {cfg.num_hashes}"
            )
    else:
        sigs = list(signatures)
        for s in sigs:
            if len(s.values) != cfg.num_hashes:
                raise ValueError(
                    f"signature of doc {s.doc_id} has {len(s.values)} values, "
                    f"expected {cfg.num_hashes}"
                )
        if not sigs:
            return ClusterSet()
        matrix = np.stack([s.values for s in sigs])
        ids = np.array([s.doc_id for s in sigs], dtype=np.int64)

    clusters = ClusterSet()
    if len(ids) == 0:
        return clusters
    r = cfg.rows_per_band
    rng = np.random.default_rng((cfg.seed ^ _ROLL) & _MASK64)
    band_salts = rng.integers(0, 1 << 64, size=cfg.num_bands, dtype=np.uint64)
    id_list = ids.tolist()
    for band in range(cfg.num_bands):
        slice_ = matrix[:, band * r : (band + 1) * r]
        keys = np.full(len(ids), band_salts[band], dtype=np.uint64)
        for col in range(r):
            keys = _mix64(keys ^ slice_[:, col])
        buckets: dict[int, list[int]] = {}
        for row, key in enumerate(keys.tolist()):
            reps = buckets.get(key)
            if reps is None:
                buckets[key] = [row]
                continue
            for rep in reps:
                if (slice_[rep] == slice_[row]).all():
                    clusters.union(id_list[rep], id_list[row])
                    break
            else:
                reps.append(row)
    return clusters


@dataclass
class DedupReport:
    """Before/after token accounting, one row per dedup flag."""

    samples_before: int = 0
    tokens_before: int = 0
    samples_after: int = 0
    tokens_after: int = 0
    clusters: int = 0
    removed: int = 0
    tokenizer: str = "whitespace"
    threshold: Optional[float] = None

    def _row(self, dedup: bool) -> dict:
        samples = self.samples_after if dedup else self.samples_before
        tokens = self.tokens_after if dedup else self.tokens_before
        return {
            "threshold": self.threshold,
            "dedup": dedup,
            "samples": samples,
            "tokens": tokens,
            "avg": round(tokens / samples, 2) if samples else 0.0,
        }

    def to_dict(self) -> dict:
        return {
            "tokenizer": self.tokenizer,
            "clusters": self.clusters,
            "removed": self.removed,
            "rows": [self._row(False), self._row(True)],
        }


def deduplicate(
    docs: Iterable[Document],
    clusters: ClusterSet,
    threshold: Optional[float] = None,
) -> tuple[list[Document], DedupReport]:
    """Keep the first-seen (lowest id) document of every cluster.

    Document ids are enumeration positions and must match the ids used when
    the signatures were built.
    """
    report = DedupReport(threshold=threshold)
    kept: list[Document] = []
    for doc_id, doc in enumerate(docs):
        n_tokens = len(doc.content.split())
        report.samples_before += 1
        report.tokens_before += n_tokens
        if clusters.is_removable(doc_id):
            report.removed += 1
            continue
        report.samples_after += 1
        report.tokens_after += n_tokens
        kept.append(doc)
    report.clusters = len(clusters.clusters())
    return kept, report


def dedup_corpus(
    docs: Sequence[Document],
    cfg: LshConfig,
    threshold: Optional[float] = None,
) -> tuple[list[Document], DedupReport, ClusterSet]:
    """Sign, cluster, and deduplicate a corpus in one pass."""
    matrix, ids = signatures_for_texts((d.content for d in docs), cfg)
    clusters = find_duplicates((matrix, ids), cfg)
    kept, report = deduplicate(docs, clusters, threshold=threshold)
    return kept, report, clusters


def ngram_overlap(
    corpus_a: Iterable[str],
    corpus_b: Iterable[str],
    n: int = 13,
) -> tuple[int, list[tuple[str, int, int]]]:
    """Count distinct word n-grams shared by two corpora.

    Returns (count, matches) where each match is (ngram, a_index, b_index)
    with one witness index per side. Inputs are the concatenated per-sample
    texts (question+answer, or all message contents). Comparison is over
    exact token tuples, so there are no hash false positives.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    index: dict[tuple, int] = {}
    for i, text in enumerate(corpus_a):
        tokens = tokenize(text)
        for j in range(len(tokens) - n + 1):
            gram = tuple(tokens[j : j + n])
            if gram not in index:
                index[gram] = i
    matches: list[tuple[str, int, int]] = []
    reported: set[tuple] = set()
    for i, text in enumerate(corpus_b):
        tokens = tokenize(text)
        for j in range(len(tokens) - n + 1):
            gram = tuple(tokens[j : j + n])
            a_idx = index.get(gram)
            if a_idx is not None and gram not in reported:
                reported.add(gram)
                matches.append((" ".join(gram), a_idx, i))
    return len(matches), matches
