"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see per-criterion lines.
Every tolerance is pinned here; the slowest criteria (dedup throughput,
S-curve sweeps) run within their stated budgets on a 4-core machine.
"""

import json
import random
import time

import numpy as np
import pytest

from corpuskit.classifier import train_classifier, select_threshold
from corpuskit.corpus import Document, load_jsonl, write_jsonl
from corpuskit.dedup import LshConfig, dedup_corpus, ngram_overlap, signatures_for_texts
from corpuskit.evalkit import (
    BenchmarkScore,
    Metric,
    PredictionRecord,
    aggregate_cyber,
    aggregate_weighted,
    ece,
)
from corpuskit.merge import (
    MergeRatio,
    ParameterMap,
    TaskVector,
    dare,
    dare_ties,
    grid_search,
    ties_merge,
)
from corpuskit.ngram import AddK, KneserNey, train
from corpuskit.pipeline import PipelineConfig, run_pipeline

from tests.test_ngram import kn_bigram_oracle


def make_doc(content, source="web", url="u"):
    return Document(url=url, source=source, content=content, time="2024-12-31T00:00:00")


def ok(criterion, detail):
    print(f"\nACCEPTANCE {criterion}: PASS ({detail})")


# ---------------------------------------------------------------------------
# 1. Aggregate arithmetic (published-table fixtures, < 1 s)
# ---------------------------------------------------------------------------


def test_criterion_1_aggregate_arithmetic():
    start = time.monotonic()
    llama = [
        BenchmarkScore("CISSP", 0.7073, Metric.accuracy),
        BenchmarkScore("CTI-MCQ", 0.6420, Metric.accuracy),
        BenchmarkScore("CTI-RCM", 0.5910, Metric.accuracy),
        BenchmarkScore("CTI-VSP", 1.2712, Metric.mad),
        BenchmarkScore("CTI-ATE", 0.2721, Metric.f1),
        BenchmarkScore("CyberMetric", 0.8560, Metric.accuracy),
        BenchmarkScore("SecEval", 0.4966, Metric.accuracy),
    ]
    seed_fineweb = [
        BenchmarkScore("CISSP", 0.7230, Metric.accuracy),
        BenchmarkScore("CTI-MCQ", 0.6676, Metric.accuracy),
        BenchmarkScore("CTI-RCM", 0.6780, Metric.accuracy),
        BenchmarkScore("CTI-VSP", 1.0912, Metric.mad),
        BenchmarkScore("CTI-ATE", 0.3140, Metric.f1),
        BenchmarkScore("CyberMetric", 0.8660, Metric.accuracy),
        BenchmarkScore("SecEval", 0.5007, Metric.accuracy),
    ]
    base = aggregate_cyber(llama)
    assert base == pytest.approx(2.2938, abs=1e-9)
    assert f"{base:.2f}" == "2.29"
    improved = aggregate_cyber(seed_fineweb)
    pct = (improved - base) / base * 100
    assert abs(pct - 15.9) <= 0.1

    w1 = aggregate_weighted(8.3491, 2.2938, 0.3, 0.7)
    w2 = aggregate_weighted(8.2938, 2.6317, 0.3, 0.7)
    assert abs(w1 - 4.11) <= 0.005
    assert abs(w2 - 4.33) <= 0.005

    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    ok(1, f"agg 2.2938, improvement {pct:.2f}%, weighted {w1:.4f}/{w2:.4f}, {elapsed:.3f}s")


# ---------------------------------------------------------------------------
# 2. MinHash S-curve (10,000 pairs per point, < 2 min)
# ---------------------------------------------------------------------------


def _jaccard_pairs(n_pairs, shared, unique):
    texts_a, texts_b = [], []
    for p in range(n_pairs):
        common = [f"p{p}s{i}" for i in range(shared)]
        texts_a.append(" ".join(common + [f"p{p}a{i}" for i in range(unique)]))
        texts_b.append(" ".join(common + [f"p{p}b{i}" for i in range(unique)]))
    return texts_a, texts_b


def _detection_rate(texts_a, texts_b, cfg):
    A, _ = signatures_for_texts(texts_a, cfg)
    B, _ = signatures_for_texts(texts_b, cfg)
    eq = (A == B).reshape(len(A), cfg.num_bands, cfg.rows_per_band)
    return eq.all(axis=2).any(axis=1).mean()


def test_criterion_2_minhash_s_curve():
    start = time.monotonic()
    cfg = LshConfig(shingle_size=1, num_hashes=112, num_bands=14, rows_per_band=8, seed=42)

    # J = 0.75: 60 shared, 10+10 unique
    rate_75 = _detection_rate(*_jaccard_pairs(10000, 60, 10), cfg)
    assert abs(rate_75 - 0.772) <= 0.02

    # J = 0.9: 90 shared, 5+5 unique
    theory_90 = 1 - (1 - 0.9**8) ** 14
    rate_90 = _detection_rate(*_jaccard_pairs(10000, 90, 5), cfg)
    assert abs(rate_90 - theory_90) <= 0.005

    # exact duplicates: detected with probability 1 regardless of seed
    for seed in range(10):
        scfg = LshConfig(shingle_size=1, seed=seed)
        texts = [" ".join(f"t{i}" for i in range(80))] * 2
        assert _detection_rate(texts[:1], texts[1:], scfg) == 1.0

    elapsed = time.monotonic() - start
    assert elapsed < 120
    ok(2, f"J=0.75 rate {rate_75:.4f}, J=0.9 rate {rate_90:.4f} "
          f"(theory {theory_90:.4f}), exact dup 1.0, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 3. Dedup throughput (100k docs, avg 300 words, < 3 min) and idempotence
# ---------------------------------------------------------------------------


def test_criterion_3_dedup_throughput():
    rng = np.random.default_rng(7)
    vocab = np.array([f"word{i}" for i in range(10000)])
    n_base = 95000
    mat = rng.integers(0, len(vocab), size=(n_base, 300))
    texts = [" ".join(vocab[row]) for row in mat]
    dup_of = rng.integers(0, n_base, size=5000)
    texts += [texts[i] for i in dup_of]
    docs = [make_doc(t, url=f"u{i}") for i, t in enumerate(texts)]
    assert len(docs) == 100000

    cfg = LshConfig(seed=11)
    start = time.monotonic()
    kept, report, _ = dedup_corpus(docs, cfg)
    elapsed = time.monotonic() - start
    assert elapsed < 180, f"dedup took {elapsed:.0f}s"
    assert report.removed == 5000  # every planted exact duplicate

    kept2, report2, _ = dedup_corpus(kept, cfg)
    assert report2.removed == 0
    assert kept2 == kept

    ok(3, f"100k docs in {elapsed:.1f}s, removed {report.removed}, rerun removed 0")


# ---------------------------------------------------------------------------
# 4. N-gram language model
# ---------------------------------------------------------------------------


def test_criterion_4_ngram_lm():
    # add-1 unigram worked example exact to 1e-12
    model = train([make_doc("a a b")], order=1, smoothing=AddK(1.0))
    assert abs(model.prob((), "a") - 0.5) < 1e-12
    assert abs(model.perplexity("a a") - 2.0) < 1e-12

    # conditional distributions sum to 1 +/- 1e-9 over 100 random contexts
    kn = train(
        [make_doc("a b c a b\nb c a\nc c b a")], order=2, smoothing=KneserNey(0.75)
    )
    rng = random.Random(3)
    pool = ["a", "b", "c", "</s>", "zz", "<s>"]
    worst = 0.0
    for _ in range(100):
        ctx = (rng.choice(pool),)
        total = sum(kn.prob(ctx, w) for w in kn.vocab)
        worst = max(worst, abs(total - 1.0))
    assert worst <= 1e-9

    # Kneser-Ney agrees with the independent hand-built oracle to 1e-9
    sentences = [["a", "b"], ["a", "c"], ["b", "a"]]
    oracle_model = train([make_doc("a b\na c\nb a")], order=2, smoothing=KneserNey(0.75))
    _, p2 = kn_bigram_oracle(sentences, d=0.75)
    max_err = 0.0
    for u in ["<s>", "a", "b", "c", "</s>"]:
        for w in oracle_model.vocab:
            err = abs(oracle_model.prob((u,), w) - p2(u, w))
            max_err = max(max_err, err)
    assert max_err <= 1e-9

    ok(4, f"worked example exact, max normalization error {worst:.2e}, "
          f"max KN oracle error {max_err:.2e}")


# ---------------------------------------------------------------------------
# 5. Classifier training, determinism, threshold selection
# ---------------------------------------------------------------------------


def test_criterion_5_classifier():
    data = [(make_doc("alpha"), 1) for _ in range(50)]
    data += [(make_doc("beta"), 0) for _ in range(50)]
    start = time.monotonic()
    result = train_classifier(data, epochs=5, lr=0.5, seed=0, feature_dim=1 << 16)
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    assert result.train_accuracy >= 0.99

    again = train_classifier(data, epochs=5, lr=0.5, seed=0, feature_dim=1 << 16)
    assert np.array_equal(result.model.weights, again.model.weights)
    assert result.model.bias == again.model.bias

    from tests.test_classifier import fig4_like_report

    assert select_threshold(fig4_like_report(), min_ratio=0.5) == 0.003

    ok(5, f"accuracy {result.train_accuracy:.3f} in {elapsed:.2f}s, "
          f"bitwise deterministic, threshold 0.003")


# ---------------------------------------------------------------------------
# 6. Decontamination (two 10,000-doc corpora, < 1 min)
# ---------------------------------------------------------------------------


def test_criterion_6_decontamination():
    rng = random.Random(13)
    n_docs, n_plants = 10000, 50
    vocab_a = [f"avocab{i}" for i in range(4000)]
    vocab_b = [f"bvocab{i}" for i in range(4000)]
    corpus_a = [" ".join(rng.choices(vocab_a, k=40)) for _ in range(n_docs)]
    corpus_b = [" ".join(rng.choices(vocab_b, k=40)) for _ in range(n_docs)]

    start = time.monotonic()
    count0, matches0 = ngram_overlap(corpus_a, corpus_b, n=13)
    assert count0 == 0 and matches0 == []  # disjoint vocabularies: no false positives

    plants = [" ".join(f"plant{p}tok{i}" for i in range(13)) for p in range(n_plants)]
    for p, phrase in enumerate(plants):
        ia, ib = rng.randrange(n_docs), rng.randrange(n_docs)
        corpus_a[ia] = f"{corpus_a[ia]} {phrase}"
        corpus_b[ib] = f"{phrase} {corpus_b[ib]}"
    count, matches = ngram_overlap(corpus_a, corpus_b, n=13)
    elapsed = time.monotonic() - start

    assert count == n_plants  # all plants found, nothing else
    assert {gram for gram, _, _ in matches} == set(plants)
    assert elapsed < 60

    ok(6, f"{n_plants}/{n_plants} planted overlaps found, 0 false positives, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 7. DARE / TIES / grid search
# ---------------------------------------------------------------------------


def test_criterion_7_dare_ties():
    # unbiasedness within 1% over 10,000 seeded draws
    tv = TaskVector(entries={"x": np.ones(4)})
    acc = np.zeros(4)
    for s in range(10000):
        acc += dare(tv, 0.3, seed=s).entries["x"]
    max_dev = np.abs(acc / 10000 - 1.0).max()
    assert max_dev < 0.01

    # hand-traced TIES example is exact
    v1 = TaskVector(entries={"x": np.array([2.0, -2.0, 1.0])})
    v2 = TaskVector(entries={"x": np.array([1.0, -1.0, -3.0])})
    merged = ties_merge([(v1, 1.0), (v2, 1.0)], density=1.0)
    assert np.array_equal(merged.entries["x"], [1.5, -1.5, -3.0])

    # identity chain bitwise after the float32 round-trip
    base = ParameterMap(entries={"x": np.array([0.1, -0.2, 3e7], dtype=np.float32)})
    model = ParameterMap(entries={"x": np.array([0.7, -0.9, -1e7], dtype=np.float32)})
    out = dare_ties(base, [(model, 1.0)], drop_prob=0.0, density=1.0, seed=9)
    assert np.array_equal(out.entries["x"], model.entries["x"])

    # grid search: 11 points, synthetic optimum at w = 0.25 (ratio 0.75:0.25)
    gbase = ParameterMap(entries={"x": np.array([0.0], dtype=np.float32)})
    ga = ParameterMap(entries={"x": np.array([2.0], dtype=np.float32)})
    gb = ParameterMap(entries={"x": np.array([1.0], dtype=np.float32)})
    scorer = lambda pm: -abs(float(pm.entries["x"][0]) - 1.75)
    best, table = grid_search(gbase, ga, gb, scorer, step=0.05, drop_prob=0.0, density=1.0)
    assert len(table) == 11
    assert best.w == pytest.approx(0.25)
    assert isinstance(best, MergeRatio) and best.weight_a == pytest.approx(0.75)

    ok(7, f"dare max deviation {max_dev:.4f}, TIES exact, identity bitwise, "
          f"grid 11 points best w=0.25")


# ---------------------------------------------------------------------------
# 8. Expected calibration error
# ---------------------------------------------------------------------------


def test_criterion_8_ece():
    records = [
        PredictionRecord("1", "A", "A", confidence=0.9),
        PredictionRecord("2", "A", "A", confidence=0.8),
        PredictionRecord("3", "A", "B", confidence=0.7),
        PredictionRecord("4", "A", "A", confidence=0.6),
    ]
    hand = ece(records, num_bins=10).ece
    assert hand == pytest.approx(0.35, abs=1e-12)

    # perfectly calibrated synthetic stream: confidence = true accuracy per bin
    synthetic = []
    for b in range(10):
        confidence = (b + 0.5) / 10
        n_correct = round(confidence * 1000)
        for i in range(1000):
            synthetic.append(
                PredictionRecord(
                    f"{b}-{i}", "A", "A" if i < n_correct else "B",
                    confidence=confidence,
                )
            )
    assert len(synthetic) == 10000
    calibrated = ece(synthetic, num_bins=10).ece
    assert calibrated <= 0.01

    ok(8, f"hand example {hand:.2f}, calibrated synthetic ECE {calibrated:.4f}")


# ---------------------------------------------------------------------------
# 9. End-to-end pipeline determinism (10,000-doc mixed corpus)
# ---------------------------------------------------------------------------


def _mixed_corpus(rng):
    vocab = [f"tok{i}" for i in range(2000)]
    docs = []
    for i in range(9000):
        words = rng.choices(vocab, k=30)
        docs.append(make_doc(" ".join(words), url=f"u{i}"))
    for i in range(400):  # exact duplicate plants
        docs.append(Document(url=f"dup{i}", source="web",
                             content=docs[i].content, time="2024-12-31T00:00:00"))
    for i in range(300):  # boilerplate line plants
        body = " ".join(rng.choices(vocab, k=25))
        docs.append(make_doc(f"Please enable javascript to continue.\n{body}",
                             url=f"js{i}"))
    for i in range(300):  # document-level plants
        docs.append(make_doc(f"prefix lorem ipsum dolor {i} suffix", url=f"li{i}"))
    rng.shuffle(docs)
    return docs


def test_criterion_9_pipeline_determinism(tmp_path):
    rng = random.Random(99)
    docs = _mixed_corpus(rng)
    assert len(docs) == 10000
    write_jsonl(docs, tmp_path / "in.jsonl")

    config = {
        "version": 1,
        "seed": 42,
        "input": str(tmp_path / "in.jsonl"),
        "output": str(tmp_path / "out.jsonl"),
        "report": str(tmp_path / "report.json"),
        "stages": [
            {"name": "c4", "op": "c4_filter", "params": {"min_doc_words": 5}},
            {"name": "heuristic", "op": "heuristic_filter", "params": {}},
            {"name": "dedup", "op": "dedup", "params": {"shingle_size": 5}},
        ],
    }
    cfg = PipelineConfig.from_dict(config)

    artifacts = []
    for _ in range(2):
        report = run_pipeline(cfg)
        artifacts.append(
            ((tmp_path / "out.jsonl").read_bytes(), (tmp_path / "report.json").read_bytes())
        )
    assert artifacts[0] == artifacts[1], "same seed must be byte-identical"

    report = json.loads(artifacts[0][1])
    stages = report["stages"]
    assert stages[0]["docs_in"] == 10000
    for prev, nxt in zip(stages, stages[1:]):
        assert prev["docs_out"] == nxt["docs_in"]
    for stage in stages[:2]:  # filter stages reconcile exactly
        detail = stage["detail"]
        dropped = sum(detail["docs_dropped_by_rule"].values())
        assert detail["docs_in"] == detail["docs_out"] + dropped
    # plants were actually removed
    assert stages[0]["docs_out"] == 10000 - 300  # lorem-ipsum docs
    assert stages[2]["docs_in"] - stages[2]["docs_out"] == 400  # exact duplicates

    out_docs, _ = load_jsonl(tmp_path / "out.jsonl")
    assert len(out_docs) == stages[-1]["docs_out"]

    ok(9, f"two runs byte-identical, counts reconcile, final {len(out_docs)} docs")
