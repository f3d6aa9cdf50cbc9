import json

import pytest

from corpuskit.corpus import Document, load_jsonl, write_jsonl
from corpuskit.pipeline import (
    CorpusStats,
    PipelineConfig,
    PipelineError,
    PipelineStageError,
    run_pipeline,
    stats,
)


def make_doc(content, source="web"):
    return Document(url="u", source=source, content=content, time="2024-12-31T00:00:00")


def write_corpus(path, docs):
    write_jsonl(docs, path)
    return path


def base_config(tmp_path, stages, seed=0):
    return {
        "version": 1,
        "seed": seed,
        "input": str(tmp_path / "in.jsonl"),
        "output": str(tmp_path / "out.jsonl"),
        "report": str(tmp_path / "report.json"),
        "stages": stages,
    }


class TestStats:
    def test_single_doc(self):
        s = stats([make_doc("a b c")])
        assert (s.samples, s.tokens, s.avg_tokens) == (1, 3, 3.0)

    def test_empty_corpus(self):
        s = stats([])
        assert (s.samples, s.tokens, s.avg_tokens) == (0, 0, 0.0)

    def test_per_source_breakdown_sums_to_total(self):
        docs = [make_doc("a b c d e", source="s1")] * 2
        docs += [make_doc("x", source="s2")] * 3
        s = stats(docs)
        assert s.samples == 5 and s.tokens == 13
        d = s.to_dict()
        assert d["per_source"]["s1"] == {"samples": 2, "tokens": 10, "avg_tokens": 5.0}
        assert d["per_source"]["s2"] == {"samples": 3, "tokens": 3, "avg_tokens": 1.0}
        assert sum(r["samples"] for r in d["per_source"].values()) == s.samples
        assert sum(r["tokens"] for r in d["per_source"].values()) == s.tokens
        assert s.avg_tokens == pytest.approx(13 / 5)


class TestConfigValidation:
    def test_duplicate_stage_names_rejected(self, tmp_path):
        write_corpus(tmp_path / "in.jsonl", [make_doc("hello world")])
        cfg = base_config(tmp_path, [
            {"name": "f", "op": "c4_filter", "params": {}},
            {"name": "f", "op": "heuristic_filter", "params": {}},
        ])
        with pytest.raises(PipelineError, match="unique"):
            PipelineConfig.from_dict(cfg)

    def test_unknown_op_rejected(self, tmp_path):
        write_corpus(tmp_path / "in.jsonl", [make_doc("hello")])
        cfg = base_config(tmp_path, [{"name": "x", "op": "nonsense", "params": {}}])
        with pytest.raises(PipelineError, match="nonsense"):
            PipelineConfig.from_dict(cfg)

    def test_missing_input_rejected(self, tmp_path):
        cfg = base_config(tmp_path, [])
        with pytest.raises(PipelineError, match="does not exist"):
            PipelineConfig.from_dict(cfg)

    def test_missing_model_file_rejected(self, tmp_path):
        write_corpus(tmp_path / "in.jsonl", [make_doc("hello")])
        cfg = base_config(tmp_path, [
            {"name": "lm", "op": "lm_filter",
             "params": {"model": str(tmp_path / "no.lm"), "thresholds": {}}},
        ])
        with pytest.raises(PipelineError, match="does not exist"):
            PipelineConfig.from_dict(cfg)

    def test_bad_filter_params_rejected(self, tmp_path):
        write_corpus(tmp_path / "in.jsonl", [make_doc("hello")])
        cfg = base_config(tmp_path, [
            {"name": "f", "op": "c4_filter", "params": {"bogus_knob": 1}},
        ])
        with pytest.raises(PipelineError, match="bogus_knob"):
            PipelineConfig.from_dict(cfg)

    def test_unsupported_version_rejected(self, tmp_path):
        write_corpus(tmp_path / "in.jsonl", [make_doc("hello")])
        cfg = base_config(tmp_path, [])
        cfg["version"] = 99
        with pytest.raises(PipelineError, match="version"):
            PipelineConfig.from_dict(cfg)


class TestRunPipeline:
    def test_empty_stage_list_is_identity(self, tmp_path):
        docs = [make_doc("hello world"), make_doc("more text here")]
        write_corpus(tmp_path / "in.jsonl", docs)
        cfg = PipelineConfig.from_dict(base_config(tmp_path, []))
        report = run_pipeline(cfg)
        out, _ = load_jsonl(tmp_path / "out.jsonl")
        assert out == docs
        assert report["stats_before"] == report["stats_after"]

    def test_filter_then_dedup_composes(self, tmp_path):
        clean = make_doc("clean document body with several words repeated often enough")
        docs = [clean, clean, make_doc("this one has lorem ipsum inside"),
                make_doc("short")]
        write_corpus(tmp_path / "in.jsonl", docs)
        cfg = PipelineConfig.from_dict(base_config(tmp_path, [
            {"name": "c4", "op": "c4_filter", "params": {"min_doc_words": 5}},
            {"name": "dd", "op": "dedup", "params": {"shingle_size": 3}},
        ]))
        report = run_pipeline(cfg)
        out, _ = load_jsonl(tmp_path / "out.jsonl")
        assert len(out) == 1
        assert out[0] == clean
        # adjacent stage counts reconcile
        assert report["stages"][0]["docs_out"] == report["stages"][1]["docs_in"]
        assert report["stages"][0]["docs_in"] == 4
        assert report["stages"][1]["docs_out"] == 1

    def test_rerun_on_own_output_is_noop(self, tmp_path):
        docs = [make_doc("a perfectly clean document with plenty of words in it")] * 2
        docs += [make_doc("unique other content that also has enough words here")]
        write_corpus(tmp_path / "in.jsonl", docs)
        stages = [
            {"name": "c4", "op": "c4_filter", "params": {"min_doc_words": 3}},
            {"name": "dd", "op": "dedup", "params": {"shingle_size": 3}},
        ]
        cfg = PipelineConfig.from_dict(base_config(tmp_path, stages))
        run_pipeline(cfg)
        first = (tmp_path / "out.jsonl").read_bytes()

        second_cfg = dict(base_config(tmp_path, stages))
        second_cfg["input"] = str(tmp_path / "out.jsonl")
        second_cfg["output"] = str(tmp_path / "out2.jsonl")
        second_cfg["report"] = str(tmp_path / "report2.json")
        run_pipeline(PipelineConfig.from_dict(second_cfg))
        assert (tmp_path / "out2.jsonl").read_bytes() == first

    def test_same_seed_byte_identical(self, tmp_path):
        docs = [make_doc(f"document number {i} body text with words") for i in range(30)]
        docs += docs[:5]
        write_corpus(tmp_path / "in.jsonl", docs)
        stages = [
            {"name": "c4", "op": "c4_filter", "params": {"min_doc_words": 2}},
            {"name": "dd", "op": "dedup", "params": {"shingle_size": 2}},
        ]

        outputs = []
        cfg_dict = base_config(tmp_path, stages, seed=42)
        for _ in range(2):
            run_pipeline(PipelineConfig.from_dict(cfg_dict))
            outputs.append(
                (
                    (tmp_path / "out.jsonl").read_bytes(),
                    (tmp_path / "report.json").read_bytes(),
                )
            )
        assert outputs[0] == outputs[1]

    def test_stage_failure_names_stage_and_keeps_partial(self, tmp_path):
        docs = [make_doc("fine document with words", source="web"),
                make_doc("no threshold for me", source="exotic")]
        write_corpus(tmp_path / "in.jsonl", docs)

        import corpuskit.ngram as ngram_mod
        model = ngram_mod.train([make_doc("a b c")], order=1)
        model_path = tmp_path / "toy.lm"
        model.save(model_path)

        cfg = PipelineConfig.from_dict(base_config(tmp_path, [
            {"name": "lm", "op": "lm_filter",
             "params": {"model": str(model_path), "thresholds": {"web": 1000.0}}},
        ]))
        with pytest.raises(PipelineStageError) as err:
            run_pipeline(cfg)
        assert err.value.stage == "lm"
        partial, _ = load_jsonl(tmp_path / "out.jsonl.partial")
        assert partial == docs

    def test_report_written_with_sorted_keys(self, tmp_path):
        write_corpus(tmp_path / "in.jsonl", [make_doc("hello world wide web")])
        cfg = PipelineConfig.from_dict(base_config(tmp_path, [
            {"name": "c4", "op": "c4_filter", "params": {"min_doc_words": 1}},
        ]))
        run_pipeline(cfg)
        data = json.loads((tmp_path / "report.json").read_text())
        assert data["stages"][0]["name"] == "c4"
        assert data["written"] == 1
        assert "docs_dropped_by_rule" in data["stages"][0]["detail"]


class TestClassifierStages:
    @staticmethod
    def trained_model_path(tmp_path):
        from corpuskit.classifier import train_classifier

        data = [(make_doc("cyber threat malware exploit"), 1) for _ in range(20)]
        data += [(make_doc("garden flowers recipe cooking"), 0) for _ in range(20)]
        model = train_classifier(data, epochs=5, feature_dim=1 << 12).model
        path = tmp_path / "clf.bin"
        model.save(path)
        return path

    def test_classify_filter_stage(self, tmp_path):
        model_path = self.trained_model_path(tmp_path)
        docs = [make_doc("cyber threat malware exploit analysis"),
                make_doc("garden flowers recipe cooking tips")]
        write_corpus(tmp_path / "in.jsonl", docs)
        cfg = PipelineConfig.from_dict(base_config(tmp_path, [
            {"name": "cls", "op": "classify_filter",
             "params": {"model": str(model_path), "threshold": 0.5}},
        ]))
        run_pipeline(cfg)
        out, _ = load_jsonl(tmp_path / "out.jsonl")
        assert len(out) == 1
        assert "cyber" in out[0].content

    def test_window_filter_stage(self, tmp_path):
        model_path = self.trained_model_path(tmp_path)
        long_cyber = make_doc("cyber threat malware exploit " * 30)
        short_cyber = make_doc("cyber threat")
        write_corpus(tmp_path / "in.jsonl", [long_cyber, short_cyber])
        cfg = PipelineConfig.from_dict(base_config(tmp_path, [
            {"name": "win", "op": "window_filter",
             "params": {"model": str(model_path), "low": 0.003, "high": 0.999,
                        "min_doc_chars": 100}},
        ]))
        run_pipeline(cfg)
        out, _ = load_jsonl(tmp_path / "out.jsonl")
        assert out == [long_cyber]
