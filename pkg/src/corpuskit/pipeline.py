"""Config-driven pipeline: ingest -> filters -> dedup -> classify -> report.

A pipeline config is a versioned JSON file naming an ordered list of stages,
each a module operation with its parameters. Stages run sequentially and
deterministically for a given seed; per-stage reports and before/after
corpus statistics land in one report JSON whose bytes are reproducible
(sorted keys, no wall-clock fields).

Documents materialize at stage boundaries: dedup clustering and classifier
scoring need a global pass anyway, and exact per-stage accounting comes
free. Within a stage, per-document transforms stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .classifier import LinearClassifier, score
from .corpus import Document, load_jsonl, write_jsonl
from .dedup import LshConfig, dedup_corpus
from .filters import FilterConfig, FilterReport, filter_stream, window_filter
from .ngram import NGramModel, PerplexityThreshold, lm_filter

SCHEMA_VERSION = 1

KNOWN_OPS = (
    "c4_filter",
    "heuristic_filter",
    "lm_filter",
    "dedup",
    "classify_filter",
    "window_filter",
)


class PipelineError(Exception):
    pass


class PipelineStageError(PipelineError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class StageSpec:
    name: str
    op: str
    params: dict = field(default_factory=dict)


@dataclass
class PipelineConfig:
    input: str
    output: str
    stages: list[StageSpec] = field(default_factory=list)
    seed: int = 0
    report_path: Optional[str] = None
    version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "PipelineConfig":
        version = data.get("version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise PipelineError(f"unsupported config version {version}")
        stages = [
            StageSpec(name=s["name"], op=s["op"], params=dict(s.get("params", {})))
            for s in data.get("stages", [])
        ]
        cfg = cls(
            input=data["input"],
            output=data["output"],
            stages=stages,
            seed=int(data.get("seed", 0)),
            report_path=data.get("report"),
            version=version,
        )
        cfg.validate(base_dir=base_dir)
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return cls.from_dict(data, base_dir=path.parent)

    def validate(self, base_dir: Path | None = None):
        names = [s.name for s in self.stages]
        if len(names) != len(set(names)):
            raise PipelineError("stage names must be unique")
        for stage in self.stages:
            if stage.op not in KNOWN_OPS:
                raise PipelineError(f"stage {stage.name!r}: unknown op {stage.op!r}")
            _build_stage(stage, seed=self.seed, check_only=True, base_dir=base_dir)
        resolved = _resolve(self.input, base_dir)
        if not resolved.exists():
            raise PipelineError(f"input file {self.input!r} does not exist")


def _resolve(path: str, base_dir: Path | None) -> Path:
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        return base_dir / p
    return p


def _filter_config(params: dict) -> FilterConfig:
    allowed = {
        "drop_line_substrings",
        "drop_doc_substrings",
        "heuristic_doc_substrings",
        "min_doc_words",
        "min_doc_chars",
        "apply_terminal_punct",
        "apply_curly_brace",
        "score_window",
    }
    unknown = set(params) - allowed
    if unknown:
        raise PipelineError(f"unknown filter parameters: {sorted(unknown)}")
    kwargs = dict(params)
    for key in ("drop_line_substrings", "drop_doc_substrings", "heuristic_doc_substrings"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    if kwargs.get("score_window") is not None:
        kwargs["score_window"] = tuple(kwargs["score_window"])
    return FilterConfig(**kwargs).validate()


def _build_stage(stage: StageSpec, seed: int, check_only: bool = False,
                 base_dir: Path | None = None):
    """Validate stage params and (unless check_only) return a runner callable."""
    op, params = stage.op, stage.params

    if op in ("c4_filter", "heuristic_filter"):
        cfg = _filter_config(params)
        kind = "c4" if op == "c4_filter" else "heuristic"
        if check_only:
            return None

        def run(docs: list[Document]):
            report = FilterReport()
            kept = list(filter_stream(docs, cfg, kind, report))
            return kept, report.to_dict()

        return run

    if op == "lm_filter":
        model_path = _resolve(params["model"], base_dir)
        if not model_path.exists():
            raise PipelineError(f"stage {stage.name!r}: model {model_path} does not exist")
        thresholds = [
            PerplexityThreshold(source, float(limit))
            for source, limit in params.get("thresholds", {}).items()
        ]
        default = params.get("default_threshold")
        if check_only:
            return None
        model = NGramModel.load(model_path)

        def run(docs: list[Document]):
            kept, report = lm_filter(docs, model, thresholds, default_threshold=default)
            return kept, report.to_dict()

        return run

    if op == "dedup":
        lsh_kwargs = {
            key: int(params[key])
            for key in ("shingle_size", "num_hashes", "num_bands", "rows_per_band")
            if key in params
        }
        cfg = LshConfig(seed=int(params.get("seed", seed)), **lsh_kwargs)
        if check_only:
            return None

        def run(docs: list[Document]):
            kept, report, _ = dedup_corpus(docs, cfg, threshold=params.get("threshold"))
            return kept, report.to_dict()

        return run

    if op in ("classify_filter", "window_filter"):
        model_path = _resolve(params["model"], base_dir)
        if not model_path.exists():
            raise PipelineError(f"stage {stage.name!r}: model {model_path} does not exist")
        if op == "classify_filter":
            threshold = float(params["threshold"])
        else:
            wcfg = FilterConfig(
                min_doc_chars=int(params.get("min_doc_chars", 0)),
                score_window=(float(params["low"]), float(params["high"])),
            ).validate()
        if check_only:
            return None
        model = LinearClassifier.load(model_path)

        def run(docs: list[Document]):
            kept = []
            dropped = 0
            for doc in docs:
                s = score(model, doc)
                if op == "classify_filter":
                    keep = s > threshold
                else:
                    keep = window_filter(doc, s, len(doc.content), wcfg)
                if keep:
                    kept.append(doc)
                else:
                    dropped += 1
            return kept, {"docs_in": len(docs), "docs_out": len(kept), "dropped": dropped}

        return run

    raise PipelineError(f"unknown op {op!r}")


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------


@dataclass
class CorpusStats:
    samples: int = 0
    tokens: int = 0
    per_source: dict[str, dict] = field(default_factory=dict)

    @property
    def avg_tokens(self) -> float:
        return self.tokens / self.samples if self.samples else 0.0

    def to_dict(self) -> dict:
        per_source = {}
        for source in sorted(self.per_source):
            row = self.per_source[source]
            per_source[source] = {
                "samples": row["samples"],
                "tokens": row["tokens"],
                "avg_tokens": row["tokens"] / row["samples"] if row["samples"] else 0.0,
            }
        return {
            "samples": self.samples,
            "tokens": self.tokens,
            "avg_tokens": self.avg_tokens,
            "per_source": per_source,
        }


def stats(docs: Iterable[Document]) -> CorpusStats:
    """Whitespace-token counts per source and overall."""
    out = CorpusStats()
    for doc in docs:
        n = len(doc.content.split())
        out.samples += 1
        out.tokens += n
        row = out.per_source.setdefault(doc.source, {"samples": 0, "tokens": 0})
        row["samples"] += 1
        row["tokens"] += n
    return out


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def run_pipeline(cfg: PipelineConfig, base_dir: Path | None = None) -> dict:
    """Execute all stages in order and write output corpus plus report.

    On a stage failure the documents produced by the last successful stage
    are written to <output>.partial and PipelineStageError names the stage.
    """
    docs, skipped = load_jsonl(_resolve(cfg.input, base_dir))
    report: dict = {
        "version": cfg.version,
        "seed": cfg.seed,
        "input": cfg.input,
        "output": cfg.output,
        "ingest": {"docs": len(docs), "skipped": skipped},
        "stats_before": stats(docs).to_dict(),
        "stages": [],
    }
    current = docs
    for stage in cfg.stages:
        runner = _build_stage(stage, seed=cfg.seed, base_dir=base_dir)
        docs_in = len(current)
        try:
            current, detail = runner(current)
        except Exception as exc:
            partial = Path(str(_resolve(cfg.output, base_dir)) + ".partial")
            write_jsonl(current, partial)
            raise PipelineStageError(stage.name, exc) from exc
        report["stages"].append(
            {
                "name": stage.name,
                "op": stage.op,
                "docs_in": docs_in,
                "docs_out": len(current),
                "detail": detail,
            }
        )
    report["stats_after"] = stats(current).to_dict()
    written = write_jsonl(current, _resolve(cfg.output, base_dir))
    report["written"] = written
    if cfg.report_path:
        with open(_resolve(cfg.report_path, base_dir), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report
