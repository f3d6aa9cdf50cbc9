"""Rule-based document and line filters.

Covers the C4-style line/document rules, per-source heuristic substring
rules, and score/length window filtering. All filters are pure functions
over immutable Documents and are idempotent, so they are safe to re-run
and to parallelize; reports merge associatively across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .corpus import Document

# The C4 terminal-punctuation rule also accepts a closing double quote.
_TERMINAL_CHARS = ('.', '!', '?', '"')

DEFAULT_DROP_LINE_SUBSTRINGS = (
    "javascript",
    "terms-of-use",
    "terms of use",
    "cookie policy",
)
DEFAULT_DROP_DOC_SUBSTRINGS = ("lorem ipsum",)
DEFAULT_HEURISTIC_DOC_SUBSTRINGS = ("your download will begin in a few seconds",)


@dataclass(frozen=True)
class FilterConfig:
    drop_line_substrings: tuple[str, ...] = DEFAULT_DROP_LINE_SUBSTRINGS
    drop_doc_substrings: tuple[str, ...] = DEFAULT_DROP_DOC_SUBSTRINGS
    heuristic_doc_substrings: tuple[str, ...] = DEFAULT_HEURISTIC_DOC_SUBSTRINGS
    min_doc_words: int = 50
    min_doc_chars: int = 0
    score_window: Optional[tuple[float, float]] = None
    apply_terminal_punct: bool = False
    apply_curly_brace: bool = False

    def validate(self) -> "FilterConfig":
        for name in ("drop_line_substrings", "drop_doc_substrings", "heuristic_doc_substrings"):
            for s in getattr(self, name):
                if s != s.lower():
                    raise ValueError(f"{name} entries must be lowercase: {s!r}")
        if self.min_doc_words < 0 or self.min_doc_chars < 0:
            raise ValueError("min_doc_words/min_doc_chars must be >= 0")
        if self.score_window is not None:
            low, high = self.score_window
            if not low < high:
                raise ValueError(f"score_window low must be < high, got {self.score_window}")
        return self


@dataclass
class FilterReport:
    """Per-run accounting; docs_in == docs_out + sum(docs_dropped_by_rule)."""

    docs_in: int = 0
    docs_out: int = 0
    docs_dropped_by_rule: dict[str, int] = field(default_factory=dict)
    lines_dropped_by_rule: dict[str, int] = field(default_factory=dict)

    def drop_doc(self, rule: str):
        self.docs_dropped_by_rule[rule] = self.docs_dropped_by_rule.get(rule, 0) + 1

    def drop_line(self, rule: str):
        self.lines_dropped_by_rule[rule] = self.lines_dropped_by_rule.get(rule, 0) + 1

    def merge(self, other: "FilterReport") -> "FilterReport":
        merged = FilterReport(
            docs_in=self.docs_in + other.docs_in,
            docs_out=self.docs_out + other.docs_out,
            docs_dropped_by_rule=dict(self.docs_dropped_by_rule),
            lines_dropped_by_rule=dict(self.lines_dropped_by_rule),
        )
        for rule, n in other.docs_dropped_by_rule.items():
            merged.docs_dropped_by_rule[rule] = merged.docs_dropped_by_rule.get(rule, 0) + n
        for rule, n in other.lines_dropped_by_rule.items():
            merged.lines_dropped_by_rule[rule] = merged.lines_dropped_by_rule.get(rule, 0) + n
        return merged

    def to_dict(self) -> dict:
        return {
            "docs_in": self.docs_in,
            "docs_out": self.docs_out,
            "docs_dropped_by_rule": dict(sorted(self.docs_dropped_by_rule.items())),
            "lines_dropped_by_rule": dict(sorted(self.lines_dropped_by_rule.items())),
        }


def c4_filter(doc: Document, cfg: FilterConfig, report: FilterReport | None = None) -> Optional[Document]:
    """Apply the C4-subset rules to one document.

    Lines containing any drop substring (case-insensitive) are removed; with
    apply_terminal_punct, lines not ending in . ! ? " are removed too. The
    whole document drops when its content contains a document substring,
    contains '{' under apply_curly_brace, or falls under min_doc_words after
    line filtering. Substring matching is plain (no regex).
    """
    lowered = doc.content.lower()
    for sub in cfg.drop_doc_substrings:
        if sub in lowered:
            if report:
                report.drop_doc("doc_substring")
            return None
    if cfg.apply_curly_brace and "{" in doc.content:
        if report:
            report.drop_doc("curly_brace")
        return None

    kept_lines = []
    for line in doc.content.split("\n"):
        line_lower = line.lower()
        if any(sub in line_lower for sub in cfg.drop_line_substrings):
            if report:
                report.drop_line("line_substring")
            continue
        if cfg.apply_terminal_punct and not line.rstrip().endswith(_TERMINAL_CHARS):
            if report:
                report.drop_line("terminal_punct")
            continue
        kept_lines.append(line)
    content = "\n".join(kept_lines)

    if len(content.split()) < cfg.min_doc_words:
        if report:
            report.drop_doc("min_words")
        return None
    if content == doc.content:
        return doc
    return Document(url=doc.url, source=doc.source, content=content, time=doc.time)


def heuristic_filter(doc: Document, cfg: FilterConfig, report: FilterReport | None = None) -> Optional[Document]:
    """Drop the document when any per-source heuristic substring matches."""
    lowered = doc.content.lower()
    for sub in cfg.heuristic_doc_substrings:
        if sub in lowered:
            if report:
                report.drop_doc("heuristic_substring")
            return None
    return doc


def window_filter(doc: Document, score: float, length: int, cfg: FilterConfig) -> bool:
    """Keep a scored sample iff it clears the length floor and score window.

    True iff length > min_doc_chars and low < score < high; without a
    configured window the score test passes vacuously.
    """
    if length <= cfg.min_doc_chars:
        return False
    if cfg.score_window is not None:
        low, high = cfg.score_window
        if not (low < score < high):
            return False
    return True


def filter_stream(
    docs: Iterable[Document],
    cfg: FilterConfig,
    kind: str,
    report: FilterReport | None = None,
) -> Iterator[Document]:
    """Apply c4 or heuristic filtering across a stream, accounting in report."""
    fn = {"c4": c4_filter, "heuristic": heuristic_filter}[kind]
    for doc in docs:
        if report:
            report.docs_in += 1
        result = fn(doc, cfg, report)
        if result is not None:
            if report:
                report.docs_out += 1
            yield result
