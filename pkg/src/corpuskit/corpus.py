"""Corpus record types and JSONL I/O.

Pretraining corpora are JSONL files with exactly the keys
url / source / content / time, one object per line. Chat-style datasets
use messages / prompt / prompt_id. Readers skip and report malformed lines
instead of aborting: web-scale inputs are dirty.
"""

from __future__ import annotations

import json
import logging
import re
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable, Iterator

logger = logging.getLogger(__name__)

_YEAR_ONLY = re.compile(r"^\d{4}$")


@dataclass(frozen=True)
class Document:
    """One corpus record. Immutable, safe to share across threads."""

    url: str
    source: str
    content: str
    time: str

    def to_record(self) -> dict:
        return {
            "url": self.url,
            "source": self.source,
            "content": self.content,
            "time": self.time,
        }


def normalize_time(value: str) -> str:
    """Normalize a timestamp; year-only values get -12-31T00:00:00 appended."""
    if _YEAR_ONLY.match(value):
        return value + "-12-31T00:00:00"
    return value


def document_from_record(record: dict) -> Document:
    """Validate a parsed JSONL record and build a Document.

    Raises ValueError on missing/ill-typed fields, empty content, or a
    timestamp that does not parse as ISO 8601. Extra keys are ignored.
    """
    for key in ("url", "source", "content", "time"):
        if key not in record:
            raise ValueError(f"missing field {key!r}")
        if not isinstance(record[key], str):
            raise ValueError(f"field {key!r} is not a string")
    if not record["content"]:
        raise ValueError("empty content")
    time = normalize_time(record["time"])
    try:
        datetime.fromisoformat(time)
    except ValueError as exc:
        raise ValueError(f"time {record['time']!r} is not ISO 8601") from exc
    return Document(
        url=record["url"],
        source=record["source"],
        content=record["content"],
        time=time,
    )


class JsonlReader:
    """Iterate Documents from a JSONL file, skipping malformed lines.

    Skips are logged with their line numbers and counted in ``skipped``;
    ``skipped_lines`` keeps (line_number, reason) pairs. An unreadable file
    raises immediately.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.skipped = 0
        self.skipped_lines: list[tuple[int, str]] = []
        # fail fast on unreadable input
        with open(self.path, "rb"):
            pass

    def __iter__(self) -> Iterator[Document]:
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    if not isinstance(record, dict):
                        raise ValueError("line is not a JSON object")
                    yield document_from_record(record)
                except (json.JSONDecodeError, ValueError) as exc:
                    self.skipped += 1
                    self.skipped_lines.append((lineno, str(exc)))
                    logger.warning("%s:%d skipped: %s", self.path, lineno, exc)


def read_jsonl(path: str | Path) -> JsonlReader:
    return JsonlReader(path)


def load_jsonl(path: str | Path) -> tuple[list[Document], int]:
    """Read a whole corpus into memory; returns (documents, skipped count)."""
    reader = JsonlReader(path)
    docs = list(reader)
    return docs, reader.skipped


class CorpusWriteError(Exception):
    """Raised when writing fails; carries the number of records written."""

    def __init__(self, written: int, cause: Exception):
        super().__init__(f"write failed after {written} records: {cause}")
        self.written = written


def write_jsonl(docs: Iterable[Document], path: str | Path) -> int:
    """Write Documents one JSON object per line; returns the count written."""
    written = 0
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for doc in docs:
                fh.write(json.dumps(doc.to_record(), ensure_ascii=False))
                fh.write("\n")
                written += 1
    except OSError as exc:
        raise CorpusWriteError(written, exc) from exc
    return written


# ---------------------------------------------------------------------------
# Chat-style datasets (instruction / reasoning samples)
# ---------------------------------------------------------------------------

_ROLES = ("user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatSample:
    """A conversation sample: alternating user/assistant messages.

    ``prompt`` mirrors the first user message; ``prompt_id`` must be unique
    within a dataset.
    """

    messages: tuple[ChatMessage, ...]
    prompt: str
    prompt_id: str

    def to_record(self) -> dict:
        return {
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "prompt": self.prompt,
            "prompt_id": self.prompt_id,
        }


def chat_sample_from_record(record: dict) -> ChatSample:
    messages = record.get("messages")
    if not isinstance(messages, list) or not messages:
        raise ValueError("messages must be a non-empty list")
    parsed = []
    for i, msg in enumerate(messages):
        if not isinstance(msg, dict):
            raise ValueError(f"message {i} is not an object")
        role, content = msg.get("role"), msg.get("content")
        if role not in _ROLES:
            raise ValueError(f"message {i} has invalid role {role!r}")
        if role != _ROLES[i % 2]:
            raise ValueError("roles must alternate starting with user")
        if not isinstance(content, str):
            raise ValueError(f"message {i} content is not a string")
        parsed.append(ChatMessage(role=role, content=content))
    prompt = record.get("prompt", parsed[0].content)
    if prompt != parsed[0].content:
        raise ValueError("prompt does not match the first message")
    prompt_id = record.get("prompt_id")
    if not isinstance(prompt_id, str) or not prompt_id:
        raise ValueError("prompt_id missing or empty")
    return ChatSample(messages=tuple(parsed), prompt=prompt, prompt_id=prompt_id)


def load_chat_jsonl(path: str | Path) -> tuple[list[ChatSample], int]:
    """Load chat samples, skipping malformed lines.

    Raises ValueError on duplicate prompt_id: downstream flows key on it.
    """
    samples: list[ChatSample] = []
    skipped = 0
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                sample = chat_sample_from_record(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                skipped += 1
                logger.warning("%s:%d skipped: %s", path, lineno, exc)
                continue
            if sample.prompt_id in seen:
                raise ValueError(f"duplicate prompt_id {sample.prompt_id!r} at line {lineno}")
            seen.add(sample.prompt_id)
            samples.append(sample)
    return samples, skipped


def write_chat_jsonl(samples: Iterable[ChatSample], path: str | Path) -> int:
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_record(), ensure_ascii=False))
            fh.write("\n")
            written += 1
    return written


# ---------------------------------------------------------------------------
# Category graph expansion (source discovery)
# ---------------------------------------------------------------------------


@dataclass
class CategoryGraph:
    """Directed graph of categories; edges map a category to its subcategories."""

    root: str
    edges: dict[str, list[str]]
    nodes: set[str] = field(default_factory=set)

    def __post_init__(self):
        if not self.nodes:
            self.nodes = {self.root}
            for parent, children in self.edges.items():
                self.nodes.add(parent)
                self.nodes.update(children)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "CategoryGraph":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(root=data["root"], edges={k: list(v) for k, v in data["edges"].items()})


def expand_categories(graph: CategoryGraph, predicate: Callable[[str], bool]) -> set[str]:
    """Breadth-first expansion from the root category.

    A node's children are enqueued only when predicate(node) is true; the
    result is every visited node the predicate accepted. Cycles are visited
    at most once. The predicate must be deterministic for the run (it may
    wrap an allowlist, the domain classifier, or an external judge).
    """
    if graph.root not in graph.nodes:
        raise ValueError(f"root {graph.root!r} not in graph")
    visited = {graph.root}
    accepted: set[str] = set()
    queue = deque([graph.root])
    while queue:
        node = queue.popleft()
        if not predicate(node):
            continue
        accepted.add(node)
        for child in graph.edges.get(node, []):
            if child not in visited:
                visited.add(child)
                queue.append(child)
    return accepted
