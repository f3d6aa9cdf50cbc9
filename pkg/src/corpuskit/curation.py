"""LLM-in-the-loop curation flows.

Style rewriting (augmentation), judge-score filtering, and rejection
sampling, all against a pluggable chat-completions endpoint. Everything
here treats the completion service as an opaque client so fixtures can
stand in during tests and offline runs.
"""

from __future__ import annotations

import logging
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import requests

from .corpus import ChatSample, Document

logger = logging.getLogger(__name__)


class CompletionError(Exception):
    """A completion call failed after exhausting its retries."""


@dataclass
class CompletionClient:
    """Minimal chat-completions HTTP client.

    Requests follow the standard wire shape
    {"model": ..., "messages": [{"role", "content"}], "temperature": ...};
    the response must carry one assistant content string under
    choices[0].message.content. Auth is a bearer token header when api_key
    is set. Retries use exponential backoff.
    """

    endpoint: str
    model_name: str
    temperature: float = 0.0
    timeout: float = 30.0
    max_retries: int = 2
    api_key: Optional[str] = None
    backoff_base: float = 0.5

    def complete(self, messages: list[dict]) -> str:
        payload = {
            "model": self.model_name,
            "messages": messages,
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt and self.backoff_base:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                resp = requests.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
                if resp.status_code != 200:
                    raise CompletionError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                data = resp.json()
                content = data["choices"][0]["message"]["content"]
                if not isinstance(content, str):
                    raise CompletionError("response content is not a string")
                return content
            except (requests.RequestException, CompletionError, KeyError,
                    IndexError, ValueError) as exc:
                last_error = exc
                logger.warning("completion attempt %d failed: %s", attempt + 1, exc)
        raise CompletionError(f"completion failed after {self.max_retries + 1} attempts: {last_error}")


# ---------------------------------------------------------------------------
# Style templates and prompt rendering
# ---------------------------------------------------------------------------

PLACEHOLDER = "{TEXT}"


class Style(str, Enum):
    blog = "blog"
    textbook = "textbook"
    qa = "qa"


@dataclass(frozen=True)
class StyleTemplate:
    style: Style
    template: str

    def __post_init__(self):
        if self.template.count(PLACEHOLDER) != 1:
            raise ValueError(
                f"template for {self.style} must contain {PLACEHOLDER} exactly once"
            )

    @classmethod
    def from_file(cls, style: Style | str, path: str | Path) -> "StyleTemplate":
        return cls(style=Style(style), template=Path(path).read_text(encoding="utf-8"))


def builtin_template(style: Style | str) -> StyleTemplate:
    style = Style(style)
    text = resources.files("corpuskit").joinpath(f"templates/{style.value}.txt").read_text("utf-8")
    return StyleTemplate(style=style, template=text)


def render_rewrite_prompt(doc: Document, tpl: StyleTemplate) -> str:
    """Substitute the document content at the template placeholder.

    Single pass over the template: a literal "{TEXT}" inside the document
    content is never re-substituted. Empty content is an error, since
    rewriting needs a source text.
    """
    if not doc.content:
        raise ValueError("cannot render a rewrite prompt for empty content")
    return tpl.template.replace(PLACEHOLDER, doc.content, 1)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


class AugmentError(Exception):
    pass


@dataclass
class AugmentReport:
    docs_in: int = 0
    docs_out: int = 0
    skipped: list[dict] = field(default_factory=list)
    per_client: dict[str, int] = field(default_factory=dict)
    per_style: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "docs_in": self.docs_in,
            "docs_out": self.docs_out,
            "skipped": self.skipped,
            "per_client": dict(sorted(self.per_client.items())),
            "per_style": dict(sorted(self.per_style.items())),
        }


def augment(
    docs: Iterable[Document],
    templates: Sequence[StyleTemplate],
    clients: Sequence,
    seed: int = 0,
    max_concurrency: int = 1,
    error_budget: int = 100,
) -> tuple[list[Document], AugmentReport]:
    """Rewrite each document with a seeded random (template, client) pair.

    Output documents keep url/source/time and replace content with the
    completion. Failed or empty completions skip the document with a report
    entry; once skips exceed error_budget the run aborts. Completion calls
    run with at most max_concurrency in flight and results keep input order.
    """
    if not templates or not clients:
        raise ValueError("augment needs at least one template and one client")
    doc_list = list(docs)
    rng = random.Random(seed)
    # draw choices up front so concurrency cannot perturb determinism
    picks = [(rng.randrange(len(templates)), rng.randrange(len(clients))) for _ in doc_list]
    report = AugmentReport(docs_in=len(doc_list))

    def run_one(arg):
        doc, (tpl_idx, client_idx) = arg
        tpl, client = templates[tpl_idx], clients[client_idx]
        prompt = render_rewrite_prompt(doc, tpl)
        try:
            content = client.complete([{"role": "user", "content": prompt}])
        except CompletionError as exc:
            return doc, tpl, client_idx, None, str(exc)
        return doc, tpl, client_idx, content, None

    out: list[Document] = []
    with ThreadPoolExecutor(max_workers=max(1, max_concurrency)) as pool:
        for doc, tpl, client_idx, content, error in pool.map(
            run_one, zip(doc_list, picks)
        ):
            client_name = getattr(clients[client_idx], "model_name", str(client_idx))
            report.per_client[client_name] = report.per_client.get(client_name, 0) + 1
            report.per_style[tpl.style.value] = report.per_style.get(tpl.style.value, 0) + 1
            if error is not None or not content:
                reason = error if error is not None else "empty completion"
                report.skipped.append({"url": doc.url, "reason": reason})
                if len(report.skipped) > error_budget:
                    raise AugmentError(
                        f"augmentation aborted: {len(report.skipped)} failures "
                        f"exceeded the error budget of {error_budget}"
                    )
                continue
            report.docs_out += 1
            out.append(Document(url=doc.url, source=doc.source, content=content, time=doc.time))
    return out, report


# ---------------------------------------------------------------------------
# Judge-score filtering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JudgedSample:
    sample: ChatSample
    judge_score: int
    judge_rationale: str = ""
    task: str = ""

    def __post_init__(self):
        if not 1 <= self.judge_score <= 10:
            raise ValueError("judge_score must be within 1..10")


def load_judged_jsonl(path: str | Path) -> list[JudgedSample]:
    """Read judged samples: chat-sample fields plus judge_score and friends."""
    import json

    from .corpus import chat_sample_from_record

    out: list[JudgedSample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                out.append(
                    JudgedSample(
                        sample=chat_sample_from_record(record),
                        judge_score=int(record["judge_score"]),
                        judge_rationale=str(record.get("judge_rationale", "")),
                        task=str(record.get("task", "")),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                logger.warning("%s:%d skipped: %s", path, lineno, exc)
    return out


def judge_filter(
    samples: Iterable[JudgedSample], min_score: int = 8, top_k: int = 100
) -> list[ChatSample]:
    """Keep samples scoring at least min_score, best-first, top_k per task.

    Ties at the same score keep input order (stable sort), which also pins
    behavior at the top_k boundary.
    """
    if not 1 <= min_score <= 10:
        raise ValueError("min_score must be within 1..10")
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    by_task: dict[str, list[JudgedSample]] = {}
    for sample in samples:
        if sample.judge_score >= min_score:
            by_task.setdefault(sample.task, []).append(sample)
    out: list[ChatSample] = []
    for task in by_task:  # first-seen task order
        ranked = sorted(by_task[task], key=lambda s: -s.judge_score)
        out.extend(s.sample for s in ranked[:top_k])
    return out


# ---------------------------------------------------------------------------
# Rejection sampling
# ---------------------------------------------------------------------------


@dataclass
class RejectionReport:
    per_dataset: dict[str, dict] = field(default_factory=dict)

    def record(self, dataset: str, accepted: bool):
        row = self.per_dataset.setdefault(dataset, {"samples": 0, "accepted": 0})
        row["samples"] += 1
        row["accepted"] += int(accepted)

    def to_dict(self) -> dict:
        return {
            "datasets": [
                {"dataset": name, "samples": row["samples"], "accepted": row["accepted"]}
                for name, row in self.per_dataset.items()
            ]
        }


def _normalize_answer(text: str) -> str:
    return text.strip().casefold()


def rejection_sample(
    samples: Iterable[tuple[ChatSample, str]],
    answer_key: dict[str, str],
    dataset_key=None,
) -> tuple[list[ChatSample], RejectionReport]:
    """Keep samples whose extracted answer matches the key for their prompt.

    Matching is on trimmed, case-folded strings. Every prompt_id must be in
    the answer key. dataset_key labels report rows (defaults to one "all"
    row).
    """
    dataset_key = dataset_key or (lambda s: "all")
    report = RejectionReport()
    kept: list[ChatSample] = []
    for sample, extracted in samples:
        if sample.prompt_id not in answer_key:
            raise KeyError(f"prompt_id {sample.prompt_id!r} missing from the answer key")
        ok = _normalize_answer(extracted) == _normalize_answer(answer_key[sample.prompt_id])
        report.record(dataset_key(sample), ok)
        if ok:
            kept.append(sample)
    return kept, report


_ANSWER_RE = re.compile(r"(?im)^[^\S\n]*(?:final\s+)?answer\s*[:\-]\s*(.+?)\s*$")


def extract_answer(text: str) -> Optional[str]:
    """Pull the last 'Answer: X' line from free-form reasoning text.

    A convenience with known limits: it only matches an explicit trailing
    answer line; answers embedded in prose need an external extractor.
    """
    matches = _ANSWER_RE.findall(text)
    return matches[-1] if matches else None
