"""HTML to Markdown conversion for crawled pages.

The tag mapping is the normative behavior (no external converter):

  h1-h6                    -> '#' * level
  p                        -> paragraph separated by a blank line
  ul/ol + li               -> '-' / '1.' items, one per line
  a                        -> [text](href)
  b / strong               -> **text**
  i / em                   -> *text*
  pre, code                -> fenced code block (a code tag nested in pre
                              does not double-fence)
  script, style, nav,
  header, footer, iframe   -> subtree dropped
  everything else          -> unwrapped to its text (tables degrade to text)

Whitespace collapses to single spaces within lines. Malformed HTML degrades
to text extraction and never raises.
"""

from __future__ import annotations

import re
from html.parser import HTMLParser

_DROP_TAGS = {"script", "style", "nav", "header", "footer", "iframe"}
_HEADINGS = {"h1": 1, "h2": 2, "h3": 3, "h4": 4, "h5": 5, "h6": 6}
_BLOCK_BREAKERS = {"p", "ul", "ol", "li", "pre"} | set(_HEADINGS)

_WS = re.compile(r"[ \t\r\f\v]+")


def _collapse(text: str) -> str:
    """Collapse whitespace runs to single spaces, per line."""
    lines = [_WS.sub(" ", line).strip() for line in text.split("\n")]
    return "\n".join(line for line in lines if line)


class _MarkdownBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.blocks: list[str] = []
        self._spans: list[str] = []
        self._drop_depth = 0
        self._pre_depth = 0
        self._pre_text: list[str] = []
        self._heading: int | None = None
        self._list_stack: list[dict] = []
        self._list_block: int | None = None
        # inline wrapper stack: (tag, span start index, href)
        self._inline: list[tuple[str, int, str | None]] = []

    # -- block assembly ----------------------------------------------------

    def _flush(self):
        while self._inline:  # unclosed inline tags end at the block boundary
            self._close_inline(self._inline[-1][0])
        text = _collapse("".join(self._spans))
        self._spans = []
        heading, self._heading = self._heading, None
        if not text:
            return
        text = text.replace("\n", " ")
        if heading:
            self.blocks.append("#" * heading + " " + text)
        elif self._list_stack:
            ctx = self._list_stack[-1]
            indent = "  " * (len(self._list_stack) - 1)
            if ctx["ordered"]:
                ctx["counter"] += 1
                prefix = f"{ctx['counter']}. "
            else:
                prefix = "- "
            item = indent + prefix + text
            if self._list_block is None:
                self.blocks.append(item)
                self._list_block = len(self.blocks) - 1
            else:
                self.blocks[self._list_block] += "\n" + item
        else:
            self.blocks.append(text)

    def _flush_pre(self):
        body = "".join(self._pre_text).strip("\n")
        self._pre_text = []
        self.blocks.append(f"```\n{body}\n```")

    # -- parser events -----------------------------------------------------

    def handle_starttag(self, tag, attrs):
        if self._drop_depth:
            if tag in _DROP_TAGS:
                self._drop_depth += 1
            return
        if tag in _DROP_TAGS:
            self._drop_depth += 1
            return
        if self._pre_depth:
            if tag in ("pre", "code"):
                self._pre_depth += 1
            return
        if tag in _HEADINGS:
            self._flush()
            self._heading = _HEADINGS[tag]
        elif tag == "p":
            self._flush()
        elif tag in ("ul", "ol"):
            self._flush()
            self._list_stack.append({"ordered": tag == "ol", "counter": 0})
        elif tag == "li":
            self._flush()
        elif tag in ("pre", "code"):
            self._flush()
            self._pre_depth = 1
        elif tag == "br":
            self._spans.append("\n")
        elif tag == "a":
            href = dict(attrs).get("href") or ""
            self._inline.append(("a", len(self._spans), href))
        elif tag in ("b", "strong"):
            self._inline.append(("b", len(self._spans), None))
        elif tag in ("i", "em"):
            self._inline.append(("i", len(self._spans), None))
        # any other tag: unwrap

    def handle_startendtag(self, tag, attrs):
        if tag == "br":
            self.handle_starttag(tag, attrs)

    def handle_endtag(self, tag):
        if self._drop_depth:
            if tag in _DROP_TAGS:
                self._drop_depth -= 1
            return
        if self._pre_depth:
            if tag in ("pre", "code"):
                self._pre_depth -= 1
                if self._pre_depth == 0:
                    self._flush_pre()
            return
        if tag in _HEADINGS or tag == "p" or tag == "li":
            self._flush()
        elif tag in ("ul", "ol"):
            self._flush()
            if self._list_stack:
                self._list_stack.pop()
            if not self._list_stack:
                self._list_block = None
        elif tag == "a":
            self._close_inline("a")
        elif tag in ("b", "strong"):
            self._close_inline("b")
        elif tag in ("i", "em"):
            self._close_inline("i")

    def _close_inline(self, kind: str):
        # pop the innermost matching wrapper; ignore stray end tags
        for idx in range(len(self._inline) - 1, -1, -1):
            tag, start, href = self._inline[idx]
            if tag != kind:
                continue
            text = _WS.sub(" ", "".join(self._spans[start:])).strip()
            del self._spans[start:]
            del self._inline[idx:]
            if kind == "a":
                self._spans.append(f"[{text}]({href})")
            elif kind == "b":
                self._spans.append(f"**{text}**" if text else "")
            else:
                self._spans.append(f"*{text}*" if text else "")
            return

    def handle_data(self, data):
        if self._drop_depth:
            return
        if self._pre_depth:
            self._pre_text.append(data)
            return
        self._spans.append(data)

    def finish(self) -> str:
        self.close()
        if self._pre_depth:
            self._flush_pre()
        self._flush()
        return "\n\n".join(self.blocks)


def html_to_markdown(html: str) -> str:
    """Convert an HTML fragment or page to Markdown text.

    Never raises on malformed input; worst case it degrades to plain-text
    extraction with whitespace collapsed.
    """
    builder = _MarkdownBuilder()
    try:
        builder.feed(html)
        return builder.finish()
    except Exception:
        # last-resort fallback: strip anything tag-shaped
        return _collapse(re.sub(r"<[^>]*>", " ", html)).replace("\n", " ")
