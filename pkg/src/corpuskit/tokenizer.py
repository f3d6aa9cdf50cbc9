"""Shared word tokenizer.

One tokenizer serves the n-gram model, MinHash shingling, decontamination,
and classifier features so that thresholds and overlap counts computed with
one tool stay valid in another.

Rules (fixed, do not change without retraining downstream artifacts):
  1. lowercase the text
  2. split on whitespace
  3. detach leading and trailing punctuation characters as separate tokens
     ("Hello, world!" -> ["hello", ",", "world", "!"]); interior punctuation
     stays attached ("don't" -> ["don't"])
"""

import string

_PUNCT = frozenset(string.punctuation)


def tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    for piece in text.lower().split():
        lead = []
        while piece and piece[0] in _PUNCT:
            lead.append(piece[0])
            piece = piece[1:]
        tail = []
        while piece and piece[-1] in _PUNCT:
            tail.append(piece[-1])
            piece = piece[:-1]
        tokens.extend(lead)
        if piece:
            tokens.append(piece)
        tokens.extend(reversed(tail))
    return tokens
