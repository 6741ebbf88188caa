"""Deterministic rule tokenizer."""

import re
from typing import NamedTuple

_TOKEN = re.compile(r"[^\W_]+|[^\w\s]|_")


class Token(NamedTuple):
    text: str
    start: int
    end: int


def tokenize_with_offsets(text):
    """Lowercased word and punctuation tokens with character offsets into ``text``."""
    return [Token(m.group().lower(), m.start(), m.end()) for m in _TOKEN.finditer(text)]


def tokenize(text):
    """Lowercase, split on whitespace, and make each punctuation mark its own token.

    >>> tokenize("Kerley-B lines")
    ['kerley', '-', 'b', 'lines']
    """
    return [t.text for t in tokenize_with_offsets(text)]
