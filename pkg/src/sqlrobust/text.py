"""Question tokenization and phrase normalization shared by every module."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Sequence

RESERVED_WORDS = frozenset({"id", "age", "name", "year"})

# Partial links made only of these words are noise ("of" inside "date of birth").
STOPWORDS = frozenset(
    """a an the of in on at to for from by with and or is are was were be been
    what which who whom whose when where how many much all each every any
    do does did has have had that this these those it its their there than
    as not no me give show list find return""".split()
)

_TOKEN_RE = re.compile(r"\w+(?:[-']\w+)*|[^\w\s]")
_NORM_SPLIT_RE = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class Token:
    text: str
    norm: str  # "" for punctuation
    start: int
    end: int


def normalize_phrase(text: str) -> str:
    """Lowercase, turn underscores/punctuation into spaces, collapse whitespace.

    >>> normalize_phrase("Flight_Number")
    'flight number'
    """
    return " ".join(t for t in _NORM_SPLIT_RE.split(str(text).lower()) if t)


def phrase_tokens(phrase: str) -> tuple[str, ...]:
    return tuple(normalize_phrase(phrase).split())


def tokenize(text: str) -> list[Token]:
    out = []
    for m in _TOKEN_RE.finditer(text):
        piece = m.group(0)
        out.append(Token(piece, normalize_phrase(piece), m.start(), m.end()))
    return out


def norms(tokens: Sequence[Token]) -> list[str]:
    return [t.norm for t in tokens]


def find_occurrences(haystack: Sequence[str], needle: Sequence[str]) -> Iterator[int]:
    """Start indices where ``needle`` occurs contiguously in ``haystack``."""
    n = len(needle)
    if n == 0:
        return
    needle = list(needle)
    for i in range(len(haystack) - n + 1):
        if list(haystack[i : i + n]) == needle:
            yield i


def is_contiguous_subsequence(small: Sequence[str], big: Sequence[str]) -> bool:
    return next(find_occurrences(big, small), None) is not None


def has_reserved(words: Sequence[str]) -> bool:
    return any(w in RESERVED_WORDS for w in words)


def replace_span(text: str, tokens: Sequence[Token], start: int, end: int, replacement: str) -> str:
    """Swap the characters covered by tokens[start:end] for ``replacement``."""
    return text[: tokens[start].start] + replacement + text[tokens[end - 1].end :]

