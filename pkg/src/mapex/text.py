"""Phrase normalization shared by post-processing and scoring.

Both the redundancy filter and the F1@K scorer must agree on when two
phrases are "the same", so every comparison goes through ``stem_key``.
"""

from __future__ import annotations

import re
from functools import lru_cache

from nltk.stem.porter import PorterStemmer

_WS = re.compile(r"\s+")
_stemmer = PorterStemmer()


def normalize_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


def normalize_phrase(phrase: str) -> str:
    """Lowercase and collapse internal whitespace."""
    return normalize_ws(phrase).lower()


@lru_cache(maxsize=65536)
def stem_word(word: str) -> str:
    return _stemmer.stem(word)


def stem_key(phrase: str) -> str:
    """Porter-stem every whitespace token of the normalized phrase."""
    return " ".join(stem_word(w) for w in normalize_phrase(phrase).split(" ") if w)


def dedup_casefold(phrases) -> list[str]:
    """Trim, drop empties and case-insensitive repeats, keep first occurrence."""
    seen: set[str] = set()
    out: list[str] = []
    for p in phrases:
        p = normalize_ws(p)
        if not p:
            continue
        key = p.casefold()
        if key in seen:
            continue
        seen.add(key)
        out.append(p)
    return out
