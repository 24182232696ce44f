"""Final cleanup of the Domain Expert's list.

Three steps in fixed order: drop stem-level duplicates, fold abbreviations
into their expansions, drop phrases that do not occur in the document.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .corpus import Document
from .text import normalize_phrase, normalize_ws, stem_key

logger = logging.getLogger(__name__)


def dedup_redundant(phrases: list[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for p in phrases:
        key = stem_key(p)
        if not key or key in seen:
            continue
        seen.add(key)
        out.append(p)
    return out


# ---------------------------------------------------------------- abbreviations

@dataclass
class AbbreviationMap:
    pairs: dict[str, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.pairs)


_PAREN = re.compile(r"\(([^()]{1,120})\)")
_ABBR_TOKEN = re.compile(r"^[A-Za-z][A-Za-z0-9&.\-]{1,9}$")


def is_abbreviation(token: str) -> bool:
    """2-10 chars, no spaces, more uppercase than lowercase letters."""
    if not _ABBR_TOKEN.match(token):
        return False
    upper = sum(c.isupper() for c in token)
    lower = sum(c.islower() for c in token)
    return upper >= 2 and upper > lower


def abbreviation_letters(abbr: str) -> str:
    letters = [c for c in abbr if c.isalpha()]
    # plural marker: LLMs, CNNs
    if len(letters) > 2 and letters[-1] == "s" and letters[-2].isupper():
        letters = letters[:-1]
    return "".join(letters).lower()


def _subwords(text: str) -> list[str]:
    return [w for w in re.split(r"[\s\-/]+", text) if w]


def initials_match(abbr: str, words: list[str]) -> bool:
    letters = abbreviation_letters(abbr)
    return len(letters) == len(words) and all(
        w[0].lower() == ch for w, ch in zip(words, letters)
    )


def _expansion_before(prefix: str, n: int) -> str | None:
    """The trailing span of ``prefix`` made of exactly ``n`` sub-words."""
    parts = list(re.finditer(r"[^\s\-/]+", prefix))
    if len(parts) < n or n == 0:
        return None
    span = prefix[parts[-n].start() : parts[-1].end()]
    if not all(p.group(0)[0].isalnum() for p in parts[-n:]):
        return None
    return span


def mine_abbreviations(doc: Document | str) -> AbbreviationMap:
    """Find ``Expansion Words (ABBR)`` and ``ABBR (Expansion Words)`` pairs.

    A pair is accepted only when the abbreviation's letters equal the
    initials of the expansion's words, in order, ignoring case.
    """
    text = doc.body if isinstance(doc, Document) else doc
    pairs: dict[str, str] = {}
    for m in _PAREN.finditer(text):
        inner = normalize_ws(m.group(1))
        before = text[: m.start()].rstrip()
        if is_abbreviation(inner):
            n = len(abbreviation_letters(inner))
            span = _expansion_before(before, n)
            if span and initials_match(inner, _subwords(span)):
                pairs.setdefault(inner, normalize_ws(span))
                continue
        tok = re.search(r"([^\s(]+)$", before)
        if tok and is_abbreviation(tok.group(1)):
            abbr = tok.group(1)
            if initials_match(abbr, _subwords(inner)) and all(w[0].isalnum() for w in _subwords(inner)):
                pairs.setdefault(abbr, inner)
    return AbbreviationMap(pairs)


def normalize_abbreviations(phrases: list[str], amap: AbbreviationMap) -> list[str]:
    """Fold each abbreviation and its expansion onto one entry.

    The first occurrence of the pair keeps its position; the entry takes
    the expansion's surface form (the list's own spelling when the list
    contains it, otherwise the document's). Later occurrences are dropped.
    """
    if not amap.pairs:
        return list(phrases)
    abbr_to_exp = {stem_key(a): stem_key(e) for a, e in amap.pairs.items()}
    doc_surface = {stem_key(e): e for e in amap.pairs.values()}

    def canonical(p: str) -> tuple[str, bool]:
        key = stem_key(p)
        if key in abbr_to_exp:
            return abbr_to_exp[key], True
        return key, False

    list_surface: dict[str, str] = {}
    for p in phrases:
        key, is_abbr = canonical(p)
        if not is_abbr and key in doc_surface:
            list_surface.setdefault(key, p)

    out, placed = [], set()
    for p in phrases:
        key, is_abbr = canonical(p)
        if key in placed:
            continue
        placed.add(key)
        if key in doc_surface:
            out.append(list_surface.get(key, doc_surface[key]))
        else:
            out.append(p)
    return out


# ---------------------------------------------------------------- presence

def occurs_in(phrase: str, normalized_doc: str) -> bool:
    needle = normalize_phrase(phrase)
    if not needle:
        return False
    pattern = r"(?<!\w)" + re.escape(needle) + r"(?!\w)"
    return re.search(pattern, normalized_doc) is not None


def filter_absent(phrases: list[str], doc: Document | str) -> list[str]:
    text = normalize_phrase(doc.body if isinstance(doc, Document) else doc)
    return [p for p in phrases if occurs_in(p, text)]


def post_process(
    phrases: list[str], doc: Document, diagnostics: list[str] | None = None
) -> list[str]:
    step1 = dedup_redundant(phrases)
    step2 = normalize_abbreviations(step1, mine_abbreviations(doc))
    step3 = filter_absent(step2, doc)
    if diagnostics is not None:
        diagnostics.append(
            f"postprocess: {len(phrases)} in, -{len(phrases) - len(step1)} redundant, "
            f"-{len(step1) - len(step2)} abbreviation, -{len(step2) - len(step3)} absent"
        )
    return step3
