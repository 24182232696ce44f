"""Random (phrase-list, document) cases and brute-force oracles for post-processing."""

from __future__ import annotations

import random
import string

from mapex.text import normalize_phrase, stem_key

LOWER = ["grid", "model", "network", "ranking", "scheduler", "data", "graph", "policy", "kernel",
         "signal", "feature", "query", "index", "storage", "cluster", "layer", "vector", "token"]
STOPS = ["the", "of", "and", "for", "with", "on", "in", "is", "we", "a"]
NOISE_PARENS = ["(see Table 2)", "(per se)", "(2019)", "(e.g. this)", "(i)", "(cf. above)", "(Fig. 3)"]


def _title_word(rng: random.Random) -> str:
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(3, 8))).capitalize()


def planted_pair(rng: random.Random) -> tuple[str, str]:
    """A random expansion of 2-4 capitalized words and its initialism."""
    words = [_title_word(rng) for _ in range(rng.randint(2, 4))]
    abbr = "".join(w[0] for w in words).upper()
    if rng.random() < 0.3:
        words[-1] += "s"
        abbr += "s"
    return abbr, " ".join(words)


def synthetic_abbreviation_doc(rng: random.Random, n_pairs: int) -> tuple[str, dict[str, str]]:
    planted: dict[str, str] = {}
    parts = []
    while len(planted) < n_pairs:
        abbr, exp = planted_pair(rng)
        if abbr in planted:
            continue
        planted[abbr] = exp
        filler = " ".join(rng.choice(LOWER + STOPS) for _ in range(rng.randint(3, 9)))
        form = f"{exp} ({abbr})" if rng.random() < 0.7 else f"{abbr} ({exp})"
        parts.append(f"{filler} {form} {rng.choice(LOWER)}.")
        if rng.random() < 0.5:
            parts.append(f"{rng.choice(LOWER)} {rng.choice(NOISE_PARENS)} {rng.choice(LOWER)}.")
    return " ".join(parts), planted


def random_case(rng: random.Random) -> tuple[list[str], str]:
    """A document with planted abbreviations and a noisy phrase list drawn partly from it."""
    doc_words = [rng.choice(LOWER + STOPS) for _ in range(rng.randint(20, 80))]
    pairs = [planted_pair(rng) for _ in range(rng.randint(0, 3))]
    for abbr, exp in pairs:
        pos = rng.randint(0, len(doc_words))
        doc_words[pos:pos] = (f"{exp} ({abbr})" if rng.random() < 0.7 else f"{abbr} ({exp})").split()
    doc = " ".join(doc_words)
    if rng.random() < 0.3:
        doc = doc.replace(" ", "\n", rng.randint(1, 4))
    words = doc.split()
    phrases = []
    for _ in range(rng.randint(0, 25)):
        roll = rng.random()
        if roll < 0.45:
            i = rng.randrange(len(words))
            span = " ".join(w.strip("()") for w in words[i : i + rng.randint(1, 3)])
            phrases.append(span)
        elif roll < 0.6 and pairs:
            abbr, exp = rng.choice(pairs)
            phrases.append(rng.choice([abbr, exp, exp.lower(), exp.upper()]))
        elif roll < 0.75 and phrases:
            p = rng.choice(phrases)
            phrases.append(rng.choice([p.upper(), p + "s", p.title(), "  " + p + " "]))
        else:
            phrases.append(" ".join(rng.choice(LOWER) for _ in range(rng.randint(1, 3))) + rng.choice(["", "ing", "x"]))
    return phrases, doc


def brute_force_occurs(phrase: str, doc: str) -> bool:
    """Scan every offset of the normalized document for a word-bounded match."""
    needle, hay = normalize_phrase(phrase), normalize_phrase(doc)
    if not needle:
        return False
    for i in range(len(hay) - len(needle) + 1):
        if hay[i : i + len(needle)] != needle:
            continue
        left_ok = i == 0 or not (hay[i - 1].isalnum() or hay[i - 1] == "_")
        j = i + len(needle)
        right_ok = j == len(hay) or not (hay[j].isalnum() or hay[j] == "_")
        if left_ok and right_ok:
            return True
    return False


def is_rewrite_of(out_phrase: str, inputs: list[str], pairs: dict[str, str]) -> bool:
    """True if ``out_phrase`` is an input, or the expansion of an input abbreviation/expansion."""
    if out_phrase in inputs:
        return True
    key = stem_key(out_phrase)
    for abbr, exp in pairs.items():
        if stem_key(exp) == key and any(stem_key(p) in (stem_key(abbr), key) for p in inputs):
            return True
    return False
