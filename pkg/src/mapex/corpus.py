"""Benchmark corpus loading, token counting and dataset statistics."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)


class CorpusError(Exception):
    """Fatal problem with a dataset or tokenizer configuration."""


class RecordError(CorpusError):
    """A single record is malformed. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class ReferenceStats:
    name: str
    domain: str
    doc_count: int
    avg_tokens: float
    gold_count: int


# Published benchmark statistics used to sanity-check ingested data.
REFERENCE_STATS: dict[str, ReferenceStats] = {
    "inspec": ReferenceStats("Inspec", "Scientific", 500, 166, 4912),
    "semeval2017": ReferenceStats("SemEval2017", "Scientific", 493, 229, 8387),
    "semeval2010": ReferenceStats("SemEval2010", "Scientific", 100, 253, 1506),
    "duc2001": ReferenceStats("DUC2001", "News", 307, 1063, 2479),
    "nus": ReferenceStats("NUS", "Scientific", 211, 10685, 2453),
    "krapivin": ReferenceStats("Krapivin", "Scientific", 460, 11423, 2641),
}


# ---------------------------------------------------------------- tokenizer

@dataclass(frozen=True)
class TokenizerConfig:
    """Either ``whitespace`` or a path to a Hugging Face ``tokenizer.json``."""

    kind: str = "whitespace"
    path: str | None = None

    @classmethod
    def from_value(cls, value: str | None) -> "TokenizerConfig":
        if not value or value == "whitespace":
            return cls()
        return cls(kind="vocab", path=value)

    def describe(self) -> str:
        return "whitespace" if self.kind == "whitespace" else f"vocab:{self.path}"


_TOKENIZERS: dict[str, object] = {}


def _load_vocab(path: str):
    tok = _TOKENIZERS.get(path)
    if tok is None:
        if not os.path.isfile(path):
            raise CorpusError(f"tokenizer vocabulary file not found: {path}")
        from tokenizers import Tokenizer

        try:
            tok = Tokenizer.from_file(path)
        except Exception as exc:
            raise CorpusError(f"cannot load tokenizer {path}: {exc}") from exc
        _TOKENIZERS[path] = tok
    return tok


def count_tokens(text: str, tokenizer: TokenizerConfig | None = None) -> int:
    tokenizer = tokenizer or TokenizerConfig()
    if not text:
        return 0
    if tokenizer.kind == "whitespace":
        return len(text.split())
    if tokenizer.kind != "vocab" or not tokenizer.path:
        raise CorpusError(f"unknown tokenizer config: {tokenizer!r}")
    enc = _load_vocab(tokenizer.path).encode(text, add_special_tokens=False)
    return len(enc.ids)


def truncate_to_tokens(text: str, limit: int, tokenizer: TokenizerConfig | None = None) -> str:
    """Return the longest prefix of ``text`` holding at most ``limit`` tokens."""
    tokenizer = tokenizer or TokenizerConfig()
    if limit <= 0:
        return ""
    if tokenizer.kind == "whitespace":
        words = text.split()
        if len(words) <= limit:
            return text
        return " ".join(words[:limit])
    enc = _load_vocab(tokenizer.path).encode(text, add_special_tokens=False)
    if len(enc.ids) <= limit:
        return text
    end = enc.offsets[limit - 1][1]
    return text[:end]


# ---------------------------------------------------------------- documents

@dataclass(frozen=True)
class Document:
    id: str
    body: str
    gold: tuple[str, ...]
    dataset: str
    token_count: int

    def to_record(self) -> dict:
        return {"id": self.id, "document": self.body, "keyphrases": list(self.gold)}


@dataclass(frozen=True)
class DatasetStats:
    doc_count: int
    avg_tokens: float
    gold_count: int

    def as_dict(self) -> dict:
        return asdict(self)


def make_document(
    doc_id: str,
    body: str,
    gold: Iterable[str],
    dataset: str,
    tokenizer: TokenizerConfig | None = None,
    line: int | None = None,
) -> Document:
    if not isinstance(doc_id, str) or not doc_id:
        raise RecordError("id must be a non-empty string", line)
    if not isinstance(body, str) or not body.strip():
        raise RecordError(f"document {doc_id!r} has an empty body", line)
    if isinstance(gold, str):
        raise RecordError(f"document {doc_id!r}: keyphrases must be a list", line)
    phrases = []
    for g in gold:
        if not isinstance(g, str):
            raise RecordError(f"document {doc_id!r}: non-string keyphrase {g!r}", line)
        g = g.strip()
        if g:
            phrases.append(g)
    body = body.strip()
    return Document(doc_id, body, tuple(phrases), dataset, count_tokens(body, tokenizer))


_REQUIRED = ("id", "document", "keyphrases")


def _load_jsonl(path: Path, dataset: str, tokenizer, on_error: str) -> list[Document]:
    docs: list[Document] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise RecordError(f"invalid JSON ({exc.msg})", lineno) from None
                if not isinstance(rec, dict):
                    raise RecordError("record is not a JSON object", lineno)
                missing = [f for f in _REQUIRED if f not in rec]
                if missing:
                    raise RecordError(f"missing field(s): {', '.join(missing)}", lineno)
                doc = make_document(
                    str(rec["id"]), rec["document"], rec["keyphrases"], dataset, tokenizer, lineno
                )
                if doc.id in seen:
                    raise RecordError(f"duplicate id {doc.id!r}", lineno)
            except RecordError as exc:
                if on_error == "raise":
                    raise
                logger.warning("%s: skipping record: %s", path, exc)
                continue
            seen.add(doc.id)
            docs.append(doc)
    return docs


def _read_keys(path: Path) -> list[str]:
    text = path.read_text(encoding="utf-8", errors="replace")
    if path.suffix in (".uncontr", ".contr"):
        return [p for p in (s.strip() for s in text.replace("\n", " ").split(";")) if p]
    return [line.strip() for line in text.splitlines() if line.strip()]


_KEY_SUFFIXES = (".key", ".uncontr", ".contr")


def _raw_pairs(root: Path) -> list[tuple[str, Path, Path]]:
    if (root / "docsutf8").is_dir():
        doc_dir, key_dir = root / "docsutf8", root / "keys"
    else:
        doc_dir = key_dir = root
    pairs = []
    for txt in sorted(doc_dir.glob("*.txt")):
        key = None
        for suffix in _KEY_SUFFIXES:
            cand = key_dir / (txt.stem + suffix)
            if cand.is_file():
                key = cand
                break
        if key is None:
            raise RecordError(f"no gold file for {txt.name} in {key_dir}")
        pairs.append((txt.stem, txt, key))
    return pairs


def _load_raw_dir(root: Path, dataset: str, tokenizer, on_error: str) -> list[Document]:
    docs = []
    for doc_id, txt, key in _raw_pairs(root):
        try:
            body = txt.read_text(encoding="utf-8", errors="replace")
            docs.append(make_document(doc_id, body, _read_keys(key), dataset, tokenizer))
        except RecordError as exc:
            if on_error == "raise":
                raise RecordError(f"{txt.name}: {exc}") from None
            logger.warning("skipping %s: %s", txt, exc)
    return docs


def load_dataset(
    path: str | os.PathLike,
    format: str = "jsonl",
    tokenizer: TokenizerConfig | None = None,
    dataset: str | None = None,
    on_error: str = "raise",
) -> list[Document]:
    """Load a corpus as a list of Documents in on-disk order.

    ``format`` is ``jsonl`` (one ``{"id", "document", "keyphrases"}`` object
    per line) or ``raw-dir`` (``docsutf8/*.txt`` + ``keys/*.key``, or the
    same pairs side by side in one directory). Raw directories are read in
    sorted filename order.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"dataset path does not exist: {path}")
    dataset = dataset or (path.stem if path.is_file() else path.name)
    try:
        if format == "jsonl":
            if not path.is_file():
                raise CorpusError(f"jsonl dataset must be a file: {path}")
            docs = _load_jsonl(path, dataset, tokenizer, on_error)
        elif format == "raw-dir":
            if not path.is_dir():
                raise CorpusError(f"raw-dir dataset must be a directory: {path}")
            docs = _load_raw_dir(path, dataset, tokenizer, on_error)
        else:
            raise CorpusError(f"unknown dataset format: {format!r}")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    if not docs:
        raise CorpusError(f"no documents found in {path}")
    return docs


def write_jsonl(docs: Iterable[Document], path: str | os.PathLike) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")
    tmp.replace(path)


def compute_stats(docs: Iterable[Document]) -> DatasetStats:
    docs = list(docs)
    if not docs:
        return DatasetStats(0, 0.0, 0)
    total = sum(d.token_count for d in docs)
    return DatasetStats(len(docs), total / len(docs), sum(len(d.gold) for d in docs))


def check_against_reference(
    stats: DatasetStats, reference: ReferenceStats, avg_tolerance: float = 0.05
) -> dict[str, bool]:
    """Compare stats with published numbers: counts exactly, AvgTok within a relative tolerance."""
    return {
        "doc_count": stats.doc_count == reference.doc_count,
        "gold_count": stats.gold_count == reference.gold_count,
        "avg_tokens": abs(stats.avg_tokens - reference.avg_tokens)
        <= avg_tolerance * reference.avg_tokens,
    }


def corpus_fingerprint(docs: Iterable[Document]) -> str:
    h = hashlib.sha256()
    for d in docs:
        h.update(json.dumps(d.to_record(), sort_keys=True, ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()[:16]


# ---------------------------------------------------------------- ingest

_BODY_ALIASES = ("document", "abstract", "text", "doc", "body")
_GOLD_ALIASES = ("keyphrases", "keywords", "keys", "gold", "extractive_keyphrases")


def _coerce_record(rec: dict, index: int) -> dict:
    body = next((rec[k] for k in _BODY_ALIASES if k in rec), None)
    gold = next((rec[k] for k in _GOLD_ALIASES if k in rec), None)
    if isinstance(body, list):  # pre-tokenized sources
        body = " ".join(body)
    if isinstance(gold, str):
        gold = [g for g in gold.replace(";", "\n").splitlines()]
    if body is None or gold is None:
        raise RecordError("cannot locate document/keyphrase fields", index)
    return {"id": str(rec.get("id", rec.get("doc_id", index))), "document": body, "keyphrases": gold}


def ingest(
    source: str | os.PathLike,
    dataset_name: str,
    out_path: str | os.PathLike,
    tokenizer: TokenizerConfig | None = None,
) -> tuple[list[Document], DatasetStats]:
    """Convert a benchmark's native layout to the canonical jsonl form."""
    key = dataset_name.lower().replace("-", "").replace("_", "")
    if key not in REFERENCE_STATS:
        raise CorpusError(
            f"unknown dataset {dataset_name!r}; expected one of {', '.join(REFERENCE_STATS)}"
        )
    source = Path(source)
    if not source.exists():
        raise CorpusError(f"source does not exist: {source}")
    if source.is_dir():
        docs = load_dataset(source, "raw-dir", tokenizer, dataset=key)
    else:
        docs = []
        seen = set()
        with source.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = _coerce_record(json.loads(line), lineno)
                except json.JSONDecodeError as exc:
                    raise RecordError(f"invalid JSON ({exc.msg})", lineno) from None
                doc = make_document(
                    rec["id"], rec["document"], rec["keyphrases"], key, tokenizer, lineno
                )
                if doc.id in seen:
                    raise RecordError(f"duplicate id {doc.id!r}", lineno)
                seen.add(doc.id)
                docs.append(doc)
        if not docs:
            raise CorpusError(f"no documents found in {source}")
    write_jsonl(docs, out_path)
    return docs, compute_stats(docs)
