import json
import random
import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES
from mapex.corpus import (
    REFERENCE_STATS,
    CorpusError,
    DatasetStats,
    Document,
    RecordError,
    TokenizerConfig,
    check_against_reference,
    compute_stats,
    count_tokens,
    ingest,
    load_dataset,
    truncate_to_tokens,
    write_jsonl,
)

VOCAB = TokenizerConfig("vocab", str(FIXTURES / "vocab" / "tokenizer.json"))


def write_lines(path, rows):
    path.write_text("".join((r if isinstance(r, str) else json.dumps(r)) + "\n" for r in rows), "utf-8")
    return path


def test_one_line_fixture(tmp_path):
    p = write_lines(tmp_path / "one.jsonl", [{"id": "a", "document": "x y", "keyphrases": ["x"]}])
    docs = load_dataset(p)
    assert len(docs) == 1
    assert docs[0].gold == ("x",) and docs[0].token_count == 2


def test_missing_field_reports_line(tmp_path):
    p = write_lines(tmp_path / "bad.jsonl", [
        {"id": "a", "document": "x", "keyphrases": []},
        {"id": "b", "document": "y"},
    ])
    with pytest.raises(RecordError) as err:
        load_dataset(p)
    assert err.value.line == 2
    assert "keyphrases" in str(err.value)


def test_skip_mode_keeps_good_records(tmp_path):
    p = write_lines(tmp_path / "mixed.jsonl", [
        {"id": "a", "document": "x", "keyphrases": []},
        "{not json",
        {"id": "a", "document": "dup", "keyphrases": []},
    ])
    assert [d.id for d in load_dataset(p, on_error="skip")] == ["a"]


def test_fatal_errors(tmp_path):
    with pytest.raises(CorpusError):
        load_dataset(tmp_path / "missing.jsonl")
    empty = write_lines(tmp_path / "empty.jsonl", [])
    with pytest.raises(CorpusError):
        load_dataset(empty)
    with pytest.raises(CorpusError):
        load_dataset(tmp_path, format="raw-dir")
    with pytest.raises(CorpusError):
        load_dataset(empty, format="xml")


def test_order_is_on_disk_order():
    docs = load_dataset(FIXTURES / "corpus10.jsonl")
    assert [d.id for d in docs] == ["s1", "s2", "s3", "s4", "s5", "s6", "l1", "l2", "l3", "l4"]


def test_round_trip(tmp_path):
    docs = load_dataset(FIXTURES / "corpus10.jsonl")
    out = tmp_path / "rt.jsonl"
    write_jsonl(docs, out)
    again = load_dataset(out, dataset="corpus10")
    assert [d.to_record() for d in again] == [d.to_record() for d in docs]
    assert again == docs


def test_raw_dir_layouts(tmp_path):
    (tmp_path / "flat").mkdir()
    (tmp_path / "flat" / "d1.txt").write_text("alpha beta gamma", "utf-8")
    (tmp_path / "flat" / "d1.key").write_text("alpha\nbeta gamma\n", "utf-8")
    docs = load_dataset(tmp_path / "flat", "raw-dir")
    assert docs[0].gold == ("alpha", "beta gamma")
    inspec = load_dataset(FIXTURES / "benchmarks" / "inspec", "raw-dir")
    assert all(";" not in g for d in inspec for g in d.gold)


def test_raw_dir_missing_key(tmp_path):
    (tmp_path / "d1.txt").write_text("x", "utf-8")
    with pytest.raises(RecordError):
        load_dataset(tmp_path, "raw-dir")


# ---------------------------------------------------------------- stats

def test_stats_examples():
    assert compute_stats([]) == DatasetStats(0, 0.0, 0)
    docs = [Document("a", "", ("p", "q"), "t", 10), Document("b", "", ("p", "q", "r"), "t", 20)]
    # hand count: 2 docs, 2 + 3 gold, (10 + 20) / 2 tokens
    s = compute_stats(docs)
    assert (s.doc_count, s.gold_count, s.avg_tokens) == (2, 5, 15.0)


@given(st.lists(st.tuples(st.integers(0, 5000), st.integers(0, 20)), max_size=30), st.randoms())
def test_stats_permutation_invariant(rows, rnd):
    docs = [Document(str(i), "", ("g",) * g, "t", n) for i, (n, g) in enumerate(rows)]
    shuffled = docs[:]
    rnd.shuffle(shuffled)
    a, b = compute_stats(docs), compute_stats(shuffled)
    assert (a.doc_count, a.gold_count) == (b.doc_count, b.gold_count)
    assert a.avg_tokens == pytest.approx(b.avg_tokens, rel=1e-12)


def test_reference_stats_are_the_published_table():
    table = {k: (v.doc_count, v.gold_count, v.avg_tokens) for k, v in REFERENCE_STATS.items()}
    assert table == {
        "inspec": (500, 4912, 166),
        "semeval2017": (493, 8387, 229),
        "semeval2010": (100, 1506, 253),
        "duc2001": (307, 2479, 1063),
        "nus": (211, 2453, 10685),
        "krapivin": (460, 2641, 11423),
    }


def test_reference_check_tolerance():
    ref = REFERENCE_STATS["inspec"]
    assert all(check_against_reference(DatasetStats(500, 174.2, 4912), ref).values())
    assert not check_against_reference(DatasetStats(500, 174.4, 4912), ref)["avg_tokens"]
    assert not check_against_reference(DatasetStats(499, 166, 4912), ref)["doc_count"]


# ---------------------------------------------------------------- tokens

def test_count_tokens_whitespace():
    assert count_tokens("") == 0
    assert count_tokens("one two three") == 3
    assert count_tokens("  one\ttwo\n three  ") == 3


def _reference_count(text: str) -> int:
    # the WordLevel fixture pre-tokenizes on \w+|[^\w\s]+; every piece is one id
    return len(re.findall(r"\w+|[^\w\s]+", text))


def test_count_tokens_vocab_matches_scripted_tokenization():
    for doc in load_dataset(FIXTURES / "corpus10.jsonl"):
        assert count_tokens(doc.body, VOCAB) == _reference_count(doc.body)


def test_count_tokens_deterministic():
    text = "Grid computing, job scheduling; the grid."
    assert count_tokens(text, VOCAB) == count_tokens(text, VOCAB) == _reference_count(text)


def test_missing_vocab_is_fatal(tmp_path):
    with pytest.raises(CorpusError):
        count_tokens("x", TokenizerConfig("vocab", str(tmp_path / "nope.json")))


@pytest.mark.parametrize("tok", [TokenizerConfig(), VOCAB])
def test_truncate_to_tokens(tok):
    text = load_dataset(FIXTURES / "corpus10.jsonl")[6].body
    for limit in (1, 7, 50, 10_000):
        cut = truncate_to_tokens(text, limit, tok)
        assert count_tokens(cut, tok) == min(limit, count_tokens(text, tok))
    assert truncate_to_tokens(text, 0, tok) == ""


# ---------------------------------------------------------------- ingest

def test_ingest_jsonl_aliases(tmp_path):
    src = write_lines(tmp_path / "src.jsonl", [
        {"doc_id": "7", "abstract": ["tok", "enized"], "keywords": "a;b"},
        {"id": "8", "text": "plain text", "gold": ["c"]},
    ])
    docs, stats = ingest(src, "inspec", tmp_path / "out.jsonl")
    assert [d.id for d in docs] == ["7", "8"]
    assert docs[0].body == "tok enized" and docs[0].gold == ("a", "b")
    assert (stats.doc_count, stats.gold_count) == (2, 3)
    assert load_dataset(tmp_path / "out.jsonl") == [
        Document(d.id, d.body, d.gold, "out", d.token_count) for d in docs
    ]


def test_ingest_unknown_dataset(tmp_path):
    with pytest.raises(CorpusError):
        ingest(tmp_path, "pubmed", tmp_path / "o.jsonl")


def test_ingest_empty_dir(tmp_path):
    (tmp_path / "src").mkdir()
    with pytest.raises(CorpusError):
        ingest(tmp_path / "src", "nus", tmp_path / "o.jsonl")


@pytest.mark.parametrize("name", sorted(REFERENCE_STATS))
def test_fixture_benchmarks_match_planted_counts(tmp_path, name):
    expected = json.loads((FIXTURES / "benchmarks" / "expected.json").read_text())[name]
    _, stats = ingest(FIXTURES / "benchmarks" / name, name, tmp_path / f"{name}.jsonl")
    assert stats.doc_count == expected["doc_count"]
    assert stats.gold_count == expected["gold_count"]
    assert stats.avg_tokens == pytest.approx(expected["avg_tokens"], rel=1e-12)
    # the fixtures follow the published mean length per document
    assert check_against_reference(stats, REFERENCE_STATS[name])["avg_tokens"]


def test_corpus_is_hashable_and_immutable():
    d = load_dataset(FIXTURES / "corpus10.jsonl")[0]
    with pytest.raises(Exception):
        d.body = "changed"  # type: ignore[misc]
    assert isinstance(hash(d), int)
    assert random.Random(0).choice([d]) is d
