import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES
from mapex.agents import Agents, load_templates
from mapex.corpus import Document, load_dataset
from mapex.gateway import Cassette, Gateway, GatewayConfig
from mapex.knowledge import WikiClient
from mapex.pipeline import (
    ExtractionResult,
    Pipeline,
    PipelineConfig,
    manifest_path_for,
    read_results,
    route,
    run_and_write,
    write_results,
)
from mapex.postprocess import post_process
from stubs import ChatStub, WikiStub

CORPUS10 = load_dataset(FIXTURES / "corpus10.jsonl")


def replay_pipeline():
    gw = Gateway(GatewayConfig(model="stub-greedy-7b"), Cassette(FIXTURES / "cassette.json", "replay"))
    wiki = WikiClient(cache_path=FIXTURES / "wiki_cache.json", offline=True)
    return Pipeline(Agents(gw, load_templates("v1")), wiki)


def live_stub_pipeline(chat=None, wiki=None):
    chat, wiki = chat or ChatStub(), wiki or WikiStub()
    gw = Gateway(GatewayConfig(base_url="http://stub/v1", model="m"), transport=chat.transport())
    client = WikiClient("http://w/api", rate_limit=0, transport=wiki.transport())
    return Pipeline(Agents(gw), client), chat, wiki


def d(n, i="x"):
    return Document(i, "", (), "t", n)


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("kw", [
    {"length_threshold_tokens": 0}, {"variant": "bogus"}, {"k_values": []},
    {"k_values": [10, 5]}, {"k_values": [0, 5]}, {"worker_limit": 0},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PipelineConfig(**kw)


def test_config_from_mapping_ignores_unknown():
    cfg = PipelineConfig.from_mapping({"variant": "base", "wiki_cache": "x"})
    assert cfg.variant == "base" and cfg.length_threshold_tokens == 512


# ---------------------------------------------------------------- routing

def test_route_examples():
    assert route(d(166), 512) == "short"
    assert route(d(10_685), 512) == "long"
    assert route(d(512), 512) == "long"
    assert route(d(511), 512) == "short"


@given(st.integers(0, 100_000), st.integers(1, 20_000))
def test_route_rule(n, ell):
    assert (route(d(n), ell) == "long") == (n >= ell)


def test_mixed_fixture_partition():
    docs = load_dataset(FIXTURES / "mixed_routing.jsonl")
    assert [x.token_count for x in docs] == [int(x.id[3:]) for x in docs]
    short = {x.id for x in docs if route(x, 512) == "short"}
    long_ = {x.id for x in docs if route(x, 512) == "long"}
    assert short == {"len1", "len100", "len166", "len511"}
    assert long_ == {"len512", "len513", "len1063", "len10685"}


# ---------------------------------------------------------------- variants

def test_base_variant_single_call_and_truncation():
    pipe, chat, wiki = live_stub_pipeline()
    res = pipe.run_document(CORPUS10[0], PipelineConfig(variant="base", k_values=[5]))
    assert len(chat.requests) == 1 and wiki.paths == []
    assert res.role is None and res.topics is None and res.knowledge_keys is None
    assert res.final == res.candidates[:5]


def test_expert_role_variant_two_calls():
    pipe, chat, _ = live_stub_pipeline()
    res = pipe.run_document(CORPUS10[0], PipelineConfig(variant="expert_role"))
    assert len(chat.requests) == 2 and res.role["title"]
    assert "You are a" in chat.requests[1]["messages"][0]["content"]


def test_full_short_path_calls_and_lookups():
    pipe, chat, wiki = live_stub_pipeline()
    res = pipe.run_document(CORPUS10[0], PipelineConfig(variant="full"))
    assert len(chat.requests) == 3
    assert res.route_taken == "short" and res.topics is None
    assert res.knowledge_keys == res.candidates
    assert len(wiki.paths) == len({c.lower() for c in res.candidates})
    assert res.final == post_process(res.preliminary, CORPUS10[0])


def test_full_long_path_calls():
    pipe, chat, wiki = live_stub_pipeline()
    res = pipe.run_document(CORPUS10[6], PipelineConfig(variant="full"))
    assert len(chat.requests) == 4 and wiki.paths == []
    assert res.route_taken == "long" and res.topics and res.knowledge_keys is None


@pytest.mark.parametrize("variant,path,post", [
    ("topic", "long", False), ("topic_post", "long", True),
    ("knowledge", "short", False), ("knowledge_post", "short", True),
])
def test_branch_variants_force_their_path(variant, path, post):
    pipe, _, _ = live_stub_pipeline()
    for doc in (CORPUS10[0], CORPUS10[6]):
        res = pipe.run_document(doc, PipelineConfig(variant=variant))
        assert res.route_taken == path
        assert res.final == (post_process(res.preliminary, doc) if post else res.preliminary)


def test_gateway_failure_is_isolated():
    pipe, chat, _ = live_stub_pipeline(chat=ChatStub(fail_first=3, status=500))
    pipe.agents.gateway._sleep = lambda s: None
    results = pipe.run_corpus(CORPUS10[:2], PipelineConfig(variant="base"))
    assert results[0].route_taken == "n/a" and results[0].final == []
    assert results[0].diagnostics[-1].startswith("error:")
    assert results[1].final


# ---------------------------------------------------------------- corpus runs

def test_worker_limits_give_identical_results():
    docs = load_dataset(FIXTURES / "corpus3.jsonl")
    one = replay_pipeline().run_corpus(docs, PipelineConfig(worker_limit=1))
    three = replay_pipeline().run_corpus(docs, PipelineConfig(worker_limit=3))
    assert [r.to_json() for r in one] == [r.to_json() for r in three]
    assert [r.doc_id for r in three] == [x.id for x in docs]


def test_routing_partition_over_fixture():
    results = replay_pipeline().run_corpus(CORPUS10, PipelineConfig(worker_limit=4))
    by_id = {x.id: x for x in CORPUS10}
    short = {r.doc_id for r in results if r.route_taken == "short"}
    long_ = {r.doc_id for r in results if r.route_taken == "long"}
    assert short | long_ == set(by_id) and not short & long_
    assert all(by_id[i].token_count < 512 for i in short)
    assert all(by_id[i].token_count >= 512 for i in long_)


def test_empty_corpus_manifest(tmp_path):
    out = tmp_path / "r.jsonl"
    results, manifest = run_and_write(replay_pipeline(), [], PipelineConfig(), out)
    assert results == [] and out.read_text() == ""
    saved = json.loads(manifest_path_for(out).read_text())
    assert saved["corpus"]["documents"] == 0 and saved["config"]["length_threshold_tokens"] == 512
    assert saved["template_set"] == "v1" and saved["cassette"]["mode"] == "replay"


def test_manifest_counts_cassette_hits(tmp_path):
    out = tmp_path / "r.jsonl"
    _, manifest = run_and_write(replay_pipeline(), CORPUS10, PipelineConfig(variant="base"), out)
    assert manifest["gateway_calls"] == 10 == manifest["cassette"]["total_hits"]
    assert manifest["routes"] == {"n/a": 10} and manifest["failures"] == 0


def test_results_round_trip(tmp_path):
    results = replay_pipeline().run_corpus(CORPUS10[:3], PipelineConfig())
    write_results(results, tmp_path / "r.jsonl")
    assert read_results(tmp_path / "r.jsonl") == results
    assert ExtractionResult.from_json(results[0].to_json()) == results[0]


@pytest.mark.parametrize("variant", ["base", "expert_role", "topic", "topic_post", "knowledge", "knowledge_post", "full"])
def test_replay_matches_golden(tmp_path, variant):
    out = tmp_path / "r.jsonl"
    run_and_write(replay_pipeline(), CORPUS10, PipelineConfig(variant=variant), out)
    assert out.read_bytes() == (FIXTURES / "golden" / f"corpus10.{variant}.jsonl").read_bytes()


def test_golden_short_doc_shape():
    golden = {r.doc_id: r for r in read_results(FIXTURES / "golden" / "corpus10.full.jsonl")}
    s1, l1 = golden["s1"], golden["l1"]
    assert s1.route_taken == "short" and s1.knowledge_keys and s1.final and s1.topics is None
    assert l1.route_taken == "long" and l1.topics and l1.knowledge_keys is None
    assert "quantum annealing hardware" not in s1.final
