"""Pipeline orchestration: recruit, extract, route by length, enrich, rerank, clean up."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .agents import Agents, merge_topics
from .corpus import Document, corpus_fingerprint
from .gateway import GatewayError
from .knowledge import WikiClient, build_knowledge_dict
from .postprocess import post_process

logger = logging.getLogger(__name__)

VARIANTS = ("base", "expert_role", "topic", "topic_post", "knowledge", "knowledge_post", "full")

# Cumulative ablation rows, in table order.
ABLATION_ROWS = (
    ("base", "Base"),
    ("expert_role", "Expert Role+"),
    ("topic", "Topic+"),
    ("topic_post", "Post-process+"),
    ("knowledge", "Knowledge+"),
    ("knowledge_post", "Post-process+"),
)


@dataclass
class PipelineConfig:
    length_threshold_tokens: int = 512
    variant: str = "full"
    k_values: list[int] = field(default_factory=lambda: [5, 10, 15])
    worker_limit: int = 1
    cassette_mode: str = "passthrough"
    template_set: str = "v1"

    def __post_init__(self):
        if self.length_threshold_tokens <= 0:
            raise ValueError("length threshold must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        self.k_values = [int(k) for k in self.k_values]
        if not self.k_values or self.k_values != sorted(set(self.k_values)) or self.k_values[0] < 1:
            raise ValueError("k_values must be a non-empty ascending list of positive integers")
        if self.worker_limit < 1:
            raise ValueError("worker_limit must be >= 1")

    @classmethod
    def from_mapping(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class ExtractionResult:
    doc_id: str
    route_taken: str
    role: dict | None = None
    candidates: list[str] = field(default_factory=list)
    topics: list[str] | None = None
    knowledge_keys: list[str] | None = None
    preliminary: list[str] = field(default_factory=list)
    final: list[str] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ExtractionResult":
        return cls(**{f.name: data.get(f.name) for f in fields(cls) if f.name in data})


def route(doc: Document, length_threshold: int) -> str:
    return "long" if doc.token_count >= length_threshold else "short"


class Pipeline:
    def __init__(self, agents: Agents, wiki: WikiClient | None = None):
        self.agents = agents
        self.wiki = wiki

    def run_document(self, doc: Document, config: PipelineConfig) -> ExtractionResult:
        diag: list[str] = []
        try:
            return self._run(doc, config, diag)
        except GatewayError as exc:
            diag.append(f"error: {exc}")
            logger.error("document %s failed: %s", doc.id, exc)
            return ExtractionResult(doc.id, "n/a", diagnostics=diag)

    def _run(self, doc: Document, config: PipelineConfig, diag: list[str]) -> ExtractionResult:
        variant = config.variant
        max_k = config.k_values[-1]
        if variant == "base":
            pool = self.agents.extract_candidates(doc, diagnostics=diag)
            cands = list(pool.candidates)
            return ExtractionResult(doc.id, "n/a", candidates=cands, preliminary=cands, final=cands[:max_k], diagnostics=diag)

        role = self.agents.recruit_expert(doc, diag)
        if variant == "expert_role":
            pool = self.agents.extract_candidates(doc, role=role, diagnostics=diag)
            cands = list(pool.candidates)
            return ExtractionResult(
                doc.id, "n/a", role=asdict(role), candidates=cands, preliminary=cands,
                final=cands[:max_k], diagnostics=diag,
            )

        pool = self.agents.extract_candidates(doc, diagnostics=diag)
        if variant == "full":
            path = route(doc, config.length_threshold_tokens)
        else:
            path = "long" if variant.startswith("topic") else "short"

        result = ExtractionResult(doc.id, path, role=asdict(role), candidates=list(pool.candidates), diagnostics=diag)
        if path == "long":
            topics = self.agents.identify_topics(doc, role, diag)
            enriched = merge_topics(pool, topics)
            result.topics = list(topics.topics)
            preliminary = self.agents.rerank(doc, role, enriched, topics, diag)
        else:
            if self.wiki is None:
                raise RuntimeError("knowledge path needs a WikiClient")
            kdict = build_knowledge_dict(pool, self.wiki, diag)
            result.knowledge_keys = kdict.keys()
            preliminary = self.agents.rerank(doc, role, pool, kdict, diag)
        result.preliminary = preliminary
        if variant in ("topic", "knowledge"):
            result.final = list(preliminary)
        else:
            result.final = post_process(preliminary, doc, diag)
        return result

    def run_corpus(self, docs: Sequence[Document], config: PipelineConfig) -> list[ExtractionResult]:
        if config.worker_limit == 1 or len(docs) <= 1:
            return [self.run_document(d, config) for d in docs]
        with ThreadPoolExecutor(max_workers=config.worker_limit) as pool:
            return list(pool.map(lambda d: self.run_document(d, config), docs))


def build_manifest(
    config: PipelineConfig,
    docs: Sequence[Document],
    results: Sequence[ExtractionResult],
    agents: Agents,
    started: float,
    finished: float,
    cassette_path: str | None = None,
    extra: dict | None = None,
) -> dict:
    cassette = agents.gateway.cassette
    routes: dict[str, int] = {}
    for r in results:
        routes[r.route_taken] = routes.get(r.route_taken, 0) + 1
    manifest = {
        "tool": "mapex",
        "version": __version__,
        "config": asdict(config),
        "template_set": agents.templates.name,
        "template_version": agents.templates.version,
        "model": agents.gateway.config.model,
        "cassette": {
            "path": cassette_path,
            "mode": cassette.mode,
            "entries": len(cassette),
            "distinct_hits": len(cassette.hits),
            "total_hits": sum(cassette.hits.values()),
        },
        "gateway_calls": agents.gateway.calls,
        "corpus": {"documents": len(docs), "fingerprint": corpus_fingerprint(docs)},
        "routes": routes,
        "failures": sum(1 for r in results if r.route_taken == "n/a" and any(d.startswith("error:") for d in r.diagnostics)),
        "started_at": datetime.fromtimestamp(started, timezone.utc).isoformat(timespec="seconds"),
        "finished_at": datetime.fromtimestamp(finished, timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    return manifest


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def write_results(results: Sequence[ExtractionResult], path: str | os.PathLike) -> None:
    lines = [json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) for r in results]
    _atomic_write(Path(path), "".join(line + "\n" for line in lines))


def read_results(path: str | os.PathLike) -> list[ExtractionResult]:
    with open(path, encoding="utf-8") as fh:
        return [ExtractionResult.from_json(json.loads(line)) for line in fh if line.strip()]


def write_manifest(manifest: dict, path: str | os.PathLike) -> None:
    _atomic_write(Path(path), json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def manifest_path_for(results_path: str | os.PathLike) -> Path:
    p = Path(results_path)
    return p.with_name(p.stem + ".manifest.json")


def run_and_write(
    pipeline: Pipeline,
    docs: Sequence[Document],
    config: PipelineConfig,
    out_path: str | os.PathLike,
    cassette_path: str | None = None,
    extra: dict | None = None,
) -> tuple[list[ExtractionResult], dict]:
    started = time.time()
    results = pipeline.run_corpus(docs, config)
    write_results(results, out_path)
    manifest = build_manifest(config, docs, results, pipeline.agents, started, time.time(), cassette_path, extra)
    write_manifest(manifest, manifest_path_for(out_path))
    return results, manifest
