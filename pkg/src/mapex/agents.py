"""The three LLM-backed agents: Expert Recruiter, Candidate Extractor, Domain Expert.

Each agent operation renders one prompt template, issues exactly one
gateway call and parses the answer.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus import Document, TokenizerConfig, count_tokens, truncate_to_tokens
from .gateway import Gateway, parse_phrase_list
from .knowledge import KnowledgeDict, render_knowledge
from .text import dedup_casefold

logger = logging.getLogger(__name__)

TEMPLATE_NAMES = ("recruit", "extract", "topics", "rerank_topic", "rerank_knowledge")
PLACEHOLDERS = frozenset({"document", "role", "candidates", "topics", "knowledge", "limit"})

FALLBACK_TITLE = "domain expert"
MAX_TOPIC_WORDS = 10


@dataclass(frozen=True)
class ExpertRole:
    title: str
    rationale: str

    def __post_init__(self):
        if not self.title.strip() or "\n" in self.title:
            raise ValueError(f"invalid expert title {self.title!r}")


@dataclass(frozen=True)
class CandidatePool:
    doc_id: str
    candidates: tuple[str, ...] = ()

    @classmethod
    def build(cls, doc_id: str, phrases) -> "CandidatePool":
        return cls(doc_id, tuple(dedup_casefold(phrases)))


@dataclass(frozen=True)
class TopicList:
    topics: tuple[str, ...] = ()


# ---------------------------------------------------------------- templates

def _fields(text: str) -> set[str]:
    return {name for _, name, _, _ in string.Formatter().parse(text) if name is not None}


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str

    @property
    def placeholders(self) -> set[str]:
        return _fields(self.system) | _fields(self.user)

    def render(self, **values) -> list[tuple[str, str]]:
        missing = self.placeholders - values.keys()
        if missing:
            raise KeyError(f"template {self.name!r} needs {sorted(missing)}")
        return [
            ("system", self.system.format(**values).strip()),
            ("user", self.user.format(**values).strip()),
        ]


@dataclass(frozen=True)
class TemplateSet:
    name: str
    templates: dict[str, PromptTemplate]
    persona: str
    version: str

    def __getitem__(self, key: str) -> PromptTemplate:
        return self.templates[key]


def load_templates(name_or_path: str = "v1") -> TemplateSet:
    """Load a template set: a bundled set name (``v1``) or a directory path.

    A set holds ``<name>.system.txt`` and ``<name>.user.txt`` for each agent
    prompt plus ``persona.txt``, the role line injected into extraction for
    the expert-role ablation.
    """
    path = Path(name_or_path)
    root = path if path.is_dir() else resources.files("mapex") / "templates" / name_or_path
    if not root.is_dir():
        raise FileNotFoundError(f"template set not found: {name_or_path}")
    digest = hashlib.sha256()
    templates = {}

    def read(fname: str) -> str:
        text = (root / fname).read_text(encoding="utf-8")
        digest.update(fname.encode() + b"\0" + text.encode("utf-8"))
        return text

    for tname in TEMPLATE_NAMES:
        tpl = PromptTemplate(tname, read(f"{tname}.system.txt"), read(f"{tname}.user.txt"))
        unknown = tpl.placeholders - PLACEHOLDERS
        if unknown:
            raise ValueError(f"template {tname!r} uses unknown placeholders {sorted(unknown)}")
        templates[tname] = tpl
    persona = read("persona.txt")
    return TemplateSet(path.name if path.is_dir() else name_or_path, templates, persona, digest.hexdigest()[:12])


# ---------------------------------------------------------------- parsing helpers

_ROLE_RE = re.compile(r"""["']?(?:role|expert)["']?\s*[:=]\s*["']?([^"'\n,}]+)""", re.I)
_REASON_RE = re.compile(r"""["']?(?:reason|rationale)["']?\s*[:=]\s*["']?([^"\n}]+)""", re.I)


def _clean_title(title: str) -> str:
    title = title.strip().splitlines()[0] if title.strip() else ""
    return title.strip(" \t\"'`*.").strip()[:80]


def parse_expert_role(raw: str, diagnostics: list[str] | None = None) -> ExpertRole:
    """JSON ``{"role", "reason"}`` first, then a key/value regex, then the default role."""
    text = raw or ""
    start, end = text.find("{"), text.rfind("}")
    if 0 <= start < end:
        try:
            obj = json.loads(text[start : end + 1])
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            title = obj.get("role") or obj.get("expert") or ""
            reason = obj.get("reason") or obj.get("rationale") or ""
            if isinstance(title, str) and _clean_title(title):
                return ExpertRole(_clean_title(title), str(reason).strip())
    m = _ROLE_RE.search(text)
    if m and _clean_title(m.group(1)):
        r = _REASON_RE.search(text)
        return ExpertRole(_clean_title(m.group(1)), r.group(1).strip().strip("\"'") if r else "")
    if diagnostics is not None:
        diagnostics.append("recruit: unparseable role, using fallback")
    return ExpertRole(FALLBACK_TITLE, "fallback")


def merge_topics(pool: CandidatePool, topics: TopicList) -> CandidatePool:
    """Append topics not already among the candidates (case-insensitive), order stable."""
    seen = {c.casefold() for c in pool.candidates}
    merged = list(pool.candidates)
    for t in topics.topics:
        if t.casefold() not in seen:
            seen.add(t.casefold())
            merged.append(t)
    return CandidatePool(pool.doc_id, tuple(merged))


def _numbered(items) -> str:
    return "\n".join(f"{i}. {p}" for i, p in enumerate(items, 1))


# ---------------------------------------------------------------- agents

@dataclass
class Agents:
    gateway: Gateway
    templates: TemplateSet = field(default_factory=load_templates)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    context_window: int = 32768
    context_reserve: int = 1024
    rerank_limit: int = 30
    knowledge_budget: int = 2048

    def _document_text(self, doc: Document) -> str:
        budget = max(1, self.context_window - self.context_reserve)
        if count_tokens(doc.body, self.tokenizer) <= budget:
            return doc.body
        return truncate_to_tokens(doc.body, budget, self.tokenizer)

    def _ask(self, template: str, system_prefix: str = "", **values) -> str:
        messages = self.templates[template].render(**values)
        if system_prefix:
            messages[0] = ("system", system_prefix + "\n" + messages[0][1])
        response = self.gateway.complete(self.gateway.request(messages))
        return response.content

    def recruit_expert(self, doc: Document, diagnostics: list[str] | None = None) -> ExpertRole:
        raw = self._ask("recruit", document=self._document_text(doc))
        return parse_expert_role(raw, diagnostics)

    def extract_candidates(
        self, doc: Document, role: ExpertRole | None = None, diagnostics: list[str] | None = None
    ) -> CandidatePool:
        prefix = self.templates.persona.format(role=role.title).strip() if role else ""
        raw = self._ask("extract", system_prefix=prefix, document=self._document_text(doc))
        pool = CandidatePool.build(doc.id, parse_phrase_list(raw, diagnostics))
        if not pool.candidates and diagnostics is not None:
            diagnostics.append("extract: empty candidate pool")
        return pool

    def identify_topics(
        self, doc: Document, role: ExpertRole, diagnostics: list[str] | None = None
    ) -> TopicList:
        raw = self._ask("topics", document=self._document_text(doc), role=role.title)
        topics = []
        for t in parse_phrase_list(raw, diagnostics):
            if len(t.split()) > MAX_TOPIC_WORDS:
                if diagnostics is not None:
                    diagnostics.append(f"topics: dropped over-long topic {t[:40]!r}")
                continue
            topics.append(t)
        if not topics and diagnostics is not None:
            diagnostics.append("topics: empty topic list")
        return TopicList(tuple(topics))

    def rerank(
        self,
        doc: Document,
        role: ExpertRole,
        pool: CandidatePool,
        context: TopicList | KnowledgeDict,
        diagnostics: list[str] | None = None,
    ) -> list[str]:
        if not pool.candidates:
            if diagnostics is not None:
                diagnostics.append("rerank: empty pool, skipped")
            return []
        common = dict(
            document=self._document_text(doc),
            role=role.title,
            candidates=_numbered(pool.candidates),
            limit=self.rerank_limit,
        )
        if isinstance(context, TopicList):
            topics = "\n".join(f"- {t}" for t in context.topics) or "(none)"
            raw = self._ask("rerank_topic", topics=topics, **common)
        elif isinstance(context, KnowledgeDict):
            knowledge = render_knowledge(
                context, self.knowledge_budget, self.tokenizer, diagnostics
            ) or "(none)"
            raw = self._ask("rerank_knowledge", knowledge=knowledge, **common)
        else:
            raise TypeError(f"unsupported rerank context {type(context).__name__}")
        return parse_phrase_list(raw, diagnostics)[: self.rerank_limit]
