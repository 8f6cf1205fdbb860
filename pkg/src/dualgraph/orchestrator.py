"""Run loop co-evolving the outline and the knowledge graph.

The dual variant follows this per-iteration order: generate queries from the
knowledge graph, then (after the first pass) from the outline, dedup, search,
fold results into the knowledge graph, revise the outline, and check the early
stop. The outline-only variant revises the outline first, generates queries
from it, searches, and checks the early stop; it never touches a knowledge
graph.

State is checkpointed at iteration boundaries only. run_iteration is
functional (state in, new state out), so a provider failure mid-iteration
loses nothing but in-flight work and a resumed run converges to the same bytes
as an uninterrupted one.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .chains import ChainConfig, SearchChain, build_search_chains, format_chains_for_prompt
from .evidence import EvidenceBank, citation_token
from .kg import (
    CommunityPartition,
    KnowledgeGraph,
    KnowledgeGraphError,
    apply_extraction,
    cluster_semantic,
    detect_communities,
    merge_nodes,
)
from .outline import OutlineGraph, OutlineError, apply_revision, parse_outline, render_outline
from .providers.base import FetchError, ProviderError, Providers
from .providers import parsers
from .providers.parsers import ParseError

log = logging.getLogger(__name__)

__all__ = [
    "Variant",
    "ConfigError",
    "RunConfig",
    "EarlyStopReport",
    "RunState",
    "ReportConsistencyError",
    "init_run",
    "run_iteration",
    "write_report",
    "dedup_queries",
    "normalize_query",
    "Runner",
    "run",
]

STATE_FILE = "state.json"
REPORT_FILE = "report.md"


class Variant(str, Enum):
    DUAL_GRAPH = "dualgraph"
    OUTLINE_ONLY = "outline-only"


class ConfigError(ValueError):
    pass


class ReportConsistencyError(ValueError):
    """The outline cites evidence the bank does not hold."""


_THRESHOLD_DIMS = parsers.SCORE_DIMENSIONS


def _default_thresholds() -> dict[str, float]:
    return {dim: 75.0 for dim in _THRESHOLD_DIMS}


@dataclass
class RunConfig:
    max_iter: int = 5
    og_query_budget: int = 10
    kg_query_budget: int = 10  # doubles as CHAIN_NUM
    urls_per_query: int = 5
    enrich_evidence_threshold: int = 1
    sbm_alpha: float = 0.1
    semantic_cluster_threshold: float = 0.85
    community_resolution: float = 1.0
    near_duplicate_threshold: float = 0.95
    early_stop_thresholds: dict[str, float] = field(default_factory=_default_thresholds)
    seed: int = 0
    variant: Variant = Variant.DUAL_GRAPH
    language: str = "en"
    retry_budget: int = 2
    embed_dim: int = 32

    def __post_init__(self) -> None:
        if isinstance(self.variant, str):
            self.variant = Variant(self.variant)
        if isinstance(self.early_stop_thresholds, (int, float)):
            self.early_stop_thresholds = {
                dim: float(self.early_stop_thresholds) for dim in _THRESHOLD_DIMS
            }
        for name in ("max_iter", "og_query_budget", "kg_query_budget", "urls_per_query"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.enrich_evidence_threshold < 0:
            raise ConfigError("enrich_evidence_threshold must be >= 0")
        if self.sbm_alpha <= 0:
            raise ConfigError("sbm_alpha must be > 0")
        if set(self.early_stop_thresholds) != set(_THRESHOLD_DIMS):
            raise ConfigError(
                f"early_stop_thresholds must cover exactly {sorted(_THRESHOLD_DIMS)}"
            )
        for dim, value in self.early_stop_thresholds.items():
            if not 0 <= value <= 100:
                raise ConfigError(f"threshold {dim}={value} outside 0..100")
        if self.retry_budget < 0:
            raise ConfigError("retry_budget must be >= 0")

    def to_dict(self) -> dict:
        return {
            "max_iter": self.max_iter,
            "og_query_budget": self.og_query_budget,
            "kg_query_budget": self.kg_query_budget,
            "urls_per_query": self.urls_per_query,
            "enrich_evidence_threshold": self.enrich_evidence_threshold,
            "sbm_alpha": self.sbm_alpha,
            "semantic_cluster_threshold": self.semantic_cluster_threshold,
            "community_resolution": self.community_resolution,
            "near_duplicate_threshold": self.near_duplicate_threshold,
            "early_stop_thresholds": dict(self.early_stop_thresholds),
            "seed": self.seed,
            "variant": self.variant.value,
            "language": self.language,
            "retry_budget": self.retry_budget,
            "embed_dim": self.embed_dim,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class EarlyStopReport:
    scores: dict[str, float]
    thresholds: dict[str, float]
    stop: bool

    def to_dict(self) -> dict:
        return {"scores": dict(self.scores), "thresholds": dict(self.thresholds), "stop": self.stop}

    @classmethod
    def from_dict(cls, d: dict) -> "EarlyStopReport":
        return cls(scores=dict(d["scores"]), thresholds=dict(d["thresholds"]), stop=bool(d["stop"]))


@dataclass
class RunState:
    root_query: str
    config: RunConfig
    stage: str = "init"  # init | loop | done
    iteration: int = 0  # completed loop passes
    stopped: bool = False
    og: OutlineGraph | None = None
    kg: KnowledgeGraph | None = None
    bank: EvidenceBank = field(default_factory=EvidenceBank)
    executed_queries: list[str] = field(default_factory=list)
    early_stop_history: list[EarlyStopReport] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)
    iteration_chains: dict[int, dict] = field(default_factory=dict)
    report: str | None = None

    def clone(self) -> "RunState":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "root_query": self.root_query,
            "config": self.config.to_dict(),
            "stage": self.stage,
            "iteration": self.iteration,
            "stopped": self.stopped,
            "outline": render_outline(self.og) if self.og is not None else None,
            "kg": self.kg.to_dict() if self.kg is not None else None,
            "bank": json.loads(self.bank.to_document()),
            "executed_queries": list(self.executed_queries),
            "early_stop_history": [r.to_dict() for r in self.early_stop_history],
            "events": list(self.events),
            "audit": list(self.audit),
            "iteration_chains": {str(k): v for k, v in self.iteration_chains.items()},
            "report": self.report,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunState":
        state = cls(
            root_query=doc["root_query"],
            config=RunConfig.from_dict(doc["config"]),
            stage=doc["stage"],
            iteration=int(doc["iteration"]),
            stopped=bool(doc["stopped"]),
        )
        if doc.get("outline") is not None:
            state.og = parse_outline(doc["outline"])
        if doc.get("kg") is not None:
            state.kg = KnowledgeGraph.from_dict(doc["kg"])
        state.bank = EvidenceBank.from_document(json.dumps(doc["bank"]))
        state.executed_queries = list(doc.get("executed_queries", []))
        state.early_stop_history = [
            EarlyStopReport.from_dict(r) for r in doc.get("early_stop_history", [])
        ]
        state.events = list(doc.get("events", []))
        state.audit = list(doc.get("audit", []))
        state.iteration_chains = {
            int(k): v for k, v in doc.get("iteration_chains", {}).items()
        }
        state.report = doc.get("report")
        return state


# -- provider call helpers ---------------------------------------------


def _chat(state: RunState, providers: Providers, name: str, prompt: str) -> str:
    response = providers.chat.complete(prompt)
    state.audit.append(
        {"call": len(state.audit), "name": name, "prompt": prompt, "response": response}
    )
    return response


def _chat_parsed(state, providers, name, prompt, parse_fn, attempts):
    """Call, parse, and re-ask the identical prompt on contract violations."""
    last_error: Exception | None = None
    for _ in range(attempts + 1):
        response = _chat(state, providers, name, prompt)
        try:
            return parse_fn(response)
        except (ParseError, OutlineError, KnowledgeGraphError) as exc:
            last_error = exc
            log.warning("%s response rejected: %s", name, exc)
    raise ParseError(f"{name}: no valid response after {attempts + 1} attempts: {last_error}")


# -- query handling ----------------------------------------------------

_TRAILING_PUNCT = ".?!,;:"


def normalize_query(query: str) -> str:
    collapsed = " ".join(query.split()).casefold()
    return collapsed.rstrip(_TRAILING_PUNCT).strip()


def dedup_queries(
    new: list[str],
    executed: list[str],
    pending: list[str],
    embed,
    threshold: float = 0.95,
) -> list[str]:
    """Drop exact (normalized) and near-duplicate queries, preserving order."""
    prior_norms = [normalize_query(q) for q in executed + pending]
    kept: list[str] = []
    kept_norms: list[str] = []
    for q in new:
        nq = normalize_query(q)
        if not nq:
            continue
        if nq in prior_norms or nq in kept_norms:
            continue
        reference = prior_norms + kept_norms
        if reference:
            vectors = embed([nq] + reference)
            sims = vectors[1:] @ vectors[0]
            if float(sims.max()) >= threshold:
                continue
        kept.append(q.strip())
        kept_norms.append(nq)
    return kept


# -- retrieval pipeline ------------------------------------------------


def _format_results(results) -> str:
    lines = []
    for i, r in enumerate(results):
        lines.append(f"{i}. {r.title}")
        lines.append(f"   {r.snippet}")
        lines.append(f"   {r.url}")
    return "\n".join(lines)


def run_search_pipeline(
    state: RunState,
    providers: Providers,
    config: RunConfig,
    queries: list[str],
    iteration: int,
) -> dict[str, list[int]]:
    """Search, two-stage filter, fetch, and bank; returns new ids per query.

    Commit order is deterministic: queries in order, then selected results by
    ascending rank. Already-banked URLs are skipped before fetching.
    """
    new_by_query: dict[str, list[int]] = {}
    for query in queries:
        new_ids: list[int] = []
        results = providers.search.search(query, config.urls_per_query)
        if results:
            prompt = parsers.render(
                "filter_urls",
                {"QUERY": query, "RESULTS": _format_results(results)},
            )
            indices = _chat_parsed(
                state,
                providers,
                "filter_urls",
                prompt,
                lambda text: parsers.parse_index_selection(text, len(results)),
                config.retry_budget,
            )
            for idx in sorted(indices):
                result = results[idx]
                if state.bank.has_url(result.url):
                    continue
                try:
                    page = providers.fetch.fetch(result.url)
                except FetchError as exc:
                    log.warning("fetch failed for %s: %s", result.url, exc)
                    continue
                assess_prompt = parsers.render(
                    "assess_page",
                    {"QUERY": query, "URL": result.url, "PAGE": page},
                )
                assessment = _chat_parsed(
                    state,
                    providers,
                    "assess_page",
                    assess_prompt,
                    parsers.parse_page_assessment,
                    config.retry_budget,
                )
                if not assessment.useful:
                    continue
                ev_id = state.bank.add(
                    url=result.url,
                    title=result.title,
                    query=query,
                    summary=assessment.summary,
                    content=assessment.salient_content,
                    iteration=iteration,
                )
                if ev_id is not None:
                    new_ids.append(ev_id)
        new_by_query[query] = new_ids
        state.executed_queries.append(query)
    return new_by_query


# -- query generation --------------------------------------------------


def gen_queries_from_og(
    state: RunState, providers: Providers, config: RunConfig, pending: list[str]
) -> list[str]:
    assert state.og is not None
    prompt = parsers.render(
        "generate_queries",
        {
            "QUERY_NUM": str(config.og_query_budget),
            "ROOT_QUERY": state.root_query,
            "OUTLINE": render_outline(state.og),
            "EXECUTED_QUERIES": "\n".join(state.executed_queries) or "(none)",
            "PENDING_QUERIES": "\n".join(pending) or "(none)",
        },
    )
    return _chat_parsed(
        state,
        providers,
        "generate_queries",
        prompt,
        lambda text: parsers.parse_query_lines(text, config.og_query_budget),
        1,
    )


def _partition_from_nodes(kg: KnowledgeGraph, seed: int) -> CommunityPartition:
    assignment = {}
    for nid in kg.node_ids():
        community = kg.nodes[nid].community_id
        if community is None:
            raise KnowledgeGraphError(f"node {nid} has no community id")
        assignment[nid] = community
    return CommunityPartition(assignment=assignment, seed=seed)


def gen_queries_from_kg(
    state: RunState, providers: Providers, config: RunConfig
) -> tuple[list[str], list[SearchChain], list[str]]:
    """Build chains, have the provider select some, return aligned queries."""
    assert state.kg is not None and state.og is not None
    if len(state.kg) == 0:
        return [], [], []
    # Embeddings are never checkpointed; a resumed run recomputes them.
    node_ids = state.kg.node_ids()
    if any(state.kg.nodes[nid].embedding is None for nid in node_ids):
        vectors = providers.embed.embed([state.kg.nodes[nid].name for nid in node_ids])
        for nid, vec in zip(node_ids, vectors):
            state.kg.nodes[nid].embedding = vec
    partition = _partition_from_nodes(state.kg, config.seed)
    chains = build_search_chains(
        state.kg,
        partition,
        ChainConfig(
            total=config.kg_query_budget,
            enrich_evidence_threshold=config.enrich_evidence_threshold,
            sbm_alpha=config.sbm_alpha,
            seed=config.seed,
        ),
    )
    if not chains:
        return [], [], []
    known_ids = {c.chain_id for c in chains}
    prompt = parsers.render(
        "select_chains",
        {
            "CHAIN_NUM": str(config.kg_query_budget),
            "ROOT_QUERY": state.root_query,
            "OUTLINE": render_outline(state.og),
            "KG_PAYLOAD": json.dumps(state.kg.to_prompt_payload(), ensure_ascii=False),
            "CANDIDATE_CHAINS": format_chains_for_prompt(chains, state.kg),
        },
    )

    def parse_and_check(text: str) -> parsers.ChainSelection:
        selection = parsers.parse_chain_selection(text, config.kg_query_budget)
        for cid in selection.chain_ids:
            if cid not in known_ids:
                raise parsers.DanglingReference(f"selection names unknown chain {cid}")
        return selection

    selection = _chat_parsed(
        state, providers, "select_chains", prompt, parse_and_check, 1
    )
    return selection.queries, chains, selection.chain_ids


# -- knowledge-graph update -------------------------------------------


def _evidence_block(bank: EvidenceBank, ids: list[int]) -> str:
    lines = []
    for ev_id in ids:
        unit = bank.get(ev_id)
        lines.append(f"{citation_token(ev_id)} | {unit.title} | {unit.url}")
        lines.append(f"summary: {unit.summary}")
        if unit.content:
            lines.append(f"content: {unit.content}")
    return "\n".join(lines) or "(none)"


def _flatten(text: str) -> str:
    return " ".join(text.split())


def update_kg(
    state: RunState,
    providers: Providers,
    config: RunConfig,
    new_by_query: dict[str, list[int]],
) -> None:
    """Extraction per query, concept merge, clustering, community detection."""
    assert state.kg is not None
    kg = state.kg
    for query, ev_ids in new_by_query.items():
        if not ev_ids:
            continue
        labels = {f"EN{i}": ev_id for i, ev_id in enumerate(ev_ids, start=1)}
        statements = "\n".join(
            f"{label}: {_flatten(state.bank.get(ev_id).summary)} "
            f"{_flatten(state.bank.get(ev_id).content)}".rstrip()
            for label, ev_id in labels.items()
        )
        prompt = parsers.render(
            "extract_knowledge",
            {
                "ROOT_QUERY": state.root_query,
                "SEARCH_QUERY": query,
                "EVIDENCE_STATEMENTS": statements,
                "KG_PAYLOAD": json.dumps(kg.to_prompt_payload(), ensure_ascii=False),
            },
        )
        node_ids = set(kg.nodes)
        edge_ids = set(kg.edges)

        def parse_and_apply(text: str) -> KnowledgeGraph:
            result = parsers.parse_extraction(text, node_ids, edge_ids)
            return apply_extraction(kg, result, labels)

        kg = _chat_parsed(
            state, providers, "extract_knowledge", prompt, parse_and_apply, config.retry_budget
        )

    concepts = [n for n in kg.nodes.values() if not n.is_core_entity]
    if len(concepts) >= 2:
        prompt = parsers.render(
            "merge_concepts",
            {
                "ROOT_QUERY": state.root_query,
                "KG_PAYLOAD": json.dumps(kg.to_prompt_payload(), ensure_ascii=False),
            },
        )

        def parse_and_merge(text: str) -> KnowledgeGraph:
            clusters = parsers.parse_merge(text)
            if not clusters:
                return kg
            return merge_nodes(kg, clusters)

        try:
            kg = _chat_parsed(
                state, providers, "merge_concepts", prompt, parse_and_merge, config.retry_budget
            )
        except ParseError as exc:
            # A bad merge proposal is rejected, never fatal: the graph stands.
            log.warning("merge batch rejected, keeping graph untouched: %s", exc)

    ids = kg.node_ids()
    if ids:
        names = [kg.nodes[nid].name for nid in ids]
        vectors = providers.embed.embed(names)
        for nid, vec in zip(ids, vectors):
            kg.nodes[nid].embedding = vec
        clusters = cluster_semantic(kg, threshold=config.semantic_cluster_threshold)
        partition = detect_communities(
            kg, seed=config.seed, resolution=config.community_resolution
        )
        for nid in ids:
            kg.nodes[nid].cluster_id = clusters[nid]
            kg.nodes[nid].community_id = partition.assignment[nid]
    state.kg = kg


# -- outline update ----------------------------------------------------


def update_og(state: RunState, providers: Providers, config: RunConfig) -> None:
    """Revise the outline against all not-yet-cited evidence."""
    assert state.og is not None
    cited = state.og.all_citations()
    uncited = [u.evidence_id for u in state.bank.units if u.evidence_id not in cited]
    if state.kg is not None:
        kg_context = json.dumps(state.kg.to_prompt_payload(), ensure_ascii=False)
    else:
        kg_context = "(not in use)"
    prompt = parsers.render(
        "revise_outline",
        {
            "ROOT_QUERY": state.root_query,
            "CURRENT_OUTLINE": render_outline(state.og),
            "NEW_EVIDENCE": _evidence_block(state.bank, uncited),
            "KG_CONTEXT": kg_context,
        },
    )
    old = state.og

    def parse_and_repair(text: str) -> OutlineGraph:
        return apply_revision(old, text, state.bank, providers.embed.embed)

    state.og = _chat_parsed(
        state, providers, "revise_outline", prompt, parse_and_repair, config.retry_budget
    )


# -- early stop --------------------------------------------------------


def evaluate_early_stop(
    state: RunState, providers: Providers, config: RunConfig
) -> EarlyStopReport:
    """Six-dimension rubric; stopping needs every score at its threshold.

    The support dimension is forced to zero locally whenever the outline
    carries no citations, so an uncited outline can never stop the run.
    """
    assert state.og is not None
    cited = sorted(state.og.all_citations())
    if cited:
        digest = "\n".join(
            f"{citation_token(i)}: {state.bank.get(i).url}" for i in cited
        )
    else:
        digest = "(no citations)"
    prompt = parsers.render(
        "judge_outline",
        {
            "ROOT_QUERY": state.root_query,
            "OUTLINE": render_outline(state.og),
            "EVIDENCE_DIGEST": digest,
        },
    )
    try:
        scores = _chat_parsed(
            state, providers, "judge_outline", prompt, parsers.parse_scores, 1
        )
    except ParseError as exc:
        log.warning("early-stop scores unusable, continuing run: %s", exc)
        scores = {dim: 0.0 for dim in parsers.SCORE_DIMENSIONS}
    if not cited:
        scores["support"] = 0.0
    thresholds = config.early_stop_thresholds
    stop = all(scores[dim] >= thresholds[dim] for dim in parsers.SCORE_DIMENSIONS)
    return EarlyStopReport(scores=scores, thresholds=dict(thresholds), stop=stop)


# -- report ------------------------------------------------------------


def write_report(state: RunState, providers: Providers, config: RunConfig) -> str:
    """One chat call per top-level section; subsections are inlined."""
    assert state.og is not None
    og = state.og
    missing = [i for i in sorted(og.all_citations()) if i not in state.bank]
    if missing:
        raise ReportConsistencyError(
            f"outline cites evidence absent from the bank: {missing}"
        )
    state.events.append("report:write")
    sections_md: list[str] = []
    for section in og.sections:
        subtree = OutlineGraph(title=og.title, sections=[section])
        snippet = render_outline(subtree).split("\n", 1)[1]
        cited = sorted(subtree.all_citations())
        evidence_lines = []
        for ev_id in cited:
            unit = state.bank.get(ev_id)
            evidence_lines.append(f"{ev_id} | {unit.title} | {unit.url}")
            evidence_lines.append(f"summary: {unit.summary}")
        prompt = parsers.render(
            "write_section",
            {
                "ROOT_QUERY": state.root_query,
                "REPORT_TITLE": og.title,
                "PREVIOUS_SECTIONS": "\n\n".join(sections_md) or "(none)",
                "SECTION_OUTLINE": snippet.strip(),
                "EVIDENCE": "\n".join(evidence_lines) or "(none)",
            },
        )
        sections_md.append(_chat(state, providers, "write_section", prompt).strip())
    report = f"# {og.title}\n\n" + "\n\n".join(sections_md) + "\n"
    state.report = report
    return report


# -- lifecycle ---------------------------------------------------------


def init_run(state: RunState, providers: Providers) -> None:
    """Create the outline, run the first retrieval round, build the graph."""
    config = state.config
    state.events.append("init:create_outline")
    prompt = parsers.render("create_outline", {"ROOT_QUERY": state.root_query})
    state.og = _chat_parsed(
        state, providers, "create_outline", prompt, parse_outline, config.retry_budget
    )

    state.events.append("init:gen_from_og")
    queries = gen_queries_from_og(state, providers, config, pending=[])
    queries = dedup_queries(
        queries, state.executed_queries, [], providers.embed.embed,
        state.config.near_duplicate_threshold,
    )
    state.events.append("init:search")
    new_by_query = run_search_pipeline(state, providers, config, queries, iteration=0)

    if config.variant is Variant.DUAL_GRAPH:
        state.events.append("init:build_kg")
        state.kg = KnowledgeGraph()
        update_kg(state, providers, config, new_by_query)
    state.stage = "loop"


def run_iteration(state: RunState, config: RunConfig, providers: Providers) -> RunState:
    """Execute one loop pass; returns the next state, input untouched."""
    if state.iteration >= config.max_iter:
        raise ValueError("run already at max_iter")
    if state.stopped:
        raise ValueError("run already stopped")
    s = state.clone()
    t = s.iteration
    if config.variant is Variant.DUAL_GRAPH:
        s.events.append(f"iter{t}:gen_from_kg")
        kg_queries, chains, selected = gen_queries_from_kg(s, providers, config)
        og_queries: list[str] = []
        if t > 0:
            s.events.append(f"iter{t}:gen_from_og")
            og_queries = gen_queries_from_og(s, providers, config, pending=kg_queries)
        s.events.append(f"iter{t}:dedup")
        queries = dedup_queries(
            kg_queries + og_queries,
            s.executed_queries,
            [],
            providers.embed.embed,
            config.near_duplicate_threshold,
        )
        s.events.append(f"iter{t}:search")
        new_by_query = run_search_pipeline(s, providers, config, queries, iteration=t + 1)
        s.events.append(f"iter{t}:update_kg")
        update_kg(s, providers, config, new_by_query)
        s.events.append(f"iter{t}:update_og")
        update_og(s, providers, config)
        s.iteration_chains[t + 1] = {
            "candidates": [c.to_dict() for c in chains],
            "selected": selected,
            "queries": kg_queries,
        }
    else:
        s.events.append(f"iter{t}:update_og")
        update_og(s, providers, config)
        s.events.append(f"iter{t}:gen_from_og")
        raw = gen_queries_from_og(s, providers, config, pending=[])
        s.events.append(f"iter{t}:dedup")
        queries = dedup_queries(
            raw, s.executed_queries, [], providers.embed.embed,
            config.near_duplicate_threshold,
        )
        s.events.append(f"iter{t}:search")
        run_search_pipeline(s, providers, config, queries, iteration=t + 1)

    if t >= 1:
        s.events.append(f"iter{t}:early_stop")
        verdict = evaluate_early_stop(s, providers, config)
        s.early_stop_history.append(verdict)
        s.stopped = verdict.stop
    s.iteration = t + 1
    return s


# -- persistence -------------------------------------------------------


class Runner:
    """Drives a run directory: checkpoints, resume, and final report."""

    def __init__(self, config: RunConfig, providers: Providers, run_dir: str | Path):
        self.config = config
        self.providers = providers
        self.run_dir = Path(run_dir)

    def _checkpoint(self, state: RunState) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        tmp = self.run_dir / (STATE_FILE + ".tmp")
        tmp.write_text(
            json.dumps(state.to_dict(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        tmp.replace(self.run_dir / STATE_FILE)
        if state.og is not None:
            text = render_outline(state.og)
            (self.run_dir / "outline.txt").write_text(text, encoding="utf-8")
            (self.run_dir / f"outline_iter{state.iteration}.txt").write_text(
                text, encoding="utf-8"
            )
        if state.kg is not None:
            doc = state.kg.to_document()
            (self.run_dir / "kg.json").write_text(doc, encoding="utf-8")
            (self.run_dir / f"kg_iter{state.iteration}.json").write_text(
                doc, encoding="utf-8"
            )
        (self.run_dir / "bank.json").write_text(state.bank.to_document(), encoding="utf-8")
        for it, payload in state.iteration_chains.items():
            (self.run_dir / f"chains_iter{it}.json").write_text(
                json.dumps(payload, indent=2, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
        audit_lines = [json.dumps(entry, ensure_ascii=False) for entry in state.audit]
        (self.run_dir / "audit.jsonl").write_text(
            "\n".join(audit_lines) + ("\n" if audit_lines else ""), encoding="utf-8"
        )
        if state.report is not None:
            (self.run_dir / REPORT_FILE).write_text(state.report, encoding="utf-8")

    def load_state(self) -> RunState:
        doc = json.loads((self.run_dir / STATE_FILE).read_text(encoding="utf-8"))
        return RunState.from_dict(doc)

    def start(self, root_query: str) -> RunState:
        state = RunState(root_query=root_query, config=self.config)
        self._checkpoint(state)
        return self._drive(state)

    def resume(self) -> RunState:
        state = self.load_state()
        self.config = state.config
        return self._drive(state)

    def _drive(self, state: RunState) -> RunState:
        # `state` always names the last clean boundary; phases that mutate in
        # place work on a clone so an aborted phase leaves no partial writes.
        try:
            if state.stage == "init":
                working = state.clone()
                init_run(working, self.providers)
                state = working
                self._checkpoint(state)
            while (
                state.stage == "loop"
                and not state.stopped
                and state.iteration < state.config.max_iter
            ):
                state = run_iteration(state, state.config, self.providers)
                self._checkpoint(state)
            if state.stage == "loop":
                working = state.clone()
                write_report(working, self.providers, working.config)
                working.stage = "done"
                state = working
                self._checkpoint(state)
        except ProviderError:
            self._checkpoint(state)
            raise
        return state


def run(
    root_query: str,
    config: RunConfig,
    providers: Providers,
    run_dir: str | Path,
) -> RunState:
    return Runner(config, providers, run_dir).start(root_query)
