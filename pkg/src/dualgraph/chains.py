"""Gap discovery: turn graph topology into ranked search chains.

Four chain families share one total budget N:

* enrichment targets weakly-evidenced existing edges;
* similarity exploration pairs unconnected core entities with concepts whose
  name embeddings are close;
* block-probability exploration proposes cross-community non-edges where a
  smoothed stochastic-block-model estimate is either high (likely links) or
  maximally uncertain (informative links);
* structural-hole exploration connects each community's bridge and hub nodes
  to other communities' representative nodes.

Budget split: enrichment and each exploration family get floor(N/4); the
remainder tops the lists up in the order enrichment, similarity, block,
structural-hole. All orderings are total, so output is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instrumentation import KG_OPS
from .kg import (
    CommunityPartition,
    EmbeddingMissingError,
    KnowledgeGraph,
    bridging_score,
    degree_in_community,
    edge_num,
    node_importance,
    node_num,
)

__all__ = [
    "ChainConfig",
    "SearchChain",
    "QuotaPlan",
    "SbmBlockMatrix",
    "allocate_quotas",
    "enrichment_score",
    "cross_community_score",
    "rank_enrich",
    "sbm_block_matrix",
    "bernoulli_entropy",
    "explore_similarity",
    "explore_block",
    "explore_structural_holes",
    "build_search_chains",
    "format_chains_for_prompt",
]

EXPLORE_RELATION_HINT = "hypothesized relation"


@dataclass(frozen=True)
class ChainConfig:
    total: int
    enrich_evidence_threshold: int = 1
    sbm_alpha: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total < 0:
            raise ValueError("total budget must be >= 0")
        if self.enrich_evidence_threshold < 0:
            raise ValueError("enrich threshold must be >= 0")
        if self.sbm_alpha <= 0:
            raise ValueError("smoothing alpha must be > 0")


@dataclass
class SearchChain:
    kind: str  # "enrich" | "explore"
    basis: str  # enrichment | similarity | block_probability | block_entropy | structural_hole
    source_id: str
    target_id: str
    relation: str
    score: float
    edge_id: str | None = None
    chain_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "chain_id": self.chain_id,
            "kind": self.kind,
            "basis": self.basis,
            "source_id": self.source_id,
            "target_id": self.target_id,
            "relation": self.relation,
            "score": self.score,
            "edge_id": self.edge_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchChain":
        return cls(
            kind=d["kind"],
            basis=d["basis"],
            source_id=d["source_id"],
            target_id=d["target_id"],
            relation=d["relation"],
            score=float(d["score"]),
            edge_id=d.get("edge_id"),
            chain_id=d.get("chain_id"),
        )


@dataclass(frozen=True)
class QuotaPlan:
    enrich: int
    per_explore: int
    leftover: int


def allocate_quotas(total: int) -> QuotaPlan:
    """floor(N/4) to enrichment and to each exploration family; rest is leftover."""
    if total < 0:
        raise ValueError("total must be >= 0")
    quarter = total // 4
    return QuotaPlan(enrich=quarter, per_explore=quarter, leftover=total - 4 * quarter)


def cross_community_score(
    kg: KnowledgeGraph, partition: CommunityPartition, u: str, v: str
) -> float:
    """Mean of the two endpoints' bridging scores."""
    return 0.5 * (bridging_score(kg, partition, u) + bridging_score(kg, partition, v))


def enrichment_score(
    kg: KnowledgeGraph, partition: CommunityPartition, edge_id: str
) -> float:
    edge = kg.edges[edge_id]
    importance = node_importance(kg, edge.source_id, edge.target_id)
    crossing = cross_community_score(kg, partition, edge.source_id, edge.target_id)
    return (1.0 + importance + crossing) / (1.0 + len(edge.evidence_ids))


def rank_enrich(
    kg: KnowledgeGraph,
    partition: CommunityPartition,
    evidence_threshold: int = 1,
    quota: int | None = None,
) -> list[SearchChain]:
    """Weakly-evidenced edges, zero-evidence edges always ahead of the rest.

    Both blocks order by descending score, ties by ascending edge id.
    quota=None returns the full ranked pool.
    """
    KG_OPS.bump("rank_enrich")
    pool = [
        eid
        for eid in kg.edge_ids()
        if len(kg.edges[eid].evidence_ids) <= evidence_threshold
    ]
    scored = {eid: enrichment_score(kg, partition, eid) for eid in pool}
    zero = [eid for eid in pool if not kg.edges[eid].evidence_ids]
    rest = [eid for eid in pool if kg.edges[eid].evidence_ids]
    zero.sort(key=lambda eid: (-scored[eid], edge_num(eid)))
    rest.sort(key=lambda eid: (-scored[eid], edge_num(eid)))
    ordered = zero + rest
    if quota is not None:
        ordered = ordered[:quota]
    chains = []
    for eid in ordered:
        e = kg.edges[eid]
        chains.append(
            SearchChain(
                kind="enrich",
                basis="enrichment",
                source_id=e.source_id,
                target_id=e.target_id,
                relation=e.relation,
                score=scored[eid],
                edge_id=eid,
            )
        )
    return chains


@dataclass
class SbmBlockMatrix:
    """Smoothed block-model link probabilities between community pairs."""

    labels: list[int]
    matrix: np.ndarray
    alpha: float
    sizes: dict[int, int] = field(default_factory=dict)

    def prob(self, ci: int, cj: int) -> float:
        i = self.labels.index(ci)
        j = self.labels.index(cj)
        return float(self.matrix[i, j])


def sbm_block_matrix(
    kg: KnowledgeGraph, partition: CommunityPartition, alpha: float = 0.1
) -> SbmBlockMatrix:
    """B[i][j] = (actual_edges + alpha) / (possible_pairs + 2*alpha).

    Edges are counted on the undirected simple projection. Off-diagonal
    possible pairs are n_i * n_j; diagonal is n_i * (n_i - 1) / 2. Smoothing
    keeps every entry strictly inside (0, 1).
    """
    KG_OPS.bump("sbm_block_matrix")
    comms = partition.communities()
    labels = list(comms.keys())
    sizes = {c: len(members) for c, members in comms.items()}
    k = len(labels)
    actual = np.zeros((k, k), dtype=float)
    index = {c: i for i, c in enumerate(labels)}
    for a, b in kg.undirected_pairs():
        ca = partition.community_of(a)
        cb = partition.community_of(b)
        i, j = index[ca], index[cb]
        actual[i, j] += 1.0
        if i != j:
            actual[j, i] += 1.0
    matrix = np.zeros((k, k), dtype=float)
    for i, ci in enumerate(labels):
        for j, cj in enumerate(labels):
            if i == j:
                possible = sizes[ci] * (sizes[ci] - 1) / 2.0
            else:
                possible = float(sizes[ci] * sizes[cj])
            matrix[i, j] = (actual[i, j] + alpha) / (possible + 2.0 * alpha)
    return SbmBlockMatrix(labels=labels, matrix=matrix, alpha=alpha, sizes=sizes)


def bernoulli_entropy(p: float) -> float:
    """H(p) in bits; defined only on the open interval (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"entropy undefined at p={p}")
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def _pair_key(a: str, b: str) -> tuple[str, str]:
    return tuple(sorted((a, b), key=node_num))  # type: ignore[return-value]


def explore_similarity(kg: KnowledgeGraph, quota: int | None = None) -> list[SearchChain]:
    """Unconnected (core entity, concept) pairs by name-embedding cosine."""
    KG_OPS.bump("explore_similarity")
    adjacent = kg.undirected_pairs()
    cores = [nid for nid in kg.node_ids() if kg.nodes[nid].is_core_entity]
    concepts = [nid for nid in kg.node_ids() if not kg.nodes[nid].is_core_entity]
    candidates: list[tuple[float, int, int, str, str]] = []
    for c in cores:
        for k in concepts:
            if _pair_key(c, k) in adjacent:
                continue
            vc = kg.nodes[c].embedding
            vk = kg.nodes[k].embedding
            if vc is None or vk is None:
                raise EmbeddingMissingError(
                    f"similarity exploration needs embeddings for {c} and {k}"
                )
            sim = float(np.dot(vc, vk))
            candidates.append((sim, node_num(c), node_num(k), c, k))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    if quota is not None:
        candidates = candidates[:quota]
    return [
        SearchChain(
            kind="explore",
            basis="similarity",
            source_id=c,
            target_id=k,
            relation=EXPLORE_RELATION_HINT,
            score=sim,
        )
        for sim, _, _, c, k in candidates
    ]


def explore_block(
    kg: KnowledgeGraph,
    partition: CommunityPartition,
    block: SbmBlockMatrix,
    quota: int,
    exclude_pairs: set[tuple[str, str]] = frozenset(),
) -> list[SearchChain]:
    """Cross-community non-edges split between likely and uncertain links.

    ceil(quota/2) slots go to the highest block probabilities, floor(quota/2)
    to the highest entropies among the rest; any extension past the quota
    continues down the probability ranking. Ties order by the numeric node
    pair. Returns the full ordered list; callers truncate.
    """
    KG_OPS.bump("explore_block")
    adjacent = kg.undirected_pairs()
    ids = kg.node_ids()
    pool: list[tuple[str, str, float]] = []
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if partition.community_of(a) == partition.community_of(b):
                continue
            pair = _pair_key(a, b)
            if pair in adjacent or pair in exclude_pairs:
                continue
            p = block.prob(partition.community_of(a), partition.community_of(b))
            pool.append((pair[0], pair[1], p))

    def pair_nums(entry: tuple[str, str, float]) -> tuple[int, int]:
        return (node_num(entry[0]), node_num(entry[1]))

    by_prob = sorted(pool, key=lambda t: (-t[2], pair_nums(t)))
    prob_quota = quota - quota // 2
    ent_quota = quota // 2
    picked_prob = by_prob[:prob_quota]
    picked_set = {(a, b) for a, b, _ in picked_prob}
    remaining = [t for t in pool if (t[0], t[1]) not in picked_set]
    by_entropy = sorted(
        remaining, key=lambda t: (-bernoulli_entropy(t[2]), pair_nums(t))
    )
    picked_ent = by_entropy[:ent_quota]
    picked_set |= {(a, b) for a, b, _ in picked_ent}
    extension = [t for t in by_prob if (t[0], t[1]) not in picked_set]

    chains = []
    for a, b, p in picked_prob:
        chains.append(
            SearchChain(
                kind="explore",
                basis="block_probability",
                source_id=a,
                target_id=b,
                relation=EXPLORE_RELATION_HINT,
                score=p,
            )
        )
    for a, b, p in picked_ent:
        chains.append(
            SearchChain(
                kind="explore",
                basis="block_entropy",
                source_id=a,
                target_id=b,
                relation=EXPLORE_RELATION_HINT,
                score=bernoulli_entropy(p),
            )
        )
    for a, b, p in extension:
        chains.append(
            SearchChain(
                kind="explore",
                basis="block_probability",
                source_id=a,
                target_id=b,
                relation=EXPLORE_RELATION_HINT,
                score=p,
            )
        )
    return chains


def explore_structural_holes(
    kg: KnowledgeGraph, partition: CommunityPartition
) -> list[SearchChain]:
    """Bridge/hub nodes of one community paired with representatives of others.

    Per community: bridges are the top-3 bridging scores among nodes with at
    least one cross-community neighbor; hubs are the top-2 in-community degrees
    excluding bridges; the representative is the highest in-community degree.
    Every (bridge-or-hub, other community's representative) non-edge is a
    candidate; unordered duplicates collapse to their first occurrence. The
    list ranks by the first node's bridging score, ties by ascending node ids.
    Returns all candidates; callers truncate.
    """
    KG_OPS.bump("explore_structural_holes")
    comms = partition.communities()
    adjacent = kg.undirected_pairs()
    bscore = {v: bridging_score(kg, partition, v) for v in partition.assignment}
    din = {v: degree_in_community(kg, partition, v) for v in partition.assignment}

    bridges: dict[int, list[str]] = {}
    hubs: dict[int, list[str]] = {}
    rep: dict[int, str] = {}
    for c, members in comms.items():
        crossing = [v for v in members if bscore[v] > 0.0]
        crossing.sort(key=lambda v: (-bscore[v], node_num(v)))
        bridges[c] = crossing[:3]
        rest = [v for v in members if v not in bridges[c]]
        rest.sort(key=lambda v: (-din[v], node_num(v)))
        hubs[c] = rest[:2]
        rep[c] = min(members, key=lambda v: (-din[v], node_num(v)))

    seen: set[tuple[str, str]] = set()
    candidates: list[tuple[float, int, int, str, str]] = []
    for c1 in comms:
        for c2 in comms:
            if c1 == c2:
                continue
            for a in bridges[c1] + hubs[c1]:
                b = rep[c2]
                if a == b or _pair_key(a, b) in adjacent:
                    continue
                if _pair_key(a, b) in seen:
                    continue
                seen.add(_pair_key(a, b))
                candidates.append((bscore[a], node_num(a), node_num(b), a, b))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [
        SearchChain(
            kind="explore",
            basis="structural_hole",
            source_id=a,
            target_id=b,
            relation=EXPLORE_RELATION_HINT,
            score=score,
        )
        for score, _, _, a, b in candidates
    ]


def build_search_chains(
    kg: KnowledgeGraph, partition: CommunityPartition, config: ChainConfig
) -> list[SearchChain]:
    """Assemble the ranked chain list under the total budget.

    Block-probability exploration draws from a pool that excludes every pair
    the similarity or structural-hole families can propose, so no pair appears
    under two bases. Leftover slots (budget minus what the four base quotas
    consumed) extend the family lists in fixed order. chain_1, chain_2, ...
    number the final concatenation.
    """
    KG_OPS.bump("build_search_chains")
    plan = allocate_quotas(config.total)
    enrich_full = rank_enrich(
        kg, partition, evidence_threshold=config.enrich_evidence_threshold, quota=None
    )
    sim_full = explore_similarity(kg, quota=None)
    hole_full = explore_structural_holes(kg, partition)
    exclude = {_pair_key(c.source_id, c.target_id) for c in sim_full}
    exclude |= {_pair_key(c.source_id, c.target_id) for c in hole_full}
    block = sbm_block_matrix(kg, partition, alpha=config.sbm_alpha)
    block_full = explore_block(
        kg, partition, block, quota=plan.per_explore, exclude_pairs=exclude
    )

    lists = [enrich_full, sim_full, block_full, hole_full]
    quotas = [plan.enrich, plan.per_explore, plan.per_explore, plan.per_explore]
    counts = [min(q, len(lst)) for q, lst in zip(quotas, lists)]
    leftover = config.total - sum(counts)
    for i, lst in enumerate(lists):
        if leftover <= 0:
            break
        extra = min(leftover, len(lst) - counts[i])
        counts[i] += extra
        leftover -= extra

    final: list[SearchChain] = []
    for lst, count in zip(lists, counts):
        final.extend(lst[:count])
    for i, chain in enumerate(final, start=1):
        chain.chain_id = f"chain_{i}"
    return final


def format_chains_for_prompt(chains: list[SearchChain], kg: KnowledgeGraph) -> str:
    """One line per chain: id, family, and the entity -> relation -> entity pattern."""
    lines = []
    for c in chains:
        src = kg.nodes[c.source_id].name
        tgt = kg.nodes[c.target_id].name
        lines.append(f"{c.chain_id} | {c.kind} | {src} -> {c.relation} -> {tgt}")
    return "\n".join(lines)
