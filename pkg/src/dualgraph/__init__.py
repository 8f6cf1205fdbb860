"""Deep-research engine that co-evolves a report outline and an
evidence-grounded knowledge graph, mining the graph's topology for gaps to
turn into search queries."""

from .evidence import EvidenceBank, EvidenceUnit, citation_token, normalize_url
from .outline import OutlineGraph, OutlineNode, apply_revision, parse_outline, render_outline
from .kg import (
    KnowledgeGraph,
    KnowledgeNode,
    KnowledgeEdge,
    apply_extraction,
    cluster_semantic,
    detect_communities,
    merge_nodes,
)
from .chains import ChainConfig, SearchChain, allocate_quotas, build_search_chains
from .orchestrator import (
    EarlyStopReport,
    RunConfig,
    Runner,
    RunState,
    Variant,
    run,
)
from .providers.base import Providers
from .providers.mock import Fixture, load_fixture
from .simulate import generate_world, run_ablation, run_sim

__version__ = "0.1.0"

__all__ = [
    "EvidenceBank",
    "EvidenceUnit",
    "citation_token",
    "normalize_url",
    "OutlineGraph",
    "OutlineNode",
    "apply_revision",
    "parse_outline",
    "render_outline",
    "KnowledgeGraph",
    "KnowledgeNode",
    "KnowledgeEdge",
    "apply_extraction",
    "cluster_semantic",
    "detect_communities",
    "merge_nodes",
    "ChainConfig",
    "SearchChain",
    "allocate_quotas",
    "build_search_chains",
    "EarlyStopReport",
    "RunConfig",
    "Runner",
    "RunState",
    "Variant",
    "run",
    "Providers",
    "Fixture",
    "load_fixture",
    "generate_world",
    "run_ablation",
    "run_sim",
    "__version__",
]
