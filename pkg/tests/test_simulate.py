"""Synthetic-world harness: world generation, coverage metrics, paired runs."""

from __future__ import annotations

import csv
import json

import pytest

from dualgraph.evidence import EvidenceBank
from dualgraph.kg import KnowledgeGraph
from dualgraph.orchestrator import RunConfig
from dualgraph.simulate import (
    BRIDGE_RELATION,
    MARKER_RE,
    SimSearchProvider,
    bank_coverage,
    generate_world,
    kg_coverage,
    run_ablation,
    run_sim,
)


class TestGenerateWorld:
    def test_deterministic_for_equal_seeds(self):
        a = generate_world(seed=3)
        b = generate_world(seed=3)
        assert a.truth == b.truth
        assert [d.text for d in a.docs] == [d.text for d in b.docs]

    def test_seed_changes_shortcut_edges(self):
        a = generate_world(seed=0, extra_edge_prob=0.5)
        b = generate_world(seed=1, extra_edge_prob=0.5)
        assert a.truth != b.truth

    def test_name_budget_enforced(self):
        with pytest.raises(ValueError):
            generate_world(n_communities=3, cores_per_community=3, concepts_per_community=6)
        generate_world(n_communities=2, cores_per_community=3, concepts_per_community=10)

    def test_structure_has_paths_and_bridges(self):
        world = generate_world(seed=5, n_communities=3, cores_per_community=2,
                               concepts_per_community=3)
        pairs = {e.pair for e in world.truth}
        for members in world.communities:
            for i in range(len(members) - 1):
                assert frozenset((members[i], members[i + 1])) in pairs
        bridges = [e for e in world.truth if e.relation == BRIDGE_RELATION]
        assert len(bridges) == 2
        assert all(len(world.docs_for_edge[i]) >= 1 for i in range(len(world.truth)))

    def test_markers_encode_the_planted_edge(self):
        world = generate_world(seed=2, docs_per_edge=2)
        for doc in world.docs:
            markers = MARKER_RE.findall(doc.text)
            assert len(markers) == 1
            src, rel, tgt = markers[0]
            edge = world.truth[doc.edge_index]
            assert (src, rel, tgt) == (edge.source, edge.relation, edge.target)


class TestCoverage:
    def test_bank_coverage_counts_edges_not_docs(self):
        world = generate_world(seed=1, docs_per_edge=2)
        bank = EvidenceBank()
        assert bank_coverage(bank, world) == 0.0
        first = world.truth[0]
        for doc_id in world.docs_for_edge[0]:
            doc = world.docs[doc_id]
            bank.add(doc.url, doc.title, "q", "s", "c", 0)
        assert bank_coverage(bank, world) == pytest.approx(1 / len(world.truth))
        del first

    def test_full_bank_reaches_one(self):
        world = generate_world(seed=1)
        bank = EvidenceBank()
        for doc in world.docs:
            bank.add(doc.url, doc.title, "q", "s", "c", 0)
        assert bank_coverage(bank, world) == 1.0

    def test_kg_coverage_ignores_direction_and_relation(self):
        world = generate_world(seed=4, n_communities=1, cores_per_community=1,
                               concepts_per_community=2)
        edge = world.truth[0]
        kg = KnowledgeGraph()
        # Reversed direction and a different label still cover the pair.
        tgt = kg.add_node(edge.target, is_core_entity=False)
        src = kg.add_node(edge.source, is_core_entity=False)
        kg.add_edge(tgt, src, "regulates", evidence_ids={1})
        assert kg_coverage(kg, world) == pytest.approx(1 / len(world.truth))

    def test_empty_truth_is_vacuously_covered(self):
        world = generate_world(n_communities=1, cores_per_community=1,
                               concepts_per_community=0)
        assert world.truth == []
        assert bank_coverage(EvidenceBank(), world) == 1.0
        assert kg_coverage(KnowledgeGraph(), world) == 1.0


class TestSimSearch:
    def test_docs_with_all_names_rank_before_partial_matches(self):
        world = generate_world(seed=0, n_communities=2, cores_per_community=2,
                               concepts_per_community=2)
        edge = world.truth[0]
        provider = SimSearchProvider(world)
        results = provider.search(f"{edge.source} {edge.target} relationship", 50)
        assert results, "planted pair should be retrievable"
        both = {
            world.docs[d].url
            for d in world.docs_for_edge[
                next(i for i, e in enumerate(world.truth) if e.pair == edge.pair)
            ]
        }
        # Every doc mentioning both names precedes any single-name doc.
        seen_partial = False
        for r in results:
            if r.url in both:
                assert not seen_partial
            else:
                seen_partial = True

    def test_overview_query_returns_capped_slice(self):
        world = generate_world(seed=0)
        provider = SimSearchProvider(world)
        results = provider.search("overview of the corpus domain", 50)
        expected = [d.url for d in world.docs[: SimSearchProvider.OVERVIEW_DOCS]]
        assert [r.url for r in results] == expected

    def test_unknown_terms_return_nothing(self):
        world = generate_world(seed=0)
        assert SimSearchProvider(world).search("quantum basket weaving", 10) == []


def _small_world():
    return generate_world(seed=0, n_communities=2, cores_per_community=1,
                          concepts_per_community=2)


def _thorough_config(variant: str) -> RunConfig:
    return RunConfig(
        max_iter=24,
        og_query_budget=6,
        kg_query_budget=6,
        urls_per_query=16,
        early_stop_thresholds=100.0,
        seed=0,
        variant=variant,
    )


class TestRunSim:
    def test_coverage_curve_is_monotone_and_complete(self):
        world = _small_world()
        result = run_sim(world, _thorough_config("dualgraph"))
        curve = result.coverage_by_iteration
        values = [curve[i] for i in sorted(curve)]
        assert values == sorted(values)
        assert result.final_coverage == 1.0
        assert kg_coverage(result.state.kg, world) == 1.0

    def test_paired_variants_share_the_world(self):
        world = _small_world()
        dg = run_sim(world, _thorough_config("dualgraph"))
        oo = run_sim(world, _thorough_config("outline-only"))
        assert dg.state.config.variant.value == "dualgraph"
        assert oo.state.config.variant.value == "outline-only"
        assert 0.0 <= oo.final_coverage <= 1.0

    def test_rerun_is_deterministic(self):
        world = _small_world()
        a = run_sim(world, _thorough_config("dualgraph"))
        b = run_sim(world, _thorough_config("dualgraph"))
        assert a.state.to_dict() == b.state.to_dict()
        assert a.coverage_by_iteration == b.coverage_by_iteration


class TestRunAblation:
    def test_summary_shape_and_artifacts(self, tmp_path):
        summary = run_ablation(
            [0, 1],
            world_kwargs={"concepts_per_community": 2},
            config_overrides={"max_iter": 6},
            out_dir=tmp_path,
        )
        assert summary["n_seeds"] == 2
        assert len(summary["rows"]) == 2
        for row in summary["rows"]:
            assert set(row) == {
                "seed",
                "dualgraph_termination",
                "outline_only_termination",
                "dualgraph_stopped",
                "outline_only_stopped",
                "dualgraph_coverage_at_2",
                "outline_only_coverage_at_2",
                "dualgraph_final_coverage",
                "outline_only_final_coverage",
            }
        assert set(summary["mean_termination"]) == {"dualgraph", "outline-only"}
        assert 0 <= summary["coverage_at_2_wins"] <= 2

        with (tmp_path / "ablation.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert [r["seed"] for r in rows] == ["0", "1"]
        doc = json.loads((tmp_path / "ablation.json").read_text())
        assert doc["n_seeds"] == 2
