"""Community detection: partition validity, known structures, modularity."""

from __future__ import annotations

import random

import networkx as nx
import pytest

from dualgraph.community import leiden_partition, modularity


def _random_graph(rng: random.Random, max_n: int = 14):
    n = rng.randint(1, max_n)
    nodes = [f"v{i}" for i in range(n)]
    edges = []
    seen = set()
    for _ in range(rng.randint(0, 2 * n)):
        if n < 2:
            break
        a, b = rng.sample(nodes, 2)
        key = frozenset((a, b))
        if key in seen:
            continue
        seen.add(key)
        edges.append((a, b))
    return nodes, edges


def _nx_modularity(nodes, edges, partition) -> float:
    g = nx.Graph()
    g.add_nodes_from(nodes)
    g.add_edges_from(edges)
    groups: dict[int, set] = {}
    for v, c in partition.items():
        groups.setdefault(c, set()).add(v)
    return nx.algorithms.community.modularity(g, groups.values())


class TestModularity:
    @pytest.mark.parametrize("seed", range(40))
    def test_matches_networkx_on_random_graphs(self, seed):
        gen = random.Random(seed)
        nodes, edges = _random_graph(gen)
        if not edges:
            return
        k = gen.randint(1, len(nodes))
        partition = {v: gen.randrange(k) for v in nodes}
        ours = modularity(nodes, edges, partition)
        assert ours == pytest.approx(_nx_modularity(nodes, edges, partition), rel=1e-9)

    def test_edgeless_graph_scores_zero(self):
        assert modularity(["a", "b"], [], {"a": 0, "b": 1}) == 0.0


class TestLeidenPartition:
    def test_labels_contiguous_and_cover_all_nodes(self):
        for seed in range(25):
            nodes, edges = _random_graph(random.Random(seed))
            part = leiden_partition(nodes, edges, seed=seed)
            assert set(part) == set(nodes)
            labels = set(part.values())
            assert labels == set(range(len(labels)))

    def test_deterministic_for_equal_inputs(self):
        nodes, edges = _random_graph(random.Random(3), max_n=20)
        a = leiden_partition(nodes, edges, seed=5)
        b = leiden_partition(nodes, edges, seed=5)
        assert a == b

    def test_two_disjoint_triangles_form_two_communities(self):
        nodes = [f"v{i}" for i in range(6)]
        edges = [
            ("v0", "v1"), ("v1", "v2"), ("v2", "v0"),
            ("v3", "v4"), ("v4", "v5"), ("v5", "v3"),
        ]
        part = leiden_partition(nodes, edges, seed=0)
        assert len(set(part.values())) == 2
        assert part["v0"] == part["v1"] == part["v2"]
        assert part["v3"] == part["v4"] == part["v5"]
        assert part["v0"] != part["v3"]

    def test_bridged_ten_node_cliques_split_apart(self):
        left = [f"l{i}" for i in range(10)]
        right = [f"r{i}" for i in range(10)]
        edges = [(a, b) for i, a in enumerate(left) for b in left[i + 1:]]
        edges += [(a, b) for i, a in enumerate(right) for b in right[i + 1:]]
        edges.append(("l0", "r0"))
        part = leiden_partition(left + right, edges, seed=0)
        assert len({part[v] for v in left}) == 1
        assert len({part[v] for v in right}) == 1
        assert part["l0"] != part["r0"]

    def test_beats_singleton_partition_on_clustered_graph(self):
        nodes = [f"v{i}" for i in range(6)]
        edges = [
            ("v0", "v1"), ("v1", "v2"), ("v2", "v0"),
            ("v3", "v4"), ("v4", "v5"), ("v5", "v3"),
            ("v2", "v3"),
        ]
        part = leiden_partition(nodes, edges, seed=0)
        singleton = {v: i for i, v in enumerate(nodes)}
        assert modularity(nodes, edges, part) >= modularity(nodes, edges, singleton)

    @pytest.mark.parametrize("seed", range(20))
    def test_never_worse_than_singletons(self, seed):
        nodes, edges = _random_graph(random.Random(seed + 100))
        part = leiden_partition(nodes, edges, seed=seed)
        singleton = {v: i for i, v in enumerate(nodes)}
        assert modularity(nodes, edges, part) >= modularity(
            nodes, edges, singleton
        ) - 1e-12

    def test_empty_and_singleton_inputs(self):
        assert leiden_partition([], []) == {}
        assert leiden_partition(["only"], []) == {"only": 0}

    def test_duplicate_nodes_rejected(self):
        with pytest.raises(ValueError):
            leiden_partition(["a", "a"], [])

    def test_unknown_edge_endpoint_rejected(self):
        with pytest.raises(ValueError):
            leiden_partition(["a"], [("a", "b")])
