"""Dataset generators, splitting, serialization, and structure utilities."""

import json

import numpy as np
import pytest

from gxplain.errors import DomainError, GraphValidationError, ParseError
from gxplain.graphs import (MOTIFS, Dataset, Graph, MotifAnnotation, canonical_form,
                            dataset_stats, edges_connected, gen_ba, gen_ba2motifs,
                            gen_ba_multishapes, is_isomorphic, motif_graph,
                            read_graphs, split, subgraph_from_edges, write_graphs)


def make_graph(n=4, edges=((0, 1), (1, 2), (2, 3)), label=0, d_n=1, d_e=1):
    return Graph(n, list(edges), np.ones((n, d_n)), np.ones((len(edges), d_e)), label=label)


class TestGraphInvariants:
    def test_self_loop_rejected(self):
        with pytest.raises(GraphValidationError):
            make_graph(edges=[(1, 1)])

    def test_out_of_range_endpoint(self):
        with pytest.raises(GraphValidationError):
            make_graph(edges=[(0, 9)])

    def test_duplicate_edge(self):
        with pytest.raises(GraphValidationError):
            make_graph(edges=[(0, 1), (0, 1), (1, 2)])

    def test_non_canonical_order(self):
        with pytest.raises(GraphValidationError):
            make_graph(edges=[(1, 0)])

    def test_feature_rows_must_match(self):
        with pytest.raises(GraphValidationError):
            Graph(3, [(0, 1)], np.ones((2, 1)), np.ones((1, 1)))


class TestGenBa:
    def test_tree_edge_count(self):
        edges = gen_ba(5, 1, np.random.default_rng(0))
        assert len(edges) == 4

    def test_connectivity(self):
        edges = gen_ba(20, 1, np.random.default_rng(1))
        assert edges_connected(edges)

    def test_corpus_mean_edges_and_tail(self):
        """1000 seeds: trees always have n-1 edges; BA degrees are heavier-
        tailed than uniform random attachment."""
        rng_master = np.random.default_rng(2)
        max_deg_ba, max_deg_uniform = [], []
        for seed in range(1000):
            edges = gen_ba(25, 1, np.random.default_rng(seed))
            assert len(edges) == 24
            deg = np.bincount(np.asarray(edges).reshape(-1), minlength=25)
            max_deg_ba.append(deg.max())
            # oracle: uniform random recursive tree on 25 nodes
            rng = np.random.default_rng(10_000 + seed)
            u_edges = [(int(rng.integers(k)), k) for k in range(1, 25)]
            udeg = np.bincount(np.asarray(u_edges).reshape(-1), minlength=25)
            max_deg_uniform.append(udeg.max())
        assert np.mean(max_deg_ba) > np.mean(max_deg_uniform)

    def test_parameter_validation(self):
        with pytest.raises(DomainError):
            gen_ba(1, 1, np.random.default_rng(0))


@pytest.fixture(scope="module")
def ba2_corpus():
    return gen_ba2motifs(1000, seed=0)


@pytest.fixture(scope="module")
def bams_corpus():
    return gen_ba_multishapes(1000, seed=0)


class TestBa2Motifs:
    @pytest.fixture
    def ds(self, ba2_corpus):
        return ba2_corpus

    def test_table_statistics(self, ds):
        stats = dataset_stats(ds)
        assert stats["num_graphs"] == 1000
        assert abs(stats["avg_nodes"] - 25) < 0.5
        assert abs(stats["avg_edges"] - 51) < 1.5
        assert stats["num_classes"] == 2

    def test_ground_truth_subset_of_edges(self, ds):
        for g, ann in zip(ds.graphs, ds.annotations):
            assert ann.ground_truth_edges <= set(g.edges)

    def test_ground_truth_connected(self, ds):
        for ann in ds.annotations:
            for group in ann.motif_edges:
                assert edges_connected(group)

    def test_labels_decidable_from_motif_structure(self, ds):
        """Isomorphism of the annotated subgraph recovers the label exactly."""
        house = motif_graph("house")
        cycle = motif_graph("cycle")
        for g, ann in zip(ds.graphs[:200], ds.annotations[:200]):
            idx = [g.edges.index(e) for e in sorted(ann.ground_truth_edges)]
            sub = subgraph_from_edges(g, idx)
            if g.label == 1:
                assert is_isomorphic(sub, house)
            else:
                assert is_isomorphic(sub, cycle)

    def test_determinism(self):
        a = gen_ba2motifs(20, seed=7)
        b = gen_ba2motifs(20, seed=7)
        assert all(g1.edges == g2.edges for g1, g2 in zip(a.graphs, b.graphs))

    def test_count_validation(self):
        with pytest.raises(DomainError):
            gen_ba2motifs(1, seed=0)


class TestBaMultiShapes:
    @pytest.fixture
    def ds(self, bams_corpus):
        return bams_corpus

    def test_table_statistics(self, ds):
        stats = dataset_stats(ds)
        assert stats["num_graphs"] == 1000
        assert abs(stats["avg_nodes"] - 40) < 0.5
        assert stats["num_classes"] == 2

    def test_class_balance(self, ds):
        labels = ds.labels()
        assert abs(np.mean(labels) - 0.5) <= 0.01

    def test_class1_has_exactly_two_motifs(self, ds):
        for g, ann in zip(ds.graphs, ds.annotations):
            if g.label == 1:
                assert len(ann.motif_names) == 2

    def test_class0_motif_counts(self, ds):
        for g, ann in zip(ds.graphs, ds.annotations):
            if g.label == 0:
                assert len(ann.motif_names) in (0, 1, 3)


class TestSplit:
    def test_80_10_10(self):
        ds = split(gen_ba2motifs(1000, 0), {"train": 0.8, "val": 0.1, "test": 0.1}, seed=0)
        assert len(ds.indices("train")) == 800
        assert len(ds.indices("val")) == 100
        assert len(ds.indices("test")) == 100

    def test_nested_seen_unseen(self):
        ds = split(gen_ba2motifs(1000, 0), {"train": 0.8, "val": 0.1, "test": 0.1},
                   seed=0, unseen=0.1)
        assert len(ds.indices("train")) == 720
        assert len(ds.indices("val")) == 90
        assert len(ds.indices("test")) == 90
        assert len(ds.indices("unseen")) == 100

    def test_stratified(self):
        ds = split(gen_ba2motifs(100, 0), {"train": 0.8, "val": 0.1, "test": 0.1}, seed=1)
        labels = ds.labels()
        for part in ("train", "val", "test"):
            idx = ds.indices(part)
            assert abs(np.mean(labels[idx]) - 0.5) < 0.11

    def test_deterministic(self):
        base = gen_ba2motifs(100, 0)
        a = split(base, {"train": 0.8, "val": 0.1, "test": 0.1}, seed=3)
        b = split(base, {"train": 0.8, "val": 0.1, "test": 0.1}, seed=3)
        assert a.split == b.split

    def test_bad_ratios(self):
        with pytest.raises(DomainError):
            split(gen_ba2motifs(10, 0), {"train": 0.5, "val": 0.1, "test": 0.1}, seed=0)

    def test_class_too_small(self):
        ds = gen_ba2motifs(4, 0)
        with pytest.raises(DomainError):
            split(ds, {"train": 0.8, "val": 0.1, "test": 0.1}, seed=0, unseen=0.1)


class TestFileIO:
    def test_round_trip(self, tmp_path):
        ds = split(gen_ba2motifs(50, 0), {"train": 0.8, "val": 0.1, "test": 0.1}, seed=0)
        path = tmp_path / "data.json"
        write_graphs(ds, path)
        back = read_graphs(path)
        assert back.num_classes == ds.num_classes
        assert back.split == ds.split
        for g1, g2, a1, a2 in zip(ds.graphs, back.graphs, ds.annotations, back.annotations):
            assert g1.edges == g2.edges
            assert g1.label == g2.label
            assert np.array_equal(g1.node_features, g2.node_features)
            assert a1.ground_truth_edges == a2.ground_truth_edges

    def test_byte_identical_after_reserialization(self, tmp_path):
        ds = gen_ba2motifs(30, seed=5)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_graphs(ds, p1)
        write_graphs(read_graphs(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_invalid_endpoint_names_graph(self, tmp_path):
        payload = {"num_classes": 2, "graphs": [{
            "num_nodes": 2, "edges": [[0, 5]],
            "node_features": [[1.0], [1.0]], "edge_features": [[1.0]], "label": 0}]}
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(GraphValidationError, match="graph 0"):
            read_graphs(path)

    def test_malformed_json_parse_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"num_classes": 2, "graphs": [')
        with pytest.raises(ParseError, match="line"):
            read_graphs(path)

    def test_hand_written_fixture(self, tmp_path):
        payload = {"num_classes": 2, "graphs": [
            {"num_nodes": 3, "edges": [[0, 1], [1, 2]],
             "node_features": [[1.0], [1.0], [1.0]],
             "edge_features": [[1.0], [1.0]], "label": 0, "split": "train"},
            {"num_nodes": 2, "edges": [[0, 1]],
             "node_features": [[1.0], [1.0]], "edge_features": [[1.0]],
             "label": 1, "ground_truth_edges": [[0, 1]]},
        ]}
        path = tmp_path / "two.json"
        path.write_text(json.dumps(payload))
        ds = read_graphs(path)
        assert len(ds) == 2
        assert ds.graphs[0].num_nodes == 3 and ds.graphs[0].num_edges == 2
        assert ds.graphs[1].num_nodes == 2 and ds.graphs[1].num_edges == 1
        assert ds.split == ["train", None]
        assert ds.annotations[1].ground_truth_edges == {(0, 1)}


class TestStructureUtilities:
    def test_motif_shapes(self):
        assert len(MOTIFS["house"][1]) == 6 and MOTIFS["house"][0] == 5
        assert len(MOTIFS["cycle"][1]) == 5 and MOTIFS["cycle"][0] == 5
        assert len(MOTIFS["grid"][1]) == 12 and MOTIFS["grid"][0] == 9
        assert len(MOTIFS["wheel"][1]) == 10 and MOTIFS["wheel"][0] == 6

    def test_isomorphism_permuted_house(self):
        house = motif_graph("house")
        perm = [3, 0, 4, 2, 1]
        edges = sorted((min(perm[u], perm[v]), max(perm[u], perm[v]))
                       for u, v in MOTIFS["house"][1])
        other = Graph(5, edges, np.ones((5, 1)), np.ones((6, 1)))
        assert is_isomorphic(house, other)

    def test_house_not_isomorphic_to_wheel(self):
        assert not is_isomorphic(motif_graph("house"), motif_graph("wheel"))

    def test_canonical_form_cap(self):
        with pytest.raises(DomainError):
            canonical_form(10, [])

    def test_subgraph_extraction(self):
        g = make_graph(5, edges=[(0, 1), (1, 2), (2, 3), (3, 4)])
        sub = subgraph_from_edges(g, [1, 2])
        assert sub.num_nodes == 3
        assert sub.edges == [(0, 1), (1, 2)]
