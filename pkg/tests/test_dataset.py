import numpy as np
import pytest

from src.core.errors import ParseError, SplitError
from src.graph.dataset import load_dataset, make_split, row_normalize, save_dataset
from src.scripts.make_toy_dataset import write_three_node


@pytest.fixture
def three_node(tmp_path):
    return write_three_node(tmp_path / "toy")


class TestLoadDataset:
    def test_three_node_fixture(self, three_node):
        ds = load_dataset(*three_node, row_normalize_features=False)
        assert ds.stats() == (3, 2, 2, 3)
        assert ds.class_names == ("alpha", "beta")
        assert ds.node_ids == ("n0", "n1", "n2")
        np.testing.assert_array_equal(ds.labels, [0, 1, 0])
        np.testing.assert_array_equal(ds.adjacency.toarray(), [[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        np.testing.assert_array_equal(ds.features[0], [1.0, 0.0, 1.0])

    def test_round_trip(self, three_node, tmp_path):
        ds = load_dataset(*three_node, row_normalize_features=False)
        content, edges = tmp_path / "copy.content", tmp_path / "copy.cites"
        save_dataset(ds, content, edges)
        again = load_dataset(content, edges, row_normalize_features=False)
        np.testing.assert_array_equal(again.features, ds.features)
        np.testing.assert_array_equal(again.labels, ds.labels)
        np.testing.assert_array_equal(again.adjacency.toarray(), ds.adjacency.toarray())
        assert again.node_ids == ds.node_ids
        assert again.class_names == ds.class_names

    def test_row_normalized_features(self, three_node):
        ds = load_dataset(*three_node)
        np.testing.assert_allclose(ds.features.sum(axis=1), 1.0)

    def test_duplicates_and_self_loops(self, three_node, tmp_path):
        edges = tmp_path / "dups.cites"
        edges.write_text("n0\tn1\nn1\tn0\nn0\tn1\nn2\tn2\n")
        ds = load_dataset(three_node[0], edges)
        assert ds.num_edges == 1
        assert ds.num_edge_records == 3
        np.testing.assert_array_equal(ds.adjacency.diagonal(), 0.0)
        assert ds.adjacency[0, 1] == 1.0

    def test_unknown_node_reports_line(self, three_node, tmp_path):
        edges = tmp_path / "bad.cites"
        edges.write_text("n0\tn1\nn1\tghost\n")
        with pytest.raises(ParseError) as err:
            load_dataset(three_node[0], edges)
        assert err.value.line_no == 2
        assert "ghost" in str(err.value)

    def test_lenient_edges_skip_unknown(self, three_node, tmp_path):
        edges = tmp_path / "bad.cites"
        edges.write_text("n0\tn1\nn1\tghost\n")
        ds = load_dataset(three_node[0], edges, strict_edges=False)
        assert ds.num_edges == 1

    def test_ragged_features(self, three_node, tmp_path):
        content = tmp_path / "ragged.content"
        content.write_text("a\t1\t0\tx\nb\t1\ty\n")
        with pytest.raises(ParseError) as err:
            load_dataset(content, three_node[1])
        assert err.value.line_no == 2


class TestRowNormalize:
    def test_zero_row_untouched(self):
        out = row_normalize(np.array([[0.0, 0.0], [1.0, 3.0]]))
        np.testing.assert_allclose(out, [[0.0, 0.0], [0.25, 0.75]])


class TestMakeSplit:
    def test_sizes_and_disjoint(self, planted):
        assert planted.train_idx.size == 5 * planted.num_classes
        assert planted.val_idx.size == 15
        assert planted.test_idx.size == 30
        sets = [set(planted.train_idx), set(planted.val_idx), set(planted.test_idx)]
        assert not (sets[0] & sets[1]) and not (sets[0] & sets[2]) and not (sets[1] & sets[2])
        counts = np.bincount(planted.labels[planted.train_idx], minlength=planted.num_classes)
        np.testing.assert_array_equal(counts, 5)

    def test_deterministic(self, planted):
        again = make_split(planted, 5, 15, 30, seed=0)
        np.testing.assert_array_equal(again.train_idx, planted.train_idx)
        np.testing.assert_array_equal(again.val_idx, planted.val_idx)
        np.testing.assert_array_equal(again.test_idx, planted.test_idx)

    def test_zero_per_class(self, planted):
        assert make_split(planted, 0, 10, 10, seed=1).train_idx.size == 0

    def test_class_too_small(self, planted):
        with pytest.raises(SplitError):
            make_split(planted, 31, 0, 0, seed=0)

    def test_not_enough_left(self, planted):
        with pytest.raises(SplitError):
            make_split(planted, 20, 20, 20, seed=0)


@pytest.mark.slow
class TestPlanetoid:
    def test_cora_statistics(self, cora_files):
        ds = load_dataset(*cora_files)
        assert ds.stats() == (2708, 5429, 7, 1433)
        assert make_split(ds, 20, 500, 1000, seed=0).train_idx.size == 140

    def test_citeseer_statistics(self, citeseer_files):
        content, edges = citeseer_files
        ds = load_dataset(content, edges, strict_edges=False)
        # raw release: 3312 papers, 4732 citation lines, some citing papers absent from .content
        known = {line.split("\t", 1)[0] for line in content.read_text(encoding="utf-8").splitlines() if line.strip()}
        pairs = [line.split() for line in edges.read_text(encoding="utf-8").splitlines() if line.strip()]
        unknown = sum(1 for a, b in pairs if a not in known or b not in known)
        loops = sum(1 for a, b in pairs if a in known and b in known and a == b)
        assert len(pairs) == 4732
        assert (ds.num_nodes, ds.num_classes, ds.num_features) == (3312, 6, 3703)
        assert ds.num_edge_records == len(pairs) - unknown - loops
        assert ds.num_edges <= ds.num_edge_records
