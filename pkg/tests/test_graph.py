import numpy as np
import pytest

from tgcl import (
    DataError,
    full_view,
    load_temporal_graph,
    slice_interval,
    synthesize_features,
    to_snapshots,
)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_basic(tmp_path):
    p = _write(tmp_path, "e.csv", "0,1,5.0\n1,2,7.0\n")
    g = load_temporal_graph(p)
    assert g.num_nodes == 3
    assert g.num_edges == 2
    assert g.t_min == 5.0 and g.t_max == 7.0
    assert g.timespan == 2.0


def test_load_empty_file(tmp_path):
    p = _write(tmp_path, "e.csv", "")
    with pytest.raises(DataError, match="no edges"):
        load_temporal_graph(p)


def test_load_comments_and_blanks_ignored(tmp_path):
    p = _write(tmp_path, "e.csv", "# header\n\n0,1,5.0\n# mid\n1,2,7.0\n")
    g = load_temporal_graph(p)
    assert g.num_edges == 2


def test_load_single_timestamp(tmp_path):
    # degenerate Dt = 0 loads fine; downstream sampling rejects it
    p = _write(tmp_path, "e.csv", "0,1,3.0\n1,2,3.0\n2,0,3.0\n")
    g = load_temporal_graph(p)
    assert g.t_min == g.t_max == 3.0
    assert g.timespan == 0.0
    with pytest.raises(DataError, match="degenerate timespan"):
        to_snapshots(g, 2)


def test_load_malformed_line_reports_lineno(tmp_path):
    p = _write(tmp_path, "e.csv", "0,1,5.0\n0,oops,6.0\n")
    with pytest.raises(DataError, match=r":2:"):
        load_temporal_graph(p)
    p2 = _write(tmp_path, "e2.csv", "0,1,5.0\n0,1\n")
    with pytest.raises(DataError, match=r":2:"):
        load_temporal_graph(p2)


def test_load_nonfinite_timestamp(tmp_path):
    p = _write(tmp_path, "e.csv", "0,1,nan\n")
    with pytest.raises(DataError, match="non-finite"):
        load_temporal_graph(p)
    p2 = _write(tmp_path, "e2.csv", "0,1,inf\n")
    with pytest.raises(DataError, match="non-finite"):
        load_temporal_graph(p2)


def test_load_negative_id(tmp_path):
    p = _write(tmp_path, "e.csv", "-1,1,5.0\n")
    with pytest.raises(DataError, match="negative node id"):
        load_temporal_graph(p)


def test_external_ids_remapped_dense_sorted(tmp_path):
    p = _write(tmp_path, "e.csv", "50,7,1.0\n7,1000,2.0\n")
    g = load_temporal_graph(p)
    assert g.node_ids.tolist() == [7, 50, 1000]
    # stored direction preserved under the remap
    assert g.src.tolist() == [1, 0]
    assert g.dst.tolist() == [0, 2]


def test_features_file(tmp_path):
    e = _write(tmp_path, "e.csv", "0,1,1.0\n")
    f = _write(tmp_path, "f.csv", "0,1.5,2.5\n1,3.5,4.5\n")
    g = load_temporal_graph(e, features_path=f)
    assert g.features.shape == (2, 2)
    np.testing.assert_allclose(g.features, [[1.5, 2.5], [3.5, 4.5]])


def test_features_dim_mismatch(tmp_path):
    e = _write(tmp_path, "e.csv", "0,1,1.0\n")
    f = _write(tmp_path, "f.csv", "0,1.0,2.0\n1,3.0\n")
    with pytest.raises(DataError, match="dimension"):
        load_temporal_graph(e, features_path=f)


def test_features_duplicate_id(tmp_path):
    e = _write(tmp_path, "e.csv", "0,1,1.0\n")
    f = _write(tmp_path, "f.csv", "0,1.0\n0,2.0\n")
    with pytest.raises(DataError, match="duplicate node id"):
        load_temporal_graph(e, features_path=f)


def test_labels_integer(tmp_path):
    e = _write(tmp_path, "e.csv", "0,1,1.0\n1,2,2.0\n")
    l = _write(tmp_path, "l.csv", "0,3\n2,1\n")
    g = load_temporal_graph(e, labels_path=l)
    assert g.labels.tolist() == [3, -1, 1]
    assert g.label_names is None
    assert g.labeled_nodes().tolist() == [0, 2]


def test_labels_string_interned_by_first_occurrence(tmp_path):
    e = _write(tmp_path, "e.csv", "0,1,1.0\n1,2,2.0\n")
    l = _write(tmp_path, "l.csv", "1,cat\n0,dog\n2,cat\n")
    g = load_temporal_graph(e, labels_path=l)
    assert g.label_names == ("cat", "dog")
    assert g.labels.tolist() == [1, 0, 0]


def test_labels_duplicate_id(tmp_path):
    e = _write(tmp_path, "e.csv", "0,1,1.0\n")
    l = _write(tmp_path, "l.csv", "0,1\n0,2\n")
    with pytest.raises(DataError, match="duplicate node id"):
        load_temporal_graph(e, labels_path=l)


def test_node_table_is_union_of_all_files(tmp_path):
    # ids only present in features/labels still enter the node table
    e = _write(tmp_path, "e.csv", "0,1,1.0\n")
    f = _write(tmp_path, "f.csv", "0,1.0\n1,2.0\n5,3.0\n")
    l = _write(tmp_path, "l.csv", "9,0\n")
    g = load_temporal_graph(e, features_path=f, labels_path=l)
    assert g.node_ids.tolist() == [0, 1, 5, 9]


def test_loader_determinism(tmp_path):
    rng = np.random.default_rng(3)
    lines = [f"{rng.integers(0, 50)},{rng.integers(0, 50)},{rng.uniform(0, 10)}" for _ in range(200)]
    p = _write(tmp_path, "e.csv", "\n".join(lines) + "\n")
    g1 = load_temporal_graph(p, feature_policy="random", feature_dim=8, feature_seed=1)
    g2 = load_temporal_graph(p, feature_policy="random", feature_dim=8, feature_seed=1)
    assert np.array_equal(g1.node_ids, g2.node_ids)
    assert np.array_equal(g1.src, g2.src)
    assert np.array_equal(g1.timestamps, g2.timestamps)
    assert np.array_equal(g1.features, g2.features)


def test_slice_closed_interval(tmp_path):
    p = _write(tmp_path, "e.csv", "0,1,1.0\n1,2,2.0\n2,0,3.0\n")
    g = load_temporal_graph(p)
    view = slice_interval(g, 2.0, 3.0)
    assert sorted(view.timestamps.tolist()) == [2.0, 3.0]
    assert not view.is_empty


def test_slice_disjoint_window_is_empty(tmp_path):
    p = _write(tmp_path, "e.csv", "0,1,1.0\n1,2,2.0\n2,0,3.0\n")
    g = load_temporal_graph(p)
    view = slice_interval(g, 10.0, 11.0)
    assert view.is_empty
    assert view.num_active == 0
    assert view.features.shape[0] == 0


def test_slice_brute_force_count(tmp_path):
    rng = np.random.default_rng(11)
    ts = rng.uniform(0, 100, size=100)
    lines = [f"{rng.integers(0, 30)},{rng.integers(0, 30)},{t}" for t in ts]
    p = _write(tmp_path, "e.csv", "\n".join(lines) + "\n")
    g = load_temporal_graph(p)
    view = slice_interval(g, 25.0, 75.0)
    expect = sum(1 for t in g.timestamps if 25.0 <= t <= 75.0)
    assert view.num_edges == expect


def test_slice_monotonicity(tmp_path):
    rng = np.random.default_rng(5)
    lines = [f"{rng.integers(0, 20)},{rng.integers(0, 20)},{rng.uniform(0, 50)}" for _ in range(80)]
    p = _write(tmp_path, "e.csv", "\n".join(lines) + "\n")
    g = load_temporal_graph(p)
    inner = slice_interval(g, 10.0, 20.0)
    outer = slice_interval(g, 5.0, 30.0)
    inner_ts = set(inner.timestamps.tolist())
    outer_ts = set(outer.timestamps.tolist())
    assert inner_ts <= outer_ts
    assert set(inner.active.tolist()) <= set(outer.active.tolist())


def test_slice_active_nodes_and_features(tmp_path):
    p = _write(tmp_path, "e.csv", "0,1,1.0\n1,2,2.0\n3,4,9.0\n")
    f = _write(tmp_path, "f.csv", "\n".join(f"{i},{float(i)},{float(i) * 2}" for i in range(5)) + "\n")
    g = load_temporal_graph(p, features_path=f)
    view = slice_interval(g, 0.0, 3.0)
    assert view.active.tolist() == [0, 1, 2]
    np.testing.assert_allclose(view.features, g.features[[0, 1, 2]])
    # local positions point back at the right active nodes
    assert view.active[view.src].tolist() == [0, 1]
    assert view.active[view.dst].tolist() == [1, 2]


def test_local_index_of_rejects_inactive(tmp_path):
    p = _write(tmp_path, "e.csv", "0,1,1.0\n3,4,9.0\n")
    g = load_temporal_graph(p)
    view = slice_interval(g, 0.0, 2.0)
    assert view.local_index_of(np.array([0, 1])).tolist() == [0, 1]
    with pytest.raises(DataError, match="not active"):
        view.local_index_of(np.array([3]))


def test_snapshot_partition_boundaries(tmp_path):
    # edges exactly on the quarter boundaries of [0, 100]
    ts = [0.0, 24.999, 25.0, 50.0, 74.999, 75.0, 100.0]
    lines = [f"{i},{i + 1},{t}" for i, t in enumerate(ts)]
    p = _write(tmp_path, "e.csv", "\n".join(lines) + "\n")
    g = load_temporal_graph(p)
    seq = to_snapshots(g, 4)
    counts = [snap.num_edges for snap in seq.snapshots]
    # [0,25) [25,50) [50,75) [75,100]: boundary edges open the next bin
    assert counts == [2, 1, 2, 2]
    assert seq[3].timestamps.tolist() == [75.0, 100.0]


def test_snapshot_identity_case(tmp_path):
    p = _write(tmp_path, "e.csv", "0,1,0.0\n1,2,5.0\n2,0,10.0\n")
    g = load_temporal_graph(p)
    seq = to_snapshots(g, 1)
    assert len(seq) == 1
    assert np.array_equal(seq[0].timestamps, g.timestamps)
    assert np.array_equal(seq[0].src, g.src)


def test_snapshot_edge_conservation(tmp_path):
    rng = np.random.default_rng(17)
    lines = [f"{rng.integers(0, 40)},{rng.integers(0, 40)},{rng.uniform(0, 60)}" for _ in range(1000)]
    p = _write(tmp_path, "e.csv", "\n".join(lines) + "\n")
    g = load_temporal_graph(p)
    for s in (1, 3, 7):
        seq = to_snapshots(g, s)
        assert sum(snap.num_edges for snap in seq.snapshots) == 1000
        merged = np.sort(np.concatenate([snap.timestamps for snap in seq.snapshots]))
        assert np.array_equal(merged, np.sort(g.timestamps))


def test_snapshots_share_node_table(tmp_path):
    p = _write(tmp_path, "e.csv", "0,1,0.0\n2,3,10.0\n")
    g = load_temporal_graph(p)
    seq = to_snapshots(g, 2)
    for snap in seq.snapshots:
        assert np.array_equal(snap.node_ids, g.node_ids)
        assert snap.features is g.features


def test_degree_bucket_features(tmp_path):
    p = _write(tmp_path, "e.csv", "0,1,1.0\n0,2,2.0\n0,3,3.0\n")
    g = load_temporal_graph(p)
    assert g.features.shape == (4, 32)
    # one-hot rows
    np.testing.assert_allclose(g.features.sum(axis=1), 1.0)
    # node 0 has degree 3 (bucket 2), the leaves degree 1 (bucket 1)
    assert g.features[0, 2] == 1.0
    for i in (1, 2, 3):
        assert g.features[i, 1] == 1.0


def test_random_features_unit_norm_and_seeded():
    deg = np.array([1, 2, 3])
    a = synthesize_features(3, deg, "random", 16, seed=4)
    b = synthesize_features(3, deg, "random", 16, seed=4)
    c = synthesize_features(3, deg, "random", 16, seed=5)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_unknown_feature_policy():
    with pytest.raises(DataError, match="unknown feature policy"):
        synthesize_features(2, np.array([1, 1]), "fancy", 8)


def test_full_view_includes_isolated_nodes(tmp_path):
    e = _write(tmp_path, "e.csv", "0,1,1.0\n")
    f = _write(tmp_path, "f.csv", "0,1.0\n1,2.0\n7,3.0\n")
    g = load_temporal_graph(e, features_path=f)
    view = full_view(g)
    assert view.num_active == 3
    assert view.features.shape == (3, 1)
