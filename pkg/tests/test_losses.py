import numpy as np
import pytest

from tgcl import DataError, LossConfig, infonce, multi_view_loss
from tgcl.model import ViewEmbeddings


def _unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _brute_force(q, k, tau):
    """Naive per-row softmax cross-entropy oracle."""
    n = q.shape[0]
    total = 0.0
    for i in range(n):
        logits = np.array([q[i] @ k[j] / tau for j in range(n)])
        total += -(logits[i] - np.log(np.sum(np.exp(logits))))
    return total / n


def test_single_item_loss_zero():
    q = np.array([[0.6, 0.8]])
    k = np.array([[1.0, 0.0]])
    loss, gq, gk = infonce(q, k, 0.5)
    assert loss == 0.0
    np.testing.assert_allclose(gq, 0.0, atol=1e-15)
    np.testing.assert_allclose(gk, 0.0, atol=1e-15)


def test_all_equal_rows_ln_n():
    for n in (2, 5, 17):
        q = np.tile([1.0, 0.0, 0.0], (n, 1))
        loss, _, _ = infonce(q, q.copy(), 0.5)
        assert loss == pytest.approx(np.log(n), abs=1e-9)


def test_orthonormal_pair_value():
    # two orthogonal unit rows, tau=1: loss = ln(1 + e^-1) = 0.31326...
    q = np.eye(2)
    loss, _, _ = infonce(q, q.copy(), 1.0)
    assert loss == pytest.approx(np.log(1.0 + np.exp(-1.0)), abs=1e-12)
    assert loss == pytest.approx(0.31326, abs=1e-4)


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    for tau in (0.3, 0.5, 1.0):
        q = _unit_rows(rng, 9, 6)
        k = _unit_rows(rng, 9, 6)
        loss, _, _ = infonce(q, k, tau)
        assert loss == pytest.approx(_brute_force(q, k, tau), abs=1e-12)


def test_large_logits_stable():
    # max-subtraction keeps huge logits finite
    q = np.array([[1e3, 0.0], [0.0, 1e3]])
    loss, gq, gk = infonce(q, q.copy(), 1e-2)
    assert np.isfinite(loss)
    assert np.all(np.isfinite(gq)) and np.all(np.isfinite(gk))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    q = _unit_rows(rng, 5, 4)
    k = _unit_rows(rng, 5, 4)
    tau = 0.5
    loss, gq, gk = infonce(q, k, tau)
    h = 1e-5
    for arr, grad in ((q, gq), (k, gk)):
        fd = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            i = it.multi_index
            orig = arr[i]
            arr[i] = orig + h
            up, _, _ = infonce(q, k, tau)
            arr[i] = orig - h
            dn, _, _ = infonce(q, k, tau)
            arr[i] = orig
            fd[i] = (up - dn) / (2 * h)
            it.iternext()
        rel = np.max(np.abs(grad - fd)) / max(1e-6, np.max(np.abs(grad)), np.max(np.abs(fd)))
        assert rel < 1e-6


def test_input_validation():
    with pytest.raises(ValueError, match="equal-shape"):
        infonce(np.zeros((2, 3)), np.zeros((3, 3)), 0.5)
    with pytest.raises(ValueError, match="empty batch"):
        infonce(np.zeros((0, 3)), np.zeros((0, 3)), 0.5)
    with pytest.raises(ValueError, match="positive"):
        infonce(np.ones((2, 2)), np.ones((2, 2)), 0.0)


def test_loss_config_validation():
    LossConfig("node", 0.5).validate()
    LossConfig("graph", 2.0).validate()
    with pytest.raises(DataError, match="unknown loss level"):
        LossConfig("edge", 0.5).validate()
    with pytest.raises(DataError, match="positive"):
        LossConfig("node", 0.0).validate()


def _views(rng, v, n, d, with_neigh=True):
    idx = np.arange(n)
    out = []
    for _ in range(v):
        out.append(
            ViewEmbeddings(
                node_z=_unit_rows(rng, n, d),
                neigh_z=_unit_rows(rng, n, d) if with_neigh else None,
                node_index=idx,
            )
        )
    return out


def test_two_view_node_level_symmetric_average():
    rng = np.random.default_rng(2)
    emb = _views(rng, 2, 7, 4)
    loss, _ = multi_view_loss(emb, LossConfig("node", 0.5))
    l12, _, _ = infonce(emb[0].node_z, emb[1].node_z, 0.5)
    l21, _, _ = infonce(emb[1].node_z, emb[0].node_z, 0.5)
    assert loss == pytest.approx((l12 + l21) / 2, abs=1e-12)


def test_two_view_graph_level_uses_neighborhoods():
    rng = np.random.default_rng(3)
    emb = _views(rng, 2, 7, 4)
    loss, _ = multi_view_loss(emb, LossConfig("graph", 0.5))
    l12, _, _ = infonce(emb[0].node_z, emb[1].neigh_z, 0.5)
    l21, _, _ = infonce(emb[1].node_z, emb[0].neigh_z, 0.5)
    assert loss == pytest.approx((l12 + l21) / 2, abs=1e-12)


def test_three_view_matches_naive_triple_loop():
    rng = np.random.default_rng(4)
    for level in ("node", "graph"):
        emb = _views(rng, 3, 6, 5)
        loss, _ = multi_view_loss(emb, LossConfig(level, 0.4))
        total = 0.0
        for qi in range(3):
            for ki in range(3):
                if qi == ki:
                    continue
                k = emb[ki].node_z if level == "node" else emb[ki].neigh_z
                total += _brute_force(emb[qi].node_z, k, 0.4)
        assert loss == pytest.approx(total / 6, abs=1e-10)


def test_view_permutation_symmetry():
    rng = np.random.default_rng(5)
    emb = _views(rng, 3, 6, 4)
    base, _ = multi_view_loss(emb, LossConfig("node", 0.5))
    for perm in ((1, 0, 2), (2, 1, 0), (1, 2, 0)):
        loss, _ = multi_view_loss([emb[i] for i in perm], LossConfig("node", 0.5))
        assert loss == pytest.approx(base, abs=1e-12)


def test_aligned_views_are_a_minimum():
    # equal views score lower than independently drawn ones
    rng = np.random.default_rng(6)
    z = _unit_rows(rng, 16, 8)
    idx = np.arange(16)
    same = [ViewEmbeddings(z, None, idx), ViewEmbeddings(z.copy(), None, idx)]
    aligned, _ = multi_view_loss(same, LossConfig("node", 0.5))
    worse = 0.0
    trials = 20
    for _ in range(trials):
        other = [ViewEmbeddings(_unit_rows(rng, 16, 8), None, idx) for _ in range(2)]
        l, _ = multi_view_loss(other, LossConfig("node", 0.5))
        worse += l / trials
        assert aligned < l
    assert aligned < worse


def test_multi_view_gradients_match_fd():
    rng = np.random.default_rng(7)
    h = 1e-5
    for level in ("node", "graph"):
        emb = _views(rng, 3, 4, 3)
        cfg = LossConfig(level, 0.6)
        _, zgrads = multi_view_loss(emb, cfg)
        for vi, e in enumerate(emb):
            arrays = [("node_z", e.node_z, zgrads[vi][0])]
            if level == "graph":
                arrays.append(("neigh_z", e.neigh_z, zgrads[vi][1]))
            for name, arr, grad in arrays:
                fd = np.zeros_like(arr)
                it = np.nditer(arr, flags=["multi_index"])
                while not it.finished:
                    i = it.multi_index
                    orig = arr[i]
                    arr[i] = orig + h
                    up, _ = multi_view_loss(emb, cfg)
                    arr[i] = orig - h
                    dn, _ = multi_view_loss(emb, cfg)
                    arr[i] = orig
                    fd[i] = (up - dn) / (2 * h)
                    it.iternext()
                rel = np.max(np.abs(grad - fd)) / max(1e-6, np.max(np.abs(grad)), np.max(np.abs(fd)))
                assert rel < 1e-6, (level, vi, name)
        # node-level zgrads carry no neighborhood component
        if level == "node":
            assert all(g[1] is None for g in zgrads)


def test_misaligned_views_rejected():
    rng = np.random.default_rng(8)
    a = ViewEmbeddings(_unit_rows(rng, 5, 4), None, np.arange(5))
    b = ViewEmbeddings(_unit_rows(rng, 5, 4), None, np.arange(1, 6))
    with pytest.raises(ValueError, match="misaligned"):
        multi_view_loss([a, b], LossConfig("node", 0.5))
    c = ViewEmbeddings(_unit_rows(rng, 6, 4), None, np.arange(6))
    with pytest.raises(ValueError, match="shape"):
        multi_view_loss([a, c], LossConfig("node", 0.5))
    with pytest.raises(ValueError, match="at least 2"):
        multi_view_loss([a], LossConfig("node", 0.5))


def test_graph_level_requires_neighborhoods():
    rng = np.random.default_rng(9)
    emb = _views(rng, 2, 5, 4, with_neigh=False)
    with pytest.raises(ValueError, match="neighborhood"):
        multi_view_loss(emb, LossConfig("graph", 0.5))
