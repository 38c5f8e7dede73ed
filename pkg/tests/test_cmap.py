import numpy as np
import pytest

from causalmaps import cmap as cm
from causalmaps import offspring as off
from causalmaps import tree as tr
from causalmaps.errors import Mu0Positive, NoBackbone, UnknownVertex
from causalmaps.lazymap import LazyLayeredMap

D_CANON = off.mk_offspring([(0, 0.25), (2, 0.75)])
D_BINARY = off.mk_offspring([(2, 1.0)])


def t_star():
    return tr.manual_tree({0: [1, 2], 1: [3], 2: [4, 5]}, depth_cap=2)


def test_degrees_t_star():
    m = cm.build_causal(t_star())
    assert cm.degree(m, 2) == 5  # two children, parent, two parallel edges across
    assert cm.degree(m, 0) == 2  # root degree equals its child count
    assert cm.degree(m, 1) == 4
    assert cm.degree(m, 3) == 3  # parent, neighbour, wrap


def test_path_tree_map_is_path():
    t = tr.manual_tree({0: [1], 1: [2], 2: [3]}, depth_cap=3)
    m = cm.build_causal(t)
    assert m.n_edges == 3
    assert all(int(k) == cm.VERTICAL for k in m.edge_kind)


def test_wrap_level_conventions():
    t = t_star()
    m = cm.build_causal(t)
    # level of size 2 keeps both parallel edges
    lvl1 = [e for e in range(m.n_edges) if int(m.edge_kind[e]) in (cm.HORIZONTAL, cm.WRAP)
            and int(m.height[m.edge_u[e]]) == 1]
    assert len(lvl1) == 2
    # level of size 1 gets no self-loop
    lvl0 = [e for e in range(m.n_edges) if int(m.height[m.edge_u[e]]) == 0
            and int(m.edge_kind[e]) != cm.VERTICAL]
    assert lvl0 == []
    # level of size 3 has 2 adjacencies plus one wrap
    lvl2 = [int(m.edge_kind[e]) for e in range(m.n_edges)
            if int(m.edge_kind[e]) in (cm.HORIZONTAL, cm.WRAP) and int(m.height[m.edge_u[e]]) == 2]
    assert sorted(lvl2) == [cm.HORIZONTAL, cm.HORIZONTAL, cm.WRAP]


def test_degree_formula_sampled():
    rng = np.random.default_rng(2)
    for _ in range(5):
        t = tr.sample_gw_survived(D_CANON, 9, rng)
        m = cm.build_causal(t)
        for v in range(m.n_vertices):
            if v == m.root or int(m.height[v]) >= m.depth_cap:
                continue
            assert cm.degree(m, v) == int(m.n_children[v]) + 3


def test_height_lipschitz():
    from causalmaps import metric as mt

    t = tr.sample_gw_survived(D_CANON, 8, np.random.default_rng(3))
    m = cm.build_causal(t)
    rng = np.random.default_rng(4)
    for _ in range(20):
        u = int(rng.integers(m.n_vertices))
        dist = mt.bfs_distances(m, u)
        vs = rng.integers(0, m.n_vertices, size=50)
        for v in vs:
            assert abs(int(m.height[u]) - int(m.height[v])) <= int(dist[v])


def test_planarity_euler():
    rng = np.random.default_rng(5)
    for _ in range(5):
        t = tr.sample_gw_survived(D_CANON, 8, rng)
        assert cm.euler_genus(cm.build_causal(t)) == 0
        assert cm.euler_genus(cm.build_slice(t)) == 0


def test_slice_of_t_star():
    s = cm.build_slice(t_star())
    assert s.n_vertices == 6
    lvl2 = [e for e in range(s.n_edges) if int(s.edge_kind[e]) != cm.VERTICAL
            and int(s.height[s.edge_u[e]]) == 2]
    assert len(lvl2) == 2  # c-d and d-e only, no wrap
    assert cm.degree(s, 3) == 2
    assert s.gamma_left == [0, 1, 3]
    assert s.gamma_right == [0, 2, 5]


def test_slice_binary_is_causal_minus_wraps():
    t = tr.sample_gw(D_BINARY, 5, np.random.default_rng(0))
    mc = cm.build_causal(t)
    ms = cm.build_slice(t)
    wraps = int(np.sum(mc.edge_kind == cm.WRAP))
    assert ms.n_edges == mc.n_edges - wraps
    assert ms.n_vertices == mc.n_vertices


def test_slice_boundary_extremes():
    rng = np.random.default_rng(6)
    for _ in range(5):
        t = tr.sample_gw_survived(D_CANON, 9, rng)
        s = cm.build_slice(t)
        for h, level in enumerate(s.levels):
            assert s.gamma_left[h] == level[0]
            assert s.gamma_right[h] == level[-1]
            horiz = [e for e in range(s.n_edges) if int(s.edge_kind[e]) == cm.HORIZONTAL
                     and int(s.height[s.edge_u[e]]) == h]
            assert len(horiz) == len(level) - 1  # interior levels are paths


def test_slice_requires_backbone():
    t = tr.manual_tree({0: [1]}, depth_cap=3)
    with pytest.raises(NoBackbone):
        cm.build_slice(t)


def test_neighbors_rotation():
    m = cm.build_causal(t_star())
    nb = cm.neighbors(m, 2)  # vertex b
    assert len(nb) == 5
    far = [w for _, w in nb]
    assert far.count(1) == 2  # parallel edges to a appear twice
    assert far[0] == 0  # parent first in rotation
    # determinism
    assert cm.neighbors(m, 2) == nb
    with pytest.raises(UnknownVertex):
        cm.degree(m, 99)


def test_halfplane_degrees_and_growth():
    m = cm.build_halfplane(D_BINARY, window=2, depth_cap=3, rng=7)
    root = m.root
    ends, klo, khi = m.walk_ends(root)
    assert len(ends) == 5 and khi - klo == 2
    stub = m.col_stub[0]
    assert m.degree(stub) == 1
    kid = m.ensure_kids(root)[0]
    assert m.degree(kid) == 5
    # window exhaustion grows instead of failing
    v = root
    for _ in range(40):
        v = m.right_of(v)
        assert v is not None


def test_halfplane_rejects_leafy_law():
    with pytest.raises(Mu0Positive):
        cm.build_halfplane(D_CANON, window=1, depth_cap=2, rng=1)


def test_lazy_causal_matches_materialized_binary():
    lm = LazyLayeredMap.causal(D_BINARY, 11)
    t = tr.sample_gw(D_BINARY, 5, np.random.default_rng(0))
    mm = cm.build_causal(t)
    # same degree profile per height for the deterministic binary tree
    for h in range(5):
        lv = mm.levels[h][0]
        lazy_v = lm.root
        for _ in range(h):
            lazy_v = lm.ensure_kids(lazy_v)[0]
        assert len(lm.walk_ends(lazy_v)[0]) == cm.degree(mm, lv)


def test_map_serialization_text():
    m = cm.build_causal(t_star())
    text = cm.serialize_map(m)
    lines = text.splitlines()
    assert lines[0].startswith("# causalmaps-map kind=causal")
    assert sum(1 for ln in lines if ln.startswith("v ")) == m.n_vertices
    assert sum(1 for ln in lines if ln.startswith("e ")) == m.n_edges
    assert any(ln.endswith(" wrap") for ln in lines)
