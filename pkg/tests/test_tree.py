import numpy as np
import pytest
from scipy import stats

from causalmaps import offspring as off
from causalmaps import tree as tr
from causalmaps.errors import NoBackbone, SizeLimit

D_CANON = off.mk_offspring([(0, 0.25), (2, 0.75)])
D_BINARY = off.mk_offspring([(2, 1.0)])
D_MIXED = off.mk_offspring([(0, 0.25), (1, 0.25), (2, 0.5)])


def t_star():
    # root -> {a, b}; a -> {c}; b -> {d, e}
    return tr.manual_tree({0: [1, 2], 1: [3], 2: [4, 5]}, depth_cap=2)


def check_structure(t):
    for v in range(len(t)):
        p = t.parent[v]
        if p >= 0:
            assert t.height[v] == t.height[p] + 1
            assert v in t.children(p)
        for c in t.children(v):
            assert t.parent[c] == v
    for v in range(len(t)):
        if t.on_backbone[v] and t.parent[v] >= 0:
            assert t.on_backbone[t.parent[v]]


def test_sample_gw_binary():
    t = tr.sample_gw(D_BINARY, 3, np.random.default_rng(0))
    assert tr.level_sizes(t) == [1, 2, 4, 8]
    check_structure(t)


def test_sample_gw_dies():
    t = tr.sample_gw(off.mk_offspring([(0, 1.0)]), 5, np.random.default_rng(0))
    assert tr.level_sizes(t) == [1]


def test_sample_gw_mean_growth():
    # E Z_10 = 1.5^10; CLT interval over 3000 trees
    rng = np.random.default_rng(5)
    z10 = []
    for _ in range(3000):
        t = tr.sample_gw(D_CANON, 10, rng)
        ls = tr.level_sizes(t)
        z10.append(ls[10] if len(ls) > 10 else 0)
    z10 = np.asarray(z10, dtype=float)
    se = z10.std(ddof=1) / np.sqrt(len(z10))
    assert abs(z10.mean() - 1.5**10) <= 3 * se


def test_determinism():
    a = tr.sample_gw_survived(D_CANON, 8, np.random.default_rng(17))
    b = tr.sample_gw_survived(D_CANON, 8, np.random.default_rng(17))
    assert tr.serialize_tree(a) == tr.serialize_tree(b)


def test_survived_binary_equals_plain():
    t = tr.sample_gw_survived(D_BINARY, 5, np.random.default_rng(3))
    assert tr.level_sizes(t) == [1, 2, 4, 8, 16, 32]
    assert all(t.on_backbone[v] for v in range(len(t)))


def test_survived_root_child_count_canonical():
    # mu(1)=0 and conditioning forces two children at the root
    rng = np.random.default_rng(11)
    for _ in range(300):
        t = tr.sample_gw_survived(D_CANON, 1, rng)
        assert t.n_child[0] == 2


def test_survived_structure_and_backbone_children():
    rng = np.random.default_rng(23)
    for _ in range(20):
        t = tr.sample_gw_survived(D_CANON, 8, rng)
        check_structure(t)
        for v in range(len(t)):
            if t.on_backbone[v] and t.height[v] < t.depth_cap:
                assert any(t.on_backbone[c] for c in t.children(v))


def test_backbone_child_count_law():
    # flagged skeleton reproduces the leafless law: chi-square at level 1e-3,
    # pooled over all generations below the cap of 10^4 sampled trees
    bb = off.backbone_offspring(D_CANON)
    rng = np.random.default_rng(29)
    counts = {k: 0 for k in bb.support()}
    for _ in range(10**4):
        t = tr.sample_gw_survived(D_CANON, 3, rng)
        for v in range(len(t)):
            if t.on_backbone[v] and t.height[v] < t.depth_cap:
                cb = sum(1 for c in t.children(v) if t.on_backbone[c])
                counts[cb] = counts.get(cb, 0) + 1
    total = sum(counts.values())
    observed = np.array([counts[k] for k in bb.support()])
    expected = np.array([bb.prob(k) * total for k in bb.support()])
    _, p = stats.chisquare(observed, expected)
    assert p > 1e-3


def test_root_law_matches_formula_and_rejection():
    # marginal root count law mu(k)(1-q^k)/(1-q), cross-checked by rejection
    d = D_MIXED
    q = off.extinction_prob(d)
    assert q == pytest.approx(0.5, abs=1e-10)
    law = {k: d.prob(k) * (1 - q**k) / (1 - q) for k in (1, 2)}
    rng = np.random.default_rng(31)
    n = 4000
    cond = np.array([tr.sample_gw_survived(d, 1, rng).n_child[0] for _ in range(n)])
    observed = np.array([np.sum(cond == k) for k in (1, 2)])
    expected = np.array([law[k] * n for k in (1, 2)])
    _, p = stats.chisquare(observed, expected)
    assert p > 1e-3
    # rejection oracle: unconditioned trees that reach depth 12
    rej = []
    while len(rej) < n:
        t = tr.sample_gw(d, 12, rng)
        if len(t.levels()) > 12:
            rej.append(t.n_child[0])
    rej = np.array(rej)
    table = np.array(
        [[np.sum(cond == k) for k in (1, 2)], [np.sum(rej == k) for k in (1, 2)]]
    )
    _, p2, _, _ = stats.chi2_contingency(table)
    assert p2 > 1e-3


def test_backbone_to_cap():
    t = t_star()
    assert tr.backbone_to_cap(t) == {0, 1, 2, 3, 4, 5}
    t2 = tr.sample_gw(D_BINARY, 3, np.random.default_rng(0))
    assert tr.backbone_to_cap(t2) == set(range(len(t2)))
    t3 = tr.manual_tree({0: [1]}, depth_cap=2)
    assert tr.backbone_to_cap(t3) == set()


def test_level_sizes_examples():
    assert tr.level_sizes(t_star()) == [1, 2, 3]
    assert tr.level_sizes(tr.manual_tree({}, depth_cap=0)) == [1]
    t = tr.sample_gw(D_BINARY, 4, np.random.default_rng(0))
    assert tr.level_sizes(t) == [1, 2, 4, 8, 16]


def test_serialization_roundtrip():
    for t in (t_star(), tr.sample_gw_survived(D_CANON, 7, np.random.default_rng(4))):
        text = tr.serialize_tree(t)
        t2 = tr.deserialize_tree(text)
        assert tr.serialize_tree(t2) == text
        assert t2.depth_cap == t.depth_cap and t2.kind == t.kind


def test_size_limit():
    with pytest.raises(SizeLimit):
        tr.sample_gw(D_BINARY, 25, np.random.default_rng(0), max_vertices=1000)


def test_extend_to_depth():
    rng = np.random.default_rng(41)
    t = tr.sample_gw_survived(D_CANON, 5, rng)
    n_before = len(t)
    tr.extend_to_depth(t, D_CANON, 9, rng)
    assert t.depth_cap == 9
    assert len(t) > n_before
    check_structure(t)
    # the skeleton still reaches the new cap
    per_level = tr.require_backbone(t)
    assert len(per_level) == 10 and all(per_level[h] for h in range(10))


def test_require_backbone_raises():
    t = tr.manual_tree({0: [1]}, depth_cap=3)
    with pytest.raises(NoBackbone):
        tr.require_backbone(t)
