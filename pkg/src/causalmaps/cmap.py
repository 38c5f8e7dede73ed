"""Layered planar maps built from plane trees.

A CausalMap stores vertices as (height, level rank) pairs, an edge list
tagged vertical/horizontal/wrap/root_stub, and a rotation system: the
incident edge-ends of every vertex in the clockwise order
[parent, left, children left-to-right, right].  Wrap edges occupy the left
slot of the leftmost vertex and the right slot of the rightmost one, which
is the cylinder embedding of the level cycles.

Conventions the degree formulas rely on (fixed here, checked in tests):
levels of size one get no self-loop, and levels of size two keep both the
adjacency edge and the wrap edge as genuine parallel edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownVertex
from .tree import PlaneTree, require_backbone

VERTICAL, HORIZONTAL, WRAP, ROOT_STUB = 0, 1, 2, 3
EDGE_KIND_NAMES = {VERTICAL: "vertical", HORIZONTAL: "horizontal", WRAP: "wrap", ROOT_STUB: "root_stub"}
EDGE_KIND_CODES = {v: k for k, v in EDGE_KIND_NAMES.items()}


@dataclass
class CausalMap:
    kind_of_map: str  # causal | slice
    height: np.ndarray
    level_index: np.ndarray
    tree_vertex: np.ndarray
    n_children: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    edge_kind: np.ndarray
    rot_offset: np.ndarray  # len n+1; rotation CSR
    rot_edge: np.ndarray
    rot_other: np.ndarray
    levels: list[list[int]]
    root: int = 0
    gamma_left: list[int] | None = None
    gamma_right: list[int] | None = None
    depth_cap: int = 0
    backbone: np.ndarray | None = None
    _adj: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    _walk_cache: dict = field(default_factory=dict, repr=False)
    _boundary_set: set | None = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.height)

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)

    def check_vertex(self, v: int) -> None:
        if not 0 <= v < self.n_vertices:
            raise UnknownVertex(f"vertex {v} not in map")

    def boundary(self) -> set[int]:
        if self.gamma_left is None:
            return set()
        return set(self.gamma_left) | set(self.gamma_right)

    def height_of(self, v: int) -> int:
        return int(self.height[v])

    def parent_of(self, v: int) -> int:
        """Tree parent within the map, -1 for the root."""
        if v == self.root:
            return -1
        lo = self.rot_offset[v]
        first = self.rot_other[lo]
        return int(first) if self.height[first] == self.height[v] - 1 else -1

    def walk_ends(self, v: int) -> tuple[tuple[int, ...], int, int]:
        """(neighbours in rotation order, kid block start, kid block end)."""
        cached = self._walk_cache.get(v)
        if cached is not None:
            return cached
        self.check_vertex(v)
        lo, hi = int(self.rot_offset[v]), int(self.rot_offset[v + 1])
        others = tuple(int(x) for x in self.rot_other[lo:hi])
        hplus = int(self.height[v]) + 1
        klo = 0
        while klo < len(others) and int(self.height[others[klo]]) != hplus:
            klo += 1
        khi = klo
        while khi < len(others) and int(self.height[others[khi]]) == hplus:
            khi += 1
        entry = (others, klo, khi)
        self._walk_cache[v] = entry
        return entry

    def is_escape_boundary(self, v: int) -> bool:
        if self._boundary_set is None:
            self._boundary_set = self.boundary()
        return v in self._boundary_set

    def ancestor_at_height(self, v: int, h: int) -> int:
        while self.height_of(v) > h:
            v = self.parent_of(v)
        if self.height_of(v) != h:
            raise ValueError(f"no ancestor at height {h}")
        return v


def degree(m: CausalMap, v: int) -> int:
    """Incident edge-end count, parallel edges included."""
    m.check_vertex(v)
    return int(m.rot_offset[v + 1] - m.rot_offset[v])


def neighbors(m: CausalMap, v: int) -> list[tuple[int, int]]:
    """Incident (edge id, far end) pairs in rotation order."""
    m.check_vertex(v)
    lo, hi = m.rot_offset[v], m.rot_offset[v + 1]
    return [(int(m.rot_edge[i]), int(m.rot_other[i])) for i in range(lo, hi)]


def _assemble(
    kind_of_map: str,
    levels: list[list[int]],
    heights: list[int],
    ranks: list[int],
    tree_vertex: list[int],
    n_children: list[int],
    parent_new: list[int],
    wrap: bool,
    depth_cap: int,
) -> CausalMap:
    n = len(heights)
    edge_u: list[int] = []
    edge_v: list[int] = []
    edge_kind: list[int] = []
    parent_edge = [-1] * n
    for v in range(n):
        p = parent_new[v]
        if p >= 0:
            parent_edge[v] = len(edge_u)
            edge_u.append(p)
            edge_v.append(v)
            edge_kind.append(VERTICAL)
    left_edge = [-1] * n
    right_edge = [-1] * n
    left_other = [-1] * n
    right_other = [-1] * n
    for level in levels:
        sz = len(level)
        if sz < 2:
            continue
        for i in range(sz - 1):
            u, w = level[i], level[i + 1]
            eid = len(edge_u)
            edge_u.append(u)
            edge_v.append(w)
            edge_kind.append(HORIZONTAL)
            right_edge[u], right_other[u] = eid, w
            left_edge[w], left_other[w] = eid, u
        if wrap:
            u, w = level[0], level[-1]
            eid = len(edge_u)
            edge_u.append(u)
            edge_v.append(w)
            edge_kind.append(WRAP)
            left_edge[u], left_other[u] = eid, w
            right_edge[w], right_other[w] = eid, u
    # rotation: [parent, left, children..., right]
    child_edges: list[list[int]] = [[] for _ in range(n)]
    child_others: list[list[int]] = [[] for _ in range(n)]
    for v in range(n):
        p = parent_new[v]
        if p >= 0:
            child_edges[p].append(parent_edge[v])
            child_others[p].append(v)
    rot_offset = np.zeros(n + 1, dtype=np.int64)
    rot_edge: list[int] = []
    rot_other: list[int] = []
    for v in range(n):
        if parent_edge[v] >= 0:
            rot_edge.append(parent_edge[v])
            rot_other.append(parent_new[v])
        if left_edge[v] >= 0:
            rot_edge.append(left_edge[v])
            rot_other.append(left_other[v])
        rot_edge.extend(child_edges[v])
        rot_other.extend(child_others[v])
        if right_edge[v] >= 0:
            rot_edge.append(right_edge[v])
            rot_other.append(right_other[v])
        rot_offset[v + 1] = len(rot_edge)
    return CausalMap(
        kind_of_map=kind_of_map,
        height=np.asarray(heights, dtype=np.int32),
        level_index=np.asarray(ranks, dtype=np.int32),
        tree_vertex=np.asarray(tree_vertex, dtype=np.int64),
        n_children=np.asarray(n_children, dtype=np.int32),
        edge_u=np.asarray(edge_u, dtype=np.int64),
        edge_v=np.asarray(edge_v, dtype=np.int64),
        edge_kind=np.asarray(edge_kind, dtype=np.int8),
        rot_offset=rot_offset,
        rot_edge=np.asarray(rot_edge, dtype=np.int64),
        rot_other=np.asarray(rot_other, dtype=np.int64),
        levels=levels,
        depth_cap=depth_cap,
    )


def build_causal(t: PlaneTree) -> CausalMap:
    """Causal map of a tree: level paths closed into cycles by wrap edges."""
    tree_levels = t.levels()
    heights, ranks, tvs, ncs, parents = [], [], [], [], []
    new_id = {}
    for level in tree_levels:
        for i, v in enumerate(level):
            new_id[v] = len(heights)
            heights.append(t.height[v])
            ranks.append(i)
            tvs.append(v)
            ncs.append(t.n_child[v])
            parents.append(-1 if t.parent[v] < 0 else new_id[t.parent[v]])
    levels = [[new_id[v] for v in level] for level in tree_levels]
    m = _assemble("causal", levels, heights, ranks, tvs, ncs, parents, wrap=True, depth_cap=t.depth_cap)
    bb = np.zeros(m.n_vertices, dtype=bool)
    for v_old, v_new in new_id.items():
        bb[v_new] = bool(t.on_backbone[v_old])
    m.backbone = bb
    return m


def build_slice(t: PlaneTree) -> CausalMap:
    """Causal slice: the map between the extreme surviving rays, no wrap edges.

    Raises NoBackbone when the tree dies before its depth cap.
    """
    backbone_levels = require_backbone(t)
    tree_levels = t.levels()
    kept_levels: list[list[int]] = []
    for h, level in enumerate(tree_levels):
        if h < len(backbone_levels) and backbone_levels[h]:
            lo = level.index(backbone_levels[h][0])
            hi = level.index(backbone_levels[h][-1])
            kept_levels.append(level[lo : hi + 1])
        else:
            kept_levels.append([])
    kept_levels = [lv for lv in kept_levels if lv]
    heights, ranks, tvs, ncs, parents = [], [], [], [], []
    new_id = {}
    for level in kept_levels:
        for i, v in enumerate(level):
            new_id[v] = len(heights)
            heights.append(t.height[v])
            ranks.append(i)
            tvs.append(v)
            parents.append(-1 if t.parent[v] < 0 else new_id[t.parent[v]])
    # child counts within the slice (pruned children of boundary vertices drop off)
    kept = set(new_id)
    for level in kept_levels:
        for v in level:
            ncs.append(sum(1 for c in t.children(v) if c in kept))
    levels = [[new_id[v] for v in level] for level in kept_levels]
    m = _assemble("slice", levels, heights, ranks, tvs, ncs, parents, wrap=False, depth_cap=t.depth_cap)
    m.gamma_left = [new_id[bb[0]] for bb in backbone_levels]
    m.gamma_right = [new_id[bb[-1]] for bb in backbone_levels]
    mask = np.zeros(m.n_vertices, dtype=bool)
    for bb in backbone_levels:
        for v in bb:
            mask[new_id[v]] = True
    m.backbone = mask
    return m


def build_halfplane(d, window: int, depth_cap: int, rng, max_vertices: int | None = None):
    """Half-plane model: i.i.d. leafless trees in a growable window, level
    paths, and a degree-1 parent stub under each tree root.

    Returns a lazily growable map (see lazymap.LazyLayeredMap): the window
    extends and deepens on demand, so walks never hit an edge-of-world error.
    """
    from .lazymap import LazyLayeredMap

    if window < 1:
        raise ValueError("window must be >= 1")
    m = LazyLayeredMap.halfplane(d, rng, max_vertices=max_vertices)
    m.prematerialize(window=window, depth=depth_cap)
    return m


# --- geometry: vertex positions and combinatorial faces ---

def positions(m: CausalMap) -> np.ndarray:
    """Planar embedding: concentric rings for causal maps, columns otherwise."""
    n = m.n_vertices
    pos = np.zeros((n, 2), dtype=np.float64)
    if m.kind_of_map == "causal":
        for level in m.levels:
            sz = len(level)
            for i, v in enumerate(level):
                r = m.height[v] + 1.0
                theta = 2.0 * np.pi * i / sz
                pos[v] = (r * np.cos(theta), r * np.sin(theta))
    else:
        for level in m.levels:
            sz = len(level)
            for i, v in enumerate(level):
                pos[v] = (i - (sz - 1) / 2.0, float(m.height[v]))
    return pos


def faces(m: CausalMap) -> list[list[int]]:
    """Face orbits as dart lists; dart 2e is edge e forward, 2e+1 backward."""
    n_darts = 2 * m.n_edges
    rot_darts = _rotation_darts(m)
    nxt = np.full(n_darts, -1, dtype=np.int64)
    pos_in_rot = {}
    for v, darts in enumerate(rot_darts):
        for i, d in enumerate(darts):
            pos_in_rot[d] = (v, i)
    for d in range(n_darts):
        rd = d ^ 1
        v, i = pos_in_rot[rd]
        darts = rot_darts[v]
        nxt[d] = darts[(i + 1) % len(darts)]
    seen = np.zeros(n_darts, dtype=bool)
    out: list[list[int]] = []
    for d0 in range(n_darts):
        if seen[d0]:
            continue
        cyc = []
        d = d0
        while not seen[d]:
            seen[d] = True
            cyc.append(d)
            d = int(nxt[d])
        out.append(cyc)
    return out


def _rotation_darts(m: CausalMap) -> list[list[int]]:
    """Darts originating at each vertex, in rotation order.

    No self-loops exist (size-1 levels get none), so the tail determines the
    dart; parallel edges are distinct edge ids and stay unambiguous.
    """
    rot: list[list[int]] = [[] for _ in range(m.n_vertices)]
    for v in range(m.n_vertices):
        lo, hi = m.rot_offset[v], m.rot_offset[v + 1]
        for i in range(lo, hi):
            e = int(m.rot_edge[i])
            rot[v].append(2 * e if int(m.edge_u[e]) == v else 2 * e + 1)
    return rot


def dart_tail(m: CausalMap, d: int) -> int:
    e, back = d >> 1, d & 1
    return int(m.edge_v[e]) if back else int(m.edge_u[e])


def dart_head(m: CausalMap, d: int) -> int:
    e, back = d >> 1, d & 1
    return int(m.edge_u[e]) if back else int(m.edge_v[e])


def euler_genus(m: CausalMap) -> int:
    """0 exactly when the rotation system is a planar (sphere) embedding."""
    f = len(faces(m))
    return (2 - m.n_vertices + m.n_edges - f) // 2


def outer_face(m: CausalMap, face_list: list[list[int]] | None = None) -> int:
    """Index of the unbounded face.

    Uses the signed area of the boundary polygon in the map's embedding;
    the outer walk is the one with the largest absolute area (it encloses
    everything), with negative orientation breaking ties.
    """
    fl = faces(m) if face_list is None else face_list
    if len(fl) == 1:
        return 0
    pos = positions(m)
    best, best_key = 0, None
    for i, cyc in enumerate(fl):
        area = 0.0
        for d in cyc:
            a, b = pos[dart_tail(m, d)], pos[dart_head(m, d)]
            area += a[0] * b[1] - b[0] * a[1]
        key = (abs(area), -np.sign(area))
        if best_key is None or key > best_key:
            best, best_key = i, key
    return best


# --- serialization: vertex table plus edge list ---

def serialize_map(m: CausalMap) -> str:
    lines = [f"# causalmaps-map kind={m.kind_of_map} root={m.root} depth_cap={m.depth_cap}"]
    for v in range(m.n_vertices):
        lines.append(f"v {v} {m.height[v]} {m.level_index[v]}")
    for e in range(m.n_edges):
        lines.append(f"e {m.edge_u[e]} {m.edge_v[e]} {EDGE_KIND_NAMES[int(m.edge_kind[e])]}")
    return "\n".join(lines) + "\n"
