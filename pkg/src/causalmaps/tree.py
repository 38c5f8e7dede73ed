"""Plane trees: plain and survival-conditioned sampling, lazy deepening.

Trees are array-backed (parents, heights, contiguous child blocks) so that
million-vertex samples stay cheap.  The conditioned sampler draws the
leafless skeleton from the backbone law, gives each skeleton vertex its
total child count from the derivative-ratio law, places the surviving
children at a uniform slot subset, and hangs subcritical bushes everywhere
else; it is validated against rejection sampling in the tests.
"""
from __future__ import annotations

from array import array
from dataclasses import dataclass, field

import numpy as np

from .errors import NoBackbone, NotSupercritical, SizeLimit
from .offspring import (
    OffspringDistribution,
    derive_laws,
    extra_children_law,
)
from .rng import BufferedDraws

DEFAULT_MAX_VERTICES = 10**7

_NO_PARENT = -1


@dataclass
class PlaneTree:
    """Rooted ordered tree, materialised up to depth_cap.

    Children of a vertex occupy a contiguous id block, so child lists are
    (child_start, n_child) pairs.  Vertices at depth_cap form the frontier:
    their subtrees are unsampled until :func:`extend_to_depth` is called.
    A single trial owns a tree while extending it; fully built trees can be
    shared read-only.
    """

    parent: array
    height: array
    child_start: array
    n_child: array
    on_backbone: array
    depth_cap: int
    kind: str = "gw"  # gw | survived | manual
    root: int = 0
    max_vertices: int = DEFAULT_MAX_VERTICES
    _levels: list[list[int]] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.parent)

    def children(self, v: int) -> range:
        s = self.child_start[v]
        return range(s, s + self.n_child[v])

    def child_rank(self, v: int) -> int:
        p = self.parent[v]
        return 0 if p == _NO_PARENT else v - self.child_start[p]

    def levels(self) -> list[list[int]]:
        """Vertices per height in left-to-right plane order."""
        if self._levels is None:
            levels = [[self.root]]
            while True:
                nxt: list[int] = []
                for v in levels[-1]:
                    nxt.extend(self.children(v))
                if not nxt:
                    break
                levels.append(nxt)
            self._levels = levels
        return self._levels

    def _invalidate(self) -> None:
        self._levels = None


def _new_tree(depth_cap: int, kind: str, max_vertices: int) -> PlaneTree:
    t = PlaneTree(
        parent=array("i"),
        height=array("i"),
        child_start=array("i"),
        n_child=array("i"),
        on_backbone=array("b"),
        depth_cap=depth_cap,
        kind=kind,
        max_vertices=max_vertices,
    )
    _add_vertex(t, _NO_PARENT, 0, False)
    return t


def _add_vertex(t: PlaneTree, parent: int, height: int, backbone: bool) -> int:
    if len(t.parent) >= t.max_vertices:
        raise SizeLimit(f"tree exceeded {t.max_vertices} vertices")
    t.parent.append(parent)
    t.height.append(height)
    t.child_start.append(0)
    t.n_child.append(0)
    t.on_backbone.append(backbone)
    return len(t.parent) - 1


def _set_children(t: PlaneTree, v: int, flags) -> list[int]:
    """Create len(flags) children of v; flags give their backbone marks."""
    h = t.height[v] + 1
    start = len(t.parent)
    for fl in flags:
        _add_vertex(t, v, h, fl)
    t.child_start[v] = start
    t.n_child[v] = len(flags)
    return list(range(start, start + len(flags)))


def sample_gw(
    d: OffspringDistribution,
    depth_cap: int,
    rng: np.random.Generator,
    max_vertices: int = DEFAULT_MAX_VERTICES,
) -> PlaneTree:
    """Unconditioned Galton-Watson tree truncated at depth_cap."""
    if depth_cap < 0:
        raise ValueError("depth_cap must be >= 0")
    t = _new_tree(depth_cap, "gw", max_vertices)
    draws = BufferedDraws(rng)
    _grow_gw(t, [t.root], d, draws)
    return t


def _grow_gw(t: PlaneTree, frontier: list[int], d: OffspringDistribution, draws) -> None:
    cum, counts = d._cum, d._counts
    level = frontier
    while level:
        nxt: list[int] = []
        for v in level:
            if t.height[v] >= t.depth_cap:
                continue
            c = int(counts[min(np.searchsorted(cum, draws.next(), side="right"), len(counts) - 1)])
            if c:
                nxt.extend(_set_children(t, v, (False,) * c))
        level = nxt
    t._invalidate()


class _SurvivedSampler:
    """Shared tables for the conditioned sampler (per offspring law)."""

    def __init__(self, d: OffspringDistribution):
        if d.mean <= 1.0:
            raise NotSupercritical(f"mean {d.mean} <= 1")
        self.mu = d
        laws = derive_laws(d)
        self.q = laws.q
        self.backbone = laws.backbone
        self.bush = laws.bush
        self.extra: dict[int, tuple[np.ndarray, np.ndarray]] = {
            b: extra_children_law(d, b) for b in laws.backbone.support()
        }

    def draw_backbone_children(self, draws) -> tuple[int, list[bool]]:
        """Total child count and per-slot backbone flags for a skeleton vertex."""
        bk = self.backbone
        b = int(bk._counts[min(np.searchsorted(bk._cum, draws.next(), side="right"), len(bk._counts) - 1)])
        vals, cum = self.extra[b]
        j = int(vals[min(np.searchsorted(cum, draws.next(), side="right"), len(vals) - 1)])
        c = b + j
        flags = [False] * c
        if b == c:
            flags = [True] * c
        else:
            # uniform b-subset of the c slots by partial Fisher-Yates
            slots = list(range(c))
            for i in range(b):
                jdx = i + draws.integer(c - i)
                slots[i], slots[jdx] = slots[jdx], slots[i]
            for s in slots[:b]:
                flags[s] = True
        return c, flags


_SAMPLER_CACHE: dict[tuple, _SurvivedSampler] = {}


def survived_sampler(d: OffspringDistribution) -> _SurvivedSampler:
    key = tuple(sorted(d.weights.items()))
    if key not in _SAMPLER_CACHE:
        _SAMPLER_CACHE[key] = _SurvivedSampler(d)
    return _SAMPLER_CACHE[key]


def sample_gw_survived(
    d: OffspringDistribution,
    depth_cap: int,
    rng: np.random.Generator,
    max_vertices: int = DEFAULT_MAX_VERTICES,
) -> PlaneTree:
    """Exact sample of the tree conditioned to survive, truncated at depth_cap.

    The root is flagged on_backbone together with every vertex of the
    leafless skeleton; bushes carry False.
    """
    if depth_cap < 0:
        raise ValueError("depth_cap must be >= 0")
    sampler = survived_sampler(d)
    t = _new_tree(depth_cap, "survived", max_vertices)
    t.on_backbone[t.root] = True
    draws = BufferedDraws(rng)
    _grow_survived(t, [t.root], sampler, draws)
    return t


def _grow_survived(t: PlaneTree, frontier: list[int], sampler: _SurvivedSampler, draws) -> None:
    bush = sampler.bush
    bush_tables = (bush._cum, bush._counts) if bush is not None else None
    level = [v for v in frontier]
    while level:
        nxt: list[int] = []
        for v in level:
            if t.height[v] >= t.depth_cap:
                continue
            if t.on_backbone[v]:
                _, flags = sampler.draw_backbone_children(draws)
                nxt.extend(_set_children(t, v, flags))
            else:
                cum, counts = bush_tables
                c = int(counts[min(np.searchsorted(cum, draws.next(), side="right"), len(counts) - 1)])
                if c:
                    nxt.extend(_set_children(t, v, (False,) * c))
        level = nxt
    t._invalidate()


def extend_to_depth(t: PlaneTree, d: OffspringDistribution, new_cap: int, rng: np.random.Generator) -> None:
    """Deepen a truncated tree in place, re-entering the sampler that built it.

    Frontier vertices of a survived tree continue with the law their flag
    dictates (skeleton vs bush); plain trees continue unconditioned.
    """
    if new_cap <= t.depth_cap:
        return
    frontier = [v for v in range(len(t)) if t.height[v] == t.depth_cap and t.n_child[v] == 0]
    t.depth_cap = new_cap
    draws = BufferedDraws(rng)
    if t.kind == "survived":
        sampler = survived_sampler(d)
        backbone_front = [v for v in frontier if t.on_backbone[v]]
        bush_front = [v for v in frontier if not t.on_backbone[v]]
        _grow_survived(t, backbone_front, sampler, draws)
        if bush_front and sampler.bush is not None:
            _grow_gw_with_law(t, bush_front, sampler.bush, draws)
    else:
        _grow_gw(t, frontier, d, draws)
    t._invalidate()


def _grow_gw_with_law(t: PlaneTree, frontier: list[int], law: OffspringDistribution, draws) -> None:
    cum, counts = law._cum, law._counts
    level = frontier
    while level:
        nxt: list[int] = []
        for v in level:
            if t.height[v] >= t.depth_cap:
                continue
            c = int(counts[min(np.searchsorted(cum, draws.next(), side="right"), len(counts) - 1)])
            if c:
                nxt.extend(_set_children(t, v, (False,) * c))
        level = nxt


def backbone_to_cap(t: PlaneTree) -> set[int]:
    """Vertices with at least one descendant at height depth_cap (or there)."""
    n = len(t)
    reached = bytearray(n)
    cap = t.depth_cap
    parent = t.parent
    height = t.height
    # children always have larger ids than parents
    for v in range(n - 1, -1, -1):
        if height[v] == cap:
            reached[v] = 1
        if reached[v] and parent[v] != _NO_PARENT:
            reached[parent[v]] = 1
    return {v for v in range(n) if reached[v]}


def level_sizes(t: PlaneTree) -> list[int]:
    """Vertex counts per height, up to the deepest materialised level."""
    return [len(level) for level in t.levels()]


def manual_tree(children_lists: dict[int, list[int]], depth_cap: int) -> PlaneTree:
    """Build a tree from explicit ordered child lists (ids must be 0..n-1, root 0)."""
    n = 1 + sum(len(c) for c in children_lists.values())
    t = PlaneTree(
        parent=array("i", [_NO_PARENT] * n),
        height=array("i", [0] * n),
        child_start=array("i", [0] * n),
        n_child=array("i", [0] * n),
        on_backbone=array("b", [0] * n),
        depth_cap=depth_cap,
        kind="manual",
    )
    order = [0]
    while order:
        v = order.pop()
        kids = children_lists.get(v, [])
        if kids:
            if kids != list(range(kids[0], kids[0] + len(kids))):
                raise ValueError("children of a vertex must be a contiguous id block")
            t.child_start[v] = kids[0]
            t.n_child[v] = len(kids)
            for w in kids:
                t.parent[w] = v
                t.height[w] = t.height[v] + 1
            order.extend(kids)
    return t


# --- serialization: one line per vertex "parent child_rank height flag" ---

def serialize_tree(t: PlaneTree) -> str:
    lines = [f"# causalmaps-tree depth_cap={t.depth_cap} kind={t.kind}"]
    for v in range(len(t)):
        lines.append(f"{t.parent[v]} {t.child_rank(v)} {t.height[v]} {int(t.on_backbone[v])}")
    return "\n".join(lines) + "\n"


def deserialize_tree(text: str) -> PlaneTree:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    depth_cap, kind = 0, "manual"
    if lines and lines[0].startswith("#"):
        header = lines.pop(0)
        for token in header.split():
            if token.startswith("depth_cap="):
                depth_cap = int(token.split("=", 1)[1])
            elif token.startswith("kind="):
                kind = token.split("=", 1)[1]
    rows = [ln.split() for ln in lines]
    n = len(rows)
    t = PlaneTree(
        parent=array("i", [0] * n),
        height=array("i", [0] * n),
        child_start=array("i", [0] * n),
        n_child=array("i", [0] * n),
        on_backbone=array("b", [0] * n),
        depth_cap=depth_cap,
        kind=kind,
    )
    kids: dict[int, list[tuple[int, int]]] = {}
    for v, row in enumerate(rows):
        p, rank, h, fl = int(row[0]), int(row[1]), int(row[2]), int(row[3])
        t.parent[v] = p
        t.height[v] = h
        t.on_backbone[v] = fl
        if p != _NO_PARENT:
            kids.setdefault(p, []).append((rank, v))
    for p, lst in kids.items():
        lst.sort()
        ids = [v for _, v in lst]
        if ids != list(range(ids[0], ids[0] + len(ids))):
            raise ValueError("non-contiguous child block in serialized tree")
        t.child_start[p] = ids[0]
        t.n_child[p] = len(ids)
    return t


def require_backbone(t: PlaneTree) -> list[list[int]]:
    """Backbone vertices per level; raises NoBackbone if a level below the cap is empty.

    Survived trees use their exact flags; other trees fall back to the
    descendant-at-cap proxy.
    """
    if t.kind == "survived":
        marks = t.on_backbone
        per_level = [[v for v in level if marks[v]] for level in t.levels()]
    else:
        to_cap = backbone_to_cap(t)
        per_level = [[v for v in level if v in to_cap] for level in t.levels()]
    if len(per_level) <= t.depth_cap:
        raise NoBackbone("tree dies before the depth cap")
    for h in range(t.depth_cap + 1):
        if not per_level[h]:
            raise NoBackbone(f"no surviving vertex at height {h}")
    return per_level
