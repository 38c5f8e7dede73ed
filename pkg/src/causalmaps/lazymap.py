"""Lazily materialised layered maps.

Supercritical layered maps grow exponentially with depth, so walks,
explorations and escape runs cannot live on fully built maps.  This module
materialises vertices on demand: a vertex exists once some query needed it,
and its children / side neighbours are resolved the first time they are
asked for.

Randomness is counter-based and structural: every vertex carries a 64-bit
key derived from its parent's key and its slot (columns are keyed by
mix64(seed, zigzag(column))), and all of its draws are pure functions of
that key.  The map realised from a seed is therefore independent of the
order in which callers touch it, which is what makes online and replayed
explorations byte-identical.

Kinds:
  halfplane      i.i.d. leafless trees on a growable column window, level
                 paths, one degree-1 stub below each root
  causal         one leafless tree with level cycles (wrap edges resolved
                 through the extreme left/right rays)
  slice          survival-conditioned tree between its extreme surviving
                 rays, bushes included, no wrap
  backbone_slice the leafless skeleton of a slice only (bushes suppressed);
                 escape runs live here
"""
from __future__ import annotations

from bisect import bisect_right

import numpy as np

from .errors import Mu0Positive, NotSupercritical, SizeLimit
from .offspring import OffspringDistribution
from .rng import mix2, mix64, unit01, zigzag
from .tree import survived_sampler

NONE = -2
UNKNOWN = -1


def _draw(cum: list, counts: list, u: float) -> int:
    i = bisect_right(cum, u)
    return counts[i] if i < len(counts) else counts[-1]


class LazyLayeredMap:
    """See module docstring.  One trial owns a growing map exclusively."""

    def __init__(self, kind: str, d: OffspringDistribution, seed: int, max_vertices: int | None = None):
        self.kind = kind
        self.law = d
        self.seed = int(seed)
        self.max_vertices = max_vertices or 10**7
        # per-vertex stores
        self.parent: list[int] = []
        self.height: list[int] = []
        self.n_kids: list[int] = []   # UNKNOWN until sampled
        self.kid_start: list[int] = []
        self.left: list[int] = []     # UNKNOWN / NONE / vid
        self.right: list[int] = []
        self.key: list[int] = []
        self.backbone: list[bool] = []
        self.is_gl: list[bool] = []
        self.is_gr: list[bool] = []
        self._ends_cache: dict[int, tuple[tuple[int, ...], int, int]] = {}
        self.root = -1
        if kind in ("halfplane", "causal") and d.prob(0) > 0.0:
            raise Mu0Positive("leafless law required: mu(0) must be 0")
        if kind in ("slice", "backbone_slice"):
            if d.mean <= 1.0:
                raise NotSupercritical(f"mean {d.mean} <= 1")
            self._sampler = survived_sampler(d)
        if kind == "halfplane":
            self.col_root: dict[int, int] = {}
            self.col_stub: dict[int, int] = {}
            self._root_col: dict[int, int] = {}
            self._new_column(0)
            self.root = self.col_root[0]
        elif kind == "causal":
            self.root = self._new_vertex(-1, 0, mix64(self.seed, 7), backbone=True, gl=True, gr=True)
            self._lmost = [self.root]
            self._rmost = [self.root]
        else:
            self.root = self._new_vertex(-1, 0, mix64(self.seed, 7), backbone=True, gl=True, gr=True)

    # -- construction helpers --------------------------------------------

    @classmethod
    def halfplane(cls, d, rng_or_seed, max_vertices=None) -> "LazyLayeredMap":
        return cls("halfplane", d, _as_seed(rng_or_seed), max_vertices=max_vertices)

    @classmethod
    def causal(cls, d, rng_or_seed, max_vertices=None) -> "LazyLayeredMap":
        return cls("causal", d, _as_seed(rng_or_seed), max_vertices=max_vertices)

    @classmethod
    def survived_slice(cls, d, rng_or_seed, max_vertices=None) -> "LazyLayeredMap":
        return cls("slice", d, _as_seed(rng_or_seed), max_vertices=max_vertices)

    @classmethod
    def backbone_slice(cls, d, rng_or_seed, max_vertices=None) -> "LazyLayeredMap":
        return cls("backbone_slice", d, _as_seed(rng_or_seed), max_vertices=max_vertices)

    def _new_vertex(self, parent: int, height: int, key: int, backbone=False, gl=False, gr=False) -> int:
        if len(self.parent) >= self.max_vertices:
            raise SizeLimit(f"map exceeded {self.max_vertices} vertices")
        self.parent.append(parent)
        self.height.append(height)
        self.n_kids.append(UNKNOWN)
        self.kid_start.append(UNKNOWN)
        self.left.append(NONE if gl else UNKNOWN)
        self.right.append(NONE if gr else UNKNOWN)
        self.key.append(key)
        self.backbone.append(backbone)
        self.is_gl.append(gl)
        self.is_gr.append(gr)
        return len(self.parent) - 1

    def _new_column(self, col: int) -> int:
        key = mix64(self.seed, zigzag(col))
        stub = self._new_vertex(-1, -1, mix64(key, 999), gl=True, gr=True)
        root = self._new_vertex(stub, 0, key)
        self.n_kids[stub] = 1
        self.kid_start[stub] = root
        self.col_root[col] = root
        self.col_stub[col] = stub
        self._root_col[root] = col
        return root

    def __len__(self) -> int:
        return len(self.parent)

    # -- sampling ---------------------------------------------------------

    def ensure_kids(self, v: int) -> range:
        """Sample and create v's children on first access."""
        n_kids = self.n_kids
        if n_kids[v] != UNKNOWN:
            s = self.kid_start[v]
            return range(s, s + n_kids[v])
        key = self.key[v]
        kind = self.kind
        if kind == "slice":
            return self._slice_kids(v)
        if kind == "backbone_slice":
            law = self._sampler.backbone
            backbone = True
        else:
            law = self.law
            backbone = False
        c = _draw(law._cum_list, law._counts_list, unit01(mix2(key, 0)))
        parent, height = self.parent, self.height
        kid_start, left, right = self.kid_start, self.left, self.right
        keys, bb, isgl, isgr = self.key, self.backbone, self.is_gl, self.is_gr
        if len(parent) + c > self.max_vertices:
            raise SizeLimit(f"map exceeded {self.max_vertices} vertices")
        start = len(parent)
        h1 = height[v] + 1
        gl = isgl[v]
        gr = isgr[v]
        kid_key = mix2(key, 1 << 32)
        last = c - 1
        for slot in range(c):
            parent.append(v)
            height.append(h1)
            n_kids.append(UNKNOWN)
            kid_start.append(UNKNOWN)
            left.append(NONE if (gl and slot == 0) else (start + slot - 1 if slot else UNKNOWN))
            right.append(NONE if (gr and slot == last) else (start + slot + 1 if slot < last else UNKNOWN))
            keys.append((kid_key + slot * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
            bb.append(backbone)
            isgl.append(gl and slot == 0)
            isgr.append(gr and slot == last)
        kid_start[v] = start
        n_kids[v] = c
        return range(start, start + c)

    def ensure_kids_batch(self, vs: list[int]) -> None:
        """Expand many vertices at once (uniform-law kinds only).

        Bit-identical to repeated ensure_kids: the same key->draw formulas
        are evaluated with numpy uint64 arithmetic, which wraps exactly like
        the masked python ints of the scalar path.
        """
        if self.kind == "slice":
            for v in vs:
                self.ensure_kids(v)
            return
        todo = [v for v in vs if self.n_kids[v] == UNKNOWN]
        if not todo:
            return
        if len(todo) < 8:
            for v in todo:
                self.ensure_kids(v)
            return
        if self.kind == "backbone_slice":
            law = self._sampler.backbone
            backbone = True
        else:
            law = self.law
            backbone = False
        keys = np.array([self.key[v] for v in todo], dtype=np.uint64)
        G = np.uint64(0x9E3779B97F4A7C15)
        with np.errstate(over="ignore"):
            def fin(x):
                x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
                x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
                return x ^ (x >> np.uint64(31))

            draws = fin(keys + G)  # mix2(key, 0)
            kid_keys = fin(keys + G + np.uint64(1 << 32))  # mix2(key, 1<<32)
            u = draws.astype(np.float64) * (0.5**64)
            counts = law._counts[np.minimum(np.searchsorted(law._cum, u, side="right"), len(law._counts) - 1)]
            total = int(counts.sum())
            if len(self.parent) + total > self.max_vertices:
                raise SizeLimit(f"map exceeded {self.max_vertices} vertices")
            start = len(self.parent)
            todo_np = np.asarray(todo, dtype=np.int64)
            cum = np.cumsum(counts)
            block_start = start + cum - counts
            within = np.arange(total, dtype=np.int64) - np.repeat(cum - counts, counts)
            idx = start + np.arange(total, dtype=np.int64)
            counts_rep = np.repeat(counts, counts)
            gl_rep = np.repeat(np.fromiter((self.is_gl[v] for v in todo), dtype=bool, count=len(todo)), counts)
            gr_rep = np.repeat(np.fromiter((self.is_gr[v] for v in todo), dtype=bool, count=len(todo)), counts)
            first = within == 0
            last = within == counts_rep - 1
            left_vec = np.where(first, np.where(gl_rep, NONE, UNKNOWN), idx - 1)
            right_vec = np.where(last, np.where(gr_rep, NONE, UNKNOWN), idx + 1)
            key_vec = np.repeat(kid_keys, counts) + within.astype(np.uint64) * G
            h_vec = np.repeat(
                np.fromiter((self.height[v] + 1 for v in todo), dtype=np.int64, count=len(todo)), counts
            )
        self.parent.extend(np.repeat(todo_np, counts).tolist())
        self.height.extend(h_vec.tolist())
        self.n_kids.extend([UNKNOWN] * total)
        self.kid_start.extend([UNKNOWN] * total)
        self.left.extend(left_vec.tolist())
        self.right.extend(right_vec.tolist())
        self.key.extend(key_vec.tolist())
        self.backbone.extend([backbone] * total)
        self.is_gl.extend((gl_rep & first).tolist())
        self.is_gr.extend((gr_rep & last).tolist())
        for i, v in enumerate(todo):
            self.kid_start[v] = int(block_start[i])
            self.n_kids[v] = int(counts[i])

    def _slice_kids(self, v: int) -> range:
        key = self.key[v]
        sm = self._sampler
        if self.backbone[v]:
            bk = sm.backbone
            b = _draw(bk._cum_list, bk._counts_list, unit01(mix2(key, 0)))
            vals, cum = sm.extra[b]
            j = int(vals[min(np.searchsorted(cum, unit01(mix2(key, 1)), side="right"), len(vals) - 1)])
            c = b + j
            if b == c:
                flags = [True] * c
            else:
                flags = [False] * c
                slots = list(range(c))
                for i in range(b):
                    jdx = i + int(unit01(mix2(key, 2 + i)) * (c - i))
                    slots[i], slots[jdx] = slots[jdx], slots[i]
                for s in slots[:b]:
                    flags[s] = True
        else:
            bush = sm.bush
            c = _draw(bush._cum_list, bush._counts_list, unit01(mix2(key, 0)))
            flags = [False] * c
        keep_lo, keep_hi = 0, c
        if self.is_gl[v]:
            keep_lo = next((i for i, f in enumerate(flags) if f), c)
        if self.is_gr[v]:
            keep_hi = c - next((i for i, f in enumerate(reversed(flags)) if f), c)
        start = len(self.parent)
        h1 = self.height[v] + 1
        kid_key = mix2(key, 1 << 32)
        cnt = keep_hi - keep_lo
        if len(self.parent) + cnt > self.max_vertices:
            raise SizeLimit(f"map exceeded {self.max_vertices} vertices")
        for slot in range(keep_lo, keep_hi):
            self._new_vertex(
                v,
                h1,
                (kid_key + slot * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF,
                backbone=flags[slot],
                gl=self.is_gl[v] and slot == keep_lo,
                gr=self.is_gr[v] and slot == keep_hi - 1,
            )
        self.kid_start[v] = start
        self.n_kids[v] = cnt
        for i in range(start, start + cnt - 1):
            self.right[i] = i + 1
            self.left[i + 1] = i
        return range(start, start + cnt)

    def kids(self, v: int) -> range:
        return self.ensure_kids(v)

    def n_children(self, v: int) -> int:
        self.ensure_kids(v)
        return self.n_kids[v]

    # -- side navigation ---------------------------------------------------

    def _linear_right(self, v: int) -> int | None:
        """Next vertex to the right at the same height, boundary-aware."""
        r = self.right[v]
        if r >= 0:
            return r
        if r == NONE:
            return None
        h = self.height[v]
        if self.kind == "halfplane" and h == 0:
            col = self._column_of_root(v)
            w = self.col_root.get(col + 1)
            if w is None:
                w = self._new_column(col + 1)
            self.right[v], self.left[w] = w, v
            return w
        p = self.parent[v]
        pr = self._linear_right(p)
        while pr is not None and self.n_children(pr) == 0:
            pr = self._linear_right(pr)
        if pr is None:
            self.right[v] = NONE
            return None
        w = self.kid_start[pr]
        self.right[v], self.left[w] = w, v
        return w

    def _linear_left(self, v: int) -> int | None:
        l = self.left[v]
        if l >= 0:
            return l
        if l == NONE:
            return None
        h = self.height[v]
        if self.kind == "halfplane" and h == 0:
            col = self._column_of_root(v)
            w = self.col_root.get(col - 1)
            if w is None:
                w = self._new_column(col - 1)
            self.left[v], self.right[w] = w, v
            return w
        p = self.parent[v]
        pl = self._linear_left(p)
        while pl is not None and self.n_children(pl) == 0:
            pl = self._linear_left(pl)
        if pl is None:
            self.left[v] = NONE
            return None
        w = self.kid_start[pl] + self.n_kids[pl] - 1
        self.left[v], self.right[w] = w, v
        return w

    def _column_of_root(self, v: int) -> int:
        return self._root_col[v]

    def right_of(self, v: int) -> int | None:
        return self._linear_right(v)

    def left_of(self, v: int) -> int | None:
        return self._linear_left(v)

    def side_neighbor(self, v: int, side: str) -> int | None:
        """Same-height neighbour, closing causal levels into cycles."""
        w = self._linear_right(v) if side == "right" else self._linear_left(v)
        if w is None:
            w = self._wrap_partner(v, side)
        return w

    def _wrap_partner(self, v: int, side: str) -> int | None:
        """Causal maps close each level into a cycle through the extreme rays."""
        if self.kind != "causal":
            return None
        h = self.height[v]
        lm, rm = self._extreme(h)
        if lm == rm:
            return None
        if side == "left" and v == lm:
            return rm
        if side == "right" and v == rm:
            return lm
        return None

    def _extreme(self, h: int) -> tuple[int, int]:
        # leafless law: the extreme rays are the first/last-child chains
        while len(self._lmost) <= h:
            lv = self._lmost[-1]
            self.ensure_kids(lv)
            self._lmost.append(self.kid_start[lv])
            rv = self._rmost[-1]
            self.ensure_kids(rv)
            self._rmost.append(self.kid_start[rv] + self.n_kids[rv] - 1)
        return self._lmost[h], self._rmost[h]

    # -- walk interface -----------------------------------------------------

    def walk_ends(self, v: int) -> tuple[tuple[int, ...], int, int]:
        """(neighbour ids in rotation order, kid block start, kid block end).

        Rotation order is [parent, left, children left-to-right, right];
        parallel wrap edges at size-2 causal levels appear as two entries.
        """
        cached = self._ends_cache.get(v)
        if cached is not None:
            return cached
        ends: list[int] = []
        p = self.parent[v]
        if p >= 0:
            ends.append(p)
        if self.height[v] >= 0:
            l = self._linear_left(v)
            if l is None:
                l = self._wrap_partner(v, "left")
            if l is not None:
                ends.append(l)
            klo = len(ends)
            ends.extend(self.ensure_kids(v))
            khi = len(ends)
            r = self._linear_right(v)
            if r is None:
                r = self._wrap_partner(v, "right")
            if r is not None:
                ends.append(r)
        else:
            klo = len(ends)
            ends.extend(range(self.kid_start[v], self.kid_start[v] + self.n_kids[v]))
            khi = len(ends)
        entry = (tuple(ends), klo, khi)
        self._ends_cache[v] = entry
        return entry

    def degree(self, v: int) -> int:
        return len(self.walk_ends(v)[0])

    def neighbors(self, v: int) -> list[int]:
        return list(self.walk_ends(v)[0])

    def height_of(self, v: int) -> int:
        return self.height[v]

    def parent_of(self, v: int) -> int:
        return self.parent[v]

    def is_escape_boundary(self, v: int) -> bool:
        """Membership in the set walks must avoid: slice rays, half-plane stubs."""
        if self.kind in ("slice", "backbone_slice"):
            return self.is_gl[v] or self.is_gr[v]
        if self.kind == "halfplane":
            return self.height[v] == -1
        return False

    def ancestor_at_height(self, v: int, h: int) -> int:
        while self.height[v] > h:
            v = self.parent[v]
        if self.height[v] != h:
            raise ValueError(f"no ancestor at height {h}")
        return v

    # -- eager window (rendering, tests) ------------------------------------

    def prematerialize(self, window: int = 0, depth: int = 0) -> None:
        if self.kind == "halfplane":
            for c in range(-window, window + 1):
                if c not in self.col_root:
                    self._new_column(c)
            frontier = [self.col_root[c] for c in sorted(self.col_root)]
        else:
            frontier = [self.root]
        for _ in range(depth):
            nxt: list[int] = []
            for v in frontier:
                nxt.extend(self.ensure_kids(v))
            frontier = nxt

    def level_members(self, anchor: int) -> list[int]:
        """Materialised same-height vertices linked sideways around anchor."""
        out = [anchor]
        v = anchor
        while self.left[v] >= 0:
            v = self.left[v]
            out.append(v)
        out.reverse()
        v = anchor
        while self.right[v] >= 0:
            v = self.right[v]
            out.append(v)
        return out


def _as_seed(rng_or_seed) -> int:
    if isinstance(rng_or_seed, (int, np.integer)):
        return int(rng_or_seed)
    return int(rng_or_seed.integers(0, 2**63 - 1))
