"""Graph metric tools: BFS distances, deterministic geodesics, the
surrounding-triangle probe, escaping sequences, the corner-defect table of
the two extreme geodesic rays, and the two-sided geodesic assembled from
its plateau.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cmap import CausalMap, positions
from .errors import Disconnected, NoPlateau, NotASlice, NotClosed, TooShallow


@dataclass
class GeodesicPath:
    vertices: list[int]
    length: int

    def __post_init__(self):
        assert self.length == len(self.vertices) - 1


def bfs_distances(m: CausalMap, source: int, until: int | None = None) -> np.ndarray:
    """Distance array from source (-1 unreachable); early exit once `until` is set."""
    n = m.n_vertices
    off = m.rot_offset
    other = m.rot_other
    dist = np.full(n, -1, dtype=np.int32)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    d = 0
    while frontier.size:
        if until is not None and dist[until] >= 0:
            break
        starts = off[frontier]
        counts = off[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        base = np.repeat(starts, counts)
        within = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
        nbrs = other[base + within]
        fresh = nbrs[dist[nbrs] < 0]
        if fresh.size == 0:
            break
        fresh = np.unique(fresh)
        d += 1
        dist[fresh] = d
        frontier = fresh
    return dist


def distance(m: CausalMap, u: int, v: int) -> int:
    """Shortest-path length; multiplicity is irrelevant for distances."""
    m.check_vertex(u)
    m.check_vertex(v)
    if u == v:
        return 0
    dist = bfs_distances(m, u, until=v)
    if dist[v] < 0:
        raise Disconnected(f"{u} and {v} are in different components")
    return int(dist[v])


def _backtrack(m: CausalMap, dist: np.ndarray, target: int, side: str = "left") -> list[int]:
    """Walk a shortest path back to the source with a deterministic tie-break:
    smaller (height, level_index) predecessor, mirrored for side="right"."""
    path = [target]
    v = target
    off, other = m.rot_offset, m.rot_other
    sign = 1 if side == "left" else -1
    while dist[v] > 0:
        want = dist[v] - 1
        best = -1
        best_key = None
        for i in range(int(off[v]), int(off[v + 1])):
            w = int(other[i])
            if dist[w] == want:
                key = (int(m.height[w]), sign * int(m.level_index[w]))
                if best < 0 or key < best_key:
                    best, best_key = w, key
        v = best
        path.append(v)
    path.reverse()
    return path


def geodesic(m: CausalMap, u: int, v: int) -> GeodesicPath:
    """One shortest path from u to v with a deterministic tie-break."""
    m.check_vertex(u)
    m.check_vertex(v)
    dist = bfs_distances(m, u)
    if dist[v] < 0:
        raise Disconnected(f"{u} and {v} are in different components")
    path = _backtrack(m, dist, v)
    return GeodesicPath(vertices=path, length=int(dist[v]))


# --- surrounding triangles ----------------------------------------------------

def _loop_vertices(p1: GeodesicPath, p2: GeodesicPath, p3: GeodesicPath) -> list[int]:
    segs = [p1.vertices, p2.vertices, p3.vertices]
    for a, b in zip(segs, segs[1:] + segs[:1]):
        if a[-1] != b[0]:
            raise NotClosed("paths do not share endpoints in cyclic order")
    loop: list[int] = []
    for seg in segs:
        loop.extend(seg[:-1])
    return loop


def winding_number(points: np.ndarray, center: np.ndarray) -> int:
    rel = points - center
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    dang = np.diff(np.concatenate([ang, ang[:1]]))
    dang = (dang + np.pi) % (2 * np.pi) - np.pi
    return int(round(float(dang.sum()) / (2 * np.pi)))


def triangle_surrounds_root(m: CausalMap, p1: GeodesicPath, p2: GeodesicPath, p3: GeodesicPath) -> bool:
    """True when the closed loop winds around the root's embedding point.

    Loops passing through the root vertex count as surrounding (the probe
    records distance 0 for them).
    """
    loop = _loop_vertices(p1, p2, p3)
    if len(loop) < 3:
        return m.root in loop and len(set(loop)) > 1
    if m.root in loop:
        return True
    pos = positions(m)
    return winding_number(pos[np.asarray(loop)], pos[m.root]) != 0


@dataclass
class ProbeRecord:
    trial: int
    d_root_triangle: int


def hyperbolicity_probe(m: CausalMap, trials: int, rng) -> list[ProbeRecord]:
    """Sample geodesic triangles; for those surrounding the root record the
    distance from the root to the triangle.  Empty when none surround it."""
    droot = bfs_distances(m, m.root)
    n = m.n_vertices
    out: list[ProbeRecord] = []
    for trial in range(trials):
        x, y, z = (int(i) for i in rng.integers(0, n, size=3))
        if len({x, y, z}) < 3:
            continue
        dx = bfs_distances(m, x)
        dy = bfs_distances(m, y)
        dz = bfs_distances(m, z)
        pxy = GeodesicPath(_backtrack(m, dx, y), int(dx[y]))
        pyz = GeodesicPath(_backtrack(m, dy, z), int(dy[z]))
        pzx = GeodesicPath(_backtrack(m, dz, x), int(dz[x]))
        try:
            if triangle_surrounds_root(m, pxy, pyz, pzx):
                dmin = min(int(droot[v]) for p in (pxy, pyz, pzx) for v in p.vertices)
                out.append(ProbeRecord(trial=trial, d_root_triangle=dmin))
        except NotClosed:
            continue
    return out


# --- escaping sequences -------------------------------------------------------

@dataclass
class EscapeOutcome:
    survived: bool
    killed_at: int | None
    y_trace: list[int]
    z_trace: list[int]


def _is_slice(s) -> bool:
    kind = getattr(s, "kind_of_map", None) or getattr(s, "kind", None)
    return kind in ("slice", "backbone_slice")


def _next_backbone_right(s, v: int):
    if isinstance(s, CausalMap):
        h = int(s.height[v])
        level = s.levels[h]
        i = int(s.level_index[v]) + 1
        while i < len(level):
            w = level[i]
            if s.backbone[w]:
                return w
            i += 1
        return None
    w = s.right_of(v)
    while w is not None and not s.backbone[w]:
        w = s.right_of(w)
    return w


def _rightmost_backbone_child(s, v: int):
    if isinstance(s, CausalMap):
        ends, klo, khi = s.walk_ends(v)
        kids = [w for w in ends[klo:khi] if s.backbone[w]]
        return kids[-1] if kids else None
    kids = [w for w in s.ensure_kids(v) if s.backbone[w]]
    return kids[-1] if kids else None


def _on_gamma_r(s, v: int) -> bool:
    if isinstance(s, CausalMap):
        return v == s.gamma_right[int(s.height[v])]
    return bool(s.is_gr[v])


def gamma_left_vertex(s, k: int) -> int:
    """The level-k vertex of the left extreme surviving ray."""
    if isinstance(s, CausalMap):
        return s.gamma_left[k]
    v = s.root
    for _ in range(k):
        kids = [w for w in s.ensure_kids(v) if s.backbone[w]]
        v = kids[0]
    return v


def escape_sequences(s, x: int, u, depth: int) -> EscapeOutcome:
    """Run the two-row escape recursion toward the right up to `depth`.

    At each level i the partner z_i is the u_i-th surviving (backbone)
    vertex strictly right of y_i; the run is killed when fewer exist or
    when z_i lies on the right extreme ray, and otherwise continues from
    the rightmost surviving child of z_i.  `u` maps level -> positive int
    (callable or sequence indexed by level).
    """
    if not _is_slice(s):
        raise NotASlice("escape sequences are defined on slices")
    u_of = u if callable(u) else (lambda i: u[i])
    if not s.backbone[x]:
        raise ValueError("start vertex must be on the surviving skeleton")
    k = int(s.height[x]) if isinstance(s, CausalMap) else s.height_of(x)
    if k >= depth:
        raise ValueError("start level must be below depth")
    if not isinstance(s, CausalMap):
        return _escape_lazy(s, x, u_of, k, depth)
    y, ys, zs = x, [], []
    for i in range(k, depth):
        ui = int(u_of(i))
        if ui < 1:
            raise ValueError("u must be positive")
        z = y
        for _ in range(ui):
            z = _next_backbone_right(s, z)
            if z is None:
                return EscapeOutcome(False, i, ys, zs)
        ys.append(y)
        zs.append(z)
        if _on_gamma_r(s, z):
            return EscapeOutcome(False, i, ys, zs)
        if i + 1 >= depth:
            break
        y = _rightmost_backbone_child(s, z)
        if y is None:
            return EscapeOutcome(False, i + 1, ys, zs)
    return EscapeOutcome(True, None, ys, zs)


def _escape_lazy(s, x: int, u_of, k: int, depth: int) -> EscapeOutcome:
    if s.kind == "backbone_slice":
        return _escape_corridor(s, x, u_of, k, depth)
    # slices with bushes: plain right-walk skipping non-surviving vertices
    right = s.right
    backbone = s.backbone
    is_gr = s.is_gr
    linear_right = s._linear_right
    ensure_kids = s.ensure_kids
    kid_start = s.kid_start
    n_kids = s.n_kids
    y, ys, zs = x, [], []
    for i in range(k, depth):
        ui = u_of(i)
        if ui < 1:
            raise ValueError("u must be positive")
        z = y
        cnt = 0
        while cnt < ui:
            r = right[z]
            if r < 0:
                r = linear_right(z)
                if r is None:
                    return EscapeOutcome(False, i, ys, zs)
            z = r
            if backbone[z]:
                cnt += 1
        ys.append(y)
        zs.append(z)
        if is_gr[z]:
            return EscapeOutcome(False, i, ys, zs)
        if i + 1 >= depth:
            break
        ensure_kids(z)
        y = kid_start[z] + n_kids[z] - 1
        while not backbone[y]:
            y -= 1
            if y < kid_start[z]:
                return EscapeOutcome(False, i + 1, ys, zs)
    return EscapeOutcome(True, None, ys, zs)


def _escape_corridor(s, x: int, u_of, k: int, depth: int) -> EscapeOutcome:
    """Level-batched recursion on the leafless skeleton.

    Maintains the corridor [y_i, ...] of level-i vertices, built from the
    children of the previous corridor, so materialisation stays within a
    couple of vertices of the minimum the recursion touches.
    """
    is_gr = s.is_gr
    linear_right = s._linear_right
    ensure_kids = s.ensure_kids
    kid_start = s.kid_start
    n_kids = s.n_kids
    ys, zs = [], []
    corridor = [x]
    boundary_hit = False
    for i in range(k, depth):
        ui = u_of(i)
        if ui < 1:
            raise ValueError("u must be positive")
        while len(corridor) <= ui:
            r = None if boundary_hit else linear_right(corridor[-1])
            if r is None:
                return EscapeOutcome(False, i, ys, zs)
            corridor.append(r)
        y, z = corridor[0], corridor[ui]
        ys.append(y)
        zs.append(z)
        if is_gr[z]:
            return EscapeOutcome(False, i, ys, zs)
        if i + 1 >= depth:
            break
        # carry enough corridor that the next levels are supplied from within:
        # a width-w walk consumes ~w*m/(m-1) vertices across the levels above
        m_mean = max(s.law.mean, 1.0 + 1e-9)
        need = int((u_of(i + 1) + 2) * m_mean / (m_mean - 1.0)) + 8
        take = min(len(corridor), ui + 1 + int(need / m_mean) + 4)
        s.ensure_kids_batch(corridor[ui:take])
        nxt = [kid_start[z] + n_kids[z] - 1]
        right, left = s.right, s.left
        j = ui + 1
        while len(nxt) < need:
            if j >= len(corridor):
                r = linear_right(corridor[-1])
                if r is None:
                    boundary_hit = True
                    break
                corridor.append(r)
            w = corridor[j]
            if n_kids[w] == -1:
                ensure_kids(w)
            first = kid_start[w]
            cnt = n_kids[w]
            if cnt:
                # stitch sibling blocks so later neighbour queries stay local
                prev = nxt[-1]
                if right[prev] == -1:
                    right[prev] = first
                    left[first] = prev
                nxt.extend(range(first, first + cnt))
            j += 1
        corridor = nxt
    return EscapeOutcome(True, None, ys, zs)


# --- corner-defect table and the two-sided geodesic ---------------------------

@dataclass
class AijTable:
    values: np.ndarray
    ray_left: list[int]
    ray_right: list[int]
    imax: int
    jmax: int


def extreme_geodesics(s: CausalMap) -> tuple[list[int], list[int]]:
    """Deterministic geodesics from the root to the deepest vertices of the
    left and right boundary rays, tie-broken toward their own side."""
    if s.kind_of_map != "slice":
        raise NotASlice("extreme geodesics require a slice")
    dist = bfs_distances(s, s.root)
    gl = _backtrack(s, dist, s.gamma_left[-1], side="left")
    gr = _backtrack(s, dist, s.gamma_right[-1], side="right")
    return gl, gr


def aij_table(s: CausalMap, imax: int, jmax: int) -> AijTable:
    """Tabulate i + j - d(left_ray(i), right_ray(j)) for the two anchored rays."""
    if s.depth_cap <= imax + jmax:
        raise TooShallow(f"need depth_cap > {imax + jmax}")
    gl, gr = extreme_geodesics(s)
    if len(gl) <= imax or len(gr) <= jmax:
        raise TooShallow("anchored rays shorter than the requested table")
    vals = np.zeros((imax + 1, jmax + 1), dtype=np.int64)
    targets = np.array(gr[: jmax + 1], dtype=np.int64)
    for i in range(imax + 1):
        dist = bfs_distances(s, gl[i])
        for j in range(jmax + 1):
            vals[i, j] = i + j - int(dist[targets[j]])
    return AijTable(values=vals, ray_left=gl, ray_right=gr, imax=imax, jmax=jmax)


def aij_records(table: AijTable) -> list[dict]:
    """Table entries as streamable records {i, j, a_ij}."""
    return [
        {"i": i, "j": j, "a_ij": int(table.values[i, j])}
        for i in range(table.imax + 1)
        for j in range(table.jmax + 1)
    ]


def probe_records(records: list[ProbeRecord], radius: int) -> list[dict]:
    """Probe samples as streamable records {trial, radius, d_root_triangle}."""
    return [{"trial": r.trial, "radius": radius, "d_root_triangle": r.d_root_triangle} for r in records]


def find_plateau(table: AijTable, antidiagonals: int = 5) -> tuple[int, int]:
    """Smallest (i, j) attaining the stabilised maximum.

    The maximum over each anti-diagonal must be constant over the last
    `antidiagonals` of them, else NoPlateau.
    """
    vals = table.values
    imax, jmax = table.imax, table.jmax
    smax = imax + jmax
    diag_max = []
    for sdiag in range(smax + 1):
        best = None
        for i in range(max(0, sdiag - jmax), min(imax, sdiag) + 1):
            v = int(vals[i, sdiag - i])
            best = v if best is None else max(best, v)
        diag_max.append(best)
    tail = diag_max[-antidiagonals:]
    if len(tail) < antidiagonals or len(set(tail)) != 1:
        raise NoPlateau("anti-diagonal maxima have not stabilised")
    target = tail[0]
    hits = [(i + j, i, j) for i in range(imax + 1) for j in range(jmax + 1) if vals[i, j] == target]
    _, i0, j0 = min(hits)
    return i0, j0


def bi_infinite_geodesic(s: CausalMap, table: AijTable) -> GeodesicPath:
    """Concatenate the reversed left ray, a bridge at the plateau corner, and
    the right ray, then certify the whole path is a geodesic.

    Certification uses the endpoint identity: a unit-step path is a geodesic
    exactly when the distance between its endpoints equals its length, which
    pins d(path(i), path(j)) = |i - j| for every pair.
    """
    gl, gr = table.ray_left, table.ray_right
    if gl == gr:
        # degenerate sliver: the boundary rays coincide and the map is the
        # ray itself, which is its own maximal geodesic
        return GeodesicPath(vertices=list(gl), length=len(gl) - 1)
    i0, j0 = find_plateau(table)
    bridge = geodesic(s, gl[i0], gr[j0]).vertices
    # materialise the two-sided path over the window the table certifies
    path = list(reversed(gl[i0 : table.imax + 1])) + bridge[1:] + gr[j0 + 1 : table.jmax + 1]
    start = path[0]
    dist = bfs_distances(s, start)
    for t, v in enumerate(path):
        if int(dist[v]) != t:
            raise NoPlateau(
                f"assembled path fails d(start, path[{t}]) = {int(dist[v])} != {t}; deepen the slice"
            )
    return GeodesicPath(vertices=path, length=len(path) - 1)
