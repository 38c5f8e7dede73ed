"""Markovian exploration of the half-plane map, coupled to the walk.

The explored set grows one vertex at a time and stays ancestor-closed.  A
marked oriented edge tracks the walk's pending move; one of three rules
fires per clock tick:

  (i)  marked edge fully discovered and the frontier has no narrow pit:
       perform a walk step (pick the next edge-end uniformly),
  (ii) marked edge points to undiscovered territory: discover the lowest
       unexplored ancestor of its endpoint (stubs come paired with their
       root so the explored map stays connected),
  (iii) otherwise fill the leftmost pit of width at most 2k, leftmost
       vertical half-edge first.

The frontier is read off by a single left-to-right contour of the explored
forest which crosses every half-edge exactly once; pits are the maximal
runs of upward half-edges at one height flanked by inward-pointing
half-edges one level higher.  The contour is recomputed exactly at decision
points (a walk step never changes the explored set, so the cached pit count
stays valid between explorations).

Two drive modes produce byte-identical logs for the same seed: `online`
draws the walk's choices from the given stream with the same digits the
walk engine uses, and `replay` consumes a pre-generated trace (which must
come from a walk on the same map object, since raw vertex ids are assigned
in materialisation order).  Event logs identify vertices by their
structural keys, which do not depend on that order, so the two modes agree
byte for byte.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import NotKFree, NotYetReached
from .lazymap import LazyLayeredMap
from .rng import BufferedDraws


@dataclass
class Pit:
    height: int
    width: int
    leftmost_halfedge: tuple[int, int]  # (floor vertex, unexplored child)


@dataclass
class ExplorationState:
    m: LazyLayeredMap
    k: int
    explored: set[int]
    marked: tuple[int, int]  # oriented (tail, head); half-edge iff head unexplored
    clock: int = 0
    walk_clocks: list[int] = field(default_factory=lambda: [0])
    positions: list[int] = field(default_factory=list)
    event_log: list[dict] = field(default_factory=list)
    revealed_counts: list[int] = field(default_factory=list)
    _draws: BufferedDraws | None = None
    _replay: list[int] | None = None
    _replay_pos: int = 0
    _pits: list[Pit] | None = None
    _pit_count: int = 0
    _last_revealed: int | None = None

    @property
    def walk_steps_done(self) -> int:
        return len(self.walk_clocks) - 1


def new_exploration(m: LazyLayeredMap, k: int, rng=None, trace=None) -> ExplorationState:
    """Initial state: the root and its stub explored, marked edge uniform at the root.

    Exactly one of rng (online mode) / trace (replay mode) must be given.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if m.kind != "halfplane":
        raise ValueError("exploration is defined on the half-plane map")
    if (rng is None) == (trace is None):
        raise ValueError("provide exactly one of rng or trace")
    root = m.root
    stub = m.col_stub[0]
    st = ExplorationState(m=m, k=k, explored={root, stub}, marked=(root, root))
    st.positions = [root]
    if rng is not None:
        st._draws = BufferedDraws(rng) if not isinstance(rng, BufferedDraws) else rng
        ends, _, _ = m.walk_ends(root)
        st.marked = (root, ends[st._draws.integer(len(ends))])
    else:
        st._replay = [int(p) for p in trace.positions]
        if st._replay[0] != root:
            raise ValueError("trace must start at the root")
        st.marked = (root, st._replay[1])
        st._replay_pos = 1
    st.positions.append(st.marked[1])
    st.revealed_counts.append(m.n_children(root))
    st._pits = []
    return st


# -- frontier contour ----------------------------------------------------------

def boundary_halfedges(st: ExplorationState) -> list[tuple[str, int, int, int]]:
    """All frontier half-edges left to right as (direction, height, tail, head).

    direction is 'left'/'right' (horizontal, at the tail's height) or 'up'
    (vertical, head one level higher).
    """
    m, E = st.m, st.explored
    cols = sorted(c for c, r in m.col_root.items() if r in E)
    out: list[tuple[str, int, int, int]] = []
    for c in cols:
        stack = [(m.col_root[c], 0)]
        while stack:
            v, phase = stack.pop()
            if phase == 0:
                lw = m.left_of(v)
                if lw is not None and lw not in E:
                    out.append(("left", m.height[v], v, lw))
                stack.append((v, 1))
                for kid in reversed(m.ensure_kids(v)):
                    stack.append((kid, 0 if kid in E else 2))
            elif phase == 2:
                p = m.parent[v]
                out.append(("up", m.height[p], p, v))
            else:
                rw = m.right_of(v)
                if rw is not None and rw not in E:
                    out.append(("right", m.height[v], v, rw))
    return out


def scan_pits(seq: list[tuple[str, int, int, int]]) -> list[Pit]:
    """Pits of a half-edge crossing sequence: maximal runs of upward
    half-edges at one height flanked by right/left pointers one level up."""
    found: list[Pit] = []
    i, n = 0, len(seq)
    while i < n:
        if seq[i][0] != "up":
            i += 1
            continue
        h = seq[i][1]
        j = i
        while j < n and seq[j][0] == "up" and seq[j][1] == h:
            j += 1
        prev_ok = i > 0 and seq[i - 1][0] == "right" and seq[i - 1][1] == h + 1
        next_ok = j < n and seq[j][0] == "left" and seq[j][1] == h + 1
        if prev_ok and next_ok:
            found.append(Pit(height=h, width=j - i, leftmost_halfedge=(seq[i][2], seq[i][3])))
        i = j
    return found


def pits(st: ExplorationState) -> list[Pit]:
    """All pits of the frontier, left to right; recomputed only when stale."""
    if st._pits is not None:
        return st._pits
    found = scan_pits(boundary_halfedges(st))
    st._pits = found
    st._pit_count = len(found)
    return found


def is_k_flat(st: ExplorationState) -> bool:
    """No pit of width at most 2k."""
    return all(p.width > 2 * st.k for p in pits(st))


# -- the three-rule step -------------------------------------------------------

def _lowest_unexplored_ancestor(st: ExplorationState, w: int) -> int:
    m, E = st.m, st.explored
    u = w
    while True:
        p = m.parent[u]
        if p < 0 or p in E:
            return u
        u = p


def _explore_vertex(st: ExplorationState, v: int) -> int:
    """Add v (paired with its root when v is a stub); returns the vertex of
    nonnegative height that was revealed."""
    m, E = st.m, st.explored
    p = m.parent[v]
    assert p < 0 or p in E, "stability violated: parent unexplored"
    E.add(v)
    if m.height[v] == -1:
        root = m.kid_start[v]
        E.add(root)
        revealed = root
    else:
        revealed = v
    st.revealed_counts.append(m.n_children(revealed))
    st._pits = None
    return revealed


def advance(st: ExplorationState) -> dict:
    """Apply exactly one rule; returns the appended event record."""
    st.clock += 1
    m, E = st.m, st.explored
    tail, head = st.marked
    if head not in E:
        w = _lowest_unexplored_ancestor(st, head)
        revealed = _explore_vertex(st, w)
        st._last_revealed = revealed
        event = {"clock": st.clock, "kind": "explore", "vertex": int(m.key[revealed]), "pits_open": st._pit_count}
    else:
        narrow = [p for p in pits(st) if p.width <= 2 * st.k]
        if narrow:
            floor_v, kid = narrow[0].leftmost_halfedge
            revealed = _explore_vertex(st, kid)
            st._last_revealed = revealed
            event = {"clock": st.clock, "kind": "explore", "vertex": int(m.key[revealed]), "pits_open": st._pit_count}
        else:
            v = head
            ends, _, _ = m.walk_ends(v)
            if st._draws is not None:
                nxt = ends[st._draws.integer(len(ends))]
            else:
                st._replay_pos += 1
                if st._replay_pos >= len(st._replay):
                    raise NotYetReached("replay trace exhausted")
                nxt = st._replay[st._replay_pos]
                if nxt not in ends:
                    raise ValueError("replay trace leaves the map's edge set")
            st.marked = (v, nxt)
            st.positions.append(nxt)
            st.walk_clocks.append(st.clock)
            event = {"clock": st.clock, "kind": "walk", "vertex": int(m.key[v]), "pits_open": st._pit_count}
    st.event_log.append(event)
    return event


def phi(st: ExplorationState, n: int) -> int:
    """Clock of the n-th walk step; phi(0) = 0."""
    if n >= len(st.walk_clocks):
        raise NotYetReached(f"only {st.walk_steps_done} walk steps performed")
    return st.walk_clocks[n]


def event_log_lines(st: ExplorationState) -> list[str]:
    """Event log as JSON lines {clock, kind, vertex, pits_open}."""
    import json

    return [json.dumps(e, sort_keys=True) for e in st.event_log]


def run_exploration(st: ExplorationState, n_walk_steps: int, max_clock: int | None = None) -> ExplorationState:
    limit = max_clock or 10**8
    while st.walk_steps_done < n_walk_steps:
        if st.clock >= limit:
            raise NotYetReached("clock limit hit before the requested walk steps")
        advance(st)
    return st


# -- k-free witnesses ----------------------------------------------------------

def kfree_witness(st: ExplorationState, full_map: LazyLayeredMap, i: int | None = None) -> dict:
    """Certify the vertex revealed by the latest exploration step is k-free.

    Checks, in the full map, that the k first neighbours of the revealed
    vertex's rightmost (then leftmost) child are all outside the explored
    set; raises NotKFree when neither side certifies.
    """
    if full_map is not st.m:
        raise ValueError("the full map must back this exploration")
    if i is not None and i != st.clock:
        raise ValueError("witnesses are checked at the current clock only")
    event = st.event_log[-1]
    if event["kind"] != "explore":
        raise ValueError("latest event is not an exploration step")
    v = st._last_revealed
    m, E, k = st.m, st.explored, st.k
    kids = list(m.ensure_kids(v))
    sides = []
    w = kids[-1]
    count = 0
    for _ in range(k):
        w = m.right_of(w)
        if w is None or w in E:
            break
        count += 1
    if count == k:
        sides.append(("right", count))
    if not sides:
        w = kids[0]
        count = 0
        for _ in range(k):
            w = m.left_of(w)
            if w is None or w in E:
                break
            count += 1
        if count == k:
            sides.append(("left", count))
    if not sides:
        raise NotKFree(f"vertex {v} is not {k}-free on either side")
    side, count = sides[0]
    return {"side": side, "witness_count": count}
