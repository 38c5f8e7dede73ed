"""Electrical networks on causal maps.

Effective resistance by harmonic solve (CG with Jacobi preconditioning,
dense below 2000 unknowns), an exhaustive spanning-tree/two-forest oracle,
planar duality through the rotation-system faces, the nonbacktracking
spine decomposition with its disjoint separating sets, and the
degree-truncated dual tree threaded through the faces left of a subtree's
branches.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cmap import CausalMap, dart_tail, faces, outer_face
from .errors import (
    DisconnectedTerminals,
    NoBackbone,
    SolverFailure,
    TerminalsNotOuter,
    TooFewCutsets,
    TooLarge,
    TruncationDies,
)

DENSE_LIMIT = 2000
RESIDUAL_TOL = 1e-10


@dataclass
class ResistanceNetwork:
    """Conductance network with two terminal sets; parallel edges pre-merged."""

    n_nodes: int
    edges: list[tuple[int, int, float]]
    source: frozenset[int]
    sink: frozenset[int]


def mk_network(n_nodes: int, edges, source, sink) -> ResistanceNetwork:
    merged: dict[tuple[int, int], float] = {}
    for u, v, c in edges:
        if c <= 0:
            raise ValueError("conductances must be positive")
        if u == v:
            continue
        key = (u, v) if u < v else (v, u)
        merged[key] = merged.get(key, 0.0) + float(c)
    return ResistanceNetwork(
        n_nodes=n_nodes,
        edges=[(u, v, c) for (u, v), c in sorted(merged.items())],
        source=frozenset(int(x) for x in source),
        sink=frozenset(int(x) for x in sink),
    )


def network_from_map(m: CausalMap, source, sink) -> ResistanceNetwork:
    """Unit resistance per edge; parallel edges merge into their multiplicity."""
    edges = [(int(m.edge_u[e]), int(m.edge_v[e]), 1.0) for e in range(m.n_edges)]
    return mk_network(m.n_vertices, edges, source, sink)


def _reachable_from(net: ResistanceNetwork, seeds) -> set[int]:
    adj: dict[int, list[int]] = {}
    for u, v, _ in net.edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    seen = set(seeds)
    stack = list(seeds)
    while stack:
        u = stack.pop()
        for w in adj.get(u, ()):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def effective_resistance(net: ResistanceNetwork) -> float:
    """Voltage/current ratio between the terminal sets (1 on source, 0 on sink)."""
    A, Z = net.source, net.sink
    if not A or not Z:
        raise ValueError("both terminal sets must be nonempty")
    if A & Z:
        return 0.0
    comp = _reachable_from(net, A)
    if not (Z & comp):
        raise DisconnectedTerminals("no path between the terminal sets")
    interior = sorted(v for v in comp if v not in A and v not in Z)
    index = {v: i for i, v in enumerate(interior)}
    ni = len(interior)
    rhs = np.zeros(ni)
    rows, cols, vals = [], [], []
    diag = np.zeros(ni)
    a_current_const = 0.0  # conductance of direct source-sink edges
    for u, v, c in net.edges:
        if u not in comp:
            continue
        iu, iv = index.get(u), index.get(v)
        u_in_a, v_in_a = u in A, v in A
        if iu is not None:
            diag[iu] += c
        if iv is not None:
            diag[iv] += c
        if iu is not None and iv is not None:
            rows.append(iu), cols.append(iv), vals.append(-c)
            rows.append(iv), cols.append(iu), vals.append(-c)
        elif iu is not None and v_in_a:
            rhs[iu] += c
        elif iv is not None and u_in_a:
            rhs[iv] += c
        elif (u_in_a and v in Z) or (v_in_a and u in Z):
            a_current_const += c
    if ni == 0:
        if a_current_const <= 0:
            raise DisconnectedTerminals("terminals touch but carry no edge")
        return 1.0 / a_current_const
    if ni < DENSE_LIMIT:
        L = np.zeros((ni, ni))
        for r, c_, v_ in zip(rows, cols, vals):
            L[r, c_] += v_
        L[np.arange(ni), np.arange(ni)] += diag
        try:
            u_int = np.linalg.solve(L, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(str(exc)) from exc
        resid = float(np.linalg.norm(L @ u_int - rhs))
    else:
        L = sp.csr_matrix((vals + list(diag), (rows + interior_idx(ni), cols + interior_idx(ni))), shape=(ni, ni))
        M = sp.diags(1.0 / L.diagonal())
        u_int, info = spla.cg(L, rhs, M=M, rtol=0.0, atol=RESIDUAL_TOL, maxiter=20 * ni)
        if info != 0:
            raise SolverFailure(f"cg returned {info}")
        resid = float(np.linalg.norm(L @ u_int - rhs))
    if resid > RESIDUAL_TOL * max(1.0, float(np.linalg.norm(rhs))):
        raise SolverFailure(f"residual {resid} too large")
    current = 0.0
    pot = {v: float(u_int[i]) for v, i in index.items()}
    for u, v, c in net.edges:
        if u in A and v not in A:
            current += c * (1.0 - pot.get(v, 0.0))
        elif v in A and u not in A:
            current += c * (1.0 - pot.get(u, 0.0))
    if current <= 0:
        raise SolverFailure("nonpositive source current")
    return 1.0 / current


def interior_idx(ni: int) -> list[int]:
    return list(range(ni))


# --- exhaustive oracle --------------------------------------------------------

def effective_resistance_bruteforce(net: ResistanceNetwork) -> float:
    """Spanning-tree ratio: (two-forests separating the terminals, weighted)
    over (spanning trees, weighted); terminals are contracted first."""
    A, Z = net.source, net.sink
    if A & Z:
        return 0.0
    relabel: dict[int, int] = {}
    nodes = sorted({u for u, _, _ in net.edges} | {v for _, v, _ in net.edges} | A | Z)
    a_node, z_node = 0, 1
    nxt = 2
    for v in nodes:
        if v in A:
            relabel[v] = a_node
        elif v in Z:
            relabel[v] = z_node
        else:
            relabel[v] = nxt
            nxt += 1
    edges = [(relabel[u], relabel[v], c) for u, v, c in net.edges if relabel[u] != relabel[v]]
    # restrict to the component of the source terminal (matches the solver)
    adj: dict[int, set[int]] = {}
    for u, v, _ in edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    comp = {a_node}
    stack = [a_node]
    while stack:
        u = stack.pop()
        for w in adj.get(u, ()):
            if w not in comp:
                comp.add(w)
                stack.append(w)
    if z_node not in comp:
        raise DisconnectedTerminals("no path between the terminal sets")
    keep = sorted(comp)
    remap = {v: i for i, v in enumerate(keep)}
    a_node, z_node = remap[0], remap[1]
    edges = [(remap[u], remap[v], c) for u, v, c in edges if u in comp and v in comp]
    if len(edges) > 12:
        raise TooLarge("exhaustive oracle limited to 12 edges")
    n = len(keep)
    m = len(edges)
    trees = 0.0
    forests = 0.0
    seen_tree = False
    for size, acc in ((n - 1, "tree"), (n - 2, "forest")):
        if size < 0:
            continue
        for sub in combinations(range(m), size):
            parent = list(range(n))

            def find(x):
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            ok = True
            weight = 1.0
            for ei in sub:
                u, v, c = edges[ei]
                ru, rv = find(u), find(v)
                if ru == rv:
                    ok = False
                    break
                parent[ru] = rv
                weight *= c
            if not ok:
                continue
            roots = {find(x) for x in range(n)}
            if acc == "tree" and len(roots) == 1:
                trees += weight
                seen_tree = True
            elif acc == "forest" and len(roots) == 2 and find(a_node) != find(z_node):
                forests += weight
    if not seen_tree:
        raise DisconnectedTerminals("graph is not connected")
    return forests / trees


# --- planar duality -----------------------------------------------------------

def dual_network(m: CausalMap, a: int, z: int) -> ResistanceNetwork:
    """Dual of a finite planar piece with unit resistances.

    The outer face is split at a and z into the dual terminals; every primal
    edge contributes one unit dual edge between the faces it separates.
    """
    fl = faces(m)
    outer = outer_face(m, fl)
    face_of_dart: dict[int, int] = {}
    for i, cyc in enumerate(fl):
        for d in cyc:
            face_of_dart[d] = i
    cycle = fl[outer]
    tails = [dart_tail(m, d) for d in cycle]
    if a not in tails or z not in tails:
        raise TerminalsNotOuter("both terminals must lie on the outer face")
    ia = tails.index(a)
    rotated = cycle[ia:] + cycle[:ia]
    rtails = tails[ia:] + tails[:ia]
    iz = rtails.index(z)
    arc_of_dart = {}
    for pos, d in enumerate(rotated):
        arc_of_dart[d] = 0 if pos < iz else 1
    n_inner = len(fl)
    node_a, node_z = n_inner, n_inner + 1  # outer face index unused as a node

    def dual_node(d: int) -> int:
        f = face_of_dart[d]
        if f != outer:
            return f
        return node_a if arc_of_dart[d] == 0 else node_z

    edges = []
    for e in range(m.n_edges):
        edges.append((dual_node(2 * e), dual_node(2 * e + 1), 1.0))
    return mk_network(n_inner + 2, edges, {node_a}, {node_z})


# --- spine decomposition and separating sets ----------------------------------

@dataclass
class SpineDecomposition:
    """Nonbacktracking descent along the surviving skeleton with the sibling
    counts it leaves on each side, the alternation heights, and the disjoint
    separating sets hung off them.  Vertices are tree ids."""

    spine: list[int]
    left_counts: list[int]
    right_counts: list[int]
    cut_heights: list[tuple[int, int]]
    cutsets: list[set[int]]


def _backbone_children(t, v: int) -> list[int]:
    return [w for w in t.children(v) if t.on_backbone[w]]


def _ray(t, v: int, side: str) -> list[int]:
    out = [v]
    while t.height[out[-1]] < t.depth_cap:
        kids = _backbone_children(t, out[-1])
        if not kids:
            break
        out.append(kids[0] if side == "left" else kids[-1])
    return out


def cut_heights_from_counts(lefts: list[int], rights: list[int]) -> list[tuple[int, int]]:
    """Alternating first-left / first-right heights along the spine."""
    heights: list[tuple[int, int]] = []
    n = 0
    limit = len(lefts)
    while True:
        h = next((i for i in range(n, limit) if lefts[i] > 0), None)
        if h is None:
            break
        hp = next((i for i in range(h + 1, limit) if rights[i] > 0), None)
        if hp is None:
            break
        heights.append((h, hp))
        n = hp + 1
    return heights


def spine_walk(t, rng) -> SpineDecomposition:
    """Uniform nonbacktracking walk on the skeleton, with cut bookkeeping."""
    if t.kind != "survived":
        raise NoBackbone("spine walks need a survival-conditioned tree")
    spine = [t.root]
    lefts: list[int] = []
    rights: list[int] = []
    while t.height[spine[-1]] < t.depth_cap:
        kids = _backbone_children(t, spine[-1])
        if not kids:
            break
        i = int(rng.integers(0, len(kids)))
        lefts.append(i)
        rights.append(len(kids) - 1 - i)
        spine.append(kids[i])
    heights = cut_heights_from_counts(lefts, rights)
    cutsets = []
    for h, hp in heights:
        cut = set(spine[h : hp + 1])
        cut.update(_ray(t, spine[h], "left"))
        cut.update(_ray(t, spine[hp], "right"))
        cutsets.append(cut)
    return SpineDecomposition(spine, lefts, rights, heights, cutsets)


def spine_law(backbone_law) -> dict[tuple[int, int], float]:
    """Joint law of the sibling counts left on each side of a spine step."""
    out: dict[tuple[int, int], float] = {}
    for b, p in backbone_law.weights.items():
        for left in range(b):
            out[(left, b - 1 - left)] = out.get((left, b - 1 - left), 0.0) + p / b
    return out


def _slice_ids(s: CausalMap, tree_ids) -> list[int]:
    rev = getattr(s, "_tree_rev", None)
    if rev is None:
        rev = {int(tv): v for v, tv in enumerate(s.tree_vertex)}
        s._tree_rev = rev
    return [rev[int(v)] for v in tree_ids]


def boundary_resistance(s: CausalMap, x: int) -> float:
    """R_eff from one vertex to the whole slice boundary."""
    if s.is_escape_boundary(x):
        return 0.0
    net = network_from_map(s, {x}, s.boundary())
    return effective_resistance(net)


def spine_resistance_profile(s: CausalMap, dec: SpineDecomposition, n_max: int) -> list[float]:
    """R_eff(x_n <-> boundary) for n = 0..n_max via one factorisation.

    Grounding the boundary turns each value into a diagonal Green's function
    entry, so a single sparse LU serves every n; agreement with the direct
    solver is covered by tests.
    """
    ids = _slice_ids(s, dec.spine[: n_max + 1])
    bset = s.boundary()
    free = [v for v in range(s.n_vertices) if v not in bset]
    index = {v: i for i, v in enumerate(free)}
    rows, cols, vals = [], [], []
    diag = np.zeros(len(free))
    for e in range(s.n_edges):
        u, v = int(s.edge_u[e]), int(s.edge_v[e])
        iu, iv = index.get(u), index.get(v)
        if iu is not None:
            diag[iu] += 1.0
        if iv is not None:
            diag[iv] += 1.0
        if iu is not None and iv is not None:
            rows += [iu, iv]
            cols += [iv, iu]
            vals += [-1.0, -1.0]
    ni = len(free)
    L = sp.csc_matrix(
        (vals + list(diag), (rows + list(range(ni)), cols + list(range(ni)))), shape=(ni, ni)
    )
    lu = spla.splu(L)
    out = []
    for v in ids:
        if v in bset:
            out.append(0.0)
            continue
        rhs = np.zeros(ni)
        rhs[index[v]] = 1.0
        out.append(float(lu.solve(rhs)[index[v]]))
    return out


@dataclass
class CutsetBound:
    lower_bound: float
    direct: float
    pairs_used: int


def cutset_lower_bound(s: CausalMap, dec: SpineDecomposition, n: int) -> CutsetBound:
    """Series bound: summed resistances across disjoint separating-set pairs
    never exceed the direct spine-to-boundary resistance."""
    usable = [k for k, (_, hp) in enumerate(dec.cut_heights) if hp < n]
    pairs = [(usable[i], usable[i + 1]) for i in range(0, len(usable) - 1, 2)]
    if not pairs:
        raise TooFewCutsets("need at least two separating sets below the spine vertex")
    total = 0.0
    for ka, kb in pairs:
        a_ids = _slice_ids(s, dec.cutsets[ka])
        b_ids = _slice_ids(s, dec.cutsets[kb])
        net = network_from_map(s, a_ids, b_ids)
        total += effective_resistance(net)
    x = _slice_ids(s, [dec.spine[n]])[0]
    return CutsetBound(lower_bound=total, direct=boundary_resistance(s, x), pairs_used=len(pairs))


# --- network text form ----------------------------------------------------------

def write_network(net: ResistanceNetwork) -> str:
    """Edge-list text with a terminals header, one `u v conductance` per line."""
    lines = [
        "# causalmaps-network",
        "A " + " ".join(str(v) for v in sorted(net.source)),
        "Z " + " ".join(str(v) for v in sorted(net.sink)),
    ]
    for u, v, c in net.edges:
        lines.append(f"{u} {v} {c:.17g}")
    return "\n".join(lines) + "\n"


def read_network(text: str) -> ResistanceNetwork:
    source: set[int] = set()
    sink: set[int] = set()
    edges = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if ln.startswith("A "):
            source = {int(x) for x in ln.split()[1:]}
        elif ln.startswith("Z "):
            sink = {int(x) for x in ln.split()[1:]}
        else:
            u, v, c = ln.split()
            edges.append((int(u), int(v), float(c)))
    n = 1 + max(max((max(u, v) for u, v, _ in edges), default=0), max(source | sink, default=0))
    return mk_network(n, edges, source, sink)


# --- degree-truncated dual tree -----------------------------------------------

@dataclass
class DualTree:
    nodes: list[int]  # tree-side labels: one per kept non-base vertex
    edges: list[tuple[int, int]]
    node_face_edge: dict[int, tuple[int, int]]  # node -> the vertical edge whose left cell it is


def dual_tree(s: CausalMap, v0: int, c_max: int) -> DualTree:
    """Dual-face tree following the degree-truncated subtree of v0.

    Vertices with more than c_max children lose their subtrees; the dual
    node for each kept vertex w is the face immediately left of the edge
    (parent(w), w), and branching points are circumvented over the top by
    linking consecutive children's faces.  Raises TruncationDies when the
    truncated subtree misses the cap.
    """
    if s.kind_of_map != "slice":
        raise ValueError("dual trees are built inside slices")
    if s.is_escape_boundary(v0):
        raise ValueError("base vertex must be interior")
    kept_children: dict[int, list[int]] = {}
    agenda = [v0]
    deepest = int(s.height[v0])
    while agenda:
        v = agenda.pop()
        deepest = max(deepest, int(s.height[v]))
        if int(s.height[v]) >= s.depth_cap:
            continue
        ends, klo, khi = s.walk_ends(v)
        kids = list(ends[klo:khi])
        if len(kids) > c_max:
            continue
        kept_children[v] = kids
        agenda.extend(kids)
    if deepest < s.depth_cap:
        raise TruncationDies("degree-truncated subtree dies before the cap")
    nodes: list[int] = []
    edges: list[tuple[int, int]] = []
    face_edge: dict[int, tuple[int, int]] = {}
    for v, kids in kept_children.items():
        for a, b in zip(kids, kids[1:]):
            edges.append((a, b))
        if v != v0 and kids:
            edges.append((v, kids[0]))
    for v, kids in kept_children.items():
        nodes.extend(kids)
    for w in nodes:
        face_edge[w] = (s.parent_of(w), w)
    return DualTree(nodes=nodes, edges=edges, node_face_edge=face_edge)
