"""Static map rendering.

Maps are drawn with matplotlib and written as SVG: concentric rings for
causal maps (radius = height + 1, angle by level rank), Cartesian columns
for slices and the half-plane (stubs on row -1).
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .cmap import CausalMap, positions
from .errors import IoError
from .lazymap import LazyLayeredMap


def _lazy_layout(m: LazyLayeredMap) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Nested-interval layout of the materialised part of a lazy map."""
    n = len(m)
    pos = np.full((n, 2), np.nan)
    segs: list[tuple[int, int]] = []
    if m.kind == "halfplane":
        tops = []
        for c in sorted(m.col_root):
            stub, root = m.col_stub[c], m.col_root[c]
            pos[stub] = (float(c), -1.0)
            pos[root] = (float(c), 0.0)
            segs.append((stub, root))
            tops.append((root, float(c) - 0.5, float(c) + 0.5))
    else:
        pos[m.root] = (0.0, 0.0)
        tops = [(m.root, -0.5, 0.5)]
    while tops:
        nxt = []
        for v, lo, hi in tops:
            if m.n_kids[v] == -1:
                continue
            kids = list(range(m.kid_start[v], m.kid_start[v] + m.n_kids[v]))
            for i, w in enumerate(kids):
                a = lo + (hi - lo) * i / max(1, len(kids))
                b = lo + (hi - lo) * (i + 1) / max(1, len(kids))
                pos[w] = ((a + b) / 2.0, float(m.height[w]))
                segs.append((v, w))
                nxt.append((w, a, b))
        tops = nxt
    for v in range(n):
        r = m.right[v]
        if r >= 0 and not np.isnan(pos[v][0]) and not np.isnan(pos[r][0]):
            segs.append((v, r))
    return pos, segs


def render_svg(m, path: str) -> str:
    """Draw the map and write a valid SVG file; returns the path."""
    try:
        fig, ax = plt.subplots(figsize=(8, 8))
        if isinstance(m, CausalMap):
            pos = positions(m)
            for e in range(m.n_edges):
                u, v = int(m.edge_u[e]), int(m.edge_v[e])
                ax.plot([pos[u, 0], pos[v, 0]], [pos[u, 1], pos[v, 1]], color="0.4", lw=0.6, zorder=1)
            ax.scatter(pos[:, 0], pos[:, 1], s=8, color="black", zorder=2)
            ax.scatter([pos[m.root, 0]], [pos[m.root, 1]], s=24, color="crimson", zorder=3)
        else:
            pos, segs = _lazy_layout(m)
            for u, v in segs:
                ax.plot([pos[u, 0], pos[v, 0]], [pos[u, 1], pos[v, 1]], color="0.4", lw=0.6, zorder=1)
            drawn = ~np.isnan(pos[:, 0])
            ax.scatter(pos[drawn, 0], pos[drawn, 1], s=8, color="black", zorder=2)
            ax.scatter([pos[m.root, 0]], [pos[m.root, 1]], s=24, color="crimson", zorder=3)
        ax.set_aspect("equal")
        ax.axis("off")
        fig.savefig(path, format="svg", bbox_inches="tight")
        plt.close(fig)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return path
