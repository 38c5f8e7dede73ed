"""Random walks on layered maps: simple and biased steps, heights, descents,
regeneration structure, speed estimators, bad-vertex scans, boundary markers
and slice-escape estimates.

Biased steps weight child edge-ends 1 and every other incidence lambda,
with edge multiplicity respected; lambda = 1 recovers the simple random
walk proportional to multiplicity.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .errors import (
    InsufficientMaterialization,
    IsolatedVertex,
    TailNotAboveH,
)
from .rng import BufferedDraws

Z95 = 1.959963984540054


@dataclass
class WalkTrace:
    """Positions and heights of one walk; lambda 1 is the simple walk."""

    positions: np.ndarray
    heights: np.ndarray
    lam: float = 1.0
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def n_steps(self) -> int:
        return len(self.positions) - 1


def _pick_end(ends, klo, khi, lam: float, u: float) -> int:
    deg = len(ends)
    if deg == 0:
        raise IsolatedVertex("vertex has no incident edges")
    if lam == 1.0:
        i = int(u * deg)
        return ends[min(i, deg - 1)]
    pre = lam * klo
    kid = khi - klo
    post = lam * (deg - khi)
    x = u * (pre + kid + post)
    if x < pre:
        i = int(x / lam)
    elif x < pre + kid:
        i = klo + int(x - pre)
    else:
        i = khi + int((x - pre - kid) / lam)
    return ends[min(i, deg - 1)]


def step(m, v: int, lam: float, rng) -> int:
    """One biased step from v; deterministic given the stream state."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    ends, klo, khi = m.walk_ends(v)
    u = rng.random() if hasattr(rng, "random") else rng.next()
    return _pick_end(ends, klo, khi, lam, u)


def run_walk(m, start: int, n_steps: int, lam: float, rng, seed: int | None = None) -> WalkTrace:
    """Walk trace of length n_steps+1; lazily grows the map as needed."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    draws = BufferedDraws(rng) if not isinstance(rng, BufferedDraws) else rng
    pos = np.empty(n_steps + 1, dtype=np.int64)
    hts = np.empty(n_steps + 1, dtype=np.int32)
    v = start
    pos[0] = v
    hts[0] = m.height_of(v)
    walk_ends = m.walk_ends
    nxt = draws.next
    for n in range(1, n_steps + 1):
        ends, klo, khi = walk_ends(v)
        v = _pick_end(ends, klo, khi, lam, nxt())
        pos[n] = v
        hts[n] = m.height_of(v)
    return WalkTrace(positions=pos, heights=hts, lam=lam, seed=seed)


def descent_max(t: WalkTrace) -> int:
    """Greatest height drop from any earlier time to any later one."""
    h = t.heights
    if len(h) < 2:
        return 0
    run_max = np.maximum.accumulate(h)
    return int(np.max(run_max - h))


@dataclass
class RegenReport:
    """Regeneration times with the future verified through the trace end."""

    times: list[int]
    censored_after: int


def regeneration_times(t: WalkTrace, buffer: int | None = None) -> RegenReport:
    """Times whose height is a strict past record never undercut afterwards.

    The definition quantifies over the whole future; here the future is
    verified through the end of the trace and times within `buffer` of the
    end are dropped (default: 10% of the length) to bound censoring bias.
    """
    h = t.heights.astype(np.int64)
    n = len(h)
    if buffer is None:
        buffer = n // 10
    if buffer >= n:
        raise ValueError("buffer must be smaller than the trace length")
    past_max = np.empty(n, dtype=np.int64)
    past_max[0] = np.iinfo(np.int64).min
    np.maximum.accumulate(h[:-1], out=past_max[1:])
    future_min = np.minimum.accumulate(h[::-1])[::-1]
    ok = (h > past_max) & (h <= future_min)
    ok[0] = False
    idx = np.nonzero(ok)[0]
    idx = idx[idx <= (n - 1) - buffer]
    return RegenReport(times=[int(i) for i in idx], censored_after=n - 1)


@dataclass
class SpeedEstimate:
    v_terminal: float
    ci95: tuple[float, float]
    v_ratio: float | None
    n_increments: int
    disagreement: bool


def speed_estimate(traces: list[WalkTrace], buffer: int | None = None, z: float = Z95) -> SpeedEstimate:
    """Terminal-height and regeneration-ratio speed estimators.

    The terminal estimator pools H_n/n over traces with a normal CI; the
    ratio estimator divides summed height gains by summed time gaps over
    regeneration increments (the first regeneration is a boundary term and
    is excluded).  v_ratio is None when no trace yields two regenerations;
    `disagreement` flags a >5% relative gap between the two.
    """
    if not traces:
        raise ValueError("no traces")
    n = traces[0].n_steps
    if any(t.n_steps != n for t in traces):
        raise ValueError("traces must have equal length")
    ratios = np.array([t.heights[-1] / t.n_steps for t in traces], dtype=np.float64)
    v_term = float(ratios.mean())
    half = z * float(ratios.std(ddof=1)) / sqrt(len(ratios)) if len(ratios) > 1 else 0.0
    dh_sum = dt_sum = 0
    n_inc = 0
    for t in traces:
        times = regeneration_times(t, buffer=buffer).times
        for a, b in zip(times[:-1], times[1:]):
            dt_sum += b - a
            dh_sum += int(t.heights[b]) - int(t.heights[a])
            n_inc += 1
    v_ratio = (dh_sum / dt_sum) if dt_sum > 0 else None
    disagree = v_ratio is not None and abs(v_ratio - v_term) > 0.05 * max(abs(v_term), 1e-12)
    return SpeedEstimate(
        v_terminal=v_term,
        ci95=(v_term - half, v_term + half),
        v_ratio=v_ratio,
        n_increments=n_inc,
        disagreement=disagree,
    )


def regeneration_increments(traces: list[WalkTrace], buffer: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Pooled (time gap, height gain) pairs between consecutive regenerations."""
    dts, dhs = [], []
    for t in traces:
        times = regeneration_times(t, buffer=buffer).times
        for a, b in zip(times[:-1], times[1:]):
            dts.append(b - a)
            dhs.append(int(t.heights[b]) - int(t.heights[a]))
    return np.asarray(dts, dtype=np.int64), np.asarray(dhs, dtype=np.int64)


# --- bad-vertex scan ---------------------------------------------------------

def _side_neighbor(m, v: int, side: str):
    if hasattr(m, "side_neighbor"):
        return m.side_neighbor(v, side)
    # materialised map: cyclic level order for causal, path for slices
    h = int(m.height[v])
    level = m.levels[h]
    i = int(m.level_index[v])
    if side == "right":
        if i + 1 < len(level):
            return level[i + 1]
        return level[0] if (m.kind_of_map == "causal" and len(level) > 1) else None
    if i > 0:
        return level[i - 1]
    return level[-1] if (m.kind_of_map == "causal" and len(level) > 1) else None


def _child_ids(m, v: int) -> list[int]:
    if hasattr(m, "ensure_kids"):
        return list(m.ensure_kids(v))
    ends, klo, khi = m.walk_ends(v)
    return list(ends[klo:khi])


def _children_known(m, v: int) -> bool:
    if hasattr(m, "ensure_kids"):
        return True
    return int(m.height[v]) < m.depth_cap


def is_k_bad(m, v: int, k: int) -> bool:
    """All descendants of v's 2k+1 level-neighbours within k generations
    (the base vertices included) have exactly one child."""
    if m.height_of(v) < 0:
        return False
    base = [v]
    w = v
    for _ in range(k):
        w = _side_neighbor(m, w, "left")
        if w is None:
            raise InsufficientMaterialization("missing level neighbour on the left")
        base.insert(0, w)
    w = v
    for _ in range(k):
        w = _side_neighbor(m, w, "right")
        if w is None:
            raise InsufficientMaterialization("missing level neighbour on the right")
        base.append(w)
    gen = base
    for _ in range(k + 1):
        nxt: list[int] = []
        for x in gen:
            if not _children_known(m, x):
                raise InsufficientMaterialization("children unknown at the scan frontier")
            kids = _child_ids(m, x)
            if len(kids) != 1:
                return False
            nxt.extend(kids)
        gen = nxt
    return True


def kbad_scan(m, k: int, vs: list[int]) -> list[bool]:
    """Exact bad-vertex evaluation for each vertex of vs."""
    return [is_k_bad(m, v, k) for v in vs]


# --- boundary marker and slice escape ---------------------------------------

def boundary_marker(m, t: WalkTrace, h: int) -> int:
    """Height-h tree ancestor of the final position, the finite stand-in for
    the walk's limit point.  Requires the trace to end strictly above h."""
    hts = t.heights
    if hts[-1] <= h:
        raise TailNotAboveH(f"trace ends at height {int(hts[-1])} <= {h}")
    v = int(t.positions[-1])
    if hasattr(m, "ancestor_at_height"):
        return m.ancestor_at_height(v, h)
    while m.height_of(v) > h:
        v = m.parent_of(v)
    return v


def wilson_ci(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _on_slice_boundary(m, v: int) -> bool:
    if hasattr(m, "is_escape_boundary"):
        return m.is_escape_boundary(v)
    return v in m.boundary()


@dataclass
class EscapeEstimate:
    p_hat: float
    ci95: tuple[float, float]
    successes: int
    trials: int


def slice_escape_prob(s, x: int, depth_stop: int, trials: int, rng) -> EscapeEstimate:
    """Monte Carlo estimate of reaching depth_stop before the slice boundary."""
    if _on_slice_boundary(s, x):
        return EscapeEstimate(0.0, wilson_ci(0, trials), 0, trials)
    draws = BufferedDraws(rng)
    succ = 0
    for _ in range(trials):
        v = x
        while True:
            hv = s.height_of(v)
            if hv >= depth_stop:
                succ += 1
                break
            if _on_slice_boundary(s, v):
                break
            ends, klo, khi = s.walk_ends(v)
            v = _pick_end(ends, klo, khi, 1.0, draws.next())
    return EscapeEstimate(succ / trials, wilson_ci(succ, trials), succ, trials)
