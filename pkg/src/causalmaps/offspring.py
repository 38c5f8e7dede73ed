"""Offspring distributions and generating-function machinery.

A finite-support offspring law mu is stored with exact 64-bit weights.  From
it we derive, in closed form:

* the extinction probability q (smallest fixed point of the pgf on [0,1]),
* the leafless "backbone" law with pgf (f(q+(1-q)s)-q)/(1-q),
* the subcritical "bush" law with pgf f(qs)/q,
* the degree-truncated law that folds all mass above a cap into 0.

Support is restricted to finite laws so every coefficient extraction is an
exact polynomial identity; the closed forms are cross-checked against
numerical Taylor extraction in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import DegenerateQ, NegativeWeight, NonNormalized, NotSupercritical, OutOfDomain

#: tolerance accepted on input weight sums
INPUT_TOL = 1e-9
#: tolerance after renormalisation
NORMALIZED_TOL = 1e-12
#: fixed-point iteration defaults for the extinction probability
Q_TOL = 1e-12
Q_MAX_ITER = 10**6


@dataclass(frozen=True)
class OffspringDistribution:
    """Finite-support probability law on child counts.

    Immutable after construction and safe to share across trials; sampling
    takes an external random stream.
    """

    weights: dict[int, float]
    mean: float
    max_support: int
    # sampling tables, derived once
    _counts: np.ndarray = field(repr=False, compare=False, default=None)
    _cum: np.ndarray = field(repr=False, compare=False, default=None)
    _counts_list: list = field(repr=False, compare=False, default=None)
    _cum_list: list = field(repr=False, compare=False, default=None)

    def prob(self, k: int) -> float:
        return self.weights.get(k, 0.0)

    def support(self) -> list[int]:
        return sorted(self.weights)

    def __str__(self) -> str:
        return format_distribution(self)


def mk_offspring(weights) -> OffspringDistribution:
    """Build a distribution from (count, probability) pairs.

    Raises NegativeWeight for negative entries and NonNormalized when the sum
    is off 1 by more than 1e-9; the stored weights are renormalised exactly.
    """
    pairs = list(dict(weights).items()) if isinstance(weights, dict) else list(weights)
    counts = [c for c, _ in pairs]
    if len(set(counts)) != len(counts):
        raise NonNormalized("duplicate child counts")
    if any((c < 0 or c != int(c)) for c in counts):
        raise NegativeWeight("child counts must be nonnegative integers")
    if any(p < 0 for _, p in pairs):
        raise NegativeWeight("probabilities must be nonnegative")
    total = sum(p for _, p in pairs)
    if abs(total - 1.0) > INPUT_TOL:
        raise NonNormalized(f"weights sum to {total!r}")
    w = {int(c): p / total for c, p in pairs if p > 0.0}
    if not w:
        raise NonNormalized("empty distribution")
    return _finish(w)


def _finish(w: dict[int, float]) -> OffspringDistribution:
    counts = np.array(sorted(w), dtype=np.int64)
    probs = np.array([w[int(c)] for c in counts], dtype=np.float64)
    probs = probs / probs.sum()
    w = {int(c): float(p) for c, p in zip(counts, probs)}
    mean = float(np.dot(counts, probs))
    d = OffspringDistribution(weights=w, mean=mean, max_support=int(counts[-1]))
    object.__setattr__(d, "_counts", counts)
    object.__setattr__(d, "_cum", np.cumsum(probs))
    # plain-python tables for hot scalar sampling (bisect beats np at size ~2)
    object.__setattr__(d, "_cum_list", [float(x) for x in np.cumsum(probs)])
    object.__setattr__(d, "_counts_list", [int(c) for c in counts])
    return d


def pgf_eval(d: OffspringDistribution, s: float) -> float:
    """Evaluate the probability generating function at s in [0, 1]."""
    if not 0.0 <= s <= 1.0:
        raise OutOfDomain(f"s={s!r} outside [0, 1]")
    return float(sum(p * s**k for k, p in d.weights.items()))


def pgf_derivative(d: OffspringDistribution, s: float, order: int = 1) -> float:
    """Evaluate the order-th derivative of the pgf at s in [0, 1]."""
    if not 0.0 <= s <= 1.0:
        raise OutOfDomain(f"s={s!r} outside [0, 1]")
    acc = 0.0
    for k, p in d.weights.items():
        if k >= order:
            fall = 1.0
            for j in range(order):
                fall *= k - j
            acc += p * fall * s ** (k - order)
    return acc


def extinction_prob(d: OffspringDistribution, tol: float = Q_TOL) -> float:
    """Smallest fixed point of the pgf on [0, 1].

    Subcritical or critical laws return 1.  Supercritical laws use monotone
    fixed-point iteration from 0, which converges to the smallest root.  The
    iteration runs to the floating-point fixed point (the derived-law
    coefficients need q at full precision), so the residual always lands
    well inside tol.
    """
    if d.mean <= 1.0:
        return 1.0
    q = 0.0
    for _ in range(Q_MAX_ITER):
        nxt = pgf_eval(d, q)
        if nxt == q or abs(nxt - q) <= 1e-16:
            q = nxt
            break
        q = nxt
    if abs(pgf_eval(d, q) - q) > tol:
        raise AssertionError("fixed-point iteration failed to converge")
    return min(q, 1.0)


def backbone_offspring(d: OffspringDistribution) -> OffspringDistribution:
    """Leafless offspring law of the vertices with surviving descent.

    Coefficient k of (f(q+(1-q)s)-q)/(1-q) is
    (1-q)^(k-1) * sum_{j>=k} mu(j) C(j,k) q^(j-k); the constant term vanishes
    because f(q)=q.
    """
    if d.mean <= 1.0:
        raise NotSupercritical(f"mean {d.mean} <= 1")
    q = extinction_prob(d)
    if q == 0.0:
        return _finish(dict(d.weights))
    w: dict[int, float] = {}
    for k in range(1, d.max_support + 1):
        acc = 0.0
        for j, p in d.weights.items():
            if j >= k:
                acc += p * comb(j, k) * q ** (j - k)
        val = (1.0 - q) ** (k - 1) * acc
        if val > 0.0:
            w[k] = val
    return _finish(w)


def subcritical_offspring(d: OffspringDistribution) -> OffspringDistribution:
    """Bush law with pgf f(qs)/q: coefficient k is mu(k) q^(k-1)."""
    if d.mean <= 1.0:
        raise NotSupercritical(f"mean {d.mean} <= 1")
    q = extinction_prob(d)
    if q == 0.0:
        raise DegenerateQ("extinction probability is 0; no bushes exist")
    w = {k: p * q ** (k - 1) for k, p in d.weights.items() if p > 0.0}
    return _finish(w)


def truncated_offspring(d: OffspringDistribution, c_max: int) -> OffspringDistribution:
    """Fold all mass above c_max into child count 0; mass is conserved exactly."""
    if c_max < 1:
        raise ValueError("c_max must be >= 1")
    w: dict[int, float] = {}
    overflow = 0.0
    for k, p in d.weights.items():
        if 0 < k <= c_max:
            w[k] = p
        else:
            overflow += p
    if overflow > 0.0:
        w[0] = w.get(0, 0.0) + overflow
    return _finish(w)


def sample(d: OffspringDistribution, rng) -> int:
    """Draw one child count; deterministic given the stream state.

    Accepts a numpy Generator or a BufferedDraws.
    """
    u = rng.random() if hasattr(rng, "random") else rng.next()
    idx = int(np.searchsorted(d._cum, u, side="right"))
    if idx >= len(d._counts):
        idx = len(d._counts) - 1
    return int(d._counts[idx])


def sample_many(d: OffspringDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(n)
    idx = np.searchsorted(d._cum, u, side="right")
    np.clip(idx, 0, len(d._counts) - 1, out=idx)
    return d._counts[idx]


@dataclass(frozen=True)
class DerivedLaws:
    """Extinction probability plus the backbone and bush laws of a supercritical law."""

    q: float
    backbone: OffspringDistribution
    bush: OffspringDistribution | None


def derive_laws(d: OffspringDistribution) -> DerivedLaws:
    if d.mean <= 1.0:
        raise NotSupercritical(f"mean {d.mean} <= 1")
    q = extinction_prob(d)
    bush = subcritical_offspring(d) if q > 0.0 else None
    return DerivedLaws(q=q, backbone=backbone_offspring(d), bush=bush)


def extra_children_law(d: OffspringDistribution, b: int) -> tuple[np.ndarray, np.ndarray]:
    """Conditional law of the non-surviving child count given b surviving children.

    P(extra = j) is proportional to mu(b+j) C(b+j, b) q^j, the coefficient
    family of the derivative ratio f^(b)(qs)/f^(b)(q).  Returns (values,
    cumulative probabilities); only meaningful for supercritical laws.
    """
    q = extinction_prob(d)
    vals, probs = [], []
    for j in range(0, d.max_support - b + 1):
        p = d.prob(b + j)
        if p > 0.0:
            mass = p * comb(b + j, b) * (q**j if j > 0 else 1.0)
            if mass > 0.0:
                vals.append(j)
                probs.append(mass)
    if not vals:
        raise NotSupercritical(f"no child count >= {b} in support")
    probs = np.array(probs, dtype=np.float64)
    probs /= probs.sum()
    return np.array(vals, dtype=np.int64), np.cumsum(probs)


# --- text form: "0:0.25,2:0.75", accepted by every CLI flag taking a law ---

def format_distribution(d: OffspringDistribution) -> str:
    return ",".join(f"{k}:{d.weights[k]:.17g}" for k in sorted(d.weights))


def parse_distribution(text: str) -> OffspringDistribution:
    pairs = []
    for item in text.split(","):
        k, _, p = item.partition(":")
        pairs.append((int(k.strip()), float(p.strip())))
    return mk_offspring(pairs)
