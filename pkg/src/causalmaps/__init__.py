"""Simulation and verification toolkit for supercritical causal maps."""

__version__ = "0.1.0"

from . import cmap, electric, errors, explore, lazymap, metric, offspring, rng, tree, walk  # noqa: F401
