"""Deterministic seed derivation.

Every stochastic draw in the package takes its seed from a
``numpy.random.SeedSequence`` keyed by (master seed, purpose, indices), so
initial-condition streams and disorder streams stay disjoint: changing the
realization count of one never perturbs the other.
"""
from __future__ import annotations

import numpy as np

PURPOSE_INITIAL = 0
PURPOSE_DISORDER = 1

__all__ = ["PURPOSE_INITIAL", "PURPOSE_DISORDER", "derived_seed", "derived_rng"]


def derived_seed(master: int, purpose: int, *indices: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master, spawn_key=(purpose, *indices))


def derived_rng(master: int, purpose: int, *indices: int) -> np.random.Generator:
    return np.random.default_rng(derived_seed(master, purpose, *indices))
