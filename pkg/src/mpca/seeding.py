"""Deterministic random streams.

All randomness flows through numpy's PCG64 bit generator with explicit
integer seeds, so results are bit-reproducible for a fixed numpy build.
Independent purposes (data generation, solver restarts, sample splitting)
draw from separate substreams derived from the same user seed through
``numpy.random.SeedSequence`` spawn keys; adding draws to one purpose never
shifts the others. Monte-Carlo replicate ``i`` of a run with base seed ``s``
uses seed ``s + i``.
"""

from __future__ import annotations

import numpy as np

_ROLES = {"data": 0, "als": 1, "split": 2}


def stream(seed: int, role: str = "data") -> np.random.Generator:
    """Return the generator for one purpose ("data", "als" or "split")."""
    if role not in _ROLES:
        raise ValueError(f"unknown stream role: {role!r}")
    seq = np.random.SeedSequence(seed, spawn_key=(_ROLES[role],))
    return np.random.default_rng(seq)


def substream(seed: int, role: str, index: int) -> np.random.Generator:
    """Like :func:`stream` but split one level further (e.g. per component)."""
    if role not in _ROLES:
        raise ValueError(f"unknown stream role: {role!r}")
    seq = np.random.SeedSequence(seed, spawn_key=(_ROLES[role], index))
    return np.random.default_rng(seq)
