"""Seed splitting.

Every random draw in the library comes from ``stream(seed, purpose)``.  The
global 64-bit seed is combined with a fixed per-purpose stream id through
:class:`numpy.random.SeedSequence`, so changing how often one purpose draws
never shifts the numbers seen by another.
"""

from __future__ import annotations

import numpy as np

STREAM_IDS = {
    "init": 1,
    "initial_condition": 2,
    "noise": 3,
    "batches": 4,
    "probes": 5,
    "directions": 6,
    "starts": 7,
    "sweep": 8,
}


def stream(seed: int, purpose: str, *extra: int) -> np.random.Generator:
    """Return an independent generator for ``purpose`` derived from ``seed``.

    ``extra`` integers further split the stream (e.g. a cell or phase index).
    """
    if purpose not in STREAM_IDS:
        raise ValueError(f"unknown random stream purpose {purpose!r}")
    key = (STREAM_IDS[purpose], *(int(e) for e in extra))
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.default_rng(ss)
