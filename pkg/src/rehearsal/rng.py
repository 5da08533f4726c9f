"""Seed fan-out.

Every random stream is addressed by a root seed plus a tuple of non-negative
integer keys, via :class:`numpy.random.SeedSequence` spawn keys. Two streams
with different key tuples are statistically independent; the same address
always yields the same draws, regardless of call order.
"""

from __future__ import annotations

import numpy as np

# Top-level key spaces. Benchmarks key streams by variable index under the
# seed they are handed; the evaluator derives those seeds from these tags.
DATASET = 0
CONTEXT = 1
SCORING = 2
BASELINE = 3
PROBE = 4


def substream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit seed for a child address, usable as the root of further fan-out."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))
