"""Named random streams derived from one master seed.

Each stream is seeded from ``(master_seed, sha256(name)[:8])`` through
``numpy.random.SeedSequence``, so adding draws to one stream never shifts
another. This keeps the reveal bits identical across scenarios that consume
different amounts of sample-order randomness.
"""

from __future__ import annotations

import hashlib

import numpy as np

SAMPLE_ORDER = "sample-order"
REVEAL = "reveal"
BATCH_PARAMS = "batch-parameters"
TIEBREAK = "agent-tiebreak"

STREAM_NAMES = (SAMPLE_ORDER, REVEAL, BATCH_PARAMS, TIEBREAK)

_MASK64 = (1 << 64) - 1


def stream_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")


def stream(master_seed: int, name: str) -> np.random.Generator:
    seed = int(master_seed) & _MASK64
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream_key(name)])))


def streams(master_seed: int) -> dict[str, np.random.Generator]:
    return {name: stream(master_seed, name) for name in STREAM_NAMES}
