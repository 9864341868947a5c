"""Named random substreams derived from one 64-bit seed."""

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name`` ("init", "split", "shuffle/3", ...)."""
    key = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, key]))
