"""Named RNG substreams so every stage draws from an independent stream."""

import hashlib

import numpy as np


def substream(seed: int, *names) -> np.random.Generator:
    """Generator for a named stage, derived deterministically from one seed.

    Different name tuples give independent streams; the same (seed, names)
    always gives the same stream regardless of how many other streams were
    drawn before it.
    """
    tag = "/".join(str(n) for n in names).encode()
    digest = hashlib.sha256(tag).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *words]))
