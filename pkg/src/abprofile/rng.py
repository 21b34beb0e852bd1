"""Named random streams derived from a single 64-bit run seed.

Every consumer of randomness asks for a stream by name (stage name plus
any indices, e.g. ``stream(seed, "sampling", 17)``). Streams are
independent and stable: adding a new stage never perturbs the draws of
an existing one, which is what makes whole-run artifacts byte-for-byte
reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _digest_words(parts: tuple) -> list[int]:
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    d = h.digest()
    return [int.from_bytes(d[i : i + 8], "little") for i in range(0, 32, 8)]


def stream(seed: int, *names) -> np.random.Generator:
    """Return a Generator unique to (seed, *names)."""
    entropy = [seed & 0xFFFFFFFFFFFFFFFF] + _digest_words(names)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def child_seed(seed: int, *names) -> int:
    """A derived 63-bit integer seed, for APIs that take ints."""
    return _digest_words((seed,) + names)[0] >> 1
