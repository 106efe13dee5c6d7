"""Deterministic seed derivation.

Every random decision in the package draws from a numpy Generator whose
seed is derived from (master seed, structured path words). Worker
processes derive the same seeds from the same paths, so results do not
depend on how tasks are scheduled across processes.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = 2**64


def derive_seed(master: int, *path: int | str) -> int:
    """Mix a master seed and a path of words into a 64-bit task seed."""
    h = hashlib.sha256()
    h.update(int(master % _U64).to_bytes(8, "little"))
    for word in path:
        if isinstance(word, bool) or not isinstance(word, (int, str)):
            raise TypeError(f"seed path words must be int or str, got {word!r}")
        if isinstance(word, int):
            h.update(b"i" + int(word % _U64).to_bytes(8, "little"))
        else:
            enc = word.encode("utf-8")
            h.update(b"s" + len(enc).to_bytes(4, "little") + enc)
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(master: int, *path: int | str) -> np.random.Generator:
    """A PCG64 Generator seeded by ``derive_seed(master, *path)``."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *path)))
