"""Deterministic, splittable random streams.

Every source of randomness in the package (weight init, shuffling, Cutout,
corpus synthesis) draws from a named Philox stream derived from a single
integer seed plus a key of strings/ints.  Philox is counter-based, so streams
with different keys are independent and reproducible regardless of draw order
elsewhere in the program.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _canonical(parts: tuple) -> bytes:
    # Unambiguous byte encoding of the key; repr() is avoided because its
    # escaping rules for non-ASCII text are not pinned down.
    chunks = []
    for p in parts:
        if isinstance(p, str):
            b = p.encode("utf-8")
            chunks.append(b"s" + str(len(b)).encode() + b":" + b)
        elif isinstance(p, (int, np.integer)):
            chunks.append(b"i" + str(int(p)).encode())
        else:
            raise TypeError(f"stream key parts must be str or int, got {type(p).__name__}")
    return b"|".join(chunks)


def stream(seed: int, *key: str | int) -> np.random.Generator:
    """A fresh generator for (seed, key). Same arguments, same stream."""
    digest = hashlib.sha256(_canonical((int(seed),) + key)).digest()
    philox_key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=philox_key))
