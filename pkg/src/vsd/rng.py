"""Keyed, counter-based random streams.

Every stream is a Philox generator whose seed sequence is derived from a
master seed plus a tuple of integer or string keys. Streams for different
keys are independent, and adding a key never shifts another stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(master_seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed),
                                  spawn_key=tuple(_key_int(k) for k in keys))


def stream(master_seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(master_seed, *keys)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(master_seed, *keys)))


class StreamFactory:
    """Derives named child streams from a fixed root key path."""

    def __init__(self, master_seed: int, *keys):
        self.master_seed = int(master_seed)
        self.keys = tuple(keys)

    def child(self, *keys) -> "StreamFactory":
        return StreamFactory(self.master_seed, *self.keys, *keys)

    def __call__(self, *keys) -> np.random.Generator:
        return stream(self.master_seed, *self.keys, *keys)
