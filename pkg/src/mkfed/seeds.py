"""Deterministic RNG derivation.

Every random stream in a federation run is derived from a master seed plus
a path of labels (device id, round, purpose), so independently executed
transports replay bit-identical randomness.
"""

import hashlib

import numpy as np


def derive_bytes(master: bytes | int | str, *path) -> bytes:
    h = hashlib.sha256()
    parts = [master, *path]
    for part in parts:
        if isinstance(part, int):
            width = max(1, (part.bit_length() + 8) // 8)
            part = part.to_bytes(width, "little", signed=True)
        elif isinstance(part, str):
            part = part.encode()
        h.update(len(part).to_bytes(2, "little"))
        h.update(part)
    return h.digest()


def derive_rng(master: bytes | int | str, *path) -> np.random.Generator:
    digest = derive_bytes(master, *path)
    return np.random.default_rng(np.random.SeedSequence(int.from_bytes(digest, "little")))


def derive_int(master: bytes | int | str, *path) -> int:
    return int.from_bytes(derive_bytes(master, *path)[:8], "little")
