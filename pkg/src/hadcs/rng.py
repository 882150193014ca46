"""Seed derivation.

Every random draw in the package comes from a Philox (counter-based)
generator keyed by ``derive_seed(master, purpose, *indices)``. The key is a
BLAKE2b digest of the master seed, the purpose string and the indices, so
sub-streams are stable across platforms, Python versions and worker
counts.
"""

import hashlib
import struct

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master: int, purpose: str, *indices: int) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", int(master) & MASK64))
    h.update(purpose.encode("utf-8"))
    for i in indices:
        h.update(b"\x00")
        h.update(struct.pack("<q", int(i)))
    return struct.unpack("<Q", h.digest())[0]


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))


def substream(master: int, purpose: str, *indices: int) -> np.random.Generator:
    return generator(derive_seed(master, purpose, *indices))
