"""Seed derivation.

Every random stream descends from one master seed.

* ``derive_seed(master, tag)`` hashes a purpose tag with CRC-32 and feeds
  ``[master, crc32(tag)]`` to :class:`numpy.random.SeedSequence`; the first
  64 bits of its state are the derived seed.
* ``chain_rng(seed, c)`` gives chain ``c`` the PCG64 stream seeded by
  ``SeedSequence(seed, spawn_key=(c,))``.  Chain 0 is the default chain.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(master: int, tag: str) -> int:
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode("utf-8"))])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def chain_rng(seed: int, chain: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(chain),))
    return np.random.Generator(np.random.PCG64(ss))


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return chain_rng(0 if rng is None else int(rng))
