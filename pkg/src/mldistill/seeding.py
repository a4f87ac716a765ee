"""Deterministic random-stream derivation.

Every stochastic step in the package draws from a generator derived here,
so a run is a pure function of its (inputs, config, seed) triple and
re-running it reproduces every byte of output.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _part_to_int(part: int | str) -> int:
    if isinstance(part, str):
        digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    return int(part) & _MASK64


def derive_seed(*parts: int | str) -> int:
    """Mix integer and string parts into a stable 64-bit seed."""
    entropy = [_part_to_int(p) for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def rng_for(*parts: int | str) -> np.random.Generator:
    """A PCG64 generator keyed by the given parts."""
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))


def particle_rng(seed: int, particle_index: int) -> np.random.Generator:
    """Counter-based per-particle stream: key = seed XOR particle index.

    Philox is counter-based, so particle streams are independent of the
    order in which particles are evaluated (serial and parallel swarms
    consume randomness identically).
    """
    key = (int(seed) & _MASK64) ^ int(particle_index)
    return np.random.Generator(np.random.Philox(key=key))
