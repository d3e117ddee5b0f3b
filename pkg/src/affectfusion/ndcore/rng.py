"""Seeded random streams.

All randomness comes from numpy's PCG64 bit generator. A :class:`RngState`
derives one independent stream per purpose by spawning a child
``SeedSequence(seed, spawn_key=(stream_id,))``. Stream ids are fixed:

    init=0, dropout=1, shuffle=2, synth=3, gradcheck=4, split=5

so the same seed and the same sequence of draws give identical values on
every platform numpy supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ContractError

STREAMS = {"init": 0, "dropout": 1, "shuffle": 2, "synth": 3, "gradcheck": 4, "split": 5}


@dataclass(frozen=True)
class RngState:
    seed: int

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def stream(self, name: str) -> np.random.Generator:
        """Fresh generator for ``name``; each call restarts the stream."""
        try:
            key = STREAMS[name]
        except KeyError:
            raise ContractError(f"unknown rng stream {name!r}; known: {sorted(STREAMS)}") from None
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(key,))
        return np.random.Generator(np.random.PCG64(seq))
