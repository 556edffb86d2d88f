"""Named random streams: one independent generator per label, all derived from one seed."""
from __future__ import annotations

import zlib

import numpy as np


class RNGStreams:
    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        """The generator labelled ``name``; created on first use, then shared."""
        if name not in self._streams:
            ss = np.random.SeedSequence(self.seed, spawn_key=(zlib.crc32(name.encode()),))
            self._streams[name] = np.random.default_rng(ss)
        return self._streams[name]

    def fresh(self, name: str) -> np.random.Generator:
        """A new generator for ``name`` at its initial state (does not touch the shared one)."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(zlib.crc32(name.encode()),)))

    def split(self, name: str) -> "RNGStreams":
        return RNGStreams(int(self.fresh(name).integers(2**63 - 1)))
