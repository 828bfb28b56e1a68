"""Counter-style random streams.

Every stream is addressed by ``(seed, tag, *ids)`` and yields rows in
sequence, row ``i`` belonging to iteration ``i``.  Rows never depend on how
many are drawn at once, so a stream consumed in chunks, in one go, or
regenerated for a random-access query produces identical values.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def seed_sequence(seed: int, tag: str, *ids: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=(tag_id(tag),) + tuple(int(i) for i in ids),
    )


def derive_seed(seed: int, tag: str, *ids: int) -> int:
    """Derive an independent 64-bit seed, e.g. for Monte-Carlo run ``k``."""
    state = seed_sequence(seed, tag, *ids).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def generator(seed: int, tag: str, *ids: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, tag, *ids)))


class BlockStream:
    """Sequential standard-normal rows of fixed shape from one stream.

    Parameters
    ----------
    seed, tag, ids
        Stream address.
    row_shape : tuple of int
        Shape of one row (one iteration's worth of draws).
    """

    def __init__(self, seed: int, tag: str, *ids: int, row_shape=()):
        self.address = (seed, tag, ids)
        self.row_shape = tuple(row_shape)
        self._gen = generator(seed, tag, *ids)
        self.position = 0

    def take(self, n: int) -> np.ndarray:
        out = self._gen.standard_normal((n,) + self.row_shape)
        self.position += n
        return out


def stream_rows(seed: int, tag: str, *ids: int, n_rows: int, row_shape=()) -> np.ndarray:
    """First ``n_rows`` rows of a stream, as one array."""
    return BlockStream(seed, tag, *ids, row_shape=row_shape).take(n_rows)
