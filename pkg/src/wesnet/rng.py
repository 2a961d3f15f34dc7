"""Counter-based random streams.

Every stream is addressed by ``(master_seed, stream_id)`` where ``stream_id``
is a tuple of non-negative integers. The underlying bit generator is Philox
keyed through :class:`numpy.random.SeedSequence`, so a stream's output depends
only on its address, never on which thread or process draws from it.
"""

from __future__ import annotations

import zlib

import numpy as np


def name_to_id(name: str) -> int:
    """Stable 32-bit integer for a string label (used for detector names)."""
    return zlib.crc32(name.encode("utf-8"))


class RngStream:
    """A reproducible random stream.

    The stream is the only stateful object in the package; parallel callers
    must not share one but derive children with :meth:`child`.
    """

    def __init__(self, master_seed: int, stream_id=()):
        if isinstance(stream_id, (int, np.integer)):
            stream_id = (int(stream_id),)
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = tuple(int(i) for i in stream_id)
        if any(i < 0 for i in self.stream_id):
            raise ValueError("stream ids must be non-negative")
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *ids) -> "RngStream":
        """Independent stream addressed by this stream's id extended with ``ids``."""
        return RngStream(self.master_seed, self.stream_id + tuple(ids))

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"

    # thin delegation for the draws used in this package
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)


def as_stream(rng) -> RngStream:
    """Accept an ``RngStream`` or an integer seed."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))
