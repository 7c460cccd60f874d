"""Counter-based random streams.

Every draw is addressed by ``(seed, stream, block)``: samples are produced in
fixed-size blocks and block ``b`` always comes from a Philox generator keyed by
those three integers.  A sample's value therefore depends only on its index,
not on how work is scheduled or how many threads run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

BLOCK_SIZE = 8192


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(stream) & 0xFFFFFFFF, int(block)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Stream:
    """A named random stream derived from a master seed."""

    seed: int
    stream: int = 0

    def child(self, index: int) -> "Stream":
        # stable derivation; distinct children never collide with the parent
        return Stream(self.seed, (self.stream * 1_000_003 + 7919 * (index + 1)) & 0x7FFFFFFF)

    def blocks(self, count: int) -> Iterator[tuple[np.random.Generator, int, int]]:
        """Yield ``(generator, start, size)`` covering sample indices ``[0, count)``."""
        start = 0
        block = 0
        while start < count:
            size = min(BLOCK_SIZE, count - start)
            yield block_generator(self.seed, self.stream, block), start, size
            start += size
            block += 1

    def collect(self, count: int, draw: Callable[[np.random.Generator, int], np.ndarray]) -> np.ndarray:
        """Concatenate ``draw(gen, size)`` over the blocks of ``count`` samples."""
        parts = [draw(gen, size) for gen, _, size in self.blocks(count)]
        return np.concatenate(parts, axis=0) if parts else np.empty(0)


def as_stream(rng: "Stream | int | None") -> Stream:
    if isinstance(rng, Stream):
        return rng
    if rng is None:
        return Stream(0)
    return Stream(int(rng))
