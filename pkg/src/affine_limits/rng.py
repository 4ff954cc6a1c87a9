"""Counter-based random streams keyed by (seed, stream, block).

Every batch of trajectories is cut into fixed-size blocks.  Block ``b`` of a
named stream draws from a Philox generator keyed by ``(seed, stream, b)``, so
results never depend on how blocks are scheduled across workers.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_BLOCK = 1 << 15


def stream_id(name: str | int) -> int:
    """Stable integer tag for a named stream."""
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(name.encode("utf8"))


@dataclass(frozen=True)
class RngStream:
    """Pure function of ``(seed, stream, block)`` to a numpy Generator."""

    seed: int
    stream: int = 0
    block: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & ((1 << 64) - 1),
                                    spawn_key=(int(self.stream), int(self.block)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, block: int) -> "RngStream":
        return RngStream(self.seed, self.stream, block)


def make_stream(seed: int, name: str | int) -> RngStream:
    return RngStream(int(seed), stream_id(name), 0)


def block_sizes(n_total: int, block: int = DEFAULT_BLOCK) -> list[int]:
    full, rest = divmod(int(n_total), int(block))
    return [block] * full + ([rest] if rest else [])


def run_blocks(fn: Callable[[np.random.Generator, int], object], n_total: int, stream: RngStream,
               workers: int = 1, block: int = DEFAULT_BLOCK) -> list:
    """Evaluate ``fn(generator, size)`` on every block and return results in block order."""
    sizes = block_sizes(n_total, block)
    jobs = [(stream.child(b).generator(), size) for b, size in enumerate(sizes)]
    if workers <= 1 or len(jobs) <= 1:
        return [fn(g, size) for g, size in jobs]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
