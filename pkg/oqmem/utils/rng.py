"""Seeded random streams.

All randomness in oqmem flows through ``numpy.random.Generator`` objects derived from a
single master seed, so a run is reproducible bit for bit. Monte Carlo work is cut into
fixed-size blocks whose generators come from ``SeedSequence.spawn``; block boundaries never
depend on how many worker threads consume them.
"""
from typing import List, Optional, Union

import numpy as np

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

DEFAULT_BLOCK_SIZE = 1000


def as_generator(seed: SeedLike = None) -> np.random.Generator:
    """Returns a Generator for a seed, a SeedSequence or an existing Generator (passed through)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def block_sizes(total: int, block_size: int = DEFAULT_BLOCK_SIZE) -> List[int]:
    """Splits ``total`` draws into consecutive blocks of at most ``block_size``."""
    if block_size <= 0:
        raise ValueError(f"block_size must be positive, got {block_size}")
    full, rest = divmod(total, block_size)
    return [block_size] * full + ([rest] if rest else [])


def spawn_generators(seed: Optional[int], count: int) -> List[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


def spawn_seeds(seed: Optional[int], count: int) -> List[int]:
    """Derives ``count`` independent 64-bit integer seeds, used where records must carry their seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]
