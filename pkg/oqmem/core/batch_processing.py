"""This module provides functions for processing batches of work items asynchronously and synchronously.

Sweep points and Monte Carlo blocks are mapped through a worker function, optionally on a
pool of threads bounded by a capacity limiter. Results always come back in input order, so
reductions over them are deterministic regardless of the thread count.
"""
from typing import Awaitable, Callable, Iterable, List, Optional, Sequence, TypeVar, Union
import inspect
import logging

import anyio

from oqmem.core.protocols import SeededTask
from oqmem.utils.rng import DEFAULT_BLOCK_SIZE, block_sizes, spawn_generators

log = logging.getLogger(__name__)

T = TypeVar('T')
U = TypeVar('U')


async def a_process_batch(batch: Iterable[T], func: Callable[[T], Union[U, Awaitable[U]]],
                          threads: int = 1) -> List[U]:
    """Asynchronously processes a batch of items using the given function.

    Args:
        batch: An iterable of items to process.
        func: An async or sync function to apply to each item.
        threads: Maximum number of items processed at the same time. Sync functions run in
            worker threads; async functions run on the event loop.

    Returns:
        A list of results, in the order of the input items.
    """
    items = list(batch)
    results: List[Optional[U]] = [None] * len(items)
    limiter = anyio.CapacityLimiter(max(1, threads))

    async def _run(index: int, item: T) -> None:
        if inspect.iscoroutinefunction(func):
            async with limiter:
                results[index] = await func(item)
        else:
            results[index] = await anyio.to_thread.run_sync(func, item, limiter=limiter)

    async with anyio.create_task_group() as tg:
        for index, item in enumerate(items):
            tg.start_soon(_run, index, item)

    return results  # type: ignore[return-value]


def process_batch(batch: Iterable[T], func: Callable[[T], U], threads: int = 1) -> List[U]:
    """Synchronously processes a batch of items using the given function.

    Args:
        batch: An iterable of items to process.
        func: A sync function to apply to each item.
        threads: Worker threads; 1 processes the items inline.

    Returns:
        A list of results, in the order of the input items.
    """
    items = list(batch)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    log.debug(f"processing {len(items)} items on {threads} threads")
    return anyio.run(a_process_batch, items, func, threads)


def process_blocks(total: int, func: SeededTask[U], seed: Optional[int],
                   threads: int = 1, block_size: int = DEFAULT_BLOCK_SIZE) -> List[U]:
    """Runs a seeded Monte Carlo task over ``total`` draws split into independent blocks.

    Args:
        total: Total number of draws.
        func: Called as ``func(rng, size)`` once per block.
        seed: Master seed; each block gets its own child generator.
        threads: Worker threads.
        block_size: Draws per block. Fixed block boundaries keep results identical for any thread count.

    Returns:
        Per-block results in block order.
    """
    sizes = block_sizes(total, block_size)
    generators = spawn_generators(seed, len(sizes))
    work: Sequence = list(zip(generators, sizes))
    return process_batch(work, lambda pair: func(pair[0], pair[1]), threads=threads)
