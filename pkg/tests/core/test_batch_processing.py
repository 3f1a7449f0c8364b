import time

import anyio
import numpy as np
import pytest

from oqmem.core.batch_processing import a_process_batch, process_batch, process_blocks
from oqmem.core.protocols import SeededTask


# --- Synchronous Tests ---

def sync_square(x):
    return x * x


def slow_identity(x):
    time.sleep(0.01 * (5 - x))
    return x


def test_process_batch_inline():
    assert process_batch([1, 2, 3], sync_square) == [1, 4, 9]


def test_process_batch_threads_keep_order():
    assert process_batch(range(5), slow_identity, threads=4) == [0, 1, 2, 3, 4]


def test_process_batch_empty():
    assert process_batch([], sync_square, threads=3) == []


# --- Asynchronous Tests ---

async def async_square(x):
    await anyio.sleep(0.001 * (4 - x))
    return x * x


@pytest.mark.anyio
async def test_a_process_batch_async_func():
    assert await a_process_batch([1, 2, 3], async_square, threads=2) == [1, 4, 9]


@pytest.mark.anyio
async def test_a_process_batch_sync_func():
    assert await a_process_batch([1, 2, 3], sync_square, threads=2) == [1, 4, 9]


# --- Seeded blocks ---

def _draws(rng, size):
    return rng.standard_normal(size)


@pytest.mark.parametrize("threads", [1, 2, 5])
def test_process_blocks_is_independent_of_threads(threads):
    reference = np.concatenate(process_blocks(2500, _draws, seed=7, threads=1, block_size=300))
    values = np.concatenate(process_blocks(2500, _draws, seed=7, threads=threads, block_size=300))
    assert values.size == 2500
    assert np.array_equal(values, reference)


def test_process_blocks_depends_on_block_size_and_seed():
    a = np.concatenate(process_blocks(1000, _draws, seed=7, block_size=100))
    b = np.concatenate(process_blocks(1000, _draws, seed=7, block_size=250))
    c = np.concatenate(process_blocks(1000, _draws, seed=8, block_size=100))
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_seeded_work_functions_satisfy_the_task_protocol():
    assert isinstance(_draws, SeededTask)
    assert isinstance(lambda rng, size: rng.random(size), SeededTask)
    assert not isinstance(3, SeededTask)
