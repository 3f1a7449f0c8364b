"""This module defines the structural contracts shared across oqmem.

Records written by the batch front end, free-evolution callables consumed by the echo
simulator, and the work functions handed to the batch processor all satisfy these protocols.
"""
from __future__ import annotations
from abc import abstractmethod
from typing import Any, Dict, Protocol, TypeVar, runtime_checkable

import numpy as np

T_co = TypeVar("T_co", covariant=True)


@runtime_checkable
class SerializableRecord(Protocol):
    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """Returns a JSON-ready mapping of the record."""
        ...


class FreeEvolution(Protocol):
    """A propagator for a fixed noise realization.

    Called with a duration in ps, it returns the unitary of the free evolution over that
    interval in the computational basis of the simulated system.
    """

    def __call__(self, duration: float) -> np.ndarray:
        ...


@runtime_checkable
class SeededTask(Protocol[T_co]):
    """A unit of Monte Carlo work that draws only from the generator it is given."""

    def __call__(self, rng: np.random.Generator, size: int) -> T_co:
        ...
