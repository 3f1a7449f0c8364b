"""Entanglement rate arithmetic for the repeated heralding cycle.

An attempt cannot start before the single-photon detector has recovered, so the effective
period is the longer of the optical cycle and the detector dead time.
"""
from dataclasses import dataclass
from typing import Dict
import logging

from oqmem.core.errors import InvalidParameterError
from oqmem.core.units import rate_per_second

log = logging.getLogger(__name__)

# one of the two |T0⟩ branches heralds
MAX_HERALD_PROBABILITY = 0.5


@dataclass(frozen=True)
class RateEstimate:
    """Rates in 1/s; ``period`` is the effective attempt period in ps."""
    attempts_per_second: float
    successes_per_second: float
    success_probability: float
    period: float
    limited_by: str

    def to_dict(self) -> Dict[str, float]:
        return {
            "attempts_per_second": self.attempts_per_second,
            "successes_per_second": self.successes_per_second,
            "success_probability": self.success_probability,
            "period_ps": self.period,
            "limited_by": self.limited_by,  # type: ignore[dict-item]
        }


def estimate_rate(p_herald: float, collection_efficiency: float, cycle_time: float,
                  detector_dead_time: float = 0.0) -> RateEstimate:
    """Heralded success rate min(p, ½)·η_collection / max(cycle, dead time).

    Args:
        p_herald: herald probability per attempt before collection losses.
        collection_efficiency: probability that an emitted photon reaches the detector.
        cycle_time: optical cycle (ps).
        detector_dead_time: detector recovery time (ps).
    """
    for name, value in (("p_herald", p_herald), ("collection_efficiency", collection_efficiency)):
        if not 0.0 <= value <= 1.0:
            raise InvalidParameterError(f"{name} must lie in [0, 1], got {value}")
    if cycle_time <= 0:
        raise InvalidParameterError(f"cycle time must be positive, got {cycle_time}")
    if detector_dead_time < 0:
        raise InvalidParameterError(f"detector dead time must be non-negative, got {detector_dead_time}")
    if p_herald > MAX_HERALD_PROBABILITY:
        log.warning(f"herald probability {p_herald} above the protocol ceiling, capped at {MAX_HERALD_PROBABILITY}")
    probability = min(p_herald, MAX_HERALD_PROBABILITY) * collection_efficiency
    period = max(cycle_time, detector_dead_time)
    return RateEstimate(
        attempts_per_second=rate_per_second(1.0, period),
        successes_per_second=rate_per_second(probability, period),
        success_probability=probability,
        period=period,
        limited_by="dead_time" if detector_dead_time > cycle_time else "cycle_time",
    )
