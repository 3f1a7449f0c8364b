"""Editable table of III-V material parameters for the band solver.

Band offsets are conduction-band offsets relative to GaAs (eV), effective masses are in units
of the free electron mass. The values are common literature defaults, not fitted to a device.
"""
from dataclasses import dataclass
from typing import Dict
import logging
import re

from oqmem.core.errors import InvalidParameterError

log = logging.getLogger(__name__)

# Γ-gap difference Al_xGa_{1−x}As − GaAs is 1.247x eV below the direct-indirect crossover
GAP_BOWING = 1.247
DIRECT_GAP_LIMIT = 0.45
CONDUCTION_SHARE = 0.65


@dataclass(frozen=True)
class Material:
    name: str
    dielectric: float
    effective_mass: float
    band_offset: float

    def __post_init__(self) -> None:
        if self.dielectric <= 0:
            raise InvalidParameterError(f"{self.name}: dielectric constant must be positive")
        if self.effective_mass <= 0:
            raise InvalidParameterError(f"{self.name}: effective mass must be positive")


GAAS = Material("GaAs", 12.9, 0.067, 0.0)
ALAS = Material("AlAs", 10.06, 0.15, 1.0)
INAS = Material("InAs", 15.15, 0.023, -0.4)

MATERIALS: Dict[str, Material] = {m.name: m for m in (GAAS, ALAS, INAS)}


def algaas(x: float) -> Material:
    """Al_xGa_{1−x}As with linear interpolation between GaAs and AlAs; the band offset takes 65% of the gap step."""
    if not 0.0 <= x <= 1.0:
        raise InvalidParameterError(f"aluminium fraction must lie in [0, 1], got {x}")
    if x == 0.0:
        return GAAS
    if x == 1.0:
        return ALAS
    if x > DIRECT_GAP_LIMIT:
        log.warning(f"Al{x:g}GaAs is past the direct-gap limit x = {DIRECT_GAP_LIMIT}, "
                    f"the linear band offset overestimates it")
    return Material(
        name=f"Al{x:g}GaAs",
        dielectric=12.9 - 2.84 * x,
        effective_mass=0.067 + 0.083 * x,
        band_offset=CONDUCTION_SHARE * GAP_BOWING * x,
    )


_ALLOY = re.compile(r"^Al(?P<x>0?\.\d+|[01](?:\.\d+)?)Ga(?:As)?$")


def lookup(name: str) -> Material:
    """Resolves ``GaAs``, ``AlAs``, ``InAs`` or an alloy written ``Al0.3GaAs``."""
    if name in MATERIALS:
        return MATERIALS[name]
    match = _ALLOY.match(name)
    if match:
        return algaas(float(match.group("x")))
    raise InvalidParameterError(f"unknown material {name!r}; known: {sorted(MATERIALS)} or Al<x>GaAs")
