"""Reference device: a vertical InAs dot pair above a gated GaAs quantum well.

The layer stack lists the heterostructure from the surface gate down to the back gate;
the geometry places the optical molecule above GQD 1 of a linear triple dot.
"""
from typing import Optional

from oqmem.builtin.materials import ALAS, GAAS, INAS, algaas
from oqmem.core.electrostatics import DeviceGeometry, Layer, LayerStack
from oqmem.core.units import GAAS_DIELECTRIC

QW_LABEL = "GaAs QW"
UPPER_DOT_LABEL = "InAs T"
LOWER_DOT_LABEL = "InAs B"

DEFAULT_BOTTOM_BIAS = 1.2
DEFAULT_BARRIER_HEIGHT = 0.7


def default_stack(bottom_bias: float = DEFAULT_BOTTOM_BIAS, top_bias: float = 0.0,
                  barrier_height: float = DEFAULT_BARRIER_HEIGHT) -> LayerStack:
    """213 nm stack with the two dot layers 30 nm above a 10 nm well; the back gate accumulates the 2DEG."""
    barrier = algaas(0.3)
    return LayerStack(
        layers=(
            Layer(ALAS, 10.0, label="AlAs cap"),
            Layer(barrier, 100.0, label="Al0.3GaAs barrier"),
            Layer(INAS, 3.0, label=UPPER_DOT_LABEL),
            Layer(barrier, 7.0, label="Al0.3GaAs tunnel barrier"),
            Layer(INAS, 3.0, label=LOWER_DOT_LABEL),
            Layer(barrier, 20.0, label="Al0.3GaAs spacer"),
            Layer(GAAS, 10.0, hosts_2deg=True, label=QW_LABEL),
            Layer(barrier, 10.0, label="Al0.3GaAs lower spacer"),
            Layer(algaas(0.4), 40.0, label="Al0.4GaAs blocking barrier"),
            Layer(ALAS, 10.0, label="AlAs back barrier"),
        ),
        top_bias=top_bias,
        bottom_bias=bottom_bias,
        barrier_height=barrier_height,
    )


def default_geometry(z_dd: float = 30.0, pitch: float = 100.0, saqdm_spacing: float = 10.0,
                     dielectric: float = GAAS_DIELECTRIC, gate_plane_z: Optional[float] = None) -> DeviceGeometry:
    """GQDs at x = 0, pitch, 2·pitch in the well plane; dot B at height ``z_dd`` above GQD 1, dot T ``saqdm_spacing`` higher."""
    return DeviceGeometry(
        saqdm_positions=((0.0, 0.0, z_dd), (0.0, 0.0, z_dd + saqdm_spacing)),
        gqd_positions=((0.0, 0.0, 0.0), (pitch, 0.0, 0.0), (2.0 * pitch, 0.0, 0.0)),
        gate_plane_z=gate_plane_z,
        dielectric=dielectric,
    )
