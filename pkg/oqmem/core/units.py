"""Unit table shared by every computational module.

Energies are in μeV, lengths in nm and times in ps unless a name says otherwise.
The 1-D band solver works in eV and V, which is why the eV-based constants live here too.
"""

HBAR = 658.2119569  # μeV·ps
GHZ_H = 4.135667  # μeV per GHz·h
COULOMB_CONSTANT = 1.43996e6  # e²/(4πε0) in μeV·nm
ELEMENTARY_CHARGE_OVER_EPS0 = 18.0951  # e/ε0 in V·nm
HBAR2_OVER_2ME = 0.0380998  # ħ²/(2m_e) in eV·nm²
PS_PER_S = 1.0e12
MEV_PER_UEV = 1.0e-3
UEV_PER_EV = 1.0e6

GAAS_DIELECTRIC = 12.9


def ghz_to_ueV(frequency_ghz: float) -> float:
    return frequency_ghz * GHZ_H


def ueV_to_ghz(energy: float) -> float:
    return energy / GHZ_H


def phase(energy: float, duration: float) -> float:
    """Dynamical phase E·t/ħ in radians for an energy in μeV and a duration in ps."""
    return energy * duration / HBAR


def rate_per_second(probability: float, period_ps: float) -> float:
    return probability * PS_PER_S / period_ps

