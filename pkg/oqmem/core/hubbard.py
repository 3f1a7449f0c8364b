"""Tight-binding and Coulomb model of the two dot molecules, and the effective qubit couplings derived from it.

The optical molecule (O) is a vertically stacked pair of self-assembled dots, top ``T`` and
bottom ``B``. The electrical molecule (E) is a gated triple dot ``1``, ``2``, ``3``. Each dot
pair is counted once in the Hamiltonian, with a ½ prefactor:

    H = Σ_j e_j n_j + Σ_j U_jj n_j↑ n_j↓ + Σ_{j<k} [½ t_jk Σ_σ (c†_jσ c_kσ + h.c.) + ½ U_jk n_j n_k]

In this convention the singlet (1,1)↔(0,2) matrix element of the O molecule is
t_O = t_TB/√2 (likewise t_E = t_12/√2), and the site energies are chosen so that the
(0,2) configuration sits ε_O above (1,1). The closed forms for J_O, J_E and J_OE below are
then the exact first-order reductions of this model.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy import integrate

from oqmem.core.errors import (
    DegenerateGeometryError,
    IncompleteModelError,
    InvalidParameterError,
)
from oqmem.core.units import COULOMB_CONSTANT, GAAS_DIELECTRIC, HBAR

log = logging.getLogger(__name__)

DOT_LABELS: Tuple[str, ...] = ("T", "B", "1", "2", "3")
O_DOTS: Tuple[str, ...] = ("T", "B")
E_DOTS: Tuple[str, ...] = ("1", "2", "3")
MOLECULES: Dict[str, Tuple[str, ...]] = {"O": O_DOTS, "E": E_DOTS}

MAX_SECTOR_DIMENSION = 15

_SPIN_TOLERANCE = 1e-8


def _index(label: str) -> int:
    try:
        return DOT_LABELS.index(label)
    except ValueError:
        raise InvalidParameterError(f"unknown dot label {label!r}, expected one of {DOT_LABELS}") from None


def _molecule_of(label: str) -> str:
    return "O" if label in O_DOTS else "E"


@dataclass(frozen=True)
class Orbital:
    """Anisotropic Gaussian ground-state orbital of one dot.

    ``widths`` are the standard deviations of the charge density |φ|² along x, y, z.
    The orbital is normalized by construction.
    """
    center: Tuple[float, float, float]
    widths: Tuple[float, float, float]

    def __post_init__(self) -> None:
        center = tuple(float(c) for c in self.center)
        widths = tuple(float(w) for w in self.widths)
        if len(center) != 3 or len(widths) != 3:
            raise InvalidParameterError("orbital center and widths must be 3-vectors")
        if not all(w > 0.0 for w in widths):
            raise InvalidParameterError(f"orbital widths must be strictly positive, got {widths}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "widths", widths)

    @classmethod
    def isotropic(cls, center: Sequence[float], width: float) -> "Orbital":
        return cls(tuple(center), (width, width, width))  # type: ignore[arg-type]

    def shifted(self, offset: Sequence[float]) -> "Orbital":
        return Orbital(tuple(np.add(self.center, offset)), self.widths)  # type: ignore[arg-type]


def point_charge_energy(r_a: Any, r_b: Any, dielectric: float) -> Any:
    """Coulomb energy (μeV) of two point electrons at positions ``r_a`` and ``r_b`` (nm).

    Positions broadcast along leading axes; the last axis holds x, y, z.
    """
    if dielectric <= 0:
        raise InvalidParameterError(f"dielectric constant must be positive, got {dielectric}")
    distance = np.linalg.norm(np.asarray(r_a, dtype=float) - np.asarray(r_b, dtype=float), axis=-1)
    if np.any(distance == 0.0):
        raise DegenerateGeometryError("point charges coincide, Coulomb energy diverges")
    energy = COULOMB_CONSTANT / (dielectric * distance)
    return float(energy) if np.ndim(energy) == 0 else energy


def coulomb_integral(a: Orbital, b: Orbital, dielectric: float) -> float:
    """Coulomb matrix element U_ab (μeV) between the charge densities of two Gaussian orbitals.

    The separation r−r′ of the two densities is itself Gaussian with variance σa²+σb² per axis.
    Writing 1/|x| = (2/√π)∫₀^∞ exp(−s²|x|²) ds and averaging inside the integral reduces the
    six-dimensional integral to one dimension, evaluated on a length-scaled variable.
    """
    if dielectric <= 0:
        raise InvalidParameterError(f"dielectric constant must be positive, got {dielectric}")
    d = np.subtract(a.center, b.center)
    var = np.square(a.widths) + np.square(b.widths)
    distance2 = float(np.dot(d, d))
    if not np.any(var > 0.0):
        if distance2 == 0.0:
            raise DegenerateGeometryError("coincident orbitals with vanishing width")
        return point_charge_energy(a.center, b.center, dielectric)

    scale = math.sqrt(distance2 + float(np.sum(var)))

    def integrand(u: float) -> float:
        s2 = (u / scale) ** 2
        denom = 1.0 + 2.0 * s2 * var
        return float(np.prod(denom ** -0.5) * math.exp(-s2 * float(np.sum(d * d / denom))))

    value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)
    energy = COULOMB_CONSTANT / dielectric * 2.0 / (math.sqrt(math.pi) * scale) * value
    if not math.isfinite(energy) or energy <= 0.0:
        raise DegenerateGeometryError(f"Coulomb integral is not finite for {a} and {b}")
    return energy


def mixing_angle(epsilon: float, t: float) -> float:
    """Singlet mixing angle θ = atan2(2t, ε) ∈ (0, π); θ → π means the singlet is fully doubly occupied."""
    if t <= 0:
        raise InvalidParameterError(f"tunnel coupling must be positive, got {t}")
    return math.atan2(2.0 * t, epsilon)


def exchange_energy(epsilon: float, t: float) -> float:
    """Singlet-triplet splitting J = (√(ε²+4t²) − ε)/2 of a two-level charge anticrossing."""
    if t <= 0:
        raise InvalidParameterError(f"tunnel coupling must be positive, got {t}")
    root = math.hypot(epsilon, 2.0 * t)
    if epsilon > 0:
        return 2.0 * t * t / (root + epsilon)
    return 0.5 * (root - epsilon)


def doubly_occupied_weight(epsilon: float, t: float) -> float:
    """sin²(θ/2), the doubly-occupied admixture of the singlet, evaluated without cancellation."""
    return exchange_energy(epsilon, t) / math.hypot(epsilon, 2.0 * t)


def exchange_slope(epsilon: float, t: float) -> float:
    """∂J/∂ε = −sin²(θ/2)."""
    return -doubly_occupied_weight(epsilon, t)


def approximate_joe(delta_dd: float, epsilon_O: float, t_O: float) -> float:
    """Large-detuning estimate J_OE ≈ Δ_DD t_O²/(4ε_O²) with the E molecule fully polarized."""
    if epsilon_O == 0:
        raise InvalidParameterError("the large-detuning estimate needs a nonzero detuning")
    return delta_dd * t_O ** 2 / (4.0 * epsilon_O ** 2)


def cz_duration(j_oe: float) -> float:
    """Controlled-phase time t_CZ = πħ/(2J_OE) in ps."""
    if j_oe == 0:
        raise InvalidParameterError("J_OE = 0 never produces a controlled phase")
    return math.pi * HBAR / (2.0 * abs(j_oe))


def cz_duration_bound(delta_dd: float) -> float:
    """Picosecond-scale lower bound ħ/|Δ_DD| on t_CZ at maximal coupling."""
    if delta_dd == 0:
        raise InvalidParameterError("Δ_DD = 0 gives no bound")
    return HBAR / abs(delta_dd)


def wkb_barrier_modulation(chi: float, curvature: float, delta_chi: float) -> float:
    """Ratio t_E(χ+δχ)/t_E(χ) = exp(−π δχ/C_E) of WKB tunnel couplings through a parabolic barrier.

    ``chi`` is the barrier height; the ratio does not depend on it.
    """
    if curvature <= 0:
        raise InvalidParameterError(f"barrier curvature must be positive, got {curvature}")
    return math.exp(-math.pi * delta_chi / curvature)


@dataclass(frozen=True)
class HubbardSystem:
    """Parameters of both dot molecules.

    ``tunnel`` and ``coulomb`` are symmetric 5×5 matrices in μeV indexed by :data:`DOT_LABELS`.
    Unknown Coulomb elements are NaN. Detunings are in μeV. ``dots`` optionally maps labels to orbitals.
    """
    tunnel: np.ndarray
    coulomb: np.ndarray
    epsilon_O: float = 0.0
    epsilon_E: float = 0.0
    epsilon_23: float = 0.0
    dielectric: float = GAAS_DIELECTRIC
    dots: Mapping[str, Orbital] = field(default_factory=dict)

    def __post_init__(self) -> None:
        tunnel = np.array(self.tunnel, dtype=float)
        coulomb = np.array(self.coulomb, dtype=float)
        n = len(DOT_LABELS)
        if tunnel.shape != (n, n) or coulomb.shape != (n, n):
            raise InvalidParameterError(f"tunnel and coulomb matrices must be {n}x{n}")
        if not np.allclose(tunnel, tunnel.T):
            raise InvalidParameterError("tunnel matrix must be symmetric")
        if np.any(np.diag(tunnel) != 0.0):
            raise InvalidParameterError("on-site tunnel terms belong in the detunings; the diagonal must be zero")
        known = ~np.isnan(coulomb)
        if not np.array_equal(known, known.T) or not np.allclose(coulomb[known], coulomb.T[known]):
            raise InvalidParameterError("coulomb matrix must be symmetric")
        if np.any(coulomb[known] < 0.0):
            raise InvalidParameterError("Coulomb elements must be non-negative")
        for j, k in combinations(range(n), 2):
            if _molecule_of(DOT_LABELS[j]) != _molecule_of(DOT_LABELS[k]) and tunnel[j, k] != 0.0:
                raise InvalidParameterError("tunneling between the two molecules must be zero")
            for a, b in ((j, k), (k, j)):
                if known[a, a] and known[a, b] and not coulomb[a, a] > coulomb[a, b]:
                    raise InvalidParameterError(
                        f"on-site repulsion U_{DOT_LABELS[a]}{DOT_LABELS[a]} must exceed U_{DOT_LABELS[a]}{DOT_LABELS[b]}")
        if self.dielectric <= 0:
            raise InvalidParameterError(f"dielectric constant must be positive, got {self.dielectric}")
        tunnel.setflags(write=False)
        coulomb.setflags(write=False)
        object.__setattr__(self, "tunnel", tunnel)
        object.__setattr__(self, "coulomb", coulomb)
        object.__setattr__(self, "dots", dict(self.dots))

    def t(self, j: str, k: str) -> float:
        return float(self.tunnel[_index(j), _index(k)])

    def u(self, j: str, k: str) -> float:
        value = float(self.coulomb[_index(j), _index(k)])
        if math.isnan(value):
            raise IncompleteModelError(f"Coulomb element U_{j}{k} is not populated")
        return value

    @property
    def t_O(self) -> float:
        return self.t("T", "B") / math.sqrt(2.0)

    @property
    def t_E(self) -> float:
        return self.t("1", "2") / math.sqrt(2.0)

    @property
    def t_23(self) -> float:
        return self.t("2", "3") / math.sqrt(2.0)

    def with_detunings(self, epsilon_O: Optional[float] = None, epsilon_E: Optional[float] = None,
                       epsilon_23: Optional[float] = None) -> "HubbardSystem":
        return replace(
            self,
            epsilon_O=self.epsilon_O if epsilon_O is None else epsilon_O,
            epsilon_E=self.epsilon_E if epsilon_E is None else epsilon_E,
            epsilon_23=self.epsilon_23 if epsilon_23 is None else epsilon_23,
        )

    def with_tunneling(self, **couplings: float) -> "HubbardSystem":
        """Returns a copy with reduced couplings replaced, e.g. ``with_tunneling(t_23=0.0)``."""
        pairs = {"t_O": ("T", "B"), "t_E": ("1", "2"), "t_23": ("2", "3")}
        tunnel = np.array(self.tunnel)
        for name, value in couplings.items():
            if name not in pairs:
                raise InvalidParameterError(f"unknown coupling {name!r}, expected one of {sorted(pairs)}")
            j, k = (_index(label) for label in pairs[name])
            tunnel[j, k] = tunnel[k, j] = math.sqrt(2.0) * value
        return replace(self, tunnel=tunnel)

    @classmethod
    def from_parameters(cls, t_O: float, t_E: float, coulomb: Mapping[Tuple[str, str], float],
                        t_23: float = 0.0, epsilon_O: float = 0.0, epsilon_E: float = 0.0,
                        epsilon_23: float = 0.0, dielectric: float = GAAS_DIELECTRIC) -> "HubbardSystem":
        """Builds a system from the reduced two-level couplings t_O, t_E, t_23 and a sparse Coulomb table."""
        n = len(DOT_LABELS)
        tunnel = np.zeros((n, n))
        for (j, k), value in ((("T", "B"), t_O), (("1", "2"), t_E), (("2", "3"), t_23)):
            tunnel[_index(j), _index(k)] = tunnel[_index(k), _index(j)] = math.sqrt(2.0) * value
        return cls(tunnel, _coulomb_matrix(coulomb), epsilon_O, epsilon_E, epsilon_23, dielectric)

    @classmethod
    def from_orbitals(cls, dots: Mapping[str, Orbital], tunnel: Mapping[Tuple[str, str], float],
                      epsilon_O: float = 0.0, epsilon_E: float = 0.0, epsilon_23: float = 0.0,
                      dielectric: float = GAAS_DIELECTRIC,
                      coulomb_overrides: Optional[Mapping[Tuple[str, str], float]] = None) -> "HubbardSystem":
        """Builds U_jk for every pair of given orbitals, including on-site terms.

        ``tunnel`` holds Hamiltonian amplitudes t_jk (not the reduced two-level couplings).
        """
        elements: Dict[Tuple[str, str], float] = {}
        labels = [label for label in DOT_LABELS if label in dots]
        for j in labels:
            for k in labels[labels.index(j):]:
                elements[(j, k)] = coulomb_integral(dots[j], dots[k], dielectric)
        elements.update(coulomb_overrides or {})
        n = len(DOT_LABELS)
        t = np.zeros((n, n))
        for (j, k), value in tunnel.items():
            t[_index(j), _index(k)] = t[_index(k), _index(j)] = value
        return cls(t, _coulomb_matrix(elements), epsilon_O, epsilon_E, epsilon_23, dielectric, dots)

    @classmethod
    def from_document(cls, document: Mapping[str, Any]) -> "HubbardSystem":
        """Loads the JSON system definition (keys ``dots``, ``tunnel``, ``dielectric``, ``detunings``, ``coulomb``)."""
        dots = {
            entry["label"]: Orbital(tuple(entry["center"]), tuple(entry["widths"]))
            for entry in document.get("dots", [])
        }
        tunnel = {tuple(entry["pair"]): float(entry["value"]) for entry in document.get("tunnel", [])}
        overrides = {tuple(entry["pair"]): float(entry["value"]) for entry in document.get("coulomb", [])}
        detunings = document.get("detunings", {})
        return cls.from_orbitals(
            dots,
            tunnel,  # type: ignore[arg-type]
            epsilon_O=float(detunings.get("O", 0.0)),
            epsilon_E=float(detunings.get("E", 0.0)),
            epsilon_23=float(detunings.get("23", 0.0)),
            dielectric=float(document.get("dielectric", GAAS_DIELECTRIC)),
            coulomb_overrides=overrides,  # type: ignore[arg-type]
        )


def _coulomb_matrix(elements: Mapping[Tuple[str, str], float]) -> np.ndarray:
    n = len(DOT_LABELS)
    matrix = np.full((n, n), np.nan)
    for (j, k), value in elements.items():
        matrix[_index(j), _index(k)] = matrix[_index(k), _index(j)] = value
    return matrix


def dipole_dipole_shift(system: HubbardSystem) -> float:
    """Δ_DD = U_T1 − U_T2 − U_B1 + U_B2 (μeV)."""
    try:
        return system.u("T", "1") - system.u("T", "2") - system.u("B", "1") + system.u("B", "2")
    except IncompleteModelError as e:
        raise IncompleteModelError(f"Δ_DD needs all four cross-molecule Coulomb elements: {e}") from e


@dataclass(frozen=True)
class EffectiveCouplings:
    """Qubit-level energies (μeV) and mixing angles (rad) derived from a :class:`HubbardSystem`.

    J_OE is derived from the stored angles and Δ_DD, so the product formula holds exactly.
    The optional detuning/tunnel fields let :meth:`shifted` recompute the couplings exactly.
    """
    J_O: float
    J_E: float
    J_23: float
    delta_dd: float
    theta_O: float
    theta_E: float
    delta_J_O: float = 0.0
    epsilon_O: Optional[float] = None
    t_O: Optional[float] = None
    epsilon_E: Optional[float] = None
    t_E: Optional[float] = None
    coulomb_shift_O: float = 0.0
    coulomb_shift_E: float = 0.0

    def __post_init__(self) -> None:
        for name in ("theta_O", "theta_E"):
            value = getattr(self, name)
            if not 0.0 <= value <= math.pi:
                raise InvalidParameterError(f"{name} must lie in [0, π], got {value}")

    @property
    def weight_O(self) -> float:
        if self.epsilon_O is not None and self.t_O is not None:
            return doubly_occupied_weight(self.epsilon_O, self.t_O)
        return math.sin(self.theta_O / 2.0) ** 2

    @property
    def weight_E(self) -> float:
        if self.epsilon_E is not None and self.t_E is not None:
            return doubly_occupied_weight(self.epsilon_E, self.t_E)
        return math.sin(self.theta_E / 2.0) ** 2

    @property
    def J_OE(self) -> float:
        return self.weight_E * self.weight_O * self.delta_dd / 4.0

    @classmethod
    def with_coupling(cls, J_OE: float, J_O: float = 82.7, J_E: float = 0.0, J_23: float = 0.0,
                      delta_J_O: float = 0.0, theta_O: float = math.pi / 2, theta_E: float = math.pi / 2) -> "EffectiveCouplings":
        """Couplings with a prescribed J_OE; Δ_DD is solved for from the mixing angles."""
        weights = math.sin(theta_O / 2.0) ** 2 * math.sin(theta_E / 2.0) ** 2
        if weights == 0.0:
            raise InvalidParameterError("a prescribed J_OE needs both mixing angles away from zero")
        return cls(J_O=J_O, J_E=J_E, J_23=J_23, delta_dd=4.0 * J_OE / weights,
                   theta_O=theta_O, theta_E=theta_E, delta_J_O=delta_J_O)

    def shifted(self, d_epsilon_O: float = 0.0, d_epsilon_E: float = 0.0) -> "EffectiveCouplings":
        """The same device with quasi-static detuning shifts.

        Couplings are recomputed exactly when detunings and tunnel couplings are stored, and
        linearised with ∂J/∂ε = −sin²(θ/2) otherwise. The change of J_O accrues to δJ_O because
        the emission reference is calibrated on the unshifted device.
        """
        if d_epsilon_O == 0.0 and d_epsilon_E == 0.0:
            return self
        if None not in (self.epsilon_O, self.t_O, self.epsilon_E, self.t_E):
            eps_O = self.epsilon_O + d_epsilon_O  # type: ignore[operator]
            eps_E = self.epsilon_E + d_epsilon_E  # type: ignore[operator]
            s_O = doubly_occupied_weight(eps_O, self.t_O)  # type: ignore[arg-type]
            s_E = doubly_occupied_weight(eps_E, self.t_E)  # type: ignore[arg-type]
            J_O = exchange_energy(eps_O, self.t_O) + s_O * (self.coulomb_shift_O + self.delta_dd * s_E / 4.0)  # type: ignore[arg-type]
            J_E = exchange_energy(eps_E, self.t_E) + s_E * (self.coulomb_shift_E + self.delta_dd * s_O / 4.0)  # type: ignore[arg-type]
            return replace(
                self, J_O=J_O, J_E=J_E, delta_J_O=self.delta_J_O + (J_O - self.J_O),
                theta_O=mixing_angle(eps_O, self.t_O), theta_E=mixing_angle(eps_E, self.t_E),  # type: ignore[arg-type]
                epsilon_O=eps_O, epsilon_E=eps_E,
            )
        dJ_O = -self.weight_O * d_epsilon_O
        dJ_E = -self.weight_E * d_epsilon_E
        return replace(self, J_O=self.J_O + dJ_O, J_E=self.J_E + dJ_E, delta_J_O=self.delta_J_O + dJ_O)

    def to_dict(self) -> Dict[str, float]:
        return {
            "J_O": self.J_O, "J_E": self.J_E, "J_23": self.J_23, "J_OE": self.J_OE,
            "delta_dd": self.delta_dd, "theta_O": self.theta_O, "theta_E": self.theta_E,
            "delta_J_O": self.delta_J_O,
        }


def _coulomb_corrections(system: HubbardSystem) -> Tuple[float, float]:
    shift_O = 0.5 * (system.u("T", "1") + system.u("T", "2") - system.u("B", "1") - system.u("B", "2"))
    shift_E = 0.5 * (system.u("T", "2") + system.u("B", "2") - system.u("T", "1") - system.u("B", "1"))
    return shift_O, shift_E


def effective_couplings(system: HubbardSystem, emission: Optional[HubbardSystem] = None) -> EffectiveCouplings:
    """Reduces a system to its qubit-level couplings at this (CZ) configuration.

    Args:
        system: The device at the controlled-phase configuration.
        emission: The same device at the photon-creation configuration. δJ_O is the difference
            of the corrected J_O between the two; it is zero when omitted.
    """
    delta_dd = dipole_dipole_shift(system)
    t_O, t_E = system.t_O, system.t_E
    theta_O = mixing_angle(system.epsilon_O, t_O)
    theta_E = mixing_angle(system.epsilon_E, t_E)
    s_O = doubly_occupied_weight(system.epsilon_O, t_O)
    s_E = doubly_occupied_weight(system.epsilon_E, t_E)
    shift_O, shift_E = _coulomb_corrections(system)
    J_O = exchange_energy(system.epsilon_O, t_O) + s_O * (shift_O + delta_dd * s_E / 4.0)
    J_E = exchange_energy(system.epsilon_E, t_E) + s_E * (shift_E + delta_dd * s_O / 4.0)
    J_23 = exchange_energy(system.epsilon_23, system.t_23) if system.t_23 > 0 else 0.0
    delta_J_O = 0.0
    if emission is not None:
        delta_J_O = J_O - effective_couplings(emission).J_O
    return EffectiveCouplings(
        J_O=J_O, J_E=J_E, J_23=J_23, delta_dd=delta_dd, theta_O=theta_O, theta_E=theta_E,
        delta_J_O=delta_J_O, epsilon_O=system.epsilon_O, t_O=t_O, epsilon_E=system.epsilon_E,
        t_E=t_E, coulomb_shift_O=shift_O, coulomb_shift_E=shift_E,
    )


# --- exact diagonalization -------------------------------------------------------------

def _popcount(bits: int) -> int:
    return bin(bits).count("1")


def _apply_hop(p: int, q: int, bits: int) -> Optional[Tuple[int, int]]:
    """Applies c†_p c_q to an occupation bit string; returns (sign, new bits) or None."""
    if not bits >> q & 1:
        return None
    sign = -1 if _popcount(bits & ((1 << q) - 1)) % 2 else 1
    bits ^= 1 << q
    if bits >> p & 1:
        return None
    if _popcount(bits & ((1 << p) - 1)) % 2:
        sign = -sign
    return sign, bits | (1 << p)


def _spin_orbital(site: int, spin: int) -> int:
    return 2 * site + spin


def _sector_basis(n_sites: int, n_up: int, n_down: int) -> List[int]:
    basis = []
    for ups in combinations(range(n_sites), n_up):
        for downs in combinations(range(n_sites), n_down):
            bits = 0
            for s in ups:
                bits |= 1 << _spin_orbital(s, 0)
            for s in downs:
                bits |= 1 << _spin_orbital(s, 1)
            basis.append(bits)
    return sorted(basis)


def _operator_matrix(terms: Iterable[Tuple[complex, int, int]], basis: Sequence[int]) -> np.ndarray:
    """Matrix of Σ coef·c†_p c_q within a particle-number-conserving basis."""
    lookup = {bits: i for i, bits in enumerate(basis)}
    matrix = np.zeros((len(basis), len(basis)))
    for coef, p, q in terms:
        for col, bits in enumerate(basis):
            hopped = _apply_hop(p, q, bits)
            if hopped is None:
                continue
            sign, new = hopped
            row = lookup.get(new)
            if row is not None:
                matrix[row, col] += sign * coef
    return matrix


def _spin_squared(n_sites: int, sites: Sequence[int], basis: Sequence[int]) -> np.ndarray:
    """S² of the electrons on ``sites``, as S−S+ + S_z(S_z+1), within the sector."""
    s_plus = [(1.0, _spin_orbital(s, 0), _spin_orbital(s, 1)) for s in sites]
    s_minus = [(1.0, _spin_orbital(s, 1), _spin_orbital(s, 0)) for s in sites]
    occupation = np.array([[bits >> _spin_orbital(s, spin) & 1 for s in sites for spin in (0, 1)]
                           for bits in basis], dtype=float)
    s_z = 0.5 * (occupation[:, 0::2].sum(axis=1) - occupation[:, 1::2].sum(axis=1))
    # S+ leaves the sector, so compose the two hops on bit strings directly.
    lookup = {bits: i for i, bits in enumerate(basis)}
    matrix = np.zeros((len(basis), len(basis)))
    for col, bits in enumerate(basis):
        for _, p_up, q_up in s_plus:
            first = _apply_hop(p_up, q_up, bits)
            if first is None:
                continue
            sign1, mid = first
            for _, p_dn, q_dn in s_minus:
                second = _apply_hop(p_dn, q_dn, mid)
                if second is None:
                    continue
                sign2, new = second
                matrix[lookup[new], col] += sign1 * sign2
    return matrix + np.diag(s_z * (s_z + 1.0))


def _site_energies(system: HubbardSystem, molecule: str) -> List[float]:
    if molecule == "O":
        return [0.0, system.epsilon_O - system.u("B", "B") + 0.5 * system.u("T", "B")]
    background = 0.5 * (system.u("1", "2") + system.u("2", "3")) - 0.5 * system.u("1", "3")
    return [
        system.epsilon_E - system.u("1", "1") + background,
        0.0,
        system.epsilon_23 - system.u("3", "3") + background,
    ]


def _molecule_hamiltonian(system: HubbardSystem, molecule: str, basis: Sequence[int]) -> np.ndarray:
    labels = MOLECULES[molecule]
    n_sites = len(labels)
    energies = _site_energies(system, molecule)
    hops = []
    for j, k in combinations(range(n_sites), 2):
        amplitude = 0.5 * system.t(labels[j], labels[k])
        if amplitude == 0.0:
            continue
        for spin in (0, 1):
            hops.append((amplitude, _spin_orbital(j, spin), _spin_orbital(k, spin)))
            hops.append((amplitude, _spin_orbital(k, spin), _spin_orbital(j, spin)))
    matrix = _operator_matrix(hops, basis) if hops else np.zeros((len(basis), len(basis)))
    diagonal = np.zeros(len(basis))
    for i, bits in enumerate(basis):
        n = [(bits >> _spin_orbital(s, 0) & 1) + (bits >> _spin_orbital(s, 1) & 1) for s in range(n_sites)]
        value = sum(energies[s] * n[s] for s in range(n_sites))
        value += sum(system.u(labels[s], labels[s]) for s in range(n_sites) if n[s] == 2)
        for j, k in combinations(range(n_sites), 2):
            if n[j] and n[k]:
                value += 0.5 * system.u(labels[j], labels[k]) * n[j] * n[k]
        diagonal[i] = value
    return matrix + np.diag(diagonal)


def _joint_eigh(hamiltonian: np.ndarray, symmetries: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, List[np.ndarray]]:
    """Diagonalizes H together with commuting symmetry operators.

    Returns energies, eigenvectors (columns) and, per symmetry, the eigenvalue of each eigenvector.
    Degenerate levels of different symmetry never mix.
    """
    dim = hamiltonian.shape[0]
    blocks = [np.eye(dim)]
    for op in symmetries:
        refined = []
        for block in blocks:
            values, vectors = np.linalg.eigh(block.T @ op @ block)
            keys = np.round(values / _SPIN_TOLERANCE) * _SPIN_TOLERANCE
            for key in np.unique(keys):
                refined.append(block @ vectors[:, keys == key])
        blocks = refined
    energies, columns = [], []
    for block in blocks:
        values, vectors = np.linalg.eigh(block.T @ hamiltonian @ block)
        energies.extend(values)
        columns.append(block @ vectors)
    vectors = np.hstack(columns)
    order = np.argsort(energies, kind="stable")
    vectors = vectors[:, order]
    labels = [np.einsum("ij,ik,kj->j", vectors, op, vectors) for op in symmetries]
    return np.asarray(energies)[order], vectors, labels


def _configuration_label(bits: int, n_sites: int, labels: Sequence[str]) -> str:
    parts = []
    for s in range(n_sites):
        up = bits >> _spin_orbital(s, 0) & 1
        down = bits >> _spin_orbital(s, 1) & 1
        parts.append(labels[s] + {(0, 0): "0", (1, 0): "↑", (0, 1): "↓", (1, 1): "⇅"}[(up, down)])
    return " ".join(parts)


@dataclass(frozen=True)
class Spectrum:
    """Eigen-decomposition of one molecule in its fixed-charge, fixed-m_z sector.

    Attributes:
        energies: ascending eigenvalues (μeV).
        vectors: eigenvectors as columns, over ``basis``.
        basis: occupation bit strings (bit 2·site+spin, spin 0 = up).
        labels: readable configuration of each basis state.
        spin: S(S+1) of each eigenvector.
        densities: electron number per site for each eigenvector, shape (states, sites).
    """
    molecule: str
    energies: np.ndarray
    vectors: np.ndarray
    basis: Tuple[int, ...]
    labels: Tuple[str, ...]
    spin: np.ndarray
    densities: np.ndarray

    def lowest(self, spin_squared: float) -> int:
        """Index of the lowest eigenstate with the given S(S+1)."""
        matches = np.flatnonzero(np.abs(self.spin - spin_squared) < 1e-6)
        if matches.size == 0:
            raise IncompleteModelError(f"no state with S(S+1) = {spin_squared} in the {self.molecule} sector")
        return int(matches[0])


def exact_diagonalize(system: HubbardSystem, molecule: str) -> Spectrum:
    """Exact spectrum of one molecule: 2 electrons with m_z = 0 for O, 3 electrons with m_z = +½ for E.

    The doubly occupied top-dot configuration of O is kept, as are all E charge configurations.
    States are labelled by total spin, so degenerate levels never mix across spin multiplets.
    """
    if molecule not in MOLECULES:
        raise InvalidParameterError(f"molecule must be 'O' or 'E', got {molecule!r}")
    return _diagonalize(system, molecule, pair_spin=False)[0]


def _diagonalize(system: HubbardSystem, molecule: str, pair_spin: bool) -> Tuple[Spectrum, Optional[np.ndarray]]:
    labels = MOLECULES[molecule]
    n_sites = len(labels)
    n_up, n_down = (1, 1) if molecule == "O" else (2, 1)
    dimension = math.comb(n_sites, n_up) * math.comb(n_sites, n_down)
    if dimension > MAX_SECTOR_DIMENSION:
        raise InvalidParameterError(f"sector dimension {dimension} exceeds {MAX_SECTOR_DIMENSION}")
    basis = _sector_basis(n_sites, n_up, n_down)
    hamiltonian = _molecule_hamiltonian(system, molecule, basis)
    symmetries = [_spin_squared(n_sites, range(n_sites), basis)]
    if pair_spin:
        symmetries.append(_spin_squared(n_sites, (0, 1), basis))
    energies, vectors, symmetry_values = _joint_eigh(hamiltonian, symmetries)
    occupation = np.array([[(bits >> _spin_orbital(s, 0) & 1) + (bits >> _spin_orbital(s, 1) & 1)
                            for s in range(n_sites)] for bits in basis], dtype=float)
    densities = (np.abs(vectors) ** 2).T @ occupation
    log.debug(f"diagonalized {molecule} sector of dimension {dimension}, ground energy {energies[0]:.6g} μeV")
    spectrum = Spectrum(
        molecule=molecule,
        energies=energies,
        vectors=vectors,
        basis=tuple(basis),
        labels=tuple(_configuration_label(bits, n_sites, labels) for bits in basis),
        spin=symmetry_values[0],
        densities=densities,
    )
    return spectrum, (symmetry_values[1] if pair_spin else None)


def singlet_triplet_gap(system: HubbardSystem) -> float:
    """E(T0) − E(S) of the O molecule from exact diagonalization."""
    spectrum = exact_diagonalize(system, "O")
    return float(spectrum.energies[spectrum.lowest(2.0)] - spectrum.energies[spectrum.lowest(0.0)])


def qubit_densities(system: HubbardSystem) -> Dict[str, np.ndarray]:
    """Site densities of the four logical states: O singlet/triplet and E |0⟩/|1⟩ (2–3 exchange off)."""
    o_spectrum = exact_diagonalize(system, "O")
    e_spectrum, pair = _diagonalize(system.with_tunneling(t_23=0.0), "E", pair_spin=True)
    doublets = np.flatnonzero(np.abs(e_spectrum.spin - 0.75) < 1e-6)
    paired = doublets[pair[doublets] < 1e-6]  # type: ignore[index]
    zero = paired[np.argmin(e_spectrum.energies[paired])]
    one = doublets[np.argmax(pair[doublets])]  # type: ignore[index]
    return {
        "S_O": o_spectrum.densities[o_spectrum.lowest(0.0)],
        "T_O": o_spectrum.densities[o_spectrum.lowest(2.0)],
        "0_E": e_spectrum.densities[zero],
        "1_E": e_spectrum.densities[one],
    }


def zz_coupling(system: HubbardSystem) -> float:
    """J_OE extracted from the four lowest-order energies of the coupled molecules.

    The energies E(a_O b_E) are taken to first order in the inter-molecule Coulomb term using
    the exact molecular eigenstates, with 2–3 exchange off (the controlled-phase configuration).
    J_OE = −[E(SS) − E(ST) − E(TS) + E(TT)]/2.
    """
    densities = qubit_densities(system)
    cross = np.array([[system.u(o, e) for e in E_DOTS] for o in O_DOTS])

    def energy(o_state: str, e_state: str) -> float:
        return 0.5 * float(densities[o_state] @ cross @ densities[e_state])

    combination = energy("S_O", "0_E") - energy("S_O", "1_E") - energy("T_O", "0_E") + energy("T_O", "1_E")
    return -combination / 2.0
