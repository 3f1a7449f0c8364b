"""Electrostatic estimates for the device geometry.

Two independent tools live here:

* screened point-charge maps of the dipole-dipole shift Δ_DD and of the barrier modulation
  as the optical molecule is moved laterally over the gated dots, with an optional grounded
  image plane standing in for the buried gates;
* a 1-D self-consistent Schrödinger–Poisson solver for the heterostructure layer stack, with
  Thomas–Fermi electrons (0 K) in the layers that host the 2DEG.

Geometry is in nm with z pointing up, away from the quantum well. The layer stack is
described top-down from the surface gate, so the solver's z is a depth.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy import linalg

from oqmem.builtin.materials import Material, lookup
from oqmem.core.errors import DivergenceError, InvalidGeometryError, InvalidParameterError
from oqmem.core.hubbard import point_charge_energy
from oqmem.core.units import ELEMENTARY_CHARGE_OVER_EPS0, GAAS_DIELECTRIC, HBAR2_OVER_2ME

log = logging.getLogger(__name__)

Vector = Tuple[float, float, float]
GATES = ("top", "bottom")


@dataclass(frozen=True)
class DeviceGeometry:
    """Dot positions (nm) of both molecules and the optional image plane.

    ``saqdm_positions`` holds (B, T); the gated dots lie in the well plane ``qw_z``.
    """
    saqdm_positions: Tuple[Vector, Vector]
    gqd_positions: Tuple[Vector, Vector, Vector]
    gate_plane_z: Optional[float] = None
    dielectric: float = GAAS_DIELECTRIC
    qw_z: float = 0.0

    def __post_init__(self) -> None:
        saqdm = tuple(tuple(float(c) for c in p) for p in self.saqdm_positions)
        gqd = tuple(tuple(float(c) for c in p) for p in self.gqd_positions)
        object.__setattr__(self, "saqdm_positions", saqdm)
        object.__setattr__(self, "gqd_positions", gqd)
        if len(saqdm) != 2 or len(gqd) != 3 or any(len(p) != 3 for p in saqdm + gqd):
            raise InvalidGeometryError("expected two optical-molecule and three gated-dot 3-vectors")
        if self.dielectric <= 0:
            raise InvalidGeometryError(f"dielectric constant must be positive, got {self.dielectric}")
        bottom, top = saqdm
        if top[2] <= bottom[2]:
            raise InvalidGeometryError("dot T must sit above dot B")
        if bottom[2] <= self.qw_z:
            raise InvalidGeometryError(f"optical molecule at z={bottom[2]} nm is not above the well plane z={self.qw_z} nm")
        points = saqdm + gqd
        if len(set(points)) != len(points):
            raise InvalidGeometryError("dot positions must be distinct")
        if self.gate_plane_z is not None:
            sides = {np.sign(p[2] - self.gate_plane_z) for p in points}
            if 0.0 in sides or len(sides) > 1:
                raise InvalidGeometryError("the image plane must not pass through or between the dots")

    @property
    def z_dd(self) -> float:
        """Height of dot B above the well plane."""
        return self.saqdm_positions[0][2] - self.qw_z

    def shifted(self, dx: float, dy: float) -> "DeviceGeometry":
        """The optical molecule moved laterally by (dx, dy)."""
        moved = tuple((p[0] + dx, p[1] + dy, p[2]) for p in self.saqdm_positions)
        return replace(self, saqdm_positions=moved)  # type: ignore[arg-type]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "saqdm_positions": [list(p) for p in self.saqdm_positions],
            "gqd_positions": [list(p) for p in self.gqd_positions],
            "gate_plane_z": self.gate_plane_z,
            "dielectric": self.dielectric,
            "qw_z": self.qw_z,
        }

    @classmethod
    def from_document(cls, document: Mapping[str, Any]) -> "DeviceGeometry":
        return cls(
            saqdm_positions=tuple(tuple(p) for p in document["saqdm_positions"]),  # type: ignore[arg-type]
            gqd_positions=tuple(tuple(p) for p in document["gqd_positions"]),  # type: ignore[arg-type]
            gate_plane_z=document.get("gate_plane_z"),
            dielectric=float(document.get("dielectric", GAAS_DIELECTRIC)),
            qw_z=float(document.get("qw_z", 0.0)),
        )


def screened_energy(r_a: Any, r_b: Any, geometry: DeviceGeometry) -> Any:
    """Coulomb energy (μeV) of two electrons, less the interaction with the image of ``r_b``."""
    energy = point_charge_energy(r_a, r_b, geometry.dielectric)
    if geometry.gate_plane_z is None:
        return energy
    image = np.array(r_b, dtype=float, copy=True)
    image[..., 2] = 2.0 * geometry.gate_plane_z - image[..., 2]
    return energy - point_charge_energy(r_a, image, geometry.dielectric)


def _saqdm_grid(geometry: DeviceGeometry, xs: Sequence[float], ys: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    gx, gy = np.meshgrid(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
    offsets = np.stack([gx, gy, np.zeros_like(gx)], axis=-1)
    bottom, top = (np.asarray(p) + offsets for p in geometry.saqdm_positions)
    return bottom, top


@dataclass(frozen=True)
class CouplingMap:
    """Values (μeV) on a lateral grid of optical-molecule offsets; ``values[iy, ix]``."""
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    quantity: str = "delta_dd"

    def rows(self) -> List[Tuple[float, float, float]]:
        return [(float(x), float(y), float(self.values[iy, ix]))
                for iy, y in enumerate(self.ys) for ix, x in enumerate(self.xs)]

    @property
    def cell_area(self) -> float:
        if len(self.xs) < 2 or len(self.ys) < 2:
            raise InvalidParameterError("an area needs at least a 2×2 grid")
        dx, dy = np.diff(self.xs), np.diff(self.ys)
        if not (np.allclose(dx, dx[0]) and np.allclose(dy, dy[0])):
            raise InvalidParameterError("contour areas need a uniform grid")
        return float(abs(dx[0] * dy[0]))


def delta_dd(geometry: DeviceGeometry) -> float:
    """Δ_DD = U_T1 − U_T2 − U_B1 + U_B2 (μeV) for the geometry as placed."""
    bottom, top = geometry.saqdm_positions
    g1, g2 = geometry.gqd_positions[0], geometry.gqd_positions[1]
    return float(screened_energy(top, g1, geometry) - screened_energy(top, g2, geometry)
                 - screened_energy(bottom, g1, geometry) + screened_energy(bottom, g2, geometry))


def delta_dd_map(geometry: DeviceGeometry, xs: Sequence[float], ys: Sequence[float]) -> CouplingMap:
    """Δ_DD for every lateral offset (x, y) of the optical molecule."""
    bottom, top = _saqdm_grid(geometry, xs, ys)
    g1, g2 = np.asarray(geometry.gqd_positions[0]), np.asarray(geometry.gqd_positions[1])
    values = (screened_energy(top, g1, geometry) - screened_energy(top, g2, geometry)
              - screened_energy(bottom, g1, geometry) + screened_energy(bottom, g2, geometry))
    return CouplingMap(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), np.asarray(values))


def barrier_modulation(geometry: DeviceGeometry) -> float:
    """X_DD (μeV): change of the electron potential midway between GQDs 1 and 2 when the optical electron moves from B to T."""
    bottom, top = geometry.saqdm_positions
    middle = 0.5 * (np.asarray(geometry.gqd_positions[0]) + np.asarray(geometry.gqd_positions[1]))
    return float(screened_energy(top, middle, geometry) - screened_energy(bottom, middle, geometry))


def barrier_modulation_map(geometry: DeviceGeometry, xs: Sequence[float], ys: Sequence[float]) -> CouplingMap:
    bottom, top = _saqdm_grid(geometry, xs, ys)
    middle = 0.5 * (np.asarray(geometry.gqd_positions[0]) + np.asarray(geometry.gqd_positions[1]))
    values = screened_energy(top, middle, geometry) - screened_energy(bottom, middle, geometry)
    return CouplingMap(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), np.asarray(values),
                       quantity="barrier_modulation")


def contour_radius(coupling_map: CouplingMap, level: float) -> float:
    """Equivalent-area radius (nm) of the region where |value| ≥ ``level``; 0 for an empty region."""
    if level <= 0:
        raise InvalidParameterError(f"contour level must be positive, got {level}")
    count = int(np.count_nonzero(np.abs(coupling_map.values) >= level))
    if count == 0:
        return 0.0
    return math.sqrt(count * coupling_map.cell_area / math.pi)


@dataclass(frozen=True)
class Layer:
    material: Material
    thickness: float
    donor_density: float = 0.0
    hosts_2deg: bool = False
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.thickness > 0:
            raise InvalidParameterError(f"layer thickness must be positive, got {self.thickness}")
        if self.donor_density < 0:
            raise InvalidParameterError(f"donor density must be non-negative, got {self.donor_density}")

    @property
    def name(self) -> str:
        return self.label or self.material.name

    def to_dict(self) -> Dict[str, Any]:
        return {"material": self.material.name, "thickness": self.thickness, "donor_density": self.donor_density,
                "hosts_2deg": self.hosts_2deg, "label": self.label}


@dataclass(frozen=True)
class LayerStack:
    """Layers from the surface gate (depth 0) down to the back gate, with both gate biases (V).

    ``barrier_height`` is the Schottky barrier (eV) at both metal contacts.
    """
    layers: Tuple[Layer, ...]
    top_bias: float = 0.0
    bottom_bias: float = 0.0
    barrier_height: float = 0.7

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise InvalidParameterError("a layer stack needs at least one layer")

    @property
    def total_thickness(self) -> float:
        return float(sum(layer.thickness for layer in self.layers))

    @property
    def boundaries(self) -> np.ndarray:
        """Depths of the layer interfaces, surface and back gate included."""
        return np.concatenate([[0.0], np.cumsum([layer.thickness for layer in self.layers])])

    def depth_of(self, label: str) -> Tuple[float, float]:
        """(top, bottom) depth of the first layer whose name is ``label``."""
        edges = self.boundaries
        for k, layer in enumerate(self.layers):
            if layer.name == label:
                return float(edges[k]), float(edges[k + 1])
        raise InvalidParameterError(f"no layer named {label!r}")

    def bias(self, gate: str) -> float:
        _check_gate(gate)
        return self.top_bias if gate == "top" else self.bottom_bias

    def with_bias(self, gate: str, value: float) -> "LayerStack":
        _check_gate(gate)
        return replace(self, **{f"{gate}_bias": float(value)})

    def to_dict(self) -> Dict[str, Any]:
        return {"layers": [layer.to_dict() for layer in self.layers], "top_bias": self.top_bias,
                "bottom_bias": self.bottom_bias, "barrier_height": self.barrier_height}

    @classmethod
    def from_document(cls, document: Mapping[str, Any]) -> "LayerStack":
        layers = tuple(
            Layer(material=lookup(item["material"]), thickness=float(item["thickness"]),
                  donor_density=float(item.get("donor_density", 0.0)), hosts_2deg=bool(item.get("hosts_2deg", False)),
                  label=item.get("label"))
            for item in document["layers"]
        )
        return cls(layers, top_bias=float(document.get("top_bias", 0.0)),
                   bottom_bias=float(document.get("bottom_bias", 0.0)),
                   barrier_height=float(document.get("barrier_height", 0.7)))


def _check_gate(gate: str) -> None:
    if gate not in GATES:
        raise InvalidParameterError(f"unknown gate {gate!r}, expected one of {GATES}")


@dataclass(frozen=True)
class SolverSettings:
    grid_step: float = 0.25
    mixing: float = 0.1
    tolerance: float = 1e-6
    max_iterations: int = 500
    n_states: int = 4
    schrodinger_margin: float = 15.0

    def __post_init__(self) -> None:
        if not 0.0 < self.mixing <= 1.0:
            raise InvalidParameterError(f"mixing factor must lie in (0, 1], got {self.mixing}")
        if self.grid_step <= 0 or self.tolerance <= 0 or self.max_iterations < 1 or self.n_states < 1:
            raise InvalidParameterError("grid step, tolerance, iteration and state counts must be positive")


@dataclass(frozen=True)
class BandProfile:
    """Converged 1-D solution. Depths in nm, energies in eV with the Fermi level at 0.

    ``envelopes[k]`` is the normalised density |ψ_k|² (1/nm) of bound state k on ``z``.
    """
    z: np.ndarray
    conduction_band: np.ndarray
    potential: np.ndarray
    density: np.ndarray
    node_charge: np.ndarray
    cell_dielectric: np.ndarray
    energies: np.ndarray
    envelopes: np.ndarray
    qw_states: Tuple[int, ...]
    iterations: int
    residual_history: List[float] = field(default_factory=list)

    @property
    def grid_step(self) -> float:
        return float(self.z[1] - self.z[0])

    @property
    def sheet_density(self) -> float:
        """2DEG sheet density in nm⁻²."""
        return float(np.sum(self.density) * self.grid_step)

    @property
    def sheet_density_cm2(self) -> float:
        return self.sheet_density * 1e14

    def conduction_band_at(self, depth: float) -> float:
        return float(np.interp(depth, self.z, self.conduction_band))

    def rows(self) -> List[Tuple[float, ...]]:
        """(z, E_c, n, |ψ_0|², …) per grid node."""
        return [tuple([float(self.z[i]), float(self.conduction_band[i]), float(self.density[i])]
                      + [float(e[i]) for e in self.envelopes]) for i in range(len(self.z))]

    def summary(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "sheet_density_cm2": self.sheet_density_cm2,
            "energies_eV": self.energies.tolist(),
            "qw_states": list(self.qw_states),
            "gauss_law_residual": gauss_law_residual(self),
        }


def _thomas_fermi(mass: np.ndarray, depth: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """3-D electron density (nm⁻³) and its derivative for E_F − E_c = ``depth`` (eV) at 0 K."""
    x = np.maximum(depth, 0.0)
    scale = (mass / HBAR2_OVER_2ME) ** 1.5 / (3.0 * math.pi ** 2)
    return scale * x ** 1.5, 1.5 * scale * np.sqrt(x)


class _Discretization:
    """Uniform grid with per-cell material data; node quantities use half-cell averages."""

    def __init__(self, stack: LayerStack, grid_step: float):
        length = stack.total_thickness
        cells = max(2, int(round(length / grid_step)))
        self.z = np.linspace(0.0, length, cells + 1)
        self.h = length / cells
        middles = 0.5 * (self.z[1:] + self.z[:-1])
        index = np.clip(np.searchsorted(stack.boundaries, middles, side="right") - 1, 0, len(stack.layers) - 1)
        layers = [stack.layers[k] for k in index]
        self.eps = np.array([layer.material.dielectric for layer in layers])
        self.mass = np.array([layer.material.effective_mass for layer in layers])
        self.offset = np.array([layer.material.band_offset for layer in layers])
        self.donors = np.array([layer.donor_density for layer in layers])
        self.host = np.array([layer.hosts_2deg for layer in layers], dtype=float)
        self.boundary = (stack.top_bias - stack.barrier_height, stack.bottom_bias - stack.barrier_height)

    def node_average(self, cell_values: np.ndarray) -> np.ndarray:
        padded = np.concatenate([[cell_values[0]], cell_values, [cell_values[-1]]])
        return 0.5 * (padded[:-1] + padded[1:])

    def charge(self, potential: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Node charge ∫(N_D − n)dz over each node's cell, its φ-derivative and the node density."""
        phi = potential[1:-1]
        # cells i−1 and i of node i
        left, right = slice(0, -1), slice(1, None)
        n_l, dn_l = _thomas_fermi(self.mass[left], phi - self.offset[left])
        n_r, dn_r = _thomas_fermi(self.mass[right], phi - self.offset[right])
        n_l, dn_l = n_l * self.host[left], dn_l * self.host[left]
        n_r, dn_r = n_r * self.host[right], dn_r * self.host[right]
        half = 0.5 * self.h
        q = half * (self.donors[left] - n_l + self.donors[right] - n_r)
        dq = -half * (dn_l + dn_r)
        density = np.zeros_like(potential)
        density[1:-1] = 0.5 * (n_l + n_r)
        return q, dq, density

    def residual(self, potential: np.ndarray, q: np.ndarray) -> np.ndarray:
        flux = self.eps * np.diff(potential) / self.h
        return np.diff(flux) + ELEMENTARY_CHARGE_OVER_EPS0 * q

    def banded(self, dq: np.ndarray) -> np.ndarray:
        inner = len(self.z) - 2
        ab = np.zeros((3, inner))
        ab[0, 1:] = self.eps[1:-1] / self.h
        ab[1] = -(self.eps[:-1] + self.eps[1:]) / self.h + ELEMENTARY_CHARGE_OVER_EPS0 * dq
        ab[2, :-1] = self.eps[1:-1] / self.h
        return ab

    def poisson(self, q: np.ndarray) -> np.ndarray:
        """Potential for fixed node charges with the gate boundary values."""
        potential = np.zeros(len(self.z))
        potential[0], potential[-1] = self.boundary
        rhs = -ELEMENTARY_CHARGE_OVER_EPS0 * q
        rhs[0] -= self.eps[0] / self.h * potential[0]
        rhs[-1] -= self.eps[-1] / self.h * potential[-1]
        potential[1:-1] = linalg.solve_banded((1, 1), self.banded(np.zeros_like(q)), rhs)
        return potential


def _bound_states(grid: _Discretization, conduction_band: np.ndarray, stack: LayerStack,
                  settings: SolverSettings) -> Tuple[np.ndarray, np.ndarray, Tuple[int, ...]]:
    """Lowest envelope states in a hard-wall window around the 2DEG layers."""
    hosts = [k for k, layer in enumerate(stack.layers) if layer.hosts_2deg]
    edges = stack.boundaries
    if hosts:
        lo = edges[hosts[0]] - settings.schrodinger_margin
        hi = edges[hosts[-1] + 1] + settings.schrodinger_margin
    else:
        lo, hi = edges[0], edges[-1]
    inside = np.nonzero((grid.z > lo) & (grid.z < hi))[0]
    inside = inside[(inside > 0) & (inside < len(grid.z) - 1)]
    n_states = min(settings.n_states, len(inside))
    hop = HBAR2_OVER_2ME / (grid.mass * grid.h ** 2)
    diagonal = conduction_band[inside] + hop[inside - 1] + hop[inside]
    off_diagonal = -hop[inside[:-1]]
    energies, vectors = linalg.eigh_tridiagonal(diagonal, off_diagonal, select="i",
                                                select_range=(0, n_states - 1))
    envelopes = np.zeros((n_states, len(grid.z)))
    envelopes[:, inside] = (np.abs(vectors.T) ** 2) / grid.h
    host_nodes = grid.node_average(grid.host)
    weights = envelopes @ host_nodes * grid.h
    qw_states = tuple(int(k) for k in np.nonzero(weights > 0.5)[0])
    return energies, envelopes, qw_states


def solve_band_profile(stack: LayerStack, bias: Optional[Mapping[str, float]] = None,
                       settings: Optional[SolverSettings] = None) -> BandProfile:
    """Self-consistent conduction-band profile of ``stack``.

    Damped Newton iteration on the Poisson equation with Thomas–Fermi charge: each step moves
    the potential by ``mixing`` times the Newton update, until the applied update drops below
    ``tolerance`` (V). A final Poisson solve with the converged charge fixes the potential, so
    the discrete Gauss law holds to rounding.

    Raises:
        DivergenceError: no convergence within ``max_iterations``; carries the update history.
    """
    settings = settings or SolverSettings()
    for gate, value in (bias or {}).items():
        stack = stack.with_bias(gate, value)
    grid = _Discretization(stack, settings.grid_step)

    potential = grid.poisson(0.5 * grid.h * (grid.donors[:-1] + grid.donors[1:]))

    history: List[float] = []
    for iteration in range(1, settings.max_iterations + 1):
        q, dq, _ = grid.charge(potential)
        residual = grid.residual(potential, q)
        step = linalg.solve_banded((1, 1), grid.banded(dq), -residual)
        applied = settings.mixing * step
        potential[1:-1] += applied
        update = float(np.max(np.abs(applied))) if applied.size else 0.0
        history.append(update)
        if not math.isfinite(update):
            raise DivergenceError("band solver produced a non-finite potential", history)
        if update < settings.tolerance:
            break
    else:
        raise DivergenceError(
            f"band solver did not converge in {settings.max_iterations} iterations "
            f"(last update {history[-1]:.3e} V)", history)
    log.debug(f"band solver converged after {iteration} iterations")

    q, _, density = grid.charge(potential)
    potential = grid.poisson(q)
    offsets = grid.node_average(grid.offset)
    conduction_band = offsets - potential
    energies, envelopes, qw_states = _bound_states(grid, conduction_band, stack, settings)
    return BandProfile(
        z=grid.z, conduction_band=conduction_band, potential=potential, density=density, node_charge=q,
        cell_dielectric=grid.eps, energies=energies, envelopes=envelopes, qw_states=qw_states,
        iterations=iteration, residual_history=history,
    )


def gauss_law_residual(profile: BandProfile) -> float:
    """|boundary flux difference + (e/ε0)·total charge|, relative to the larger of the two."""
    h = profile.grid_step
    phi, eps = profile.potential, profile.cell_dielectric
    flux_difference = eps[-1] * (phi[-1] - phi[-2]) / h - eps[0] * (phi[1] - phi[0]) / h
    charge = ELEMENTARY_CHARGE_OVER_EPS0 * float(np.sum(profile.node_charge))
    scale = max(abs(flux_difference), abs(charge),
                abs(eps[0] * (phi[1] - phi[0]) / h), abs(eps[-1] * (phi[-1] - phi[-2]) / h))
    if scale == 0.0:
        return 0.0
    return abs(flux_difference + charge) / scale


def lever_arm(stack: LayerStack, gate: str, probe_z: float, step: float = 1e-3,
              settings: Optional[SolverSettings] = None) -> float:
    """−dE_c/dV (meV/V) at depth ``probe_z`` by a central difference in the gate bias."""
    _check_gate(gate)
    base = stack.bias(gate)
    upper = solve_band_profile(stack.with_bias(gate, base + step), settings=settings)
    lower = solve_band_profile(stack.with_bias(gate, base - step), settings=settings)
    slope = (upper.conduction_band_at(probe_z) - lower.conduction_band_at(probe_z)) / (2.0 * step)
    return -1000.0 * slope


def detuning_lever_arm(stack: LayerStack, gate: str, z_top: float, z_bottom: float, step: float = 1e-3,
                       settings: Optional[SolverSettings] = None) -> float:
    """Lever arm (meV/V) of ``gate`` on the detuning E_c(z_top) − E_c(z_bottom) of a vertical dot pair."""
    _check_gate(gate)
    base = stack.bias(gate)
    upper = solve_band_profile(stack.with_bias(gate, base + step), settings=settings)
    lower = solve_band_profile(stack.with_bias(gate, base - step), settings=settings)
    detuning = [p.conduction_band_at(z_top) - p.conduction_band_at(z_bottom) for p in (upper, lower)]
    return abs(1000.0 * (detuning[0] - detuning[1]) / (2.0 * step))
