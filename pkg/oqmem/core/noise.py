"""Quasi-static noise models and echo mitigation.

Every shot draws one frozen realization of the bath: a Gaussian hyperfine gradient per
molecule, which couples |S⟩ and |T0⟩ like an X term, and a Gaussian shift of each detuning,
which moves the exchange energies through :meth:`EffectiveCouplings.shifted`. Gated-molecule
leakage into the spin-3/2 level is a Bernoulli flag per shot.

Echo sequences are instantaneous π pulses (or SWAP pulses on the three gated dots) inserted
into a free evolution; :func:`apply_echo` returns the remaining coherence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy import linalg

from oqmem.core.batch_processing import process_batch, process_blocks
from oqmem.core.errors import InvalidParameterError, InvalidSequenceError
from oqmem.core.hubbard import EffectiveCouplings
from oqmem.core.protocols import FreeEvolution
from oqmem.core.units import HBAR
from oqmem.utils.rng import DEFAULT_BLOCK_SIZE, SeedLike, as_generator, spawn_seeds

if TYPE_CHECKING:
    from oqmem.core.register import ProtocolParams

log = logging.getLogger(__name__)

PULSE_AXES = ("X_O", "X_E", "SWAP")
MOLECULES = ("O", "E")

_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_PAULI_Z = np.diag([1.0, -1.0]).astype(complex)
_PLUS = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
_PAULI_Y = np.array([[0.0, -1j], [1j, 0.0]], dtype=complex)


def t2_star(sigma: float) -> float:
    """Inhomogeneous dephasing time √2ħ/σ (ps) of a Gaussian quasi-static splitting with rms σ (μeV)."""
    if sigma < 0:
        raise InvalidParameterError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return math.inf
    return math.sqrt(2.0) * HBAR / sigma


def sigma_for_t2_star(t2: float) -> float:
    if t2 <= 0:
        raise InvalidParameterError(f"T2* must be positive, got {t2}")
    return math.sqrt(2.0) * HBAR / t2


@dataclass(frozen=True)
class NoiseModel:
    """Rms magnitudes (μeV) of the quasi-static bath and the per-cycle leakage probability."""
    hyperfine_sigma_O: float = 0.0
    hyperfine_sigma_E: float = 0.0
    charge_sigma_O: float = 0.0
    charge_sigma_E: float = 0.0
    leakage_rate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("hyperfine_sigma_O", "hyperfine_sigma_E", "charge_sigma_O", "charge_sigma_E"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidParameterError(f"{name} must be a finite non-negative number, got {value}")
        if not 0.0 <= self.leakage_rate <= 1.0:
            raise InvalidParameterError(f"leakage_rate must lie in [0, 1], got {self.leakage_rate}")

    @classmethod
    def plausible(cls) -> "NoiseModel":
        """Literature-typical magnitudes for GaAs dot molecules, not measured values of any device.

        T2* ≈ 2 ns for the optical molecule and ≈ 10 ns for the gated molecule, sub-μeV charge
        noise on the detunings and a 10⁻³ leakage chance per cycle.
        """
        return cls(
            hyperfine_sigma_O=sigma_for_t2_star(2000.0),
            hyperfine_sigma_E=sigma_for_t2_star(10000.0),
            charge_sigma_O=0.5,
            charge_sigma_E=0.5,
            leakage_rate=1e-3,
        )

    @property
    def is_silent(self) -> bool:
        return not any((self.hyperfine_sigma_O, self.hyperfine_sigma_E, self.charge_sigma_O,
                        self.charge_sigma_E, self.leakage_rate))

    def hyperfine_sigma(self, molecule: str) -> float:
        _check_molecule(molecule)
        return self.hyperfine_sigma_O if molecule == "O" else self.hyperfine_sigma_E

    def to_dict(self) -> Dict[str, float]:
        return {
            "hyperfine_sigma_O": self.hyperfine_sigma_O,
            "hyperfine_sigma_E": self.hyperfine_sigma_E,
            "charge_sigma_O": self.charge_sigma_O,
            "charge_sigma_E": self.charge_sigma_E,
            "leakage_rate": self.leakage_rate,
        }

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "NoiseModel":
        known = set(cls().to_dict())
        return cls(**{key: float(value) for key, value in document.items() if key in known})


@dataclass(frozen=True)
class NoiseRealization:
    """One frozen draw of the bath, all energies in μeV."""
    hyperfine_O: float = 0.0
    hyperfine_E: float = 0.0
    d_epsilon_O: float = 0.0
    d_epsilon_E: float = 0.0
    leaked: bool = False

    @property
    def has_hyperfine(self) -> bool:
        return self.hyperfine_O != 0.0 or self.hyperfine_E != 0.0

    @property
    def is_zero(self) -> bool:
        return not (self.has_hyperfine or self.d_epsilon_O or self.d_epsilon_E or self.leaked)

    def apply(self, couplings: EffectiveCouplings) -> EffectiveCouplings:
        return couplings.shifted(self.d_epsilon_O, self.d_epsilon_E)

    def hyperfine(self, molecule: str) -> float:
        _check_molecule(molecule)
        return self.hyperfine_O if molecule == "O" else self.hyperfine_E


def sample_quasistatic(model: NoiseModel, rng: SeedLike = None) -> NoiseRealization:
    """Draws one realization.

    Four standard normals and one uniform are consumed on every call, whatever the
    magnitudes, so two models sampled from equal seeds see the same random numbers.
    """
    rng = as_generator(rng)
    normals = rng.standard_normal(4)
    leak = rng.random()
    return NoiseRealization(
        hyperfine_O=float(model.hyperfine_sigma_O * normals[0]),
        hyperfine_E=float(model.hyperfine_sigma_E * normals[1]),
        d_epsilon_O=float(model.charge_sigma_O * normals[2]),
        d_epsilon_E=float(model.charge_sigma_E * normals[3]),
        leaked=bool(leak < model.leakage_rate),
    )


@dataclass(frozen=True)
class Envelope:
    """Free-induction decay ⟨cos(δω t)⟩ sampled at ``times`` (ps)."""
    times: np.ndarray
    coherence: np.ndarray
    t2_star: float
    stderr: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "times": self.times.tolist(),
            "coherence": self.coherence.tolist(),
            "t2_star": self.t2_star,
        }
        if self.stderr is not None:
            out["stderr"] = self.stderr.tolist()
        return out


def dephasing_envelope(model: NoiseModel, times: Sequence[float], molecule: str = "O") -> Envelope:
    """Ensemble coherence exp(−t²σ²/2ħ²) of a molecule idling under its hyperfine gradient."""
    sigma = model.hyperfine_sigma(molecule)
    t = np.asarray(times, dtype=float)
    coherence = np.exp(-0.5 * (t * sigma / HBAR) ** 2)
    return Envelope(times=t, coherence=coherence, t2_star=t2_star(sigma))


def sample_envelope(model: NoiseModel, times: Sequence[float], n_shots: int, seed: Optional[int] = None,
                    molecule: str = "O", threads: int = 1,
                    block_size: int = DEFAULT_BLOCK_SIZE) -> Envelope:
    """Monte Carlo estimate of :func:`dephasing_envelope` with one standard error per time."""
    if n_shots < 2:
        raise InvalidParameterError(f"n_shots must be at least 2, got {n_shots}")
    sigma = model.hyperfine_sigma(molecule)
    t = np.asarray(times, dtype=float)

    def block(rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray]:
        splitting = sigma * rng.standard_normal(size)
        values = np.cos(np.outer(splitting, t) / HBAR)
        return values.sum(axis=0), np.square(values).sum(axis=0)

    sums = process_blocks(n_shots, block, seed, threads=threads, block_size=block_size)
    total = np.sum([s for s, _ in sums], axis=0)
    total_sq = np.sum([s for _, s in sums], axis=0)
    mean = total / n_shots
    variance = np.maximum(total_sq / n_shots - mean ** 2, 0.0) * n_shots / (n_shots - 1)
    return Envelope(times=t, coherence=mean, t2_star=t2_star(sigma), stderr=np.sqrt(variance / n_shots))


@dataclass(frozen=True)
class EchoSequence:
    """Instantaneous pulses at ``pulse_times`` inside ``[0, interval]`` (ps).

    ``X_O``/``X_E`` are π pulses about X on a molecule qubit. ``SWAP`` pulses act on the three
    gated-molecule spins and alternate between the 1–2 and 2–3 pairs.
    """
    pulse_times: Tuple[float, ...]
    interval: float
    pulse_axis: str = "X_O"

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.pulse_times)
        object.__setattr__(self, "pulse_times", times)
        if self.interval <= 0:
            raise InvalidSequenceError(f"interval must be positive, got {self.interval}")
        if self.pulse_axis not in PULSE_AXES:
            raise InvalidSequenceError(f"unknown pulse axis {self.pulse_axis!r}, expected one of {PULSE_AXES}")
        if any(b < a for a, b in zip(times, times[1:])):
            raise InvalidSequenceError("pulse times must be sorted")
        if times and (times[0] < 0 or times[-1] > self.interval):
            raise InvalidSequenceError(f"pulse times must lie within [0, {self.interval}] ps")

    @property
    def segments(self) -> List[float]:
        """Free-evolution durations before, between and after the pulses."""
        edges = (0.0,) + self.pulse_times + (self.interval,)
        return [b - a for a, b in zip(edges, edges[1:])]

    def to_dict(self) -> Dict[str, Any]:
        return {"pulse_times": list(self.pulse_times), "interval": self.interval, "pulse_axis": self.pulse_axis}


def free_induction(interval: float, pulse_axis: str = "X_O") -> EchoSequence:
    return EchoSequence((), interval, pulse_axis)


def hahn_sequence(interval: float, pulse_axis: str = "X_O") -> EchoSequence:
    return EchoSequence((interval / 2.0,), interval, pulse_axis)


def cpmg_sequence(interval: float, n_pulses: int, pulse_axis: str = "X_O") -> EchoSequence:
    """Pulses at T(k − ½)/n for k = 1..n."""
    if n_pulses < 1:
        raise InvalidSequenceError(f"a CPMG train needs at least one pulse, got {n_pulses}")
    return EchoSequence(tuple(interval * (k - 0.5) / n_pulses for k in range(1, n_pulses + 1)),
                        interval, pulse_axis)


def permutation_sequence(interval: float) -> EchoSequence:
    """Six exchange SWAPs that cycle the three gated spins through every dot.

    A 1–2 SWAP followed at once by a 2–3 SWAP at T/3, 2T/3 and T; each spin spends a third
    of the interval on every dot, so static field differences between dots cancel.
    """
    times = []
    for k in (1, 2, 3):
        times += [interval * k / 3.0] * 2
    return EchoSequence(tuple(times), interval, "SWAP")


def _check_molecule(molecule: str) -> None:
    if molecule not in MOLECULES:
        raise InvalidParameterError(f"unknown molecule {molecule!r}, expected 'O' or 'E'")


def _swap(first: int, dimension: int = 3) -> np.ndarray:
    """SWAP of spins ``first`` and ``first + 1`` on ``dimension`` spin-½ sites, spin 0 most significant."""
    size = 2 ** dimension
    out = np.zeros((size, size), dtype=complex)
    shift_a, shift_b = dimension - 1 - first, dimension - 2 - first
    for index in range(size):
        bit_a, bit_b = (index >> shift_a) & 1, (index >> shift_b) & 1
        swapped = index & ~((1 << shift_a) | (1 << shift_b)) | (bit_b << shift_a) | (bit_a << shift_b)
        out[swapped, index] = 1.0
    return out


def _pulses(sequence: EchoSequence, dimension: int) -> List[np.ndarray]:
    # a pulse-free sequence is plain free evolution of any system
    if not sequence.pulse_times:
        return []
    if sequence.pulse_axis == "SWAP":
        if dimension != 8:
            raise InvalidSequenceError("SWAP pulses act on the three-spin gated molecule (dimension 8)")
        cycle = [_swap(0), _swap(1)]
        return [cycle[k % 2] for k in range(len(sequence.pulse_times))]
    if dimension != 2:
        raise InvalidSequenceError(f"{sequence.pulse_axis} pulses act on a two-level qubit, got dimension {dimension}")
    return [_PAULI_X] * len(sequence.pulse_times)


def echo_unitary(evolution: FreeEvolution, sequence: EchoSequence) -> np.ndarray:
    """Composed propagator of the free evolution interleaved with the pulses of ``sequence``."""
    segments = sequence.segments
    total = np.asarray(evolution(segments[0]), dtype=complex)
    pulses = _pulses(sequence, total.shape[0])
    for pulse, duration in zip(pulses, segments[1:]):
        total = np.asarray(evolution(duration), dtype=complex) @ pulse @ total
    return total


def apply_echo(evolution: FreeEvolution, sequence: EchoSequence) -> float:
    """Coherence left after ``sequence`` for one fixed realization.

    On a molecule qubit this is ⟨X⟩ of the state that started in |+⟩; on the three gated spins
    it is the return probability of the logical |0⟩ state.
    """
    unitary = echo_unitary(evolution, sequence)
    if unitary.shape[0] == 2:
        final = unitary @ _PLUS
        return float(np.real(np.vdot(final, _PAULI_X @ final)))
    start = DFS_ZERO
    return float(abs(np.vdot(start, unitary @ start)) ** 2)


def quasistatic_evolution(realization: NoiseRealization, molecule: str = "O",
                          couplings: Optional[EffectiveCouplings] = None) -> Callable[[float], np.ndarray]:
    """Idle propagator of one molecule qubit in the frame of its nominal splitting.

    The hyperfine gradient is the qubit splitting error; with ``couplings`` the exchange shift
    caused by the detuning error adds to it.
    """
    splitting = realization.hyperfine(molecule)
    if couplings is not None:
        shifted = realization.apply(couplings)
        splitting += (shifted.J_O - couplings.J_O) if molecule == "O" else (shifted.J_E - couplings.J_E)

    def evolve(duration: float) -> np.ndarray:
        angle = 0.5 * splitting * duration / HBAR
        return np.diag([np.exp(1j * angle), np.exp(-1j * angle)])

    return evolve


def field_evolution(fields: Sequence[float]) -> Callable[[float], np.ndarray]:
    """Propagator of three gated spins in static Zeeman fields ``fields`` (μeV), H = ½ Σ b_k Z_k."""
    if len(fields) != 3:
        raise InvalidParameterError(f"expected three dot fields, got {len(fields)}")
    eye = np.eye(2)
    hamiltonian = sum(
        0.5 * b * np.kron(np.kron(_PAULI_Z if k == 0 else eye, _PAULI_Z if k == 1 else eye), _PAULI_Z if k == 2 else eye)
        for k, b in enumerate(fields)
    )
    diagonal = np.real(np.diag(hamiltonian))

    def evolve(duration: float) -> np.ndarray:
        return np.diag(np.exp(-1j * diagonal * duration / HBAR))

    return evolve


def _on_spin(operator: np.ndarray, spin: int) -> np.ndarray:
    factors = [operator if k == spin else np.eye(2) for k in range(3)]
    return np.kron(np.kron(factors[0], factors[1]), factors[2])


def exchange_evolution(exchange: Sequence[float],
                       fields: Sequence[float] = (0.0, 0.0, 0.0)) -> Callable[[float], np.ndarray]:
    """Propagator of three gated spins under exchange ``(J_12, J_23)`` and static Zeeman fields.

    H = Σ J/4 σ_j·σ_k over the two neighbouring pairs plus ½ Σ b_k Z_k, all in μeV. J_12 alone
    splits DFS_ZERO from DFS_ONE by J_12, so a pulse of length θħ/J_12 is a logical rotation by θ.
    """
    if len(exchange) != 2:
        raise InvalidParameterError(f"expected exchange (J_12, J_23), got {len(exchange)} values")
    if len(fields) != 3:
        raise InvalidParameterError(f"expected three dot fields, got {len(fields)}")
    hamiltonian = np.zeros((8, 8), dtype=complex)
    for (j, k), coupling in zip(((0, 1), (1, 2)), exchange):
        for pauli in (_PAULI_X, _PAULI_Y, _PAULI_Z):
            hamiltonian += 0.25 * coupling * _on_spin(pauli, j) @ _on_spin(pauli, k)
    for k, b in enumerate(fields):
        hamiltonian += 0.5 * b * _on_spin(_PAULI_Z, k)

    def evolve(duration: float) -> np.ndarray:
        return linalg.expm(-1j * hamiltonian * duration / HBAR)

    return evolve


def _basis_state(*bits: int) -> np.ndarray:
    out = np.zeros(8, dtype=complex)
    out[bits[0] * 4 + bits[1] * 2 + bits[2]] = 1.0
    return out


# spin up = bit 0; m = +½ decoherence-free subspace of three spins
DFS_ZERO = (_basis_state(0, 1, 0) - _basis_state(1, 0, 0)) / math.sqrt(2.0)
DFS_ONE = (2.0 * _basis_state(0, 0, 1) - _basis_state(0, 1, 0) - _basis_state(1, 0, 0)) / math.sqrt(6.0)


def logical_rotation_angle(unitary: np.ndarray) -> float:
    """Rotation angle 2·arccos(|tr U_L|/2) of a three-spin unitary restricted to the logical subspace."""
    unitary = np.asarray(unitary, dtype=complex)
    if unitary.shape != (8, 8):
        raise InvalidParameterError(f"expected an 8×8 three-spin unitary, got shape {unitary.shape}")
    basis = np.column_stack([DFS_ZERO, DFS_ONE])
    block = basis.conj().T @ unitary @ basis
    return float(2.0 * math.acos(min(1.0, abs(np.trace(block)) / 2.0)))


@dataclass(frozen=True)
class EnsembleEstimate:
    """Mean of a per-shot quantity with its standard error."""
    mean: float
    stderr: float
    n_shots: int
    extras: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean, "stderr": self.stderr, "n_shots": self.n_shots, **self.extras}


def _mean_and_stderr(values: np.ndarray) -> Tuple[float, float]:
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values[0]), math.nan
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def echo_ensemble(model: NoiseModel, sequence: EchoSequence, n_shots: int, seed: Optional[int] = None,
                  molecule: str = "O", threads: int = 1, block_size: int = DEFAULT_BLOCK_SIZE) -> EnsembleEstimate:
    """Average of :func:`apply_echo` over quasi-static realizations of ``model``."""
    if n_shots < 2:
        raise InvalidParameterError(f"n_shots must be at least 2, got {n_shots}")

    def block(rng: np.random.Generator, size: int) -> np.ndarray:
        return np.array([
            apply_echo(quasistatic_evolution(sample_quasistatic(model, rng), molecule), sequence)
            for _ in range(size)
        ])

    values = np.concatenate(process_blocks(n_shots, block, seed, threads=threads, block_size=block_size))
    mean, stderr = _mean_and_stderr(values)
    return EnsembleEstimate(mean=mean, stderr=stderr, n_shots=n_shots)


def noisy_protocol_fidelity(params: "ProtocolParams", model: NoiseModel, n_shots: int,
                            seed: Optional[int] = None, threads: int = 1) -> EnsembleEstimate:
    """Heralded Bell fidelity averaged over ``n_shots`` protocol runs with fresh realizations.

    Extras carry the success probability per attempt, the number of heralded shots and the
    fraction of heralded shots that leaked.
    """
    from oqmem.core.register import HeraldOutcome, run_protocol

    if n_shots < 100:
        raise InvalidParameterError(f"n_shots must be at least 100, got {n_shots}")
    seeds = spawn_seeds(seed, n_shots)
    records = process_batch(seeds, lambda s: run_protocol(params, model, rng_seed=s), threads=threads)
    heralded = [r for r in records if r.outcome is HeraldOutcome.SUCCESS]
    fidelities = np.array([r.fidelity for r in heralded], dtype=float)
    attempts = sum(r.attempts for r in records)
    mean, stderr = _mean_and_stderr(fidelities)
    log.info(f"noisy protocol: {len(heralded)}/{n_shots} heralded, mean fidelity {mean:.6f}")
    return EnsembleEstimate(
        mean=mean, stderr=stderr, n_shots=n_shots,
        extras={
            "success_probability": len(heralded) / attempts if attempts else 0.0,
            "heralded": float(len(heralded)),
            "leaked_fraction": (sum(r.leaked for r in heralded) / len(heralded)) if heralded else 0.0,
        },
    )
