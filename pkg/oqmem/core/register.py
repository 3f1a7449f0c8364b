"""State-vector execution of the heralded entanglement transfer.

The register is the optical molecule qubit (|S⟩, |T0⟩), the photon polarization slot
(∅, H, V) and the gated-molecule DFS qubit (|0⟩, |1⟩) plus one leakage level |Q⟩. Before
heralding, amplitudes have shape (2, 3, 3) indexed ``[s, p, q]``; after heralding the optical
molecule is discarded and the shape is (3, 3) indexed ``[p, q]``.

Optical-molecule phases are tracked in the frame co-rotating with the exchange splitting at
the photon-creation configuration. The emitted photon carries that splitting, so in this frame
an idle register does not evolve at all and only δJ_O accrues during the controlled phase.

The protocol order is init → emit → R_E → CZ → Stark → herald → correct.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple
import logging
import math

import numpy as np
from scipy import linalg

from oqmem.core.errors import CalibrationError, InvalidParameterError, ProtocolOrderError
from oqmem.core.hubbard import EffectiveCouplings, HubbardSystem, cz_duration, effective_couplings
from oqmem.core.noise import NoiseModel, NoiseRealization, sample_quasistatic
from oqmem.core.units import HBAR
from oqmem.utils.rng import SeedLike, as_generator

log = logging.getLogger(__name__)

S, T0 = 0, 1
EMPTY, H, V = 0, 1, 2
ZERO, ONE, Q = 0, 1, 2

RE_AXIS_ANGLE = 2.0 * math.pi / 3.0
RE_ROTATION_ANGLE = math.pi - math.atan(math.sqrt(8.0))
XI = math.atan(math.sqrt(2.0))

_PAULI_Z = np.diag([1.0, -1.0]).astype(complex)
_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_GQDM_Z = np.diag([1.0, -1.0, 0.0]).astype(complex)
_GQDM_X = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]], dtype=complex)
_STARK = (np.eye(2) - 1j * _PAULI_X) / math.sqrt(2.0)

BELL = np.zeros((3, 3), dtype=complex)
BELL[H, ZERO] = BELL[V, ONE] = 1.0 / math.sqrt(2.0)


class Stage(Enum):
    READY = "ready"
    EMITTED = "emitted"
    STARK = "stark"
    HERALDED = "heralded"
    CORRECTED = "corrected"
    RESET = "reset"


class HeraldOutcome(Enum):
    SUCCESS = "success"
    FAILURE = "failure"


def re_rotation(alpha: float) -> np.ndarray:
    """R_E = exp[+i(α/2)(Z cos 2π/3 + X sin 2π/3)] on the DFS qubit, identity on |Q⟩."""
    axis = math.cos(RE_AXIS_ANGLE) * _PAULI_Z + math.sin(RE_AXIS_ANGLE) * _PAULI_X
    matrix = np.eye(3, dtype=complex)
    matrix[:2, :2] = math.cos(alpha / 2.0) * np.eye(2) + 1j * math.sin(alpha / 2.0) * axis
    return matrix


def z_rotation(angle: float) -> np.ndarray:
    """exp(iηZ/2) on the DFS qubit, identity on |Q⟩."""
    return np.diag([np.exp(0.5j * angle), np.exp(-0.5j * angle), 1.0])


def calibrated_re_duration(J_23: float) -> float:
    """Pulse length τ with J_23·τ/ħ = π − tan⁻¹√8."""
    if J_23 <= 0:
        raise InvalidParameterError(f"the R_E pulse needs positive 2-3 exchange, got {J_23}")
    return RE_ROTATION_ANGLE * HBAR / J_23


@dataclass(frozen=True)
class PhaseLedger:
    """Calibrated phases accumulated during one attempt.

    ``alpha`` is the total R_E rotation angle; ``phase_O``, ``phase_E`` and ``phase_OE`` are the
    δJ_O, J_E (plus ramp) and J_OE phases of the controlled-phase evolution, all in radians.
    """
    alpha: Optional[float] = None
    phase_O: float = 0.0
    phase_E: float = 0.0
    phase_OE: Optional[float] = None

    @property
    def complete(self) -> bool:
        return self.alpha is not None and self.phase_OE is not None

    @property
    def xi(self) -> float:
        if self.alpha is None:
            raise CalibrationError("no R_E pulse recorded in the phase ledger")
        half = self.alpha / 2.0
        beta = -math.atan2(math.sin(half) * math.cos(RE_AXIS_ANGLE), math.cos(half))
        return math.pi / 2.0 - beta

    @property
    def eta1(self) -> float:
        if self.phase_OE is None:
            raise CalibrationError("no controlled-phase evolution recorded in the phase ledger")
        return math.pi / 2.0 - self.xi + self.phase_O + (math.pi / 2.0 - self.phase_OE)

    @property
    def eta2(self) -> float:
        if self.phase_OE is None:
            raise CalibrationError("no controlled-phase evolution recorded in the phase ledger")
        return self.phase_E + self.phase_OE

    def residual_rotation(self) -> np.ndarray:
        """R′_E = e^{iη2Z/2} R_E e^{iη1Z/2}."""
        if not self.complete:
            raise CalibrationError("phase ledger is incomplete")
        return z_rotation(self.eta2) @ re_rotation(self.alpha) @ z_rotation(self.eta1)  # type: ignore[arg-type]


@dataclass(frozen=True)
class RegisterState:
    amplitudes: np.ndarray
    time: float = 0.0
    ledger: PhaseLedger = field(default_factory=PhaseLedger)
    stage: Stage = Stage.READY

    @property
    def heralded(self) -> bool:
        return self.amplitudes.ndim == 2

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    @property
    def leakage_population(self) -> float:
        return float(np.sum(np.abs(self.amplitudes[..., Q]) ** 2))

    def _evolved(self, amplitudes: np.ndarray, **changes: Any) -> "RegisterState":
        return replace(self, amplitudes=amplitudes, **changes)


@dataclass(frozen=True)
class ProtocolParams:
    """Timing and couplings of one protocol attempt.

    Attributes:
        J_O_emit: optical-molecule exchange at photon creation (μeV), the rotating-frame reference.
        couplings: couplings at the controlled-phase configuration.
        t_CZ: controlled-phase duration (ps).
        detection_efficiency: probability that a heralding photon is detected.
        cycle_time: duration of one attempt (ps).
        J_23: exchange used for the R_E pulse; defaults to ``couplings.J_23``.
        initialization_fidelity: probability that optical pumping shelves the molecule into |S⟩.
        ramp_phase: calibrated extra Z_E phase from finite gate ramps (rad).
        max_attempts: attempts before :func:`run_protocol` gives up.
    """
    J_O_emit: float
    couplings: EffectiveCouplings
    t_CZ: float
    detection_efficiency: float = 1.0
    cycle_time: float = 10_000.0
    J_23: Optional[float] = None
    initialization_fidelity: float = 1.0
    ramp_phase: float = 0.0
    max_attempts: int = 10 ** 6

    def __post_init__(self) -> None:
        if self.t_CZ <= 0:
            raise InvalidParameterError(f"t_CZ must be positive, got {self.t_CZ}")
        if not 0.0 <= self.detection_efficiency <= 1.0:
            raise InvalidParameterError(f"detection efficiency must lie in [0, 1], got {self.detection_efficiency}")
        if not 0.0 <= self.initialization_fidelity <= 1.0:
            raise InvalidParameterError(f"initialization fidelity must lie in [0, 1], got {self.initialization_fidelity}")
        if self.cycle_time <= 0:
            raise InvalidParameterError(f"cycle time must be positive, got {self.cycle_time}")
        if self.max_attempts < 1:
            raise InvalidParameterError(f"max_attempts must be at least 1, got {self.max_attempts}")

    @property
    def exchange_23(self) -> float:
        return self.couplings.J_23 if self.J_23 is None else self.J_23

    @property
    def re_duration(self) -> float:
        return calibrated_re_duration(self.exchange_23)

    @classmethod
    def from_couplings(cls, couplings: EffectiveCouplings, J_O_emit: Optional[float] = None,
                       **kwargs: Any) -> "ProtocolParams":
        """Params with t_CZ = πħ/(2|J_OE|); J_O_emit defaults to J_O − δJ_O."""
        if J_O_emit is None:
            J_O_emit = couplings.J_O - couplings.delta_J_O
        return cls(J_O_emit=J_O_emit, couplings=couplings, t_CZ=cz_duration(couplings.J_OE), **kwargs)

    @classmethod
    def from_system(cls, system: HubbardSystem, emission: HubbardSystem, **kwargs: Any) -> "ProtocolParams":
        """Params for a device at its controlled-phase configuration ``system``.

        The R_E pulse runs at the photon-creation configuration ``emission``, whose 2-3 exchange it uses.
        """
        emit = effective_couplings(emission)
        kwargs.setdefault("J_23", emit.J_23)
        return cls.from_couplings(effective_couplings(system, emission), J_O_emit=emit.J_O, **kwargs)

    @classmethod
    def ideal(cls, J_OE: float = 1.0, J_E: float = 0.0, delta_J_O: float = 0.0, J_23: float = 50.0,
              J_O_emit: float = 82.7, **kwargs: Any) -> "ProtocolParams":
        couplings = EffectiveCouplings.with_coupling(J_OE, J_O=J_O_emit + delta_J_O, J_E=J_E,
                                                     J_23=J_23, delta_J_O=delta_J_O)
        return cls.from_couplings(couplings, J_O_emit=J_O_emit, **kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "J_O_emit": self.J_O_emit, "couplings": self.couplings.to_dict(), "t_CZ": self.t_CZ,
            "detection_efficiency": self.detection_efficiency, "cycle_time": self.cycle_time,
            "J_23": self.exchange_23, "initialization_fidelity": self.initialization_fidelity,
            "ramp_phase": self.ramp_phase, "max_attempts": self.max_attempts,
        }


def init_saqdm() -> RegisterState:
    """|S⟩_O |∅⟩ |0⟩_E, the state after optical pumping and GQDM relaxation."""
    amplitudes = np.zeros((2, 3, 3), dtype=complex)
    amplitudes[S, EMPTY, ZERO] = 1.0
    return RegisterState(amplitudes)


def leak_gqdm(state: RegisterState) -> RegisterState:
    """Moves the freshly loaded gated molecule into |Q⟩ (exchanges |0⟩ and |Q⟩)."""
    if state.stage is not Stage.READY:
        raise ProtocolOrderError(f"leakage during loading applies before emission, stage is {state.stage.value}")
    return state._evolved(state.amplitudes[..., [Q, ONE, ZERO]])


def emit_entangled_photon(state: RegisterState) -> RegisterState:
    """|S⟩|∅⟩ → (|S⟩|H⟩ + i|T0⟩|V⟩)/√2, gated molecule untouched.

    The result is an energy eigenstate in the rotating frame, so delays before the next event add no phase.
    """
    a = state.amplitudes
    if state.stage is not Stage.READY or state.heralded:
        raise ProtocolOrderError(f"photon emission needs a freshly initialized register, stage is {state.stage.value}")
    if np.any(a[T0] != 0) or np.any(a[:, H:, :] != 0):
        raise ProtocolOrderError("photon emission needs the optical molecule in |S⟩ and an empty photon slot")
    out = np.zeros_like(a)
    out[S, H, :] = a[S, EMPTY, :] / math.sqrt(2.0)
    out[T0, V, :] = 1j * a[S, EMPTY, :] / math.sqrt(2.0)
    return state._evolved(out, stage=Stage.EMITTED)


def apply_re_pulse(state: RegisterState, tau: float, J_23: float) -> RegisterState:
    """Exchange pulse on dots 2-3 of duration ``tau`` (ps) at exchange ``J_23`` (μeV)."""
    alpha = J_23 * tau / HBAR
    rotation = re_rotation(alpha)
    if state.heralded:
        out = np.einsum("qr,pr->pq", rotation, state.amplitudes)
    else:
        out = np.einsum("qr,spr->spq", rotation, state.amplitudes)
    previous = state.ledger.alpha or 0.0
    return state._evolved(out, time=state.time + tau, ledger=replace(state.ledger, alpha=previous + alpha))


def cz_hamiltonian(couplings: EffectiveCouplings, realization: Optional[NoiseRealization] = None) -> np.ndarray:
    """H = −½[δJ_O Z_O + J_E Z_E + J_OE Z_O Z_E + h_O X_O + h_E X_E] on the (s, q) space, index s·3+q."""
    if realization is not None:
        couplings = realization.apply(couplings)
    eye2, eye3 = np.eye(2), np.eye(3)
    hamiltonian = (couplings.delta_J_O * np.kron(_PAULI_Z, eye3)
                   + couplings.J_E * np.kron(eye2, _GQDM_Z)
                   + couplings.J_OE * np.kron(_PAULI_Z, _GQDM_Z))
    if realization is not None:
        hamiltonian = (hamiltonian + realization.hyperfine_O * np.kron(_PAULI_X, eye3)
                       + realization.hyperfine_E * np.kron(eye2, _GQDM_X))
    return -0.5 * hamiltonian


def cz_unitary(duration: float, couplings: EffectiveCouplings,
               realization: Optional[NoiseRealization] = None) -> np.ndarray:
    hamiltonian = cz_hamiltonian(couplings, realization)
    if realization is not None and realization.has_hyperfine:
        return linalg.expm(-1j * hamiltonian * duration / HBAR)
    return np.diag(np.exp(-1j * np.diag(hamiltonian) * duration / HBAR))


def evolve_cz(state: RegisterState, duration: float, params: ProtocolParams,
              realization: Optional[NoiseRealization] = None) -> RegisterState:
    """Controlled-phase evolution for ``duration`` ps at the couplings of ``params``.

    The ledger records the calibrated phases of ``params``; a noise realization perturbs only
    the actual evolution.
    """
    if state.heralded or state.stage is not Stage.EMITTED:
        raise ProtocolOrderError(f"the controlled phase runs after photon emission, stage is {state.stage.value}")
    unitary = cz_unitary(duration, params.couplings, realization)
    a = state.amplitudes.transpose(0, 2, 1).reshape(6, 3)
    out = (unitary @ a).reshape(2, 3, 3).transpose(0, 2, 1)
    if params.ramp_phase:
        out = np.einsum("qr,spr->spq", z_rotation(params.ramp_phase), out)
    couplings = params.couplings
    ledger = state.ledger
    ledger = replace(
        ledger,
        phase_O=ledger.phase_O + couplings.delta_J_O * duration / HBAR,
        phase_E=ledger.phase_E + couplings.J_E * duration / HBAR + params.ramp_phase,
        phase_OE=(ledger.phase_OE or 0.0) + couplings.J_OE * duration / HBAR,
    )
    return state._evolved(np.ascontiguousarray(out), time=state.time + duration, ledger=ledger)


def wait(state: RegisterState, duration: float) -> RegisterState:
    """Idle at the parking configuration: J_E = 0, J_OE = 0 and no δJ_O, so only the clock advances.

    The register lives in the frame rotating at J_O_emit; the idle phase reappears through
    :func:`lab_frame` and is removed again by :func:`apply_detection_phase`.
    """
    if duration < 0:
        raise InvalidParameterError(f"wait duration must be non-negative, got {duration}")
    return replace(state, time=state.time + duration)


def apply_stark_rotation(state: RegisterState) -> RegisterState:
    """exp(−i(π/4)X_O) on the optical molecule while the gated molecule is held at J_E = 0."""
    if state.heralded:
        raise ProtocolOrderError("the optical molecule has already been erased")
    out = np.einsum("ab,bpq->apq", _STARK, state.amplitudes)
    return state._evolved(out, stage=Stage.STARK)


def herald_probability(state: RegisterState, params: ProtocolParams) -> float:
    return params.detection_efficiency * float(np.sum(np.abs(state.amplitudes[T0]) ** 2))


def _project(state: RegisterState) -> RegisterState:
    projected = state.amplitudes[T0]
    return state._evolved(projected / np.linalg.norm(projected), stage=Stage.HERALDED)


def herald_erasure(state: RegisterState, rng: SeedLike, params: ProtocolParams) -> Tuple[HeraldOutcome, RegisterState]:
    """Bernoulli herald on the |T0⟩ photon; success projects and discards the optical molecule.

    Returns:
        ``(SUCCESS, photon ⊗ gated-molecule state)`` or ``(FAILURE, state marked for reset)``.
    """
    if state.stage is not Stage.STARK or state.heralded:
        raise ProtocolOrderError(f"heralding needs the Stark rotation first, stage is {state.stage.value}")
    probability = herald_probability(state, params)
    if as_generator(rng).random() < probability:
        return HeraldOutcome.SUCCESS, _project(state)
    return HeraldOutcome.FAILURE, replace(state, stage=Stage.RESET)


def herald_statistics(state: RegisterState, params: ProtocolParams, n: int, rng: SeedLike) -> np.ndarray:
    """Outcomes of ``n`` independent herald trials on copies of ``state`` (True = success)."""
    if state.stage is not Stage.STARK:
        raise ProtocolOrderError(f"heralding needs the Stark rotation first, stage is {state.stage.value}")
    return as_generator(rng).random(n) < herald_probability(state, params)


def correct_local_rotation(state: RegisterState) -> RegisterState:
    """Applies (R′_E)⁻¹ from the phase ledger to the gated molecule."""
    if state.stage is not Stage.HERALDED:
        raise ProtocolOrderError(f"correction needs a heralded state, stage is {state.stage.value}")
    if not state.ledger.complete:
        raise CalibrationError("phase ledger is incomplete, cannot invert the residual rotation")
    inverse = state.ledger.residual_rotation().conj().T
    out = np.einsum("qr,pr->pq", inverse, state.amplitudes)
    return state._evolved(out, stage=Stage.CORRECTED)


def bell_fidelity(state: RegisterState) -> float:
    """|⟨Ψ⁺|ψ⟩|² against (|0⟩|H⟩ + |1⟩|V⟩)/√2."""
    if not state.heralded:
        raise ProtocolOrderError("Bell fidelity is defined on the photon and gated-molecule state")
    return float(abs(np.vdot(BELL, state.amplitudes)) ** 2 / state.norm ** 2)


def entanglement_entropy(state: RegisterState, subsystem: str = "O") -> float:
    """von Neumann entropy (nats) of one subsystem: ``'O'``, ``'photon'`` or ``'E'``."""
    a = state.amplitudes / state.norm
    axes = {"O": 0, "photon": 1, "E": 2} if not state.heralded else {"photon": 0, "E": 1}
    if subsystem not in axes:
        raise InvalidParameterError(f"unknown subsystem {subsystem!r} for this register state")
    matrix = np.moveaxis(a, axes[subsystem], 0).reshape(a.shape[axes[subsystem]], -1)
    weights = np.linalg.svd(matrix, compute_uv=False) ** 2
    weights = weights[weights > 1e-15]
    return float(-np.sum(weights * np.log(weights)))


def detection_phase(t_detect: float, J_O_emit: float) -> float:
    """Relative H/V phase J_O_emit·t/ħ carried by the photon pair at detection time ``t_detect``."""
    return J_O_emit * t_detect / HBAR


def lab_frame(state: RegisterState, J_O_emit: float) -> RegisterState:
    """Restores the phase e^{iJ t Z/2ħ} that the rotating frame removes, at ``state.time``."""
    half = 0.5 * detection_phase(state.time, J_O_emit)
    factors = np.array([np.exp(1j * half), np.exp(-1j * half)])
    if state.heralded:
        out = state.amplitudes * np.array([1.0, factors[0], factors[1]])[:, None]
    else:
        out = state.amplitudes * factors[:, None, None]
    return state._evolved(out)


def apply_detection_phase(state: RegisterState, t_detect: float, J_O_emit: float) -> RegisterState:
    """Removes the detection-time phase from the V branch of a heralded lab-frame state."""
    if not state.heralded:
        raise ProtocolOrderError("the detection-time correction applies to heralded states")
    out = np.array(state.amplitudes)
    out[V] *= np.exp(1j * detection_phase(t_detect, J_O_emit))
    return state._evolved(out)


def prepare_for_herald(params: ProtocolParams, realization: Optional[NoiseRealization] = None) -> RegisterState:
    """init → (leak) → emit → R_E → CZ → Stark for one attempt."""
    state = init_saqdm()
    if realization is not None and realization.leaked:
        state = leak_gqdm(state)
    state = emit_entangled_photon(state)
    state = apply_re_pulse(state, params.re_duration, params.exchange_23)
    state = evolve_cz(state, params.t_CZ, params, realization)
    return apply_stark_rotation(state)


@dataclass(frozen=True)
class ProtocolRecord:
    """Outcome of one :func:`run_protocol` call. ``elapsed_ps`` is simulated time, attempts × cycle time."""
    seed: Optional[int]
    attempts: int
    outcome: HeraldOutcome
    fidelity: Optional[float]
    elapsed_ps: float
    leaked: bool = False
    success_probability: Optional[float] = None
    state: Optional[RegisterState] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "attempts": self.attempts,
            "outcome": self.outcome.value,
            "fidelity": self.fidelity,
            "elapsed_ps": self.elapsed_ps,
            "leaked": self.leaked,
            "success_probability": self.success_probability,
        }


def run_protocol(params: ProtocolParams, noise: Optional[NoiseModel] = None, rng_seed: SeedLike = None,
                 max_attempts: Optional[int] = None) -> ProtocolRecord:
    """Repeats attempts until a herald succeeds or the attempt budget is exhausted.

    Each attempt draws, in order: the pumping outcome, a noise realization (when a model is
    given) and the herald outcome. A noiseless attempt is prepared once and reused.
    """
    rng = as_generator(rng_seed)
    seed = rng_seed if isinstance(rng_seed, int) else None
    budget = params.max_attempts if max_attempts is None else max_attempts
    cached = prepare_for_herald(params) if noise is None else None
    for attempt in range(1, budget + 1):
        pumped = rng.random() < params.initialization_fidelity
        realization = sample_quasistatic(noise, rng) if noise is not None else None
        heralded = rng.random()
        if not pumped:
            continue
        state = cached if cached is not None else prepare_for_herald(params, realization)
        probability = herald_probability(state, params)
        if heralded < probability:
            corrected = correct_local_rotation(_project(state))
            return ProtocolRecord(
                seed=seed, attempts=attempt, outcome=HeraldOutcome.SUCCESS,
                fidelity=bell_fidelity(corrected), elapsed_ps=attempt * params.cycle_time,
                leaked=bool(realization is not None and realization.leaked),
                success_probability=probability * params.initialization_fidelity, state=corrected,
            )
    log.warning(f"no herald after {budget} attempts")
    return ProtocolRecord(seed=seed, attempts=budget, outcome=HeraldOutcome.FAILURE, fidelity=None,
                          elapsed_ps=budget * params.cycle_time)
