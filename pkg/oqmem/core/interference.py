"""Two-photon interference between the memory photon and a network photon.

Port 1 carries the photon entangled with the optical molecule, port 2 the photon from the
remote node. Each photon is a superposition of an H and a V wavepacket with its own carrier
offset δ (rad/ps), decay rate κ (1/ps) and arrival time τ (ps). After the beam splitter one H
and one V detection at times t1 and t2 herald the gated molecule into a conditional state
with two branch amplitudes. Their magnitude ratio sets the overlap factor G and their phase
difference, 2φ_−, is removed with the measured detection times.

The detection times are drawn from the branch-summed density |a0|² + |a1|², which is also
the weight of the ensemble average in the closed-form fidelity.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Tuple
import logging
import math

import numpy as np
from scipy import integrate

from oqmem.core.batch_processing import process_blocks
from oqmem.core.errors import DiagnosticsError, InvalidParameterError, UndefinedEventError
from oqmem.utils.rng import DEFAULT_BLOCK_SIZE, SeedLike, as_generator

log = logging.getLogger(__name__)

POLARIZATIONS = ("H", "V")
PORTS = (1, 2)
MIN_SAMPLES = 1000


@dataclass(frozen=True)
class Wavepacket:
    """Normalised exponential mode ζ(t) = √(2κ) exp[−κ(t−τ)] e^{−iδt} for t ≥ τ, zero before."""
    polarization: str
    port: int
    carrier_offset: float = 0.0
    decay: float = 0.01
    arrival: float = 0.0

    def __post_init__(self) -> None:
        if self.polarization not in POLARIZATIONS:
            raise InvalidParameterError(f"polarization must be 'H' or 'V', got {self.polarization!r}")
        if self.port not in PORTS:
            raise InvalidParameterError(f"port must be 1 or 2, got {self.port!r}")
        if not (self.decay > 0 and math.isfinite(self.decay)):
            raise InvalidParameterError(f"decay rate must be positive, got {self.decay}")
        if not (math.isfinite(self.carrier_offset) and math.isfinite(self.arrival)):
            raise InvalidParameterError("carrier offset and arrival time must be finite")

    @property
    def key(self) -> str:
        return f"{self.polarization}{self.port}"

    def mode(self, t: Any) -> Any:
        t = np.asarray(t, dtype=float)
        envelope = np.where(t >= self.arrival,
                            np.sqrt(2.0 * self.decay) * np.exp(-self.decay * np.maximum(t - self.arrival, 0.0)),
                            0.0)
        value = envelope * np.exp(-1j * self.carrier_offset * t)
        return complex(value) if value.ndim == 0 else value

    def to_dict(self) -> Dict[str, Any]:
        return {"polarization": self.polarization, "port": self.port, "carrier_offset": self.carrier_offset,
                "decay": self.decay, "arrival": self.arrival}


@dataclass(frozen=True)
class PacketSet:
    """The four wavepackets ζ_H1, ζ_V1, ζ_H2, ζ_V2."""
    H1: Wavepacket
    V1: Wavepacket
    H2: Wavepacket
    V2: Wavepacket

    def __post_init__(self) -> None:
        for key in ("H1", "V1", "H2", "V2"):
            packet = getattr(self, key)
            if packet.key != key:
                raise InvalidParameterError(f"packet {packet.key} given in slot {key}")

    @classmethod
    def from_packets(cls, packets: Iterable[Wavepacket]) -> "PacketSet":
        by_key: Dict[str, Wavepacket] = {}
        for packet in packets:
            if packet.key in by_key:
                raise InvalidParameterError(f"duplicate wavepacket {packet.key}")
            by_key[packet.key] = packet
        missing = {"H1", "V1", "H2", "V2"} - set(by_key)
        if missing:
            raise InvalidParameterError(f"missing wavepackets: {sorted(missing)}")
        return cls(**by_key)

    @classmethod
    def from_ports(cls, decay_1: float, decay_2: float, arrival_1: float = 0.0, arrival_2: float = 0.0,
                   offsets: Optional[Dict[str, float]] = None) -> "PacketSet":
        """One decay rate and arrival time per port; ``offsets`` maps ``H1``… to carrier offsets."""
        offsets = offsets or {}
        unknown = set(offsets) - {"H1", "V1", "H2", "V2"}
        if unknown:
            raise InvalidParameterError(f"unknown carrier offsets: {sorted(unknown)}")

        def packet(polarization: str, port: int) -> Wavepacket:
            return Wavepacket(polarization, port, offsets.get(f"{polarization}{port}", 0.0),
                              decay_1 if port == 1 else decay_2, arrival_1 if port == 1 else arrival_2)

        return cls(packet("H", 1), packet("V", 1), packet("H", 2), packet("V", 2))

    @property
    def offsets(self) -> Dict[str, float]:
        return {key: getattr(self, key).carrier_offset for key in ("H1", "V1", "H2", "V2")}

    @property
    def delta_H(self) -> float:
        return self.H1.carrier_offset - self.H2.carrier_offset

    @property
    def delta_V(self) -> float:
        return self.V1.carrier_offset - self.V2.carrier_offset

    def to_dict(self) -> Dict[str, Any]:
        return {key: getattr(self, key).to_dict() for key in ("H1", "V1", "H2", "V2")}


@dataclass(frozen=True)
class DetectorModel:
    """Timing jitter (rms, ps) of the H and V detections, efficiency and time-tag bin (0 = continuous)."""
    jitter_1: float = 0.0
    jitter_2: float = 0.0
    efficiency: float = 1.0
    time_resolution: float = 0.0

    def __post_init__(self) -> None:
        if self.jitter_1 < 0 or self.jitter_2 < 0:
            raise InvalidParameterError("detector jitter must be non-negative")
        if not 0.0 <= self.efficiency <= 1.0:
            raise InvalidParameterError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if self.time_resolution < 0:
            raise InvalidParameterError(f"time resolution must be non-negative, got {self.time_resolution}")

    def measure(self, t1: np.ndarray, t2: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        m1 = t1 + self.jitter_1 * rng.standard_normal(np.shape(t1))
        m2 = t2 + self.jitter_2 * rng.standard_normal(np.shape(t2))
        if self.time_resolution > 0:
            m1 = np.round(m1 / self.time_resolution) * self.time_resolution
            m2 = np.round(m2 / self.time_resolution) * self.time_resolution
        return m1, m2


class HeraldPattern(Enum):
    """Coincidence patterns with one H and one V click after the beam splitter.

    Clicks in different output ports herald the canonical state; clicks in the same port
    herald it with the second branch sign-flipped.
    """
    H1_V2 = "H1_V2"
    H2_V1 = "H2_V1"
    HV1 = "HV1"
    HV2 = "HV2"

    @property
    def sign(self) -> int:
        return 1 if self in (HeraldPattern.H1_V2, HeraldPattern.H2_V1) else -1


CANONICAL_PATTERN = HeraldPattern.H1_V2
# each pattern occurs with probability 1/8 for unit efficiency
PATTERN_PROBABILITY = 0.125


def conditional_state(t1: Any, t2: Any, packets: PacketSet,
                      pattern: HeraldPattern = CANONICAL_PATTERN) -> Tuple[Any, Any]:
    """Unnormalised branch amplitudes (¼ζ_H2(t1)ζ_V1(t2), ±¼ζ_H1(t1)ζ_V2(t2)) for H at t1, V at t2."""
    a0 = 0.25 * packets.H2.mode(t1) * packets.V1.mode(t2)
    a1 = pattern.sign * 0.25 * packets.H1.mode(t1) * packets.V2.mode(t2)
    return a0, a1


def relative_phase(t1: Any, t2: Any, offsets: Any) -> Any:
    """φ_− = (δ_H1−δ_H2)t1/2 + (δ_V2−δ_V1)t2/2; ``offsets`` is a PacketSet or a mapping ``H1``… → δ."""
    d = offsets.offsets if isinstance(offsets, PacketSet) else offsets
    return 0.5 * (d["H1"] - d["H2"]) * np.asarray(t1) + 0.5 * (d["V2"] - d["V1"]) * np.asarray(t2)


def overall_phase(t1: Any, t2: Any, offsets: Any) -> Any:
    """φ_+ = (δ_H1+δ_H2)t1/2 + (δ_V1+δ_V2)t2/2, a global phase of the conditional state."""
    d = offsets.offsets if isinstance(offsets, PacketSet) else offsets
    return 0.5 * (d["H1"] + d["H2"]) * np.asarray(t1) + 0.5 * (d["V1"] + d["V2"]) * np.asarray(t2)


def _g_from_amplitudes(a0: Any, a1: Any) -> Any:
    m0, m1 = np.abs(a0), np.abs(a1)
    total = m0 ** 2 + m1 ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, 2.0 * m0 * m1 / np.where(total > 0, total, 1.0), np.nan)


def g_factor(t1: float, t2: float, packets: PacketSet) -> float:
    """G = 2|a0 a1|/(|a0|² + |a1|²) for one detection event."""
    a0, a1 = conditional_state(t1, t2, packets)
    if a0 == 0 and a1 == 0:
        raise UndefinedEventError(f"no wavepacket support at t1={t1} ps, t2={t2} ps")
    return float(_g_from_amplitudes(a0, a1))


def sech_g_factor(decay_1: float, decay_2: float, t1: float, t2: float) -> float:
    """G = sech[(κ2−κ1)(t2−t1)], valid when both times follow every arrival."""
    return 1.0 / math.cosh((decay_2 - decay_1) * (t2 - t1))


def corrected_overlap(t1: Any, t2: Any, packets: PacketSet, measured_t1: Any = None, measured_t2: Any = None,
                      pattern: HeraldPattern = CANONICAL_PATTERN) -> Any:
    """Overlap of the normalised conditional state, phase-corrected with the measured times, with the target.

    The target is the heralded Bell state of ``pattern``; the overall phase is referred to the
    first branch (the second when the first vanishes).
    """
    measured_t1 = t1 if measured_t1 is None else measured_t1
    measured_t2 = t2 if measured_t2 is None else measured_t2
    a0, a1 = conditional_state(t1, t2, packets, pattern)
    psi = 2.0 * relative_phase(measured_t1, measured_t2, packets)
    corrected = a0 + pattern.sign * a1 * np.exp(1j * psi)
    norm = np.sqrt(2.0 * (np.abs(a0) ** 2 + np.abs(a1) ** 2))
    reference = np.where(np.abs(a0) > 0, a0, pattern.sign * a1 * np.exp(1j * psi))
    with np.errstate(invalid="ignore", divide="ignore"):
        return corrected * np.exp(-1j * np.angle(reference)) / norm


def sample_detection_times(packets: PacketSet, n: int, rng: SeedLike = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact draws (branch, t1, t2) from the branch-summed detection density.

    Both branches carry weight 1/16, so the branch is a fair coin; within a branch t1 and t2
    are independent shifted exponentials with rate 2κ.
    """
    rng = as_generator(rng)
    branch = rng.random(n) < 0.5
    e1 = rng.standard_exponential(n)
    e2 = rng.standard_exponential(n)
    h = np.where(branch, 1, 0)
    # branch 0 follows ζ_H2, ζ_V1; branch 1 follows ζ_H1, ζ_V2
    h_tau = np.where(h == 0, packets.H2.arrival, packets.H1.arrival)
    h_rate = np.where(h == 0, packets.H2.decay, packets.H1.decay)
    v_tau = np.where(h == 0, packets.V1.arrival, packets.V2.arrival)
    v_rate = np.where(h == 0, packets.V1.decay, packets.V2.decay)
    return h, h_tau + e1 / (2.0 * h_rate), v_tau + e2 / (2.0 * v_rate)


def _mode_overlap(a: Wavepacket, b: Wavepacket) -> float:
    """∫|ζ_a ζ_b| dt in closed form; only the earlier packet decays across the arrival gap."""
    early = a if a.arrival <= b.arrival else b
    gap = abs(a.arrival - b.arrival)
    return 2.0 * math.sqrt(a.decay * b.decay) * math.exp(-early.decay * gap) / (a.decay + b.decay)


def mean_g_factor(packets: PacketSet) -> float:
    """⟨G⟩ over the branch-summed detection density, ∫|ζ_H1ζ_H2| · ∫|ζ_V1ζ_V2|."""
    return _mode_overlap(packets.H1, packets.H2) * _mode_overlap(packets.V1, packets.V2)


def quadrature_g_factor(packets: PacketSet, epsrel: float = 1e-8) -> float:
    """⟨G⟩ by adaptive two-dimensional quadrature of 16|a0 a1| over the detection times."""
    start_1 = max(packets.H1.arrival, packets.H2.arrival)
    start_2 = max(packets.V1.arrival, packets.V2.arrival)

    def integrand(t2: float, t1: float) -> float:
        a0, a1 = conditional_state(t1, t2, packets)
        return 16.0 * abs(a0) * abs(a1)

    value, error = integrate.dblquad(integrand, start_1, np.inf, start_2, np.inf, epsabs=0.0, epsrel=epsrel)
    log.debug(f"quadrature <G> = {value} ± {error}")
    return float(value)


def closed_form_fidelity(packets: PacketSet, detectors: DetectorModel) -> float:
    """½[1 + ⟨G⟩ exp(−Δδ_H²σ1²/2 − Δδ_V²σ2²/2)] for continuous time tags."""
    decay = math.exp(-0.5 * (packets.delta_H * detectors.jitter_1) ** 2
                     - 0.5 * (packets.delta_V * detectors.jitter_2) ** 2)
    return 0.5 * (1.0 + mean_g_factor(packets) * decay)


@dataclass(frozen=True)
class FidelityEstimate:
    mean: float
    stderr: float
    n_samples: int
    null_events: int = 0
    coincidence_probability: float = PATTERN_PROBABILITY
    closed_form: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fidelity_mean": self.mean,
            "fidelity_stderr": self.stderr,
            "n": self.n_samples,
            "null_events": self.null_events,
            "coincidence_probability": self.coincidence_probability,
            "closed_form": self.closed_form,
        }


def event_fidelities(packets: PacketSet, detectors: DetectorModel, n: int, rng: SeedLike = None,
                     pattern: HeraldPattern = CANONICAL_PATTERN) -> np.ndarray:
    """Bell fidelity of ``n`` sampled heralds; null events (no support) come back as NaN."""
    rng = as_generator(rng)
    _, t1, t2 = sample_detection_times(packets, n, rng)
    m1, m2 = detectors.measure(t1, t2, rng)
    overlap = corrected_overlap(t1, t2, packets, m1, m2, pattern)
    return np.abs(overlap) ** 2


def mean_bell_fidelity(packets: PacketSet, detectors: DetectorModel, n_samples: int, seed: Optional[int] = None,
                       threads: int = 1, pattern: HeraldPattern = CANONICAL_PATTERN,
                       block_size: int = DEFAULT_BLOCK_SIZE) -> FidelityEstimate:
    """Monte Carlo Bell fidelity after detection-time phase correction, with its standard error."""
    if n_samples < MIN_SAMPLES:
        raise InvalidParameterError(f"n_samples must be at least {MIN_SAMPLES}, got {n_samples}")

    def block(rng: np.random.Generator, size: int) -> np.ndarray:
        return event_fidelities(packets, detectors, size, rng, pattern)

    values = np.concatenate(process_blocks(n_samples, block, seed, threads=threads, block_size=block_size))
    valid = values[np.isfinite(values)]
    nulls = int(values.size - valid.size)
    if valid.size < 2:
        raise DiagnosticsError(f"{nulls} of {values.size} sampled heralds had no wavepacket support")
    if nulls:
        log.warning(f"{nulls} null detection events dropped from the fidelity average")
    closed = closed_form_fidelity(packets, detectors) if detectors.time_resolution == 0 else None
    return FidelityEstimate(
        mean=float(valid.mean()),
        stderr=float(valid.std(ddof=1) / math.sqrt(valid.size)),
        n_samples=int(valid.size),
        null_events=nulls,
        coincidence_probability=PATTERN_PROBABILITY * detectors.efficiency ** 2,
        closed_form=closed,
    )
