"""Scenario documents and the batch runner behind ``oqmem run``.

A scenario is one JSON, YAML or TOML document with a ``kind``, kind-specific ``parameters``,
an optional ``seed`` and an optional ``output`` directory. Documents are validated against the
JSON Schema of their kind before anything runs. Sweeps live inside the document, so one
document is one run with one manifest.

Each kind maps to a runner that returns tables (CSV), per-shot records (JSON-lines) and a
summary; :func:`run_scenario` writes them and then the manifest.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple
import copy
import logging
import math
import time

import jsonschema
import numpy as np
import orjson
import toml
import yaml

from oqmem.config import Config
from oqmem.core.batch_processing import process_batch
from oqmem.core.electrostatics import (DeviceGeometry, LayerStack, SolverSettings, barrier_modulation_map,
                                       contour_radius, delta_dd_map, detuning_lever_arm,
                                       lever_arm, solve_band_profile)
from oqmem.core.errors import DivergenceError, ScenarioSchemaError
from oqmem.core.hubbard import (HubbardSystem, exchange_energy, exchange_slope, mixing_angle,
                                doubly_occupied_weight, singlet_triplet_gap)
from oqmem.core.interference import DetectorModel, PacketSet, mean_bell_fidelity
from oqmem.core.noise import NoiseModel
from oqmem.core.rates import estimate_rate
from oqmem.core.register import HeraldOutcome, ProtocolParams, run_protocol
from oqmem.utils import records
from oqmem.utils.rng import spawn_seeds

log = logging.getLogger(__name__)

KINDS = ("exchange-sweep", "coupling-map", "protocol", "hom-fidelity", "band-profile", "rate-estimate")

_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NON_NEGATIVE = {"type": "number", "minimum": 0}
_PROBABILITY = {"type": "number", "minimum": 0, "maximum": 1}
_VECTOR = {"type": "array", "items": _NUMBER, "minItems": 3, "maxItems": 3}
_RANGE = {
    "oneOf": [
        {"type": "array", "items": _NUMBER, "minItems": 1},
        {
            "type": "object",
            "properties": {"start": _NUMBER, "stop": _NUMBER, "num": {"type": "integer", "minimum": 1}},
            "required": ["start", "stop", "num"],
            "additionalProperties": False,
        },
    ]
}
_NOISE = {
    "type": "object",
    "properties": {
        "hyperfine_sigma_O": _NON_NEGATIVE, "hyperfine_sigma_E": _NON_NEGATIVE,
        "charge_sigma_O": _NON_NEGATIVE, "charge_sigma_E": _NON_NEGATIVE,
        "leakage_rate": _PROBABILITY, "plausible": {"type": "boolean"},
    },
    "additionalProperties": False,
}
_SYSTEM = {
    "type": "object",
    "properties": {
        "dots": {"type": "array", "items": {
            "type": "object",
            "properties": {"label": {"enum": ["T", "B", "1", "2", "3"]}, "center": _VECTOR,
                           "widths": _VECTOR},
            "required": ["label", "center", "widths"],
        }},
        "tunnel": {"type": "array", "items": {
            "type": "object",
            "properties": {"pair": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                           "value": _NUMBER},
            "required": ["pair", "value"],
        }},
        "coulomb": {"type": "array"},
        "dielectric": _POSITIVE,
        "detunings": {"type": "object", "additionalProperties": _NUMBER},
    },
    "required": ["dots", "tunnel"],
}
_GEOMETRY = {
    "type": "object",
    "properties": {
        "saqdm_positions": {"type": "array", "items": _VECTOR, "minItems": 2, "maxItems": 2},
        "gqd_positions": {"type": "array", "items": _VECTOR, "minItems": 3, "maxItems": 3},
        "gate_plane_z": {"type": ["number", "null"]},
        "dielectric": _POSITIVE,
        "qw_z": _NUMBER,
        "z_dd": _POSITIVE,
        "pitch": _POSITIVE,
        "saqdm_spacing": _POSITIVE,
    },
    "additionalProperties": False,
}
_STACK = {
    "type": "object",
    "properties": {
        "layers": {"type": "array", "minItems": 1, "items": {
            "type": "object",
            "properties": {"material": {"type": "string"}, "thickness": _POSITIVE, "donor_density": _NON_NEGATIVE,
                           "hosts_2deg": {"type": "boolean"}, "label": {"type": "string"}},
            "required": ["material", "thickness"],
            "additionalProperties": False,
        }},
        "top_bias": _NUMBER,
        "bottom_bias": _NUMBER,
        "barrier_height": _NUMBER,
    },
    "additionalProperties": False,
}

PARAMETER_SCHEMAS: Dict[str, Dict[str, Any]] = {
    "exchange-sweep": {
        "type": "object",
        "properties": {"t": _POSITIVE, "epsilon": _RANGE, "system": _SYSTEM},
        "required": ["t", "epsilon"],
        "additionalProperties": False,
    },
    "coupling-map": {
        "type": "object",
        "properties": {
            "geometry": _GEOMETRY, "x": _RANGE, "y": _RANGE, "level": _POSITIVE,
            "quantity": {"enum": ["delta_dd", "barrier_modulation"]},
        },
        "required": ["x", "y"],
        "additionalProperties": False,
    },
    "protocol": {
        "type": "object",
        "properties": {
            "couplings": {
                "type": "object",
                "properties": {"J_OE": {"type": "number", "not": {"const": 0}}, "J_E": _NUMBER,
                               "delta_J_O": _NUMBER, "J_23": _POSITIVE, "J_O_emit": _NUMBER},
                "additionalProperties": False,
            },
            "system": _SYSTEM,
            "emission": _SYSTEM,
            "detection_efficiency": _PROBABILITY,
            "initialization_fidelity": _PROBABILITY,
            "cycle_time": _POSITIVE,
            "ramp_phase": _NUMBER,
            "max_attempts": {"type": "integer", "minimum": 1},
            "n_shots": {"type": "integer", "minimum": 1},
            "noise": _NOISE,
        },
        "dependentRequired": {"system": ["emission"], "emission": ["system"]},
        "additionalProperties": False,
    },
    "hom-fidelity": {
        "type": "object",
        "properties": {
            "packets": {
                "type": "object",
                "properties": {"decay_1": _POSITIVE, "decay_2": _POSITIVE, "arrival_1": _NUMBER,
                               "arrival_2": _NUMBER,
                               "offsets": {"type": "object",
                                           "propertyNames": {"enum": ["H1", "V1", "H2", "V2"]},
                                           "additionalProperties": _NUMBER}},
                "required": ["decay_1", "decay_2"],
                "additionalProperties": False,
            },
            "detectors": {
                "type": "object",
                "properties": {"jitter_1": _NON_NEGATIVE, "jitter_2": _NON_NEGATIVE, "efficiency": _PROBABILITY,
                               "time_resolution": _NON_NEGATIVE},
                "additionalProperties": False,
            },
            "n_samples": {"type": "integer", "minimum": 1000},
            "sweep": {
                "type": "object",
                "properties": {
                    "parameter": {"enum": ["jitter_1", "jitter_2", "decay_1", "decay_2", "arrival_1", "arrival_2",
                                           "delta_H", "delta_V"]},
                    "values": _RANGE,
                },
                "required": ["parameter", "values"],
                "additionalProperties": False,
            },
        },
        "required": ["packets"],
        "additionalProperties": False,
    },
    "band-profile": {
        "type": "object",
        "properties": {
            "stack": _STACK,
            "settings": {
                "type": "object",
                "properties": {"grid_step": _POSITIVE, "mixing": {"type": "number", "exclusiveMinimum": 0,
                                                                   "maximum": 1},
                               "tolerance": _POSITIVE, "max_iterations": {"type": "integer", "minimum": 1},
                               "n_states": {"type": "integer", "minimum": 1},
                               "schrodinger_margin": _NON_NEGATIVE},
                "additionalProperties": False,
            },
            "lever_arm": {
                "type": "object",
                "properties": {"gate": {"enum": ["top", "bottom"]}, "probe_z": _NON_NEGATIVE,
                               "z_top": _NON_NEGATIVE, "z_bottom": _NON_NEGATIVE},
                "required": ["gate"],
                "additionalProperties": False,
            },
        },
        "additionalProperties": False,
    },
    "rate-estimate": {
        "type": "object",
        "properties": {"p_herald": _PROBABILITY, "collection_efficiency": _PROBABILITY, "cycle_time": _POSITIVE,
                       "detector_dead_time": _NON_NEGATIVE},
        "required": ["p_herald", "cycle_time"],
        "additionalProperties": False,
    },
}


def schema_for(kind: Optional[str] = None) -> Dict[str, Any]:
    """The full document schema of one kind, or of any kind when ``kind`` is None."""
    if kind is not None and kind not in PARAMETER_SCHEMAS:
        raise ScenarioSchemaError(f"unknown scenario kind {kind!r}", [("kind", f"expected one of {list(KINDS)}")])
    kinds = [kind] if kind else list(KINDS)
    variants = [
        {
            "type": "object",
            "properties": {
                "kind": {"const": k},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
                "output": {"type": "string"},
                "parameters": PARAMETER_SCHEMAS[k],
            },
            "required": ["kind", "parameters"],
            "additionalProperties": False,
        }
        for k in kinds
    ]
    schema: Dict[str, Any] = {"$schema": "https://json-schema.org/draft/2020-12/schema"}
    if len(variants) == 1:
        schema.update(variants[0])
    else:
        schema["oneOf"] = variants
    return schema


@dataclass(frozen=True)
class Scenario:
    kind: str
    parameters: Dict[str, Any]
    seed: Optional[int] = None
    output: Optional[str] = None
    source: bytes = b""

    @property
    def input_sha256(self) -> str:
        return records.sha256_bytes(self.source)


def _field_path(error: jsonschema.ValidationError) -> str:
    return "/".join(str(part) for part in error.absolute_path) or "<document>"


def validate_document(document: Any) -> Scenario:
    """Checks a parsed document and returns the Scenario.

    Raises:
        ScenarioSchemaError: with one ``(field path, message)`` diagnostic per violation.
    """
    if not isinstance(document, dict):
        raise ScenarioSchemaError("a scenario must be a mapping", [("<document>", "expected an object")])
    kind = document.get("kind")
    if kind not in PARAMETER_SCHEMAS:
        raise ScenarioSchemaError(f"unknown scenario kind {kind!r}", [("kind", f"expected one of {list(KINDS)}")])
    validator = jsonschema.Draft202012Validator(schema_for(kind))
    errors = sorted(validator.iter_errors(document), key=lambda e: (_field_path(e), e.message))
    if errors:
        diagnostics = [(_field_path(e), e.message) for e in errors]
        raise ScenarioSchemaError(f"{len(errors)} schema violation(s) in {kind} scenario", diagnostics)
    return Scenario(kind=kind, parameters=copy.deepcopy(document["parameters"]),
                    seed=document.get("seed"), output=document.get("output"))


def parse_document(data: bytes, suffix: str) -> Any:
    suffix = suffix.lower()
    try:
        if suffix == ".json":
            return orjson.loads(data)
        if suffix in (".yaml", ".yml"):
            return yaml.safe_load(data.decode("utf-8"))
        if suffix == ".toml":
            return toml.loads(data.decode("utf-8"))
    except (orjson.JSONDecodeError, yaml.YAMLError, toml.TomlDecodeError, UnicodeDecodeError) as e:
        raise ScenarioSchemaError(f"cannot parse scenario document: {e}", [("<document>", str(e))]) from e
    raise ScenarioSchemaError(f"unsupported scenario format {suffix!r}",
                              [("<document>", "use .json, .yaml, .yml or .toml")])


def load_scenario(path: Path) -> Scenario:
    """Reads, parses and validates a scenario file. I/O errors propagate as OSError."""
    path = Path(path)
    data = path.read_bytes()
    scenario = validate_document(parse_document(data, path.suffix))
    return Scenario(scenario.kind, scenario.parameters, scenario.seed, scenario.output, source=data)


@dataclass
class RunOutput:
    """What a runner produces before anything is written."""
    summary: Dict[str, Any]
    tables: List[Tuple[str, Sequence[str], List[Sequence[Any]]]] = field(default_factory=list)
    records: Optional[List[Any]] = None


@dataclass(frozen=True)
class RunContext:
    seed: int
    threads: int
    block_size: int


def expand_range(spec: Any) -> np.ndarray:
    if isinstance(spec, Mapping):
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    return np.asarray(spec, dtype=float)


def _run_exchange_sweep(params: Dict[str, Any], context: RunContext) -> RunOutput:
    t = float(params["t"])
    epsilons = expand_range(params["epsilon"])
    system = HubbardSystem.from_document(params["system"]) if "system" in params else None

    def point(epsilon: float) -> List[float]:
        row = [float(epsilon), exchange_energy(epsilon, t), mixing_angle(epsilon, t),
               doubly_occupied_weight(epsilon, t), exchange_slope(epsilon, t)]
        if system is not None:
            row.append(singlet_triplet_gap(system.with_detunings(epsilon_O=float(epsilon))))
        return row

    rows = process_batch(list(epsilons), point, threads=context.threads)
    header = ["epsilon_ueV", "J_ueV", "theta_rad", "sin2_half_theta", "dJ_depsilon"]
    if system is not None:
        header.append("J_exact_ueV")
    summary = {"t_ueV": t, "J_at_zero_ueV": exchange_energy(0.0, t), "points": len(rows)}
    return RunOutput(summary=summary, tables=[("results.csv", header, rows)])


def _geometry(params: Mapping[str, Any]) -> DeviceGeometry:
    from oqmem.builtin.devices import default_geometry

    document = dict(params.get("geometry", {}))
    if "saqdm_positions" in document:
        return DeviceGeometry.from_document(document)
    geometry = default_geometry(**{k: document[k] for k in ("z_dd", "pitch", "saqdm_spacing", "dielectric",
                                                            "gate_plane_z") if k in document})
    if "qw_z" in document:
        geometry = DeviceGeometry.from_document({**geometry.to_dict(), "qw_z": document["qw_z"]})
    return geometry


def _run_coupling_map(params: Dict[str, Any], context: RunContext) -> RunOutput:
    geometry = _geometry(params)
    xs, ys = expand_range(params["x"]), expand_range(params["y"])
    quantity = params.get("quantity", "delta_dd")
    mapper = delta_dd_map if quantity == "delta_dd" else barrier_modulation_map
    coupling_map = mapper(geometry, xs, ys)
    level = float(params.get("level", 100.0))
    summary: Dict[str, Any] = {
        "quantity": quantity,
        "level_ueV": level,
        "max_abs_ueV": float(np.max(np.abs(coupling_map.values))),
        "geometry": geometry.to_dict(),
    }
    if len(xs) > 1 and len(ys) > 1:
        radius = contour_radius(coupling_map, level)
        if radius == 0.0:
            log.warning(f"no grid point reaches |{quantity}| ≥ {level} μeV")
        summary.update(contour_radius_nm=radius, contour_diameter_nm=2.0 * radius)
    return RunOutput(summary=summary, tables=[("results.csv", ["x_nm", "y_nm", f"{quantity}_ueV"],
                                               coupling_map.rows())])


def _protocol_params(params: Mapping[str, Any]) -> ProtocolParams:
    options = {key: params[key] for key in ("detection_efficiency", "initialization_fidelity", "cycle_time",
                                            "ramp_phase", "max_attempts") if key in params}
    if "system" in params:
        return ProtocolParams.from_system(HubbardSystem.from_document(params["system"]),
                                          HubbardSystem.from_document(params["emission"]), **options)
    return ProtocolParams.ideal(**params.get("couplings", {}), **options)


def _noise_model(params: Mapping[str, Any]) -> Optional[NoiseModel]:
    if "noise" not in params:
        return None
    document = dict(params["noise"])
    if document.pop("plausible", False):
        return NoiseModel.plausible()
    return NoiseModel.from_document(document)


def _run_protocol(params: Dict[str, Any], context: RunContext) -> RunOutput:
    protocol = _protocol_params(params)
    noise = _noise_model(params)
    n_shots = int(params.get("n_shots", 1000))
    seeds = spawn_seeds(context.seed, n_shots)
    shots = process_batch(seeds, lambda s: run_protocol(protocol, noise, rng_seed=s), threads=context.threads)
    heralded = [r for r in shots if r.outcome is HeraldOutcome.SUCCESS]
    attempts = sum(r.attempts for r in shots)
    p = len(heralded) / attempts if attempts else 0.0
    fidelities = np.array([r.fidelity for r in heralded], dtype=float)
    summary = {
        "n_shots": n_shots,
        "heralded": len(heralded),
        "attempts": attempts,
        "success_probability": p,
        "success_probability_stderr": math.sqrt(p * (1.0 - p) / attempts) if attempts else None,
        "mean_attempts": attempts / n_shots,
        "fidelity_mean": float(fidelities.mean()) if fidelities.size else None,
        "fidelity_stderr": float(fidelities.std(ddof=1) / math.sqrt(fidelities.size)) if fidelities.size > 1 else None,
        "leaked": sum(r.leaked for r in heralded),
        "params": protocol.to_dict(),
        "noise": noise.to_dict() if noise else None,
    }
    return RunOutput(summary=summary, records=shots)


_PACKET_KEYS = ("decay_1", "decay_2", "arrival_1", "arrival_2")
_DETECTOR_KEYS = ("jitter_1", "jitter_2", "efficiency", "time_resolution")


def _hom_point(packets_doc: Dict[str, Any], detectors_doc: Dict[str, Any], parameter: Optional[str],
               value: Optional[float]) -> Tuple[PacketSet, DetectorModel]:
    packets_doc = copy.deepcopy(packets_doc)
    detectors_doc = dict(detectors_doc)
    if parameter in _PACKET_KEYS:
        packets_doc[parameter] = value
    elif parameter in _DETECTOR_KEYS:
        detectors_doc[parameter] = value
    elif parameter in ("delta_H", "delta_V"):
        offsets = packets_doc.setdefault("offsets", {})
        polarization = parameter[-1]
        offsets[f"{polarization}1"] = float(offsets.get(f"{polarization}2", 0.0)) + float(value)  # type: ignore[arg-type]
    packets = PacketSet.from_ports(**{k: packets_doc[k] for k in _PACKET_KEYS if k in packets_doc},
                                   offsets=packets_doc.get("offsets"))
    return packets, DetectorModel(**detectors_doc)


def _run_hom_fidelity(params: Dict[str, Any], context: RunContext) -> RunOutput:
    sweep = params.get("sweep")
    parameter = sweep["parameter"] if sweep else None
    values: List[Optional[float]] = [float(v) for v in expand_range(sweep["values"])] if sweep else [None]
    n_samples = int(params.get("n_samples", 10_000))
    point_seeds = spawn_seeds(context.seed, len(values))
    rows = []
    for value, seed in zip(values, point_seeds):
        packets, detectors = _hom_point(params["packets"], params.get("detectors", {}), parameter, value)
        estimate = mean_bell_fidelity(packets, detectors, n_samples, seed=seed, threads=context.threads,
                                      block_size=context.block_size)
        log.debug(f"hom point {parameter}={value}: F = {estimate.mean:.6f} ± {estimate.stderr:.6f}")
        rows.append(([value] if sweep else []) + [estimate.mean, estimate.stderr, estimate.n_samples,
                                                  estimate.closed_form])
    header = ([parameter] if sweep else []) + ["fidelity_mean", "fidelity_stderr", "n", "closed_form"]
    summary = {"points": len(rows), "n_samples": n_samples, "sweep": parameter,
               "fidelity_mean": rows[0][-4], "fidelity_stderr": rows[0][-3]}
    return RunOutput(summary=summary, tables=[("results.csv", header, rows)])


def _run_band_profile(params: Dict[str, Any], context: RunContext) -> RunOutput:
    from oqmem.builtin.devices import default_stack

    stack_doc = params.get("stack", {})
    if "layers" in stack_doc:
        stack = LayerStack.from_document(stack_doc)
    else:
        stack = default_stack(**{k: stack_doc[k] for k in ("top_bias", "bottom_bias", "barrier_height") if k in stack_doc})
    settings = SolverSettings(**params.get("settings", {}))
    profile = solve_band_profile(stack, settings=settings)
    summary = profile.summary()
    lever = params.get("lever_arm")
    if lever:
        if "z_top" in lever and "z_bottom" in lever:
            summary["detuning_lever_arm_meV_per_V"] = detuning_lever_arm(
                stack, lever["gate"], lever["z_top"], lever["z_bottom"], settings=settings)
        if "probe_z" in lever:
            summary["lever_arm_meV_per_V"] = lever_arm(stack, lever["gate"], lever["probe_z"], settings=settings)
    header = ["z_nm", "Ec_eV", "density_nm3"] + [f"psi{k}_sq" for k in range(len(profile.envelopes))]
    return RunOutput(summary=summary, tables=[("results.csv", header, profile.rows())])


def _run_rate_estimate(params: Dict[str, Any], context: RunContext) -> RunOutput:
    estimate = estimate_rate(params["p_herald"], params.get("collection_efficiency", 1.0), params["cycle_time"],
                             params.get("detector_dead_time", 0.0))
    return RunOutput(summary=estimate.to_dict())


RUNNERS: Dict[str, Callable[[Dict[str, Any], RunContext], RunOutput]] = {
    "exchange-sweep": _run_exchange_sweep,
    "coupling-map": _run_coupling_map,
    "protocol": _run_protocol,
    "hom-fidelity": _run_hom_fidelity,
    "band-profile": _run_band_profile,
    "rate-estimate": _run_rate_estimate,
}


@dataclass(frozen=True)
class ScenarioResult:
    run_id: str
    kind: str
    seed: int
    out_dir: Path
    outputs: Tuple[Path, ...]
    manifest: Path
    summary: Dict[str, Any]


def run_scenario(path: Path, seed: Optional[int] = None, threads: Optional[int] = None,
                 out: Optional[Path] = None, config: Optional[Config] = None) -> ScenarioResult:
    """Loads, validates, runs and writes one scenario.

    Precedence for seed, threads and output directory: argument, then document, then config.
    A divergent band solve writes ``residuals.csv`` before the error propagates.
    """
    started = time.perf_counter()
    config = config or Config()
    scenario = load_scenario(path)
    effective_seed = int(config.resolve("seed", seed, scenario.seed))
    context = RunContext(seed=effective_seed, threads=int(config.resolve("threads", threads)),
                         block_size=int(config.get("block_size")))
    out_dir = Path(config.resolve("output_dir", out, scenario.output))
    out_dir.mkdir(parents=True, exist_ok=True)
    run_id = records.make_run_id(scenario.source, effective_seed, scenario.kind)
    log.info(f"running {scenario.kind} scenario {run_id} with seed {effective_seed} into {out_dir}")

    try:
        result = RUNNERS[scenario.kind](scenario.parameters, context)
    except DivergenceError as e:
        dump = records.write_csv(out_dir / "residuals.csv", ["iteration", "max_update_V"],
                                 [(k + 1, r) for k, r in enumerate(e.residual_history)], run_id)
        records.write_manifest(out_dir, run_id, scenario.kind, effective_seed, scenario.input_sha256, [dump],
                               time.perf_counter() - started, extra={"status": "diverged"})
        raise

    outputs: List[Path] = []
    for name, header, rows in result.tables:
        outputs.append(records.write_csv(out_dir / name, header, rows, run_id))
    if result.records is not None:
        outputs.append(records.write_jsonl(out_dir / "records.jsonl", result.records, run_id))
    summary = {"run_id": run_id, "kind": scenario.kind, "seed": effective_seed, **result.summary}
    outputs.append(records.write_json(out_dir / "summary.json", summary))
    manifest = records.write_manifest(out_dir, run_id, scenario.kind, effective_seed, scenario.input_sha256,
                                      outputs, time.perf_counter() - started, extra={"status": "ok"})
    log.info(f"{scenario.kind} scenario {run_id} finished, {len(outputs)} outputs")
    return ScenarioResult(run_id, scenario.kind, effective_seed, out_dir, tuple(outputs), manifest, summary)
