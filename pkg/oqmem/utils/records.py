"""Writers for run artifacts.

Every primary output starts with a reference to its run id (a ``# run_id=`` comment line in
CSV files, a ``run_id`` key in JSON-lines records), and the run manifest lists the SHA-256 of
each output. Primary outputs hold no wall-clock data, so a re-run with the same document and
seed reproduces them byte for byte.
"""
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union
import csv
import hashlib
import logging
import platform
from importlib import metadata

import orjson

from oqmem.core.protocols import SerializableRecord

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
TRACKED_PACKAGES = ("oqmem", "numpy", "scipy", "orjson", "anyio", "typer", "jsonschema", "PyYAML", "toml")


def dumps(obj: Any, indent: bool = False) -> bytes:
    options = JSON_OPTIONS | (orjson.OPT_INDENT_2 if indent else 0)
    return orjson.dumps(obj, option=options)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: PathLike, chunk_bytes: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_bytes), b""):
            h.update(chunk)
    return h.hexdigest()


def make_run_id(document: bytes, seed: Optional[int], kind: str) -> str:
    """Deterministic 16-hex id from the input bytes, the effective seed and the scenario kind."""
    return sha256_bytes(b"\0".join([sha256_bytes(document).encode(), str(seed).encode(), kind.encode()]))[:16]


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]], run_id: str) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        f.write(f"# run_id={run_id}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow(row)
            count += 1
    log.info(f"wrote {count} rows to {path}")
    return path


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    """Rows of a file written by :func:`write_csv`, keyed by header; the run-id line is skipped."""
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _as_dict(record: Any) -> Dict[str, Any]:
    if isinstance(record, SerializableRecord):
        return record.to_dict()
    if isinstance(record, dict):
        return record
    raise TypeError(f"cannot serialise record of type {type(record).__name__}")


def write_jsonl(path: PathLike, records: Iterable[Any], run_id: str) -> Path:
    path = Path(path)
    count = 0
    with open(path, "wb") as f:
        for record in records:
            f.write(dumps({**_as_dict(record), "run_id": run_id}))
            f.write(b"\n")
            count += 1
    log.info(f"wrote {count} records to {path}")
    return path


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    with open(path, "rb") as f:
        return [orjson.loads(line) for line in f if line.strip()]


def write_json(path: PathLike, obj: Any) -> Path:
    path = Path(path)
    path.write_bytes(dumps(obj, indent=True) + b"\n")
    return path


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def write_manifest(out_dir: PathLike, run_id: str, kind: str, seed: Optional[int], input_sha256: str,
                   outputs: Sequence[PathLike], wall_time: float, extra: Optional[Dict[str, Any]] = None) -> Path:
    """``manifest.json`` naming every output with its SHA-256; the only file with wall-clock time."""
    out_dir = Path(out_dir)
    manifest = {
        "run_id": run_id,
        "kind": kind,
        "seed": seed,
        "input_sha256": input_sha256,
        "versions": package_versions(),
        "wall_time_s": wall_time,
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        **(extra or {}),
    }
    return write_json(out_dir / "manifest.json", manifest)
