import logging

import orjson
import pytest
from typer.testing import CliRunner

from oqmem.bin.cli import app
from oqmem.core.errors import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_SCHEMA

runner = CliRunner()

RATE = {"kind": "rate-estimate", "parameters": {"p_herald": 0.05, "cycle_time": 10000.0}}


@pytest.fixture(autouse=True)
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def rate_document(tmp_path):
    path = tmp_path / "rate.json"
    path.write_bytes(orjson.dumps(RATE))
    return path


def test_run_prints_the_run_line(tmp_path, rate_document):
    result = runner.invoke(app, ["run", str(rate_document), "--out", str(tmp_path / "out"), "--seed", "4"])
    assert result.exit_code == EXIT_OK
    first = result.output.splitlines()[0]
    assert first.startswith("run ") and "(rate-estimate, seed 4)" in first
    assert "summary.json" in result.output
    assert (tmp_path / "out" / "manifest.json").exists()


def test_run_with_config_file(tmp_path, rate_document):
    config_file = tmp_path / "config.toml"
    config_file.write_text(f'seed = 21\noutput_dir = "{tmp_path / "configured"}"\n')
    result = runner.invoke(app, ["--config", str(config_file), "--log-level", "INFO", "run", str(rate_document)])
    assert result.exit_code == EXIT_OK
    assert "seed 21" in result.output
    summary = orjson.loads((tmp_path / "configured" / "summary.json").read_bytes())
    assert summary["seed"] == 21


def test_validate(rate_document):
    result = runner.invoke(app, ["validate", str(rate_document)])
    assert result.exit_code == EXIT_OK
    assert "valid rate-estimate scenario" in result.output


def test_validate_reports_field_paths(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("kind: protocol\nparameters:\n  couplings:\n    J_OE: 0\n")
    result = runner.invoke(app, ["validate", str(path)])
    assert result.exit_code == EXIT_SCHEMA
    assert "parameters/couplings/J_OE" in result.output


def test_run_rejects_an_invalid_document(tmp_path):
    path = tmp_path / "bad.json"
    path.write_bytes(orjson.dumps({"kind": "rate-estimate", "parameters": {"p_herald": 3}}))
    result = runner.invoke(app, ["run", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_SCHEMA
    assert not (tmp_path / "out" / "manifest.json").exists()


def test_run_reports_divergence(tmp_path):
    path = tmp_path / "band.json"
    path.write_bytes(orjson.dumps({"kind": "band-profile", "parameters": {"settings": {"max_iterations": 1}}}))
    result = runner.invoke(app, ["run", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_NUMERIC
    assert (tmp_path / "out" / "residuals.csv").exists()


def test_missing_document_is_an_io_error(tmp_path):
    result = runner.invoke(app, ["run", str(tmp_path / "absent.json"), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_IO
    result = runner.invoke(app, ["validate", str(tmp_path / "absent.json")])
    assert result.exit_code == EXIT_IO


def test_schema_command():
    result = runner.invoke(app, ["schema", "rate-estimate"])
    assert result.exit_code == EXIT_OK
    schema = orjson.loads(result.output)
    assert schema["properties"]["kind"] == {"const": "rate-estimate"}
    assert runner.invoke(app, ["schema", "nope"]).exit_code == EXIT_SCHEMA
    assert "oneOf" in orjson.loads(runner.invoke(app, ["schema"]).output)
