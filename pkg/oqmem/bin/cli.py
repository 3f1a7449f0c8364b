"""This module provides a Typer-based CLI for running oqmem scenarios.

It provides commands for running a scenario document, validating one without running it,
and printing the JSON Schema of a scenario kind.
"""
import logging
from pathlib import Path
from typing import Optional

import typer

from oqmem.config import Config
from oqmem.core.errors import ScenarioSchemaError, exit_code_for
from oqmem.core.scenario import KINDS, load_scenario, run_scenario, schema_for
from oqmem.utils.records import dumps

app = typer.Typer(help="Simulation toolkit for an optically heralded quantum memory.", add_completion=False)

config: Optional[Config] = None

log = logging.getLogger("oqmem")


def _configure(config_file: Optional[Path], log_level: Optional[str]) -> Config:
    """Loads the config and sets up logging; the flag level wins over the config key."""
    loaded = Config(file_path=config_file)
    level = str(loaded.resolve("log_level", log_level)).upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)
    return loaded


@app.callback()
def main(
    config_file: Optional[Path] = typer.Option(
        None,
        "--config",
        "-c",
        help="TOML file with run defaults (seed, threads, output_dir, log_level, block_size).",
    ),
    log_level: Optional[str] = typer.Option(
        None,
        "--log-level",
        help="Logging level, e.g. DEBUG or INFO. Overrides the config file.",
    ),
):
    """
    Runs, validates and describes oqmem scenario documents.
    """
    global config
    config = _configure(config_file, log_level)


def _fail(e: BaseException) -> None:
    typer.echo(f"Error: {e}", err=True)
    for path, message in getattr(e, "diagnostics", []):
        typer.echo(f"  {path}: {message}", err=True)
    raise typer.Exit(code=exit_code_for(e))


@app.command()
def run(
    scenario: Path = typer.Argument(..., help="Scenario document (.json, .yaml, .yml or .toml)."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed; overrides the document and config."),
    threads: Optional[int] = typer.Option(None, "--threads", min=1, help="Worker threads."),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory."),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="Config file for this run."),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Logging level for this run."),
):
    """Runs a scenario and writes its outputs and manifest."""
    global config
    if config_file is not None or log_level is not None:
        config = _configure(config_file or (config.file_path if config else None), log_level)
    try:
        result = run_scenario(scenario, seed=seed, threads=threads, out=out, config=config)
    except Exception as e:  # noqa: BLE001
        log.debug("scenario failed", exc_info=True)
        _fail(e)
        return
    typer.echo(f"run {result.run_id} ({result.kind}, seed {result.seed}) -> {result.out_dir}")
    for path in result.outputs:
        typer.echo(f"  {path.name}")


@app.command()
def validate(
    scenario: Path = typer.Argument(..., help="Scenario document to check."),
):
    """Validates a scenario document without running it."""
    try:
        loaded = load_scenario(scenario)
    except (ScenarioSchemaError, OSError) as e:
        _fail(e)
        return
    typer.echo(f"{scenario}: valid {loaded.kind} scenario")


@app.command()
def schema(
    kind: Optional[str] = typer.Argument(None, help=f"One of {', '.join(KINDS)}; omit for all kinds."),
):
    """Prints the JSON Schema of a scenario kind."""
    try:
        document = schema_for(kind)
    except ScenarioSchemaError as e:
        _fail(e)
        return
    typer.echo(dumps(document, indent=True).decode())


if __name__ == "__main__":
    app()
