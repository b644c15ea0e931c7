"""
bctomo: density reconstruction from boundary wave data.

Command line entry point for the pipeline and its stages.
"""

import sys
from functools import wraps
from typing import Optional

import click
import structlog
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from core.config import ExperimentConfig, load_config
from core.engine import PipelineEngine
from core.exceptions import AcceptanceError, BCTomoError, ConfigError, StageError
from geometry.mesh import DensityField, estimate_optical_radius, generate_disk_mesh
from utils.logger import setup_logging

console = Console()
logger = structlog.get_logger(__name__)

EXIT_VALIDATION = 1
EXIT_STAGE = 2
EXIT_ACCEPTANCE = 3


def _load(config_path: str, debug: bool) -> ExperimentConfig:
    try:
        cfg = load_config(config_path)
    except (ValidationError, ConfigError, ValueError, FileNotFoundError) as e:
        console.print(f"[red]✗ Configuration validation failed: {e}[/red]")
        sys.exit(EXIT_VALIDATION)
    setup_logging('DEBUG' if debug else cfg.logging.level, cfg.logging.format)
    return cfg


def stage_options(func):
    """Options shared by the pipeline and every stage command."""
    @click.option('--config', '-c', type=click.Path(exists=True), default='config/default.json',
                  help='Path to configuration file')
    @click.option('--jobs', '-j', type=click.IntRange(min=1), default=None, help='Worker count cap')
    @click.option('--oracle/--no-oracle', default=None, help='Keep interior fields for verification')
    @click.option('--debug', is_flag=True, help='Enable debug logging')
    @wraps(func)
    def wrapper(*args, **kwargs):
        return func(*args, **kwargs)
    return wrapper


def _run(stage: Optional[str], config: str, jobs: Optional[int], oracle: Optional[bool], debug: bool) -> None:
    cfg = _load(config, debug)
    label = stage or 'pipeline'
    try:
        engine = PipelineEngine(cfg, oracle=oracle, jobs=jobs)
        if stage is None:
            console.print(f"[cyan]Running pipeline into {engine.output}...[/cyan]")
            report = engine.run_pipeline()
        else:
            console.print(f"[cyan]Running stage '{stage}'...[/cyan]")
            report = engine.run_stage(stage)
            if stage == 'score':
                engine.check_acceptance(report)
    except AcceptanceError as e:
        console.print(f"[yellow]⚠ {label}: {e}[/yellow]")
        sys.exit(EXIT_ACCEPTANCE)
    except StageError as e:
        console.print(f"[red]✗ {e}[/red]")
        sys.exit(EXIT_STAGE)
    except BCTomoError as e:
        logger.error("Run failed", stage=label, error=str(e))
        console.print(f"[red]✗ {label}: {e}[/red]")
        sys.exit(EXIT_STAGE)

    console.print(f"[green]✓ {label} completed[/green]")
    _print_report(report)


def _print_report(report: dict) -> None:
    table = Table(show_header=False, box=None)
    for key in sorted(report):
        value = report[key]
        if isinstance(value, float):
            value = f"{value:.6g}"
        table.add_row(f"  {key}", str(value))
    console.print(table)


@click.group()
@click.version_option(version="1.0.0")
def cli():
    """bctomo command line interface."""
    pass


def _stage_command(name: str, help_text: str):
    @cli.command(name=name, help=help_text)
    @stage_options
    def command(config, jobs, oracle, debug):
        _run(name, config, jobs, oracle, debug)
    return command


mesh_gen = _stage_command('mesh-gen', 'Generate the disk mesh.')
sample_gen = _stage_command('sample-gen', 'Evaluate the ground-truth density sample.')
simulate = _stage_command('simulate', 'Simulate the boundary traces of every control.')
forms = _stage_command('forms', 'Compute the inverse-problem data from the traces.')
harmonics = _stage_command('harmonics', 'Build the harmonic target functions.')
control = _stage_command('control', 'Solve the control problem for every target.')
reconstruct = _stage_command('reconstruct', 'Recover the density from the controls.')
score = _stage_command('score', 'Score the estimate and write the run summary.')


@cli.command()
@stage_options
def pipeline(config, jobs, oracle, debug):
    """Run every stage in order."""
    _run(None, config, jobs, oracle, debug)


@cli.command()
@click.option('--config', '-c', type=click.Path(exists=True), default='config/default.json',
              help='Path to configuration file')
def validate(config):
    """Validate configuration file."""
    console.print(f"[cyan]Validating configuration: {config}[/cyan]")
    cfg = _load(config, debug=False)
    try:
        bound = None
        if cfg.time.T is None and cfg.time.dt is None:
            mesh = generate_disk_mesh(cfg.mesh.n_rings, cfg.mesh.n_boundary)
            bound = estimate_optical_radius(mesh, DensityField.constant(mesh, cfg.reconstruct.box[1]))
        grid = cfg.time_grid(bound)
    except BCTomoError as e:
        console.print(f"[red]✗ Configuration validation failed: {e}[/red]")
        sys.exit(EXIT_VALIDATION)

    console.print("[green]✓ Configuration is valid[/green]")
    console.print("\n[bold]Key Settings:[/bold]")
    console.print(f"  Mesh: {cfg.mesh.n_rings} rings, {cfg.mesh.n_boundary} boundary nodes")
    console.print(f"  Sample: {cfg.sample.kind}")
    console.print(f"  T: {grid.T:.6g}  dt: {grid.dt:.6g}  dt_solver: {grid.dt_solver:.6g}")
    console.print(f"  Wavelet: nu = {grid.frequency:.6g}, t0 = {grid.delay:.6g}")
    console.print(f"  Controls: N = {grid.n_t * cfg.mesh.n_boundary}")
    console.print(f"  Oracle mode: {cfg.oracle_mode}")
    console.print(f"  Output: {cfg.output.dir}")


if __name__ == '__main__':
    cli()
