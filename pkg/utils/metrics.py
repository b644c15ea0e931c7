"""
Prometheus metrics for pipeline runs.

Metrics live in a private registry and are written next to the run
artifacts in text exposition format; they never enter the summary.
"""

from pathlib import Path
from typing import Optional

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, Info, write_to_textfile

registry = CollectorRegistry()

run_info = Info('bctomo_run', 'Experiment identification', registry=registry)

stage_runs_total = Counter(
    'bctomo_stage_runs_total',
    'Total number of stage executions',
    ['stage', 'status'],
    registry=registry
)

stage_duration = Histogram(
    'bctomo_stage_duration_seconds',
    'Stage execution duration in seconds',
    ['stage'],
    buckets=(0.01, 0.1, 0.5, 1.0, 5.0, 15.0, 60.0, 300.0),
    registry=registry
)

simulations_total = Counter(
    'bctomo_simulations_total',
    'Number of forward wave simulations',
    ['mode'],
    registry=registry
)

form_asymmetry = Gauge(
    'bctomo_form_asymmetry',
    'Relative asymmetry of a form matrix before symmetrization',
    ['form'],
    registry=registry
)

control_residual_max = Gauge(
    'bctomo_control_residual_max',
    'Largest boundary residual over all harmonic targets',
    registry=registry
)

reconstruction_residual = Gauge(
    'bctomo_reconstruction_residual',
    'Relative residual of the density system',
    registry=registry
)

reconstruction_delta = Gauge(
    'bctomo_reconstruction_delta',
    'Relative l2 error of the reconstructed density',
    registry=registry
)

reconstruction_iterations = Gauge(
    'bctomo_reconstruction_iterations',
    'Projected gradient iterations used',
    registry=registry
)


def track_stage(stage: str, status: str, duration: Optional[float] = None) -> None:
    """Record one stage execution."""
    stage_runs_total.labels(stage=stage, status=status).inc()
    if duration is not None:
        stage_duration.labels(stage=stage).observe(duration)


def write_metrics(path: Path) -> None:
    """Write the registry in Prometheus text format."""
    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), registry)
