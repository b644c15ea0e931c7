"""CSV reports and the JSON run summary."""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import structlog

from geometry.mesh import DensityField, TriMesh
from inversion.control import ControlSolution
from inversion.harmonics import HarmonicBasis
from wavesim.traces import TraceSet, trace_table

logger = structlog.get_logger(__name__)

FLOAT_FORMAT = '%.17g'


def _write(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug("Report written", path=str(path), rows=len(frame))
    return path


def control_report(solutions: List[ControlSolution]) -> pd.DataFrame:
    """One row per harmonic target."""
    return pd.DataFrame([s.report() for s in solutions])


def write_control_report(solutions: List[ControlSolution], path: Path) -> Path:
    return _write(control_report(solutions), path)


def write_coefficients(solutions: List[ControlSolution], path: Path) -> Path:
    """Control coefficients, one row per target and one column per control."""
    coefficients = np.stack([s.coefficients for s in solutions])
    frame = pd.DataFrame(coefficients, columns=[f"c_{i}" for i in range(coefficients.shape[1])])
    frame.insert(0, 'target', [s.target for s in solutions])
    return _write(frame, path)


def density_table(mesh: TriMesh, estimate: DensityField, truth: Optional[DensityField] = None) -> pd.DataFrame:
    """Columns k, centroid_x, centroid_y, rho_est and, when known, rho_true."""
    centroids = mesh.centroids
    frame = pd.DataFrame({
        'k': np.arange(mesh.n_triangles),
        'centroid_x': centroids[:, 0],
        'centroid_y': centroids[:, 1],
        'rho_est': estimate.values,
    })
    if truth is not None:
        frame['rho_true'] = truth.values
    return frame


def write_density_csv(mesh: TriMesh, estimate: DensityField, path: Path,
                      truth: Optional[DensityField] = None) -> Path:
    return _write(density_table(mesh, estimate, truth), path)


def write_harmonics_csv(mesh: TriMesh, harmonics: HarmonicBasis, path: Path) -> Path:
    frame = pd.DataFrame({'node': np.arange(mesh.n_nodes), 'x': mesh.nodes[:, 0], 'y': mesh.nodes[:, 1]})
    for alpha in range(harmonics.n_h):
        frame[f"phi_{alpha}"] = harmonics.functions[alpha]
    return _write(frame, path)


def write_trace_csv(trace_set: TraceSet, path: Path) -> Path:
    return _write(pd.DataFrame(trace_table(trace_set)), path)


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_summary(summary: Dict[str, Any], path: Path) -> Path:
    """Sorted-key JSON; identical runs give identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(_plain(summary), f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info("Summary written", path=str(path))
    return path
