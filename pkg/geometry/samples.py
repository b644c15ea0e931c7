"""
Ground-truth density samples.

Each generator maps triangle centroids to densities: a background value
plus a geometric feature (discs, a ring, strips, a folded layer).
"""

from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import structlog

from geometry.mesh import DensityField, TriMesh

logger = structlog.get_logger(__name__)

Generator = Callable[[np.ndarray, Dict[str, Any], np.random.Generator], np.ndarray]


def _constant(points: np.ndarray, params: Dict[str, Any], rng: np.random.Generator) -> np.ndarray:
    return np.full(points.shape[0], float(params.get('value', 1.0)))


def _random_centers(count: int, radius: float, rng: np.random.Generator, attempts: int = 10_000) -> np.ndarray:
    reach = 1.0 - radius
    centers = []
    for _ in range(attempts):
        if len(centers) == count:
            break
        r = reach * np.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2.0 * np.pi)
        candidate = np.array([r * np.cos(theta), r * np.sin(theta)])
        if all(np.linalg.norm(candidate - c) > 2.0 * radius for c in centers):
            centers.append(candidate)
    if len(centers) < count:
        raise ValueError(f"cannot place {count} disjoint discs of radius {radius}")
    return np.array(centers)


def _inclusions(points: np.ndarray, params: Dict[str, Any], rng: np.random.Generator) -> np.ndarray:
    radius = float(params.get('radius', 0.25))
    values = np.full(points.shape[0], float(params.get('background', 1.0)))
    if params.get('random_centers', False):
        centers = _random_centers(int(params.get('count', 2)), radius, rng)
    else:
        centers = np.asarray(params.get('centers', [[-0.4, 0.1], [0.35, -0.3]]), dtype=np.float64)
    for center in centers:
        inside = np.linalg.norm(points - center, axis=1) < radius
        values[inside] = float(params.get('value', 2.0))
    return values


def _annulus(points: np.ndarray, params: Dict[str, Any], rng: np.random.Generator) -> np.ndarray:
    inner = float(params.get('inner', 0.3))
    outer = float(params.get('outer', 0.6))
    radii = np.linalg.norm(points, axis=1)
    values = np.full(points.shape[0], float(params.get('background', 1.0)))
    values[(radii >= inner) & (radii < outer)] = float(params.get('value', 2.0))
    return values


def _waveguide(points: np.ndarray, params: Dict[str, Any], rng: np.random.Generator) -> np.ndarray:
    angle = float(params.get('angle', 0.0))
    width = float(params.get('width', 0.25))
    offsets = np.asarray(params.get('offsets', [-0.35, 0.35]), dtype=np.float64)
    normal = np.array([-np.sin(angle), np.cos(angle)])
    distance = points @ normal
    values = np.full(points.shape[0], float(params.get('background', 1.0)))
    for offset in offsets:
        values[np.abs(distance - offset) < 0.5 * width] = float(params.get('value', 2.0))
    return values


def _folds(points: np.ndarray, params: Dict[str, Any], rng: np.random.Generator) -> np.ndarray:
    amplitude = float(params.get('amplitude', 0.2))
    wavenumber = float(params.get('wavenumber', 2.0 * np.pi))
    level = float(params.get('level', 0.0))
    interface = level + amplitude * np.sin(wavenumber * points[:, 0])
    values = np.full(points.shape[0], float(params.get('background', 1.0)))
    values[points[:, 1] < interface] = float(params.get('value', 2.0))
    return values


SAMPLE_GENERATORS: Dict[str, Generator] = {
    'constant': _constant,
    'inclusions': _inclusions,
    'annulus': _annulus,
    'waveguide': _waveguide,
    'folds': _folds,
}


def make_sample(
    mesh: TriMesh,
    kind: str,
    params: Optional[Dict[str, Any]] = None,
    seed: int = 0,
    bounds: Optional[Tuple[float, float]] = None,
) -> DensityField:
    """
    Evaluate a named sample at the triangle centroids.

    Args:
        mesh: Triangulation
        kind: One of SAMPLE_GENERATORS
        params: Generator parameters; missing keys take defaults
        seed: Seed for generators with random geometry
        bounds: A-priori box attached to the field

    Raises:
        ValueError: For an unknown kind
        InvariantError: If the sample leaves the box
    """
    if kind not in SAMPLE_GENERATORS:
        raise ValueError(f"unknown sample kind '{kind}'; choose from {sorted(SAMPLE_GENERATORS)}")
    rng = np.random.default_rng(seed)
    values = SAMPLE_GENERATORS[kind](mesh.centroids, dict(params or {}), rng)
    logger.debug("Sample generated", kind=kind, minimum=float(values.min()), maximum=float(values.max()))
    return DensityField(values, bounds)
