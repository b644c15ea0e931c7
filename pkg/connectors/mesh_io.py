"""Plain-text mesh and density files."""

from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np
import structlog

from core.exceptions import InvariantError, MeshFormatError
from geometry.mesh import DensityField, TriMesh

logger = structlog.get_logger(__name__)

MESH_HEADER = 'bcmesh 1'
DENSITY_HEADER = 'bcdensity 1'

PathLike = Union[str, Path]


class _Lines:
    """Non-blank lines with their 1-based numbers."""

    def __init__(self, path: Path):
        self.path = path
        with open(path, 'r') as f:
            self._items: Iterator[Tuple[int, str]] = iter(
                [(n, line.strip()) for n, line in enumerate(f, start=1) if line.strip()]
            )
        self.last = 0

    def next(self, expecting: str) -> Tuple[int, List[str]]:
        try:
            self.last, line = next(self._items)
        except StopIteration:
            raise MeshFormatError(f"unexpected end of file, expected {expecting}", self.last + 1, str(self.path))
        return self.last, line.split()

    def error(self, message: str, line: Optional[int] = None) -> MeshFormatError:
        return MeshFormatError(message, line if line is not None else self.last, str(self.path))

    def header(self, expected: str) -> None:
        n, tokens = self.next(f"header '{expected}'")
        if ' '.join(tokens) != expected:
            raise self.error(f"expected header '{expected}', got '{' '.join(tokens)}'", n)

    def section(self, name: str) -> int:
        n, tokens = self.next(f"'{name} <count>'")
        if len(tokens) != 2 or tokens[0] != name:
            raise self.error(f"expected '{name} <count>', got '{' '.join(tokens)}'", n)
        try:
            count = int(tokens[1])
        except ValueError:
            raise self.error(f"invalid {name} count '{tokens[1]}'", n)
        if count < 0:
            raise self.error(f"negative {name} count", n)
        return count

    def rows(self, count: int, width: int, kind, what: str) -> np.ndarray:
        out = []
        for _ in range(count):
            n, tokens = self.next(what)
            if len(tokens) != width:
                raise self.error(f"expected {width} values for {what}, got {len(tokens)}", n)
            try:
                out.append([kind(t) for t in tokens])
            except ValueError:
                raise self.error(f"malformed {what}: '{' '.join(tokens)}'", n)
        return np.array(out, dtype=np.float64 if kind is float else np.int64).reshape(count, width)

    def values(self, count: int, kind, what: str) -> np.ndarray:
        out: list = []
        while len(out) < count:
            n, tokens = self.next(what)
            try:
                out.extend(kind(t) for t in tokens)
            except ValueError:
                raise self.error(f"malformed {what}: '{' '.join(tokens)}'", n)
        if len(out) != count:
            raise self.error(f"expected {count} {what} values, got {len(out)}")
        return np.array(out, dtype=np.float64 if kind is float else np.int64)

    def rest(self) -> Iterator[Tuple[int, List[str]]]:
        for n, line in self._items:
            self.last = n
            yield n, line.split()

    def expect_end(self) -> None:
        for n, line in self._items:
            raise self.error(f"unexpected trailing content '{line}'", n)


def _fmt(value: float) -> str:
    return '%.17g' % value


def save_mesh(mesh: TriMesh, path: PathLike) -> None:
    """Write a mesh in the bcmesh text format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [MESH_HEADER, f"nodes {mesh.n_nodes}"]
    lines.extend(f"{_fmt(x)} {_fmt(y)}" for x, y in mesh.nodes)
    lines.append(f"triangles {mesh.n_triangles}")
    lines.extend(f"{a} {b} {c}" for a, b, c in mesh.triangles)
    lines.append(f"boundary {mesh.n_boundary}")
    lines.extend(str(i) for i in mesh.boundary_ring)
    path.write_text('\n'.join(lines) + '\n')


def load_mesh(path: PathLike, reorient: bool = True) -> TriMesh:
    """
    Read a bcmesh file.

    Args:
        path: File path
        reorient: Flip clockwise triangles to counterclockwise and count them
            in TriMesh.reoriented; when False a clockwise triangle is an error

    Raises:
        MeshFormatError: Malformed file, with the offending line
        InvariantError: Parsed mesh violates a TriMesh invariant
    """
    path = Path(path)
    lines = _Lines(path)
    lines.header(MESH_HEADER)
    nodes = lines.rows(lines.section('nodes'), 2, float, 'node coordinates')
    triangles = lines.rows(lines.section('triangles'), 3, int, 'triangle indices')
    ring = lines.values(lines.section('boundary'), int, 'boundary index')
    lines.expect_end()

    n = nodes.shape[0]
    bad = np.flatnonzero(((triangles < 0) | (triangles >= n)).any(axis=1))
    if bad.size:
        raise InvariantError("triangle node indices within node count", f"triangle {int(bad[0])} in {path}")

    reoriented = 0
    if triangles.size:
        p = nodes[triangles]
        signed = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
        clockwise = signed < 0
        if clockwise.any():
            if not reorient:
                raise InvariantError("strictly positive signed area", f"triangle {int(np.argmax(clockwise))} is clockwise")
            triangles[clockwise] = triangles[clockwise][:, [0, 2, 1]]
            reoriented = int(clockwise.sum())
            logger.warning("Reoriented clockwise triangles", path=str(path), count=reoriented)

    mesh = TriMesh(nodes, triangles, ring, reoriented=reoriented)
    mesh.validate()
    return mesh


def save_density(density: DensityField, path: PathLike) -> None:
    """Write densities in the bcdensity text format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join([DENSITY_HEADER] + [_fmt(v) for v in density.values]) + '\n')


def load_density(
    path: PathLike,
    mesh: Optional[TriMesh] = None,
    bounds: Optional[Tuple[float, float]] = None,
) -> DensityField:
    """
    Read a bcdensity file.

    Args:
        path: File path
        mesh: When given, the value count must match its triangles
        bounds: A-priori box attached to the field

    Raises:
        MeshFormatError: Malformed file
        InvariantError: Wrong count or out-of-box values
    """
    path = Path(path)
    lines = _Lines(path)
    lines.header(DENSITY_HEADER)
    values: list = []
    for n, tokens in lines.rest():
        if len(tokens) != 1:
            raise lines.error(f"expected one density value, got {len(tokens)}", n)
        try:
            values.append(float(tokens[0]))
        except ValueError:
            raise lines.error(f"malformed density value '{tokens[0]}'", n)
    density = DensityField(np.array(values), bounds)
    if mesh is not None:
        density.check_mesh(mesh)
    return density

