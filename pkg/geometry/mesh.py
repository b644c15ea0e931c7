"""Triangulations of the unit disk and piecewise-constant densities on them."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
import structlog
from scipy.sparse.csgraph import connected_components, dijkstra

from core.exceptions import InvariantError

logger = structlog.get_logger(__name__)

CIRCLE_TOLERANCE = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TriMesh:
    """
    Planar triangulation of the unit disk with an ordered boundary ring.

    Attributes:
        nodes: Node coordinates, shape (N, 2)
        triangles: Counterclockwise node-index triples, shape (K, 3)
        boundary_ring: Boundary node indices in cyclic order, shape (B,)
        reoriented: Number of triangles flipped to counterclockwise on load
    """
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_ring: np.ndarray
    reoriented: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'nodes', _frozen(np.array(self.nodes, dtype=np.float64)))
        object.__setattr__(self, 'triangles', _frozen(np.array(self.triangles, dtype=np.int64)))
        object.__setattr__(self, 'boundary_ring', _frozen(np.array(self.boundary_ring, dtype=np.int64)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TriMesh):
            return NotImplemented
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_ring, other.boundary_ring)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def n_boundary(self) -> int:
        return int(self.boundary_ring.shape[0])

    @property
    def boundary_edges(self) -> np.ndarray:
        """Consecutive ring pairs, closing the cycle."""
        return np.column_stack([self.boundary_ring, np.roll(self.boundary_ring, -1)])

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return _frozen(0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]))

    @cached_property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def gradients(self) -> np.ndarray:
        """Constant gradients of the three local P1 basis functions, shape (K, 3, 2)."""
        p = self.nodes[self.triangles]
        x, y = p[:, :, 0], p[:, :, 1]
        two_area = 2.0 * self.signed_areas
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return _frozen(np.stack([gx, gy], axis=2) / two_area[:, None, None])

    @cached_property
    def centroids(self) -> np.ndarray:
        return _frozen(self.nodes[self.triangles].mean(axis=1))

    @cached_property
    def _edge_table(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        local = self.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
        local = np.sort(local, axis=1)
        owners = np.repeat(np.arange(self.n_triangles), 3)
        edges, inverse, counts = np.unique(local, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind='stable')
        starts = np.cumsum(counts) - counts
        first = owners[order][starts]
        second = np.full(edges.shape[0], -1, dtype=np.int64)
        shared = counts >= 2
        second[shared] = owners[order][starts[shared] + 1]
        adjacency = np.column_stack([first, second])
        return _frozen(edges), _frozen(counts), _frozen(adjacency)

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted node pairs, shape (E, 2)."""
        return self._edge_table[0]

    @property
    def edge_triangles(self) -> np.ndarray:
        """Triangles adjacent to each edge; -1 marks the missing side of boundary edges."""
        return self._edge_table[2]

    def validate(self, circle_tolerance: float = CIRCLE_TOLERANCE) -> None:
        """
        Check every TriMesh invariant.

        Raises:
            InvariantError: Naming the first violated invariant
        """
        n = self.n_nodes
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise InvariantError("nodes are 2D coordinates", f"shape {self.nodes.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3 or self.n_triangles == 0:
            raise InvariantError("triangles are node-index triples", f"shape {self.triangles.shape}")
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            bad = int(np.argmax((self.triangles < 0).any(axis=1) | (self.triangles >= n).any(axis=1)))
            raise InvariantError("triangle node indices within node count", f"triangle {bad}")
        if self.boundary_ring.size < 3 or self.boundary_ring.min() < 0 or self.boundary_ring.max() >= n:
            raise InvariantError("boundary ring indexes at least 3 valid nodes")
        if np.unique(self.boundary_ring).size != self.boundary_ring.size:
            raise InvariantError("boundary edges form a single closed cycle", "repeated ring node")

        areas = self.signed_areas
        if not np.all(areas > 0.0):
            bad = int(np.argmin(areas))
            raise InvariantError("strictly positive signed area", f"triangle {bad} area {areas[bad]:.3e}")

        radii = np.linalg.norm(self.nodes[self.boundary_ring], axis=1)
        off = np.abs(radii - 1.0)
        if off.max() > circle_tolerance:
            raise InvariantError(
                "boundary ring nodes lie on the unit circle",
                f"node {int(self.boundary_ring[np.argmax(off)])} off by {off.max():.3e}",
            )

        counts = self._edge_table[1]
        if counts.max() > 2:
            raise InvariantError("every edge is shared by at most two triangles")
        single = {tuple(e) for e in self.edges[counts == 1]}
        ring = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        if single != ring:
            raise InvariantError(
                "edges shared by exactly one triangle are precisely the boundary edges",
                f"{len(single ^ ring)} mismatched edges",
            )


@dataclass(frozen=True, eq=False)
class DensityField:
    """
    One positive density value per triangle with its a-priori box.

    Attributes:
        values: Density per triangle, shape (K,)
        bounds: (rho_min, rho_max); defaults to the value range
    """
    values: np.ndarray
    bounds: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        values = _frozen(np.array(self.values, dtype=np.float64).reshape(-1))
        object.__setattr__(self, 'values', values)
        if values.size == 0 or not np.all(np.isfinite(values)):
            raise InvariantError("density values are finite", "empty or non-finite field")
        bounds = self.bounds
        if bounds is None:
            bounds = (float(values.min()), float(values.max()))
        lo, hi = float(bounds[0]), float(bounds[1])
        object.__setattr__(self, 'bounds', (lo, hi))
        if lo <= 0.0:
            raise InvariantError("rho_min > 0", f"rho_min = {lo}")
        if values.min() < lo or values.max() > hi:
            raise InvariantError(
                "rho_min <= rho_k <= rho_max",
                f"values in [{values.min()}, {values.max()}], box [{lo}, {hi}]",
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DensityField):
            return NotImplemented
        return np.array_equal(self.values, other.values) and self.bounds == other.bounds

    __hash__ = None  # type: ignore[assignment]

    def __len__(self) -> int:
        return int(self.values.size)

    @classmethod
    def constant(cls, mesh: TriMesh, value: float, bounds: Optional[Tuple[float, float]] = None) -> 'DensityField':
        return cls(np.full(mesh.n_triangles, float(value)), bounds)

    def scaled(self, factor: float) -> 'DensityField':
        lo, hi = self.bounds
        return DensityField(self.values * factor, (lo * factor, hi * factor))

    def check_mesh(self, mesh: TriMesh) -> None:
        if self.values.size != mesh.n_triangles:
            raise InvariantError(
                "one density value per triangle",
                f"{self.values.size} values for {mesh.n_triangles} triangles",
            )


def _ring_counts(n_rings: int, n_boundary: int) -> list:
    counts = [max(3, int(round(n_boundary * r / n_rings))) for r in range(1, n_rings)]
    counts.append(n_boundary)
    return counts


def _zipper(inner: np.ndarray, inner_angles: np.ndarray, outer: np.ndarray, outer_angles: np.ndarray) -> list:
    """Triangulate the band between two concentric node rings by sweeping angle."""
    a, b = inner.size, outer.size
    wrap_in = np.append(inner_angles, inner_angles[0] + 2.0 * np.pi)
    wrap_out = np.append(outer_angles, outer_angles[0] + 2.0 * np.pi)
    triangles = []
    i = o = 0
    while i < a or o < b:
        if o < b and (i == a or wrap_out[o + 1] <= wrap_in[i + 1]):
            triangles.append((inner[i % a], outer[o], outer[(o + 1) % b]))
            o += 1
        else:
            triangles.append((inner[i], outer[o % b], inner[(i + 1) % a]))
            i += 1
    return triangles


def generate_disk_mesh(n_rings: int, n_boundary: int) -> TriMesh:
    """
    Generate a concentric-ring triangulation of the unit disk.

    Ring r (of n_rings) has radius r / n_rings and about n_boundary * r / n_rings
    nodes; the outermost ring has exactly n_boundary nodes and forms the
    boundary ring.

    Args:
        n_rings: Number of node rings around the center node (>= 1)
        n_boundary: Number of boundary nodes (>= 8)

    Returns:
        Validated TriMesh

    Raises:
        ValueError: If the parameters are out of range
        InvariantError: If the construction produced degenerate triangles
    """
    if n_rings < 1:
        raise ValueError(f"n_rings must be >= 1, got {n_rings}")
    if n_boundary < 8:
        raise ValueError(f"n_boundary must be >= 8, got {n_boundary}")

    nodes = [(0.0, 0.0)]
    rings = []
    angles = []
    for r, count in enumerate(_ring_counts(n_rings, n_boundary), start=1):
        theta = 2.0 * np.pi * np.arange(count) / count
        radius = r / n_rings
        start = len(nodes)
        nodes.extend(zip(radius * np.cos(theta), radius * np.sin(theta)))
        rings.append(np.arange(start, start + count))
        angles.append(theta)

    first = rings[0]
    triangles = [(0, first[k], first[(k + 1) % first.size]) for k in range(first.size)]
    for r in range(1, len(rings)):
        triangles.extend(_zipper(rings[r - 1], angles[r - 1], rings[r], angles[r]))

    nodes_arr = np.array(nodes, dtype=np.float64)
    tri_arr = np.array(triangles, dtype=np.int64)
    p = nodes_arr[tri_arr]
    signed = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = signed < 0
    tri_arr[flip] = tri_arr[flip][:, [0, 2, 1]]
    if np.any(np.abs(signed) <= 1e-14):
        raise InvariantError(
            "strictly positive signed area",
            f"n_rings={n_rings}, n_boundary={n_boundary} produce degenerate triangles",
        )

    mesh = TriMesh(nodes_arr, tri_arr, rings[-1])
    mesh.validate()
    logger.debug(
        "Disk mesh generated",
        n_rings=n_rings,
        nodes=mesh.n_nodes,
        triangles=mesh.n_triangles,
        boundary=mesh.n_boundary,
    )
    return mesh


def triangle_geometry(mesh: TriMesh, k: int) -> Tuple[float, np.ndarray]:
    """
    Area and P1 basis gradients of one triangle.

    Args:
        mesh: Triangulation
        k: Triangle index

    Returns:
        (area, gradients) with gradients of shape (3, 2)
    """
    if not 0 <= k < mesh.n_triangles:
        raise IndexError(f"triangle index {k} out of range [0, {mesh.n_triangles})")
    return float(mesh.areas[k]), mesh.gradients[k].copy()


def _edge_densities(mesh: TriMesh, density: DensityField) -> np.ndarray:
    adjacency = mesh.edge_triangles
    rho = density.values
    first = rho[adjacency[:, 0]]
    has_second = adjacency[:, 1] >= 0
    second = np.where(has_second, rho[np.maximum(adjacency[:, 1], 0)], 0.0)
    return (first + second) / np.where(has_second, 2.0, 1.0)


def optical_edge_graph(mesh: TriMesh, density: DensityField) -> sp.csr_matrix:
    """Mesh edge graph weighted by edge length times sqrt(mean adjacent density)."""
    density.check_mesh(mesh)
    edges = mesh.edges
    lengths = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    weights = lengths * np.sqrt(_edge_densities(mesh, density))
    n = mesh.n_nodes
    graph = sp.coo_matrix((weights, (edges[:, 0], edges[:, 1])), shape=(n, n))
    return (graph + graph.T).tocsr()


def estimate_optical_radius(mesh: TriMesh, density: DensityField) -> float:
    """
    Graph estimate of the optical radius T* = sup dist(x, boundary).

    Distances are measured along mesh edges in the metric sqrt(rho)|dx| by a
    multi-source shortest-path sweep from all boundary nodes; the result
    over-approximates the continuous radius.

    Raises:
        InvariantError: If the mesh graph is disconnected
    """
    graph = optical_edge_graph(mesh, density)
    n_components, _ = connected_components(graph, directed=False)
    if n_components != 1:
        raise InvariantError("mesh graph is connected", f"{n_components} components")
    distances = dijkstra(graph, directed=False, indices=mesh.boundary_ring, min_only=True)
    if not np.all(np.isfinite(distances)):
        raise InvariantError("mesh graph is connected", "unreachable nodes")
    return float(distances.max())


def difference_operator(mesh: TriMesh) -> sp.csr_matrix:
    """Triangle adjacency differences: one row per interior edge, +1/-1 on its two triangles."""
    adjacency = mesh.edge_triangles
    interior = adjacency[adjacency[:, 1] >= 0]
    rows = np.repeat(np.arange(interior.shape[0]), 2)
    cols = interior.reshape(-1)
    data = np.tile([1.0, -1.0], interior.shape[0])
    return sp.csr_matrix((data, (rows, cols)), shape=(interior.shape[0], mesh.n_triangles))
