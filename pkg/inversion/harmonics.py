"""Discrete harmonic targets: K phi = L with boundary-supported zero-sum L."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import structlog
from scipy.sparse.linalg import splu

from core.exceptions import InvariantError
from geometry.mesh import TriMesh

logger = structlog.get_logger(__name__)

RESIDUAL_TOLERANCE = 1e-10
ZERO_SUM_TOLERANCE = 1e-12


@dataclass
class HarmonicBasis:
    """
    Harmonic mesh functions and their sources.

    Attributes:
        sources: L_alpha, alpha = 0..N_h-2, as rows, shape (N_h - 1, N)
        functions: phi_alpha as rows, the constant function last, shape (N_h, N)
        boundary_ring: Ring node indices of the mesh the basis was built on
    """
    sources: np.ndarray
    functions: np.ndarray
    boundary_ring: np.ndarray

    @property
    def n_h(self) -> int:
        return int(self.functions.shape[0])

    @property
    def n_nodes(self) -> int:
        return int(self.functions.shape[1])

    def source(self, alpha: int) -> np.ndarray:
        """L_alpha; the zero vector for the constant target."""
        if alpha == self.n_h - 1:
            return np.zeros(self.n_nodes)
        return self.sources[alpha]

    def ring_sources(self) -> np.ndarray:
        """Sources restricted to the boundary ring, constant target included, shape (N_h, B)."""
        ring = np.zeros((self.n_h, self.boundary_ring.size))
        ring[:-1] = self.sources[:, self.boundary_ring]
        return ring

    def ring_values(self) -> np.ndarray:
        """phi_alpha on the boundary ring, shape (N_h, B)."""
        return self.functions[:, self.boundary_ring]


def build_boundary_sources(mesh: TriMesh) -> np.ndarray:
    """
    L_alpha = e_{b_alpha} - e_{b_{alpha+1}} for consecutive ring nodes.

    Returns:
        Array of shape (N_b - 1, N), full rank N_b - 1
    """
    ring = mesh.boundary_ring
    if ring.size < 3:
        raise InvariantError("boundary ring has at least 3 nodes", f"{ring.size} nodes")
    sources = np.zeros((ring.size - 1, mesh.n_nodes))
    rows = np.arange(ring.size - 1)
    sources[rows, ring[:-1]] = 1.0
    sources[rows, ring[1:]] = -1.0
    return sources


class HarmonicSolver:
    """
    Minimum-norm solver for the singular system K phi = L.

    One node is pinned to zero, the reduced system is factored once, and
    each solution is shifted to zero mean, which for a connected mesh is
    the minimum-norm solution.
    """

    def __init__(self, stiffness: sp.spmatrix, pin: int = 0):
        self.stiffness = sp.csr_matrix(stiffness)
        n = self.stiffness.shape[0]
        self.pin = pin
        self.free = np.delete(np.arange(n), pin)
        reduced = self.stiffness[self.free][:, self.free].tocsc()
        self.lu = splu(reduced)

    def solve(self, source: np.ndarray) -> np.ndarray:
        """
        Raises:
            InvariantError: If the source has a nonzero total or the residual check fails
        """
        source = np.asarray(source, dtype=np.float64)
        total = source.sum()
        if abs(total) > ZERO_SUM_TOLERANCE * max(1.0, np.abs(source).sum()):
            raise InvariantError("unsolvable: source has nonzero total", f"sum = {total:.3e}")
        phi = np.zeros_like(source)
        norm = np.linalg.norm(source)
        if norm == 0.0:
            return phi
        phi[self.free] = self.lu.solve(source[self.free])
        phi -= phi.mean()
        residual = np.linalg.norm(self.stiffness @ phi - source) / norm
        if residual > RESIDUAL_TOLERANCE:
            raise InvariantError("K phi = L to solver tolerance", f"relative residual {residual:.3e}")
        return phi


def solve_harmonic(stiffness: sp.spmatrix, source: np.ndarray) -> np.ndarray:
    """
    Zero-mean solution of K phi = L.

    Args:
        stiffness: Stiffness matrix K
        source: Zero-sum right-hand side

    Returns:
        phi with mean zero
    """
    return HarmonicSolver(stiffness).solve(source)


def build_harmonic_basis(mesh: TriMesh, stiffness: sp.spmatrix, solver: Optional[HarmonicSolver] = None) -> HarmonicBasis:
    """
    Solve for every boundary source and append the constant function.

    Raises:
        InvariantError: If the targets are not linearly independent
    """
    sources = build_boundary_sources(mesh)
    solver = solver or HarmonicSolver(stiffness)
    functions = np.vstack([np.stack([solver.solve(l) for l in sources]), np.ones(mesh.n_nodes)])

    singular = np.linalg.svd(functions, compute_uv=False)
    if singular[-1] <= 1e-12 * singular[0]:
        raise InvariantError(
            "harmonic targets are linearly independent",
            f"singular values {singular[0]:.3e} .. {singular[-1]:.3e}",
        )
    logger.info("Harmonic basis built", targets=functions.shape[0], conditioning=float(singular[0] / singular[-1]))
    return HarmonicBasis(sources=sources, functions=functions, boundary_ring=mesh.boundary_ring.copy())
