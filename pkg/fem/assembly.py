"""
P1 finite-element assembly on a TriMesh.

Mass, stiffness and boundary-load operators for the semidiscrete wave
system M U'' + K U = G, plus a reusable factorization of the symmetric
positive definite matrices the time integrator solves with.
"""

from dataclasses import dataclass
from typing import List

import numpy as np
import scipy.sparse as sp
import structlog
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded
from scipy.sparse.csgraph import reverse_cuthill_mckee

from core.exceptions import FactorizationError, InvariantError
from geometry.mesh import DensityField, TriMesh

logger = structlog.get_logger(__name__)

MASS_TEMPLATE = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


@dataclass(frozen=True)
class LocalMassBlock:
    """Unit-density P1 mass block of one triangle."""
    triangle: int
    matrix: np.ndarray


def local_mass_tensor(mesh: TriMesh) -> np.ndarray:
    """Unit-density local mass blocks stacked as shape (K, 3, 3)."""
    return mesh.areas[:, None, None] * MASS_TEMPLATE[None, :, :]


def local_mass_blocks(mesh: TriMesh) -> List[LocalMassBlock]:
    """
    Per-triangle unit-density mass blocks m^k = (area_k / 12) [[2,1,1],[1,2,1],[1,1,2]].

    Returns:
        One LocalMassBlock per triangle, in triangle order
    """
    tensor = local_mass_tensor(mesh)
    return [LocalMassBlock(k, tensor[k]) for k in range(mesh.n_triangles)]


def scatter_local(mesh: TriMesh, local: np.ndarray) -> sp.csr_matrix:
    """
    Sum per-triangle 3x3 blocks into a global N x N matrix.

    The result is symmetrized with (A + A^T) / 2, which leaves a symmetric
    sum unchanged up to the order of floating-point additions and makes the
    stored matrix exactly symmetric.
    """
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).reshape(-1)
    cols = np.tile(tri, (1, 3)).reshape(-1)
    n = mesh.n_nodes
    matrix = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()
    matrix = 0.5 * (matrix + matrix.T)
    matrix = sp.csr_matrix(matrix)
    matrix.sort_indices()
    return matrix


def assemble_mass(mesh: TriMesh, density: DensityField) -> sp.csr_matrix:
    """
    Consistent mass matrix M(rho) = sum_k rho_k scatter(m^k).

    Raises:
        InvariantError: If the density does not fit the mesh or is not positive
    """
    density.check_mesh(mesh)
    if np.any(density.values <= 0):
        raise InvariantError("rho_k > 0", f"min value {density.values.min()}")
    local = density.values[:, None, None] * local_mass_tensor(mesh)
    return scatter_local(mesh, local)


def local_stiffness_tensor(mesh: TriMesh) -> np.ndarray:
    """Local stiffness blocks area_k * grad(psi_a) . grad(psi_b), shape (K, 3, 3)."""
    g = mesh.gradients
    return mesh.areas[:, None, None] * np.einsum('kad,kbd->kab', g, g)


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    """Stiffness matrix K_ij = integral of grad(psi_i) . grad(psi_j)."""
    return scatter_local(mesh, local_stiffness_tensor(mesh))


def boundary_mass(mesh: TriMesh) -> np.ndarray:
    """
    One-dimensional P1 mass matrix of the boundary polygon in ring coordinates.

    Entry (a, b) is the integral of psi_{b_a} psi_{b_b} along the boundary,
    so the load of profile q with amplitude s is s * boundary_mass @ q on the ring.
    """
    ring = mesh.boundary_ring
    b = ring.size
    nxt = np.roll(np.arange(b), -1)
    lengths = np.linalg.norm(mesh.nodes[ring[nxt]] - mesh.nodes[ring], axis=1)
    mb = np.zeros((b, b))
    idx = np.arange(b)
    np.add.at(mb, (idx, idx), lengths / 3.0)
    np.add.at(mb, (nxt, nxt), lengths / 3.0)
    np.add.at(mb, (idx, nxt), lengths / 6.0)
    np.add.at(mb, (nxt, idx), lengths / 6.0)
    return mb


def boundary_load(mesh: TriMesh, profile: np.ndarray, amplitude: float) -> np.ndarray:
    """
    Load vector G_i = integral over the boundary of psi_i f, f = amplitude * q.

    Args:
        mesh: Triangulation
        profile: Nodal values q on the boundary ring, shape (B,)
        amplitude: Time sample of the control

    Returns:
        Length-N vector, zero at interior nodes
    """
    profile = np.asarray(profile, dtype=np.float64)
    if profile.shape != (mesh.n_boundary,):
        raise ValueError(f"profile must have shape ({mesh.n_boundary},), got {profile.shape}")
    load = np.zeros(mesh.n_nodes)
    if amplitude == 0.0:
        return load
    load[mesh.boundary_ring] = amplitude * (boundary_mass(mesh) @ profile)
    return load


class SPDFactor:
    """
    Banded Cholesky factorization of a sparse SPD matrix.

    Nodes are renumbered by reverse Cuthill-McKee to shrink the band; the
    factor is computed once and reused for any number of right-hand sides.
    """

    def __init__(self, matrix: sp.spmatrix):
        matrix = sp.csr_matrix(matrix)
        n = matrix.shape[0]
        if matrix.shape != (n, n):
            raise FactorizationError(f"matrix must be square, got {matrix.shape}")
        self.n = n
        self.permutation = reverse_cuthill_mckee(matrix, symmetric_mode=True)
        self.inverse = np.empty_like(self.permutation)
        self.inverse[self.permutation] = np.arange(n)
        permuted = matrix[self.permutation][:, self.permutation].tocoo()
        bandwidth = int(np.max(np.abs(permuted.row - permuted.col))) if permuted.nnz else 0
        # upper band storage: banded[u + i - j, j] = A[i, j] for i <= j
        upper = permuted.row <= permuted.col
        rows, cols = permuted.row[upper], permuted.col[upper]
        banded = np.zeros((bandwidth + 1, n))
        np.add.at(banded, (bandwidth + rows - cols, cols), permuted.data[upper])
        try:
            self.factor = cholesky_banded(banded, lower=False)
        except LinAlgError as e:
            raise FactorizationError(f"matrix is not positive definite: {e}") from e
        self.bandwidth = bandwidth
        logger.debug("SPD factorization ready", size=n, bandwidth=bandwidth)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs for one vector or a stack of columns."""
        rhs = np.asarray(rhs, dtype=np.float64)
        x = cho_solve_banded((self.factor, False), rhs[self.permutation])
        return x[self.inverse]
