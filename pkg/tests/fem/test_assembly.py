"""Tests for P1 assembly and the banded SPD factorization."""

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from core.exceptions import FactorizationError, InvariantError
from fem.assembly import (
    SPDFactor,
    assemble_mass,
    assemble_stiffness,
    boundary_load,
    boundary_mass,
    local_mass_blocks,
    scatter_local,
)
from geometry.mesh import DensityField, generate_disk_mesh


class TestMass:
    def test_exactly_symmetric(self, small_mesh, bumpy_density):
        m = assemble_mass(small_mesh, bumpy_density)
        assert (m - m.T).nnz == 0 or np.abs((m - m.T).data).max() == 0.0

    def test_positive_definite(self, small_mesh, bumpy_density):
        m = assemble_mass(small_mesh, bumpy_density).toarray()
        assert np.linalg.eigvalsh(m).min() > 0

    def test_total_mass(self, small_mesh, bumpy_density):
        m = assemble_mass(small_mesh, bumpy_density)
        ones = np.ones(small_mesh.n_nodes)
        expected = np.sum(bumpy_density.values * small_mesh.areas)
        assert ones @ (m @ ones) == pytest.approx(expected, rel=1e-13)

    def test_linear_in_density(self, small_mesh, bumpy_density):
        blocks = local_mass_blocks(small_mesh)
        local = np.stack([rho * b.matrix for rho, b in zip(bumpy_density.values, blocks)])
        direct = scatter_local(small_mesh, local)
        m = assemble_mass(small_mesh, bumpy_density)
        np.testing.assert_allclose(direct.toarray(), m.toarray(), rtol=0, atol=1e-15)

    def test_block_template(self, small_mesh):
        block = local_mass_blocks(small_mesh)[0]
        area = small_mesh.areas[0]
        np.testing.assert_allclose(block.matrix, area / 12.0 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]))

    def test_density_size_checked(self, small_mesh):
        with pytest.raises(InvariantError):
            assemble_mass(small_mesh, DensityField(np.ones(3)))


class TestStiffness:
    def test_constants_in_kernel(self, small_mesh):
        k = assemble_stiffness(small_mesh)
        np.testing.assert_allclose(k @ np.ones(small_mesh.n_nodes), 0.0, atol=1e-12)

    def test_positive_semidefinite(self, small_mesh):
        eigenvalues = np.linalg.eigvalsh(assemble_stiffness(small_mesh).toarray())
        assert eigenvalues.min() > -1e-12
        assert np.sum(eigenvalues < 1e-10) == 1

    @pytest.mark.parametrize('n_rings,n_boundary', [(2, 8), (6, 24)])
    def test_kernel_is_only_constants(self, n_rings, n_boundary):
        eigenvalues = np.linalg.eigvalsh(assemble_stiffness(generate_disk_mesh(n_rings, n_boundary)).toarray())
        assert abs(eigenvalues[0]) <= 1e-10
        assert eigenvalues[1] > 1e-6

    def test_linear_function_energy(self, small_mesh):
        k = assemble_stiffness(small_mesh)
        x = small_mesh.nodes[:, 0]
        assert x @ (k @ x) == pytest.approx(small_mesh.areas.sum(), rel=1e-12)


class TestBoundaryLoad:
    def test_integral_of_profile(self, small_mesh):
        mb = boundary_mass(small_mesh)
        perimeter = mb.sum()
        ring = small_mesh.nodes[small_mesh.boundary_ring]
        assert perimeter == pytest.approx(np.linalg.norm(ring - np.roll(ring, -1, axis=0), axis=1).sum())

    def test_load_supported_on_boundary(self, small_mesh):
        profile = np.zeros(small_mesh.n_boundary)
        profile[2] = 1.0
        load = boundary_load(small_mesh, profile, 0.5)
        interior = np.setdiff1d(np.arange(small_mesh.n_nodes), small_mesh.boundary_ring)
        np.testing.assert_array_equal(load[interior], 0.0)
        assert load.sum() == pytest.approx(0.5 * boundary_mass(small_mesh)[:, 2].sum())

    def test_zero_amplitude(self, small_mesh):
        load = boundary_load(small_mesh, np.ones(small_mesh.n_boundary), 0.0)
        assert not load.any()

    def test_profile_shape_checked(self, small_mesh):
        with pytest.raises(ValueError):
            boundary_load(small_mesh, np.ones(3), 1.0)


class TestSPDFactor:
    def test_matches_sparse_solve(self, small_matrices):
        m, k = small_matrices
        a = sp.csr_matrix(m + 0.01 * k)
        rhs = np.random.default_rng(0).standard_normal((a.shape[0], 3))
        factor = SPDFactor(a)
        np.testing.assert_allclose(factor.solve(rhs), spla.spsolve(a.tocsc(), rhs), rtol=1e-10, atol=1e-12)

    def test_single_vector(self, small_matrices):
        m, _ = small_matrices
        b = np.arange(m.shape[0], dtype=float)
        x = SPDFactor(m).solve(b)
        np.testing.assert_allclose(m @ x, b, atol=1e-10)

    def test_band_storage_on_default_mesh(self):
        mesh = generate_disk_mesh(6, 24)
        a = sp.csr_matrix(assemble_mass(mesh, DensityField.constant(mesh, 1.5)) + 1e-3 * assemble_stiffness(mesh))
        factor = SPDFactor(a)
        rhs = np.random.default_rng(3).standard_normal(mesh.n_nodes)
        np.testing.assert_allclose(factor.solve(rhs), spla.spsolve(a.tocsc(), rhs), rtol=1e-9, atol=1e-12)
        assert factor.factor.shape == (factor.bandwidth + 1, mesh.n_nodes)
        assert factor.bandwidth < mesh.n_nodes // 2

    def test_duplicate_entries_summed(self):
        a = sp.coo_matrix(([2.0, 2.0, -1.0, -1.0, 4.0], ([0, 0, 0, 1, 1], [0, 0, 1, 0, 1])), shape=(2, 2))
        x = SPDFactor(a).solve(np.array([3.0, 3.0]))
        np.testing.assert_allclose(np.array([[4.0, -1.0], [-1.0, 4.0]]) @ x, [3.0, 3.0])

    def test_indefinite_rejected(self, small_mesh):
        with pytest.raises(FactorizationError):
            SPDFactor(assemble_stiffness(small_mesh) - sp.identity(small_mesh.n_nodes))
