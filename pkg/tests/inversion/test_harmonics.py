"""Tests for the discrete harmonic targets."""

import numpy as np
import pytest

from core.exceptions import InvariantError
from fem.assembly import assemble_stiffness
from inversion.harmonics import HarmonicSolver, build_boundary_sources, solve_harmonic


class TestBoundarySources:
    def test_consecutive_differences(self, small_mesh):
        sources = build_boundary_sources(small_mesh)
        ring = small_mesh.boundary_ring
        assert sources.shape == (small_mesh.n_boundary - 1, small_mesh.n_nodes)
        assert sources[0, ring[0]] == 1.0 and sources[0, ring[1]] == -1.0
        np.testing.assert_array_equal(sources.sum(axis=1), 0.0)

    def test_full_rank(self, small_mesh):
        sources = build_boundary_sources(small_mesh)
        assert np.linalg.matrix_rank(sources) == small_mesh.n_boundary - 1

    def test_supported_on_boundary(self, small_mesh):
        interior = np.setdiff1d(np.arange(small_mesh.n_nodes), small_mesh.boundary_ring)
        assert not build_boundary_sources(small_mesh)[:, interior].any()


class TestSolveHarmonic:
    def test_residual_and_zero_mean(self, small_mesh):
        k = assemble_stiffness(small_mesh)
        source = build_boundary_sources(small_mesh)[3]
        phi = solve_harmonic(k, source)
        np.testing.assert_allclose(k @ phi, source, atol=1e-10)
        assert phi.mean() == pytest.approx(0.0, abs=1e-14)

    def test_pin_does_not_matter(self, small_mesh):
        k = assemble_stiffness(small_mesh)
        source = build_boundary_sources(small_mesh)[1]
        np.testing.assert_allclose(HarmonicSolver(k, pin=0).solve(source), HarmonicSolver(k, pin=7).solve(source), atol=1e-12)

    def test_nonzero_total_rejected(self, small_mesh):
        source = np.zeros(small_mesh.n_nodes)
        source[small_mesh.boundary_ring[0]] = 1.0
        with pytest.raises(InvariantError, match='nonzero total'):
            solve_harmonic(assemble_stiffness(small_mesh), source)

    def test_zero_source(self, small_mesh):
        assert not solve_harmonic(assemble_stiffness(small_mesh), np.zeros(small_mesh.n_nodes)).any()


class TestHarmonicBasis:
    def test_sizes(self, small_harmonics, small_mesh):
        assert small_harmonics.n_h == small_mesh.n_boundary
        assert small_harmonics.n_nodes == small_mesh.n_nodes

    def test_constant_target_last(self, small_harmonics):
        np.testing.assert_array_equal(small_harmonics.functions[-1], 1.0)
        assert not small_harmonics.source(small_harmonics.n_h - 1).any()

    def test_every_target_is_harmonic(self, small_harmonics, small_mesh):
        k = assemble_stiffness(small_mesh)
        for alpha in range(small_harmonics.n_h):
            np.testing.assert_allclose(k @ small_harmonics.functions[alpha], small_harmonics.source(alpha), atol=1e-10)

    def test_linearly_independent(self, small_harmonics):
        assert np.linalg.matrix_rank(small_harmonics.functions) == small_harmonics.n_h

    def test_ring_views(self, small_harmonics, small_mesh):
        ring_sources = small_harmonics.ring_sources()
        assert ring_sources.shape == (small_harmonics.n_h, small_mesh.n_boundary)
        assert not ring_sources[-1].any()
        np.testing.assert_array_equal(small_harmonics.ring_values()[-1], 1.0)
        np.testing.assert_array_equal(ring_sources[0], small_harmonics.sources[0, small_mesh.boundary_ring])
