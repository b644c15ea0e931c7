"""Tests for ground-truth density samples."""

import numpy as np
import pytest

from core.exceptions import InvariantError
from geometry.mesh import generate_disk_mesh
from geometry.samples import SAMPLE_GENERATORS, make_sample


@pytest.fixture(scope='module')
def mesh():
    return generate_disk_mesh(6, 24)


class TestMakeSample:
    @pytest.mark.parametrize('kind', sorted(SAMPLE_GENERATORS))
    def test_every_kind_fits_the_mesh(self, mesh, kind):
        field = make_sample(mesh, kind, bounds=(0.5, 3.0))
        field.check_mesh(mesh)
        assert np.all(field.values >= 0.5)

    def test_constant(self, mesh):
        field = make_sample(mesh, 'constant', {'value': 1.5})
        np.testing.assert_array_equal(field.values, 1.5)

    def test_default_inclusions(self, mesh):
        field = make_sample(mesh, 'inclusions')
        assert set(np.unique(field.values)) == {1.0, 2.0}
        inside = np.linalg.norm(mesh.centroids - [-0.4, 0.1], axis=1) < 0.25
        np.testing.assert_array_equal(field.values[inside], 2.0)

    def test_random_inclusions_depend_on_seed(self, mesh):
        params = {'random_centers': True, 'count': 2, 'radius': 0.2}
        a = make_sample(mesh, 'inclusions', params, seed=1)
        b = make_sample(mesh, 'inclusions', params, seed=1)
        c = make_sample(mesh, 'inclusions', params, seed=2)
        assert a == b
        assert a != c

    def test_annulus_ring(self, mesh):
        field = make_sample(mesh, 'annulus', {'inner': 0.3, 'outer': 0.6})
        radii = np.linalg.norm(mesh.centroids, axis=1)
        np.testing.assert_array_equal(field.values[(radii >= 0.3) & (radii < 0.6)], 2.0)
        np.testing.assert_array_equal(field.values[radii < 0.3], 1.0)

    def test_unknown_kind(self, mesh):
        with pytest.raises(ValueError, match='unknown sample kind'):
            make_sample(mesh, 'spiral')

    def test_box_enforced(self, mesh):
        with pytest.raises(InvariantError):
            make_sample(mesh, 'constant', {'value': 5.0}, bounds=(0.5, 2.0))
