"""Pytest configuration and fixtures."""

import json
from pathlib import Path

import pytest

from fem.assembly import assemble_mass, assemble_stiffness
from geometry.mesh import DensityField, generate_disk_mesh
from geometry.samples import make_sample
from inversion.forms import build_form_data
from inversion.harmonics import build_harmonic_basis
from wavesim.ricker import RickerWavelet
from wavesim.traces import ControlBasis, generate_all_traces


@pytest.fixture
def config_path():
    """Return path to the default configuration."""
    return Path(__file__).parent.parent / 'config' / 'default.json'


@pytest.fixture
def write_config(tmp_path):
    """Write a configuration document and return its path."""
    def _write(document: dict, name: str = 'experiment.json') -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return path
    return _write


@pytest.fixture(scope='session')
def small_mesh():
    """Two rings, eight boundary nodes: 13 nodes, 16 triangles."""
    return generate_disk_mesh(2, 8)


@pytest.fixture(scope='session')
def unit_density(small_mesh):
    return DensityField.constant(small_mesh, 1.0, (0.5, 2.0))


@pytest.fixture(scope='session')
def bumpy_density(small_mesh):
    """Inclusion sample on the small mesh."""
    return make_sample(small_mesh, 'inclusions', {'radius': 0.45, 'centers': [[0.3, 0.2]]}, bounds=(0.5, 3.0))


@pytest.fixture(scope='session')
def small_basis():
    """Three shifts of 0.5 with 10 solver steps each: T = 1.5."""
    offset = 0.5
    return ControlBasis(
        wavelet=RickerWavelet(3.5 / offset),
        offset=offset,
        n_t=3,
        n_b=8,
        substeps=10,
    )


@pytest.fixture(scope='session')
def small_matrices(small_mesh, bumpy_density):
    return assemble_mass(small_mesh, bumpy_density), assemble_stiffness(small_mesh)


@pytest.fixture(scope='session')
def shift_traces(small_mesh, bumpy_density, small_basis):
    """Shift-mode traces with oracle data and energy history."""
    return generate_all_traces(small_mesh, bumpy_density, small_basis, mode='shift', oracle=True, track_energy=True)


@pytest.fixture(scope='session')
def direct_traces(small_mesh, bumpy_density, small_basis):
    return generate_all_traces(small_mesh, bumpy_density, small_basis, mode='direct', oracle=True)


@pytest.fixture(scope='session')
def midpoint_forms(small_basis, shift_traces):
    return build_form_data(small_basis, shift_traces, quadrature='midpoint')


@pytest.fixture(scope='session')
def small_harmonics(small_mesh):
    return build_harmonic_basis(small_mesh, assemble_stiffness(small_mesh))
