"""
Inversion stages never see the true density or interior fields
"""

import pytest

from connectors import artifacts
from workflows.pipeline import INVERSION_STAGES, STAGE_ORDER

pytestmark = pytest.mark.integration


def reads_by_stage(store):
    out = {}
    for record in store.reads:
        out.setdefault(record.stage, set()).add(record.artifact)
    return out


class TestDataSeparation:
    def test_inversion_stages_read_boundary_data_only(self, make_engine):
        engine = make_engine()
        engine.run_pipeline()
        reads = reads_by_stage(engine.store)
        for stage in INVERSION_STAGES:
            assert reads[stage], stage
            assert not reads[stage] & {'density', 'oracle'}, stage
        assert reads['forms'] == {'traces'}
        assert reads['harmonics'] == {'mesh'}
        assert reads['control'] == {'forms', 'harmonics'}

    def test_density_loader_not_called_by_inversion(self, make_engine, mocker):
        engine = make_engine()
        for name in STAGE_ORDER[:3]:
            engine.run_stage(name)
        spy = mocker.spy(artifacts, 'load_density')
        for name in ('forms', 'harmonics', 'control'):
            engine.run_stage(name)
        assert spy.call_count == 0
        engine.run_stage('reconstruct')
        engine.run_stage('score')
        # estimate and ground truth, both read by score
        assert spy.call_count == 2

    def test_inversion_runs_without_density_file(self, make_engine):
        engine = make_engine()
        for name in STAGE_ORDER[:3]:
            engine.run_stage(name)
        engine.store.path('density').unlink()
        for name in ('forms', 'harmonics', 'control', 'reconstruct'):
            engine.run_stage(name)
        assert engine.store.exists('estimate')

    def test_oracle_reads_only_in_oracle_mode(self, make_engine):
        engine = make_engine(oracle=True)
        engine.run_pipeline()
        reads = reads_by_stage(engine.store)
        assert 'oracle' in reads['forms']
        assert not any('density' in reads[stage] for stage in INVERSION_STAGES)

    def test_traces_dump_has_no_interior_fields(self, make_engine):
        engine = make_engine(oracle=True)
        for name in STAGE_ORDER[:3]:
            engine.run_stage(name)
        payload = artifacts.binary.load(engine.store.path('traces'))
        assert set(payload['data']) == {'basis', 'mode', 'samples', 'energy', 'ring_mass'}
        assert payload['data']['samples'].shape[1] == engine.store.read_mesh().n_boundary
