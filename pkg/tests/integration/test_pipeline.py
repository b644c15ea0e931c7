"""
End-to-end pipeline runs on the smoke configuration
"""

import json

import numpy as np
import pytest

from core.engine import PipelineEngine
from core.exceptions import AcceptanceError, StageError, StageInputError
from workflows.pipeline import STAGE_ORDER

pytestmark = pytest.mark.integration


class TestPipelineRun:
    def test_full_run_writes_every_artifact(self, make_engine):
        engine = make_engine()
        summary = engine.run_pipeline()
        for name in ('mesh', 'density', 'traces', 'forms', 'harmonics', 'controls', 'estimate', 'reconstruction'):
            assert engine.store.exists(name), name
        assert not engine.store.exists('oracle')
        for name in ('summary.json', 'controls.csv', 'reconstruction.csv', 'metrics.prom', 'manifest.json'):
            assert (engine.output / name).exists(), name
        assert summary['passed'] is True
        assert summary['mesh']['nodes'] == 13
        assert summary['time']['n_t'] == 4
        assert 'delta' in summary['reconstruction']

    def test_summary_matches_file(self, make_engine):
        engine = make_engine()
        summary = engine.run_pipeline()
        on_disk = json.loads((engine.output / 'summary.json').read_text())
        assert on_disk['config_digest'] == summary['config_digest'] == engine.config.digest()
        assert on_disk['reconstruction']['delta'] == summary['reconstruction']['delta']

    def test_estimate_inside_box(self, make_engine):
        engine = make_engine()
        engine.run_pipeline()
        estimate = engine.store.read_estimate()
        lo, hi = engine.box
        assert estimate.values.min() >= lo and estimate.values.max() <= hi

    def test_energy_conserved(self, make_engine):
        summary = make_engine().run_pipeline()
        assert summary['energy_drift'] <= 1e-10

    def test_summary_is_deterministic(self, make_engine, tmp_path):
        first = make_engine()
        first.run_pipeline()
        second = make_engine({'output': {'dir': str(tmp_path / 'again')}}, jobs=3)
        second.run_pipeline()
        assert (first.output / 'summary.json').read_bytes() == (second.output / 'summary.json').read_bytes()

    def test_oracle_mode_diagnostics(self, make_engine):
        engine = make_engine(oracle=True)
        summary = engine.run_pipeline()
        assert engine.store.exists('oracle')
        assert max(summary['forms']['oracle_errors'].values()) <= 1e-8
        assert 'oracle_rhs_error' in summary['reconstruction']
        assert all(s.oracle_terminal_error is not None for s in engine.store.read_controls())

    def test_direct_mode_matches_shift_mode(self, make_engine, tmp_path):
        shift = make_engine()
        shift.run_pipeline()
        direct = make_engine({'shift_mode': False, 'output': {'dir': str(tmp_path / 'direct')}})
        direct.run_pipeline()
        for a, b in zip(shift.store.read_traces().traces, direct.store.read_traces().traces):
            np.testing.assert_array_equal(a.values, b.values)


class TestStagedRuns:
    def test_stages_one_by_one(self, make_engine):
        engine = make_engine()
        reports = [engine.run_stage(name) for name in STAGE_ORDER]
        assert reports[0]['triangles'] == 16
        assert reports[-1]['passed'] is True
        assert engine.registry.get_stage_stats()['forms'] == {'executed': 1, 'successful': 1, 'failed': 0}

    def test_rerun_single_stage(self, make_engine):
        engine = make_engine()
        engine.run_pipeline()
        before = (engine.output / 'summary.json').read_bytes()
        engine.run_stage('reconstruct')
        engine.run_stage('score')
        assert (engine.output / 'summary.json').read_bytes() == before

    def test_resume_from_stage(self, make_engine):
        engine = make_engine()
        engine.run_pipeline()
        engine.run_pipeline(start='control')
        stats = engine.registry.get_stage_stats()
        assert stats['simulate']['executed'] == 1
        assert stats['control']['executed'] == 2

    def test_missing_input_names_stage_to_run(self, make_engine):
        engine = make_engine()
        with pytest.raises(StageError, match="run 'forms' first"):
            engine.run_stage('control')

    def test_artifacts_of_other_mesh_refused(self, make_engine):
        engine = make_engine()
        engine.run_pipeline()
        other = make_engine({'mesh': {'n_boundary': 12}})
        other.run_stage('mesh-gen')
        with pytest.raises(StageError, match='different mesh'):
            other.run_stage('control')

    def test_score_without_ground_truth(self, make_engine):
        engine = make_engine({'reconstruct': {'delta_ceiling': 0.5}})
        for name in STAGE_ORDER[:-1]:
            engine.run_stage(name)
        engine.store.remove('density')
        summary = engine.run_stage('score')
        assert 'delta' not in summary['reconstruction']
        assert 'delta' not in summary['acceptance']

    def test_unknown_start_stage(self, make_engine):
        with pytest.raises(StageInputError, match="unknown stage 'deploy'"):
            make_engine().run_pipeline(start='deploy')


class TestAcceptance:
    def test_control_ceiling_breach_finishes_run(self, make_engine):
        engine = make_engine({'control': {'residual_ceiling': 1e-30}})
        with pytest.raises(AcceptanceError, match='control_residual'):
            engine.run_pipeline()
        summary = json.loads((engine.output / 'summary.json').read_text())
        assert summary['acceptance']['control_residual']['met'] is False
        assert summary['passed'] is False
        assert engine.store.exists('estimate')

    def test_delta_ceiling_breach(self, make_engine):
        engine = make_engine({'reconstruct': {'delta_ceiling': 1e-30}})
        with pytest.raises(AcceptanceError) as excinfo:
            engine.run_pipeline()
        assert set(excinfo.value.report) == {'delta'}

    def test_check_acceptance_passes_empty_summary(self):
        PipelineEngine.check_acceptance({'acceptance': {}})
