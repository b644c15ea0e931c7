"""
Command line exit codes
"""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from main import cli

pytestmark = pytest.mark.integration


def run_dir(document):
    return Path(document['output']['dir'])


@pytest.fixture
def runner():
    return CliRunner()


class TestCli:
    def test_pipeline_succeeds(self, runner, smoke_config, smoke_document):
        result = runner.invoke(cli, ['pipeline', '-c', str(smoke_config())])
        assert result.exit_code == 0, result.output
        assert 'pipeline completed' in result.output
        summary = json.loads((run_dir(smoke_document) / 'summary.json').read_text())
        assert summary['passed'] is True

    def test_single_stage(self, runner, smoke_config):
        result = runner.invoke(cli, ['mesh-gen', '--config', str(smoke_config())])
        assert result.exit_code == 0, result.output
        assert "mesh-gen completed" in result.output
        assert 'triangles' in result.output

    def test_invalid_config_exits_1(self, runner, smoke_config):
        path = smoke_config({'mesh': {'n_boundary': 4}})
        result = runner.invoke(cli, ['pipeline', '-c', str(path)])
        assert result.exit_code == 1
        assert 'Configuration validation failed' in result.output

    def test_unknown_key_exits_1(self, runner, smoke_config):
        result = runner.invoke(cli, ['validate', '-c', str(smoke_config({'solver': 'fast'}))])
        assert result.exit_code == 1

    def test_missing_input_exits_2(self, runner, smoke_config):
        result = runner.invoke(cli, ['forms', '-c', str(smoke_config())])
        assert result.exit_code == 2
        assert "'simulate'" in result.output

    def test_ceiling_breach_exits_3(self, runner, smoke_config, smoke_document):
        path = smoke_config({'control': {'residual_ceiling': 1e-30}})
        result = runner.invoke(cli, ['pipeline', '-c', str(path)])
        assert result.exit_code == 3
        assert (run_dir(smoke_document) / 'summary.json').exists()

    def test_score_stage_checks_acceptance(self, runner, smoke_config):
        path = str(smoke_config({'reconstruct': {'delta_ceiling': 1e-30}}))
        assert runner.invoke(cli, ['pipeline', '-c', path]).exit_code == 3
        assert runner.invoke(cli, ['score', '-c', path]).exit_code == 3

    def test_validate_prints_derived_grid(self, runner, smoke_config):
        result = runner.invoke(cli, ['validate', '-c', str(smoke_config())])
        assert result.exit_code == 0, result.output
        assert 'Configuration is valid' in result.output
        assert 'dt_solver' in result.output
        assert 'Controls: N = 32' in result.output

    def test_version(self, runner):
        result = runner.invoke(cli, ['--version'])
        assert result.exit_code == 0
        assert '1.0.0' in result.output
