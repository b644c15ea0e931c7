"""Tests for the configuration module."""

import os

import pytest
from pydantic import ValidationError

from core.config import ExperimentConfig, TimeConfig, check_wavelet_window, expand_env_vars, load_config
from core.exceptions import ConfigError
from core.config import WaveletConfig


class TestConfig:
    """Test configuration loading and validation."""

    def test_default_config_creation(self):
        """Test creating config with defaults."""
        config = ExperimentConfig()

        assert config.mesh.n_rings == 6
        assert config.mesh.n_boundary == 24
        assert config.time.n_t == 8
        assert config.reconstruct.box == (0.5, 2.0)
        assert config.oracle_mode is False

    def test_load_config_from_file(self, config_path):
        """Test loading the shipped JSON configuration."""
        config = load_config(str(config_path))

        assert isinstance(config, ExperimentConfig)
        assert config.sample.kind == 'constant'
        assert config.control.residual_ceiling == 1e-6
        assert config.control.residual_target <= config.control.residual_ceiling

    def test_load_yaml_config(self, tmp_path):
        path = tmp_path / 'experiment.yaml'
        path.write_text("mesh:\n  n_rings: 3\n  n_boundary: 12\nseed: 7\n")

        config = load_config(str(path))

        assert config.mesh.n_rings == 3
        assert config.seed == 7

    def test_config_file_not_found(self):
        """Test error handling for missing config file."""
        with pytest.raises(FileNotFoundError):
            load_config('nonexistent/config.json')

    def test_unknown_key_rejected(self, write_config):
        with pytest.raises(ValidationError):
            load_config(str(write_config({'mesh': {'n_rings': 2, 'rings': 3}})))

    def test_expand_env_vars(self):
        """Test environment variable expansion."""
        os.environ['TEST_VAR'] = 'test_value'

        data = {
            'key1': '${TEST_VAR}',
            'key2': {
                'nested': '${TEST_VAR}'
            },
            'key3': ['${TEST_VAR}', 'static']
        }

        expanded = expand_env_vars(data)

        assert expanded['key1'] == 'test_value'
        assert expanded['key2']['nested'] == 'test_value'
        assert expanded['key3'][0] == 'test_value'

        del os.environ['TEST_VAR']

    def test_output_dir_from_environment(self, write_config, monkeypatch, tmp_path):
        monkeypatch.setenv('BCTOMO_RUN_DIR', str(tmp_path / 'run'))
        config = load_config(str(write_config({'output': {'dir': '${BCTOMO_RUN_DIR}'}})))
        assert config.output.dir == str(tmp_path / 'run')


class TestTimeValidation:
    """Grid divisibility and wavelet window checks."""

    def test_non_integer_horizon_rejected(self, write_config):
        with pytest.raises(ValidationError, match='T/dt'):
            load_config(str(write_config({'time': {'T': 1.0, 'dt': 0.3}})))

    def test_non_integer_substeps_rejected(self):
        with pytest.raises(ValidationError, match='dt/dt_solver'):
            TimeConfig(T=1.0, dt=0.25, dt_solver=0.1)

    def test_explicit_grid_sets_counts(self):
        time = TimeConfig(T=1.2, dt=0.3, dt_solver=0.015)
        assert time.n_t == 4
        assert time.substeps == 20

    def test_nonpositive_horizon_rejected(self):
        with pytest.raises(ValidationError):
            TimeConfig(T=0.0)

    def test_invalid_box_rejected(self):
        with pytest.raises(ValidationError, match='rho_min'):
            ExperimentConfig(reconstruct={'box': (2.0, 1.0)})
        with pytest.raises(ValidationError):
            ExperimentConfig(reconstruct={'box': (0.0, 1.0)})

    def test_residual_target_below_ceiling(self):
        with pytest.raises(ValidationError, match='residual_target'):
            ExperimentConfig(control={'residual_ceiling': 1e-6, 'residual_target': 1e-5})
        assert ExperimentConfig(control={'residual_ceiling': None, 'residual_target': 1e-5}).control.residual_target == 1e-5
        assert ExperimentConfig(control={'residual_target': None}).control.residual_target is None

    def test_file_sample_needs_path(self):
        with pytest.raises(ValidationError, match='path'):
            ExperimentConfig(sample={'kind': 'file'})

    def test_wavelet_longer_than_offset_rejected(self):
        with pytest.raises(ConfigError, match='wavelet window'):
            check_wavelet_window(WaveletConfig(frequency=2.0), dt=0.5)

    def test_wavelet_window_checked_on_load(self, write_config):
        with pytest.raises(ValidationError):
            load_config(str(write_config({'time': {'T': 2.0, 'dt': 0.5}, 'wavelet': {'frequency': 2.0}})))

    def test_default_wavelet_fills_offset(self):
        grid = ExperimentConfig(time={'T': 2.0, 'dt': 0.5}).time_grid()
        assert grid.frequency == pytest.approx(7.0)
        assert grid.delay + 2.0 / grid.frequency == pytest.approx(0.5)

    def test_open_horizon_needs_optical_radius(self):
        config = ExperimentConfig()
        with pytest.raises(ConfigError):
            config.time_grid()

        grid = config.time_grid(optical_radius=1.5)
        assert grid.T == pytest.approx(1.8)
        assert grid.n_t == 8
        assert grid.dt_solver == pytest.approx(1.8 / 8 / 20)
        assert grid.n_steps == 2 * 8 * 20


class TestDigest:
    def test_digest_ignores_output_and_jobs(self):
        a = ExperimentConfig(output={'dir': 'a'}, jobs=1)
        b = ExperimentConfig(output={'dir': 'b'}, jobs=4)
        assert a.digest() == b.digest()

    def test_digest_tracks_physics(self):
        assert ExperimentConfig(seed=1).digest() != ExperimentConfig(seed=2).digest()
