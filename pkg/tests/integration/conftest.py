"""
Pytest configuration and fixtures for integration tests
"""

import copy
import json
from pathlib import Path

import pytest

from core.config import load_config
from core.engine import PipelineEngine

SMOKE_CONFIG = Path(__file__).parent.parent.parent / 'config' / 'smoke.json'


def merge(base: dict, overrides: dict) -> dict:
    """Recursive dict update returning a new document."""
    out = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


@pytest.fixture
def smoke_document(tmp_path):
    """Smoke configuration writing into a temporary run directory, without ceilings."""
    document = json.loads(SMOKE_CONFIG.read_text())
    return merge(document, {
        'output': {'dir': str(tmp_path / 'run')},
        'reconstruct': {'delta_ceiling': None},
    })


@pytest.fixture
def smoke_config(smoke_document, write_config):
    """Write the smoke document, with optional overrides, and return its path."""
    def _write(overrides: dict = None, name: str = 'smoke.json') -> Path:
        return write_config(merge(smoke_document, overrides or {}), name)
    return _write


@pytest.fixture
def make_engine(smoke_config):
    def _make(overrides: dict = None, **kwargs) -> PipelineEngine:
        return PipelineEngine(load_config(str(smoke_config(overrides))), **kwargs)
    return _make
