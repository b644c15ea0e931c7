"""Core modules for bctomo."""

from .config import ExperimentConfig, load_config

# PipelineEngine is not imported here to avoid circular imports
# Import it directly when needed: from core.engine import PipelineEngine

__all__ = ['ExperimentConfig', 'load_config']
