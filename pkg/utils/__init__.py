"""Utility modules for bctomo."""

from .logger import setup_logging, stage_context

__all__ = ['setup_logging', 'stage_context']
