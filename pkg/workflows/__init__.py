"""Stage registry for the reconstruction pipeline."""

from .pipeline import STAGE_ORDER, Stage, StageRegistry

__all__ = ['STAGE_ORDER', 'Stage', 'StageRegistry']
