"""Stage registry for the reconstruction pipeline."""

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import structlog

from core.exceptions import AcceptanceError, BCTomoError, StageError
from utils import metrics
from utils.logger import stage_context

logger = structlog.get_logger(__name__)

STAGE_ORDER: Tuple[str, ...] = (
    'mesh-gen',
    'sample-gen',
    'simulate',
    'forms',
    'harmonics',
    'control',
    'reconstruct',
    'score',
)

# Stages that work from boundary data only.
INVERSION_STAGES = frozenset({'forms', 'harmonics', 'control', 'reconstruct'})


@dataclass
class Stage:
    """
    One resumable pipeline step.

    Attributes:
        name: Stage name, also the CLI subcommand
        inputs: Artifacts read
        outputs: Artifacts written
        action: Callable doing the work; returns the stage report
    """
    name: str
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    action: Callable[[], Dict[str, Any]]
    stats: Dict[str, int] = field(default_factory=lambda: {'executed': 0, 'successful': 0, 'failed': 0})

    @property
    def inversion(self) -> bool:
        return self.name in INVERSION_STAGES

    def execute(self) -> Dict[str, Any]:
        """
        Run the stage.

        Raises:
            AcceptanceError: Passed through so a ceiling breach keeps its exit code
            StageError: Any other failure, tagged with the stage name
        """
        self.stats['executed'] += 1
        started = time.perf_counter()
        try:
            with stage_context(self.name):
                logger.info("Executing stage", inputs=list(self.inputs))
                report = self.action()
        except AcceptanceError:
            self.stats['failed'] += 1
            metrics.track_stage(self.name, 'breach', time.perf_counter() - started)
            raise
        except BCTomoError as e:
            self.stats['failed'] += 1
            metrics.track_stage(self.name, 'failed', time.perf_counter() - started)
            logger.error("Stage failed", stage=self.name, error=str(e))
            raise StageError(self.name, str(e)) from e
        except Exception as e:
            self.stats['failed'] += 1
            metrics.track_stage(self.name, 'failed', time.perf_counter() - started)
            logger.error("Stage failed", stage=self.name, error=str(e), exc_info=True)
            raise StageError(self.name, f"{type(e).__name__}: {e}") from e

        duration = time.perf_counter() - started
        self.stats['successful'] += 1
        metrics.track_stage(self.name, 'success', duration)
        logger.info("Stage completed", stage=self.name, duration=round(duration, 3))
        return report


class StageRegistry:
    """Ordered collection of stages."""

    def __init__(self):
        self.stages: Dict[str, Stage] = {}

    def register(self, stage: Stage) -> None:
        if stage.name not in STAGE_ORDER:
            raise ValueError(f"unknown stage '{stage.name}'")
        self.stages[stage.name] = stage
        logger.debug("Stage registered", stage=stage.name)

    def get(self, name: str) -> Stage:
        if name not in self.stages:
            raise KeyError(f"stage '{name}' is not registered; choose from {list(self.stages)}")
        return self.stages[name]

    def ordered(self, start: Optional[str] = None) -> List[Stage]:
        """Registered stages in pipeline order, optionally from `start` on."""
        names = [n for n in STAGE_ORDER if n in self.stages]
        if start is not None:
            names = names[names.index(start):]
        return [self.stages[n] for n in names]

    def get_stage_stats(self) -> Dict[str, Dict[str, int]]:
        return {name: stage.stats.copy() for name, stage in self.stages.items()}
