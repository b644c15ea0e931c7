"""Ricker impulse used as the time profile of every boundary control."""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class RickerWavelet:
    """
    r(t) = (1 - 2 pi^2 nu^2 (t - t0)^2) exp(-pi^2 nu^2 (t - t0)^2), cut to (0, t0 + 2/nu].

    Attributes:
        frequency: Center frequency nu
        delay: Peak time t0; defaults to 1.5 / nu
    """
    frequency: float
    delay: Optional[float] = None

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError(f"frequency must be positive, got {self.frequency}")
        if self.delay is None:
            object.__setattr__(self, 'delay', 1.5 / self.frequency)
        if self.delay < 0:
            raise ValueError(f"delay must be nonnegative, got {self.delay}")

    @property
    def window_end(self) -> float:
        """Last instant of the support."""
        return self.delay + 2.0 / self.frequency

    def __call__(self, t: ArrayLike) -> ArrayLike:
        return ricker(t, self)


def ricker(t: ArrayLike, w: RickerWavelet) -> ArrayLike:
    """
    Evaluate the truncated Ricker impulse.

    Args:
        t: Time or array of times
        w: Wavelet parameters

    Returns:
        Values of the same shape as t; exactly zero outside (0, t0 + 2/nu], so r(0) = 0 matches rest initial data
    """
    t_arr = np.asarray(t, dtype=np.float64)
    arg = (np.pi * w.frequency * (t_arr - w.delay)) ** 2
    values = (1.0 - 2.0 * arg) * np.exp(-arg)
    values = np.where((t_arr <= 0.0) | (t_arr > w.window_end), 0.0, values)
    if np.ndim(t) == 0:
        return float(values)
    return values
