"""Tests for the Ricker control profile."""

import numpy as np
import pytest
from scipy.integrate import trapezoid

from wavesim.ricker import RickerWavelet, ricker


class TestRicker:
    def test_peak_at_delay(self):
        w = RickerWavelet(frequency=5.0, delay=0.4)
        assert w(0.4) == pytest.approx(1.0)

    def test_default_delay(self):
        w = RickerWavelet(frequency=4.0)
        assert w.delay == pytest.approx(0.375)
        assert w.window_end == pytest.approx(0.875)

    def test_zero_outside_window(self):
        w = RickerWavelet(frequency=7.0)
        t = np.array([-0.1, -1e-12, 0.0, w.window_end + 1e-9, 3.0])
        np.testing.assert_array_equal(ricker(t, w), 0.0)

    def test_scalar_returns_float(self):
        assert isinstance(RickerWavelet(3.0)(0.1), float)

    def test_vectorized_shape(self):
        t = np.linspace(0, 1, 12).reshape(3, 4)
        assert ricker(t, RickerWavelet(3.0)).shape == (3, 4)

    def test_symmetric_about_delay(self):
        w = RickerWavelet(frequency=3.0, delay=0.5)
        offsets = np.linspace(0, 0.4, 9)
        np.testing.assert_allclose(w(0.5 + offsets), w(0.5 - offsets), atol=1e-15)

    @pytest.mark.parametrize('frequency,delay', [(0.0, None), (-1.0, None), (2.0, -0.1)])
    def test_invalid_parameters(self, frequency, delay):
        with pytest.raises(ValueError):
            RickerWavelet(frequency, delay)

    def test_zero_mean_over_window(self):
        w = RickerWavelet(frequency=7.0)
        t = np.linspace(0.0, w.window_end, 200_001)
        assert abs(trapezoid(w(t), t)) <= 1e-6

    @pytest.mark.parametrize('frequency', [3.5, 7.0, 12.0])
    def test_roots(self, frequency):
        w = RickerWavelet(frequency)
        half_width = 1.0 / (np.sqrt(2.0) * np.pi * frequency)
        for root in (w.delay - half_width, w.delay + half_width):
            assert abs(w(root)) <= 1e-12
        assert w(w.delay - 0.5 * half_width) > 0
        assert w(w.delay + 2.0 * half_width) < 0
