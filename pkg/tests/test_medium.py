"""Medium tests: atmospheric absorption, complex wavenumber, quadrature rules."""

from __future__ import annotations

import math

import numpy as np
import pytest

from mcpl_zones.core.models import AirMedium
from mcpl_zones.core.rules.medium import DomainError, absorption_coefficient, complex_wavenumber
from mcpl_zones.core.rules.quadrature import (
    QuadratureError,
    adaptive_doubling,
    composite_rule,
    graded_rule,
    panels_for_phase,
)


# ── Absorption ───────────────────────────────────────────────────────────────


class TestAbsorption:
    def test_reference_value_at_40khz(self):
        alpha = absorption_coefficient(AirMedium(), 40_000.0)
        # ~1.29 dB/m at 20 °C, 70 % RH
        assert alpha == pytest.approx(0.148, rel=0.03)
        assert alpha * 8.686 == pytest.approx(1.285, rel=0.03)

    def test_increases_with_frequency(self):
        medium = AirMedium()
        freqs = [500.0, 1_000.0, 4_000.0, 20_000.0, 40_000.0, 80_000.0, 120_000.0, 160_000.0]
        values = [absorption_coefficient(medium, f) for f in freqs]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_audio_band_is_small(self):
        assert absorption_coefficient(AirMedium(), 1_000.0) < 0.01

    def test_nonpositive_frequency_rejected(self):
        with pytest.raises(DomainError):
            absorption_coefficient(AirMedium(), 0.0)
        with pytest.raises(DomainError):
            absorption_coefficient(AirMedium(), -1.0)

    def test_humidity_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            AirMedium(relative_humidity=120.0)


class TestWavenumber:
    def test_real_part(self):
        k = complex_wavenumber(AirMedium(), 40_000.0)
        assert k.real_part == pytest.approx(2 * math.pi * 40_000.0 / 343.0)
        assert k.imag_part == pytest.approx(absorption_coefficient(AirMedium(), 40_000.0))
        assert k.value == complex(k.real_part, k.imag_part)

    def test_lossless_drops_all_absorption(self):
        medium = AirMedium(lossless=True)
        assert complex_wavenumber(medium, 40_000.0).imag_part == 0.0
        assert complex_wavenumber(medium, 1_000.0, audio=True).imag_part == 0.0

    def test_lossless_audio_only_affects_audio(self):
        medium = AirMedium(lossless_audio=True)
        assert complex_wavenumber(medium, 1_000.0, audio=True).imag_part == 0.0
        assert complex_wavenumber(medium, 1_000.0).imag_part > 0.0
        assert complex_wavenumber(medium, 40_000.0).imag_part > 0.0


# ── Quadrature ───────────────────────────────────────────────────────────────


class TestQuadrature:
    def test_composite_rule_integrates_polynomial(self):
        x, w = composite_rule(0.0, 2.0, panels=3, order=4)
        assert x.size == 12
        assert np.sum(w * x ** 5) == pytest.approx(2.0 ** 6 / 6.0, rel=1e-13)

    def test_graded_rule_covers_interval(self):
        x, w = graded_rule(0.0, 10.0, first=0.01, nodes=64, order=8)
        assert x.size == 64
        assert np.all(np.diff(x) > 0)
        assert 0.0 < x[0] < 0.01
        assert np.sum(w) == pytest.approx(10.0, rel=1e-12)
        assert np.sum(w * np.exp(-x)) == pytest.approx(1.0 - math.exp(-10.0), rel=1e-8)

    def test_graded_rule_falls_back_to_uniform(self):
        x, w = graded_rule(0.0, 1.0, first=0.5, nodes=16, order=8)
        ux, uw = composite_rule(0.0, 1.0, 2, 8)
        assert np.allclose(x, ux) and np.allclose(w, uw)

    def test_panels_for_phase(self):
        assert panels_for_phase(0.0) == 2
        assert panels_for_phase(100 * math.pi) == 25

    def test_adaptive_doubling_converges(self):
        def evaluate(panels):
            x, w = composite_rule(0.0, math.pi, panels, 8)
            return np.array([np.sum(w * np.sin(40 * x) ** 2)])

        value, change = adaptive_doubling(evaluate, 2, 1e-10, 6)
        assert value[0] == pytest.approx(math.pi / 2, rel=1e-10)
        assert change < 1e-10

    def test_adaptive_doubling_reports_estimate(self):
        def evaluate(panels):
            return np.array([1.0 if panels.bit_length() % 2 else 2.0])

        with pytest.raises(QuadratureError) as info:
            adaptive_doubling(evaluate, 1, 1e-6, 3, label="oscillating")
        assert info.value.estimate is not None
        assert info.value.error_bound > 1e-6

    def test_zero_doublings_returns_first_estimate(self):
        value, change = adaptive_doubling(lambda p: np.array([float(p)]), 3, 1e-6, 0)
        assert value[0] == 3.0
        assert math.isinf(change)
