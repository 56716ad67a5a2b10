"""
Tests for the two-parameter pulse optimizer.
"""
import math

import numpy as np
import pytest
from unittest.mock import patch
from scipy.interpolate import CubicSpline

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from app.dynamics import GateMetrics, ProcessMatrix, ReducedModel
from app.errors import SimulationError
from app.pulse_optimizer import (
    STATUS_CONVERGED,
    STATUS_EXHAUSTED,
    STATUS_WARNING,
    initial_guess,
    optimize_pulse,
    swap_duration,
)
from app.spectrum import GROUND, STATE_01, STATE_10, STATE_11
from app.waveform import DriveWaveform

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6
NS = 1e-9

AMPLITUDE_BOUNDS = (0.1, 0.4)
FREQUENCY_BOUNDS = (MHZ * 235.0, MHZ * 255.0)
OPTIMUM = (0.25, MHZ * 245.0)


def simple_model() -> ReducedModel:
    zeros = np.zeros((4, 4))
    return ReducedModel.from_eigenbasis(
        MHZ * np.array([0.0, 100.0, 200.0, 300.0]), zeros, zeros, zeros,
        coupler_frequency=TWO_PI * 1e9,
        label_map={GROUND: 0, STATE_10: 1, STATE_01: 2, STATE_11: 3},
    )


def template() -> DriveWaveform:
    return DriveWaveform.tanh_flattop(0.2, MHZ * 240.0, -math.pi / 2, 100 * NS, 6 * NS, 0.29e9)


def bowl(model, wave, dt, zeta_curve=None):
    """Quadratic infidelity around OPTIMUM in normalized coordinates."""
    da = (wave.amplitude - OPTIMUM[0]) / (AMPLITUDE_BOUNDS[1] - AMPLITUDE_BOUNDS[0])
    df = (wave.frequency - OPTIMUM[1]) / (FREQUENCY_BOUNDS[1] - FREQUENCY_BOUNDS[0])
    infidelity = 1e-3 + da ** 2 + df ** 2
    return GateMetrics(fidelity=1.0 - infidelity, zz_phase=0.0, zeta_eff=0.0, leakage=0.0,
                       process=ProcessMatrix(matrix=np.eye(4, dtype=complex), phase_corrected=True),
                       zeta_avg=-1.0 if zeta_curve is not None else None)


class TestOptimizePulse:
    """Test cases for optimize_pulse."""

    def setup_method(self):
        """Setup test fixtures."""
        self.model = simple_model()
        self.template = template()

    @patch("app.pulse_optimizer.evaluate_gate", side_effect=bowl)
    def test_converges_to_minimum(self, mock_evaluate):
        """Nelder-Mead finds the bottom of the bowl inside the bounds."""
        result = optimize_pulse(self.model, self.template, 1e-12, AMPLITUDE_BOUNDS,
                                FREQUENCY_BOUNDS, max_evaluations=400,
                                start=(0.2, MHZ * 240.0))
        assert result.status == STATUS_CONVERGED
        assert result.amplitude == pytest.approx(OPTIMUM[0], abs=2e-3)
        assert result.frequency == pytest.approx(OPTIMUM[1], abs=MHZ * 0.15)
        assert result.infidelity == pytest.approx(1e-3, abs=1e-4)
        assert result.evaluations == len(result.history) == mock_evaluate.call_count
        assert result.start == (0.2, MHZ * 240.0)

    @patch("app.pulse_optimizer.evaluate_gate", side_effect=bowl)
    def test_best_point_stays_in_bounds(self, mock_evaluate):
        """Every evaluated point respects the bounds."""
        result = optimize_pulse(self.model, self.template, 1e-12, AMPLITUDE_BOUNDS,
                                FREQUENCY_BOUNDS, max_evaluations=60,
                                start=(0.39, MHZ * 254.0))
        for amplitude, frequency, _ in result.history:
            assert AMPLITUDE_BOUNDS[0] <= amplitude <= AMPLITUDE_BOUNDS[1]
            assert FREQUENCY_BOUNDS[0] <= frequency <= FREQUENCY_BOUNDS[1]

    @patch("app.pulse_optimizer.evaluate_gate", side_effect=bowl)
    def test_budget_exhausted(self, mock_evaluate):
        """A tiny budget stops early and says so."""
        result = optimize_pulse(self.model, self.template, 1e-12, AMPLITUDE_BOUNDS,
                                FREQUENCY_BOUNDS, max_evaluations=3, start=(0.2, MHZ * 240.0))
        assert result.status == STATUS_EXHAUSTED
        assert result.metrics is not None
        assert any("Optimizer stopped" in w for w in result.warnings)

    @patch("app.pulse_optimizer.evaluate_gate",
           side_effect=SimulationError("propagation failed"))
    def test_all_evaluations_fail(self, mock_evaluate):
        """Failed evaluations score as total infidelity; the start is returned."""
        result = optimize_pulse(self.model, self.template, 1e-12, AMPLITUDE_BOUNDS,
                                FREQUENCY_BOUNDS, max_evaluations=10, start=(0.2, MHZ * 240.0))
        assert result.status == STATUS_WARNING
        assert result.metrics is None
        assert math.isnan(result.infidelity)
        assert (result.amplitude, result.frequency) == (0.2, MHZ * 240.0)
        assert all(value == 1.0 for _, _, value in result.history)
        assert "No objective evaluation succeeded" in result.warnings

    @patch("app.pulse_optimizer.evaluate_gate")
    def test_partial_failures_reported(self, mock_evaluate):
        """Some failures turn the status into a warning but keep the best point."""
        def flaky(model, wave, dt, zeta_curve=None):
            if wave.amplitude > 0.3:
                raise ValueError("unstable")
            return bowl(model, wave, dt, zeta_curve)
        mock_evaluate.side_effect = flaky
        result = optimize_pulse(self.model, self.template, 1e-12, AMPLITUDE_BOUNDS,
                                FREQUENCY_BOUNDS, max_evaluations=80, start=(0.29, MHZ * 245.0))
        assert result.status == STATUS_WARNING
        assert result.metrics is not None
        assert result.amplitude <= 0.3
        assert any("ValueError" in w for w in result.warnings)

    @patch("app.pulse_optimizer.evaluate_gate", side_effect=bowl)
    def test_final_metrics_carry_averaged_zz(self, mock_evaluate):
        """With a ZZ curve the best point is re-evaluated with it."""
        x = np.linspace(-2.0, 2.0, 9)
        curve = CubicSpline(x, np.zeros_like(x))
        result = optimize_pulse(self.model, self.template, 1e-12, AMPLITUDE_BOUNDS,
                                FREQUENCY_BOUNDS, zeta_curve=curve, max_evaluations=20,
                                start=(0.2, MHZ * 240.0))
        assert mock_evaluate.call_args.kwargs["zeta_curve"] is curve
        assert result.metrics.zeta_avg == -1.0

    def test_invalid_arguments(self):
        """Bounds must be increasing and the budget at least 3."""
        with pytest.raises(ValueError):
            optimize_pulse(self.model, self.template, 1e-12, (0.4, 0.1), FREQUENCY_BOUNDS)
        with pytest.raises(ValueError):
            optimize_pulse(self.model, self.template, 1e-12, (0.1, math.inf), FREQUENCY_BOUNDS)
        with pytest.raises(ValueError):
            optimize_pulse(self.model, self.template, 1e-12, AMPLITUDE_BOUNDS,
                           FREQUENCY_BOUNDS, max_evaluations=2)


class TestInitialGuess:
    """Test cases for the physics-informed start."""

    def setup_method(self):
        """Setup test fixtures."""
        self.model = simple_model()
        self.template = template()
        self.frequency_bounds = (MHZ * 40.0, MHZ * 60.0)

    def test_static_detuning(self):
        """Without curves: mid amplitude and half the bare detuning."""
        amplitude, frequency = initial_guess(self.model, self.template, AMPLITUDE_BOUNDS,
                                             self.frequency_bounds)
        assert amplitude == pytest.approx(0.25)
        assert frequency == pytest.approx(MHZ * 50.0)

    def test_rate_coefficient_sets_amplitude(self):
        """coefficient * phi_d^2 * area = pi/2."""
        coefficient = 2.0e8
        amplitude, _ = initial_guess(self.model, self.template, AMPLITUDE_BOUNDS,
                                     self.frequency_bounds, rate_coefficient=coefficient)
        area = self.template.envelope_square_integral()
        assert coefficient * amplitude ** 2 * area == pytest.approx(math.pi / 2)

    def test_amplitude_clipped(self):
        """A weak coupling asks for more than the upper bound."""
        amplitude, _ = initial_guess(self.model, self.template, AMPLITUDE_BOUNDS,
                                     self.frequency_bounds, rate_coefficient=1.0)
        assert amplitude == AMPLITUDE_BOUNDS[1]

    def test_detuning_curve(self):
        """The averaged detuning replaces the static one."""
        x = np.linspace(-2.0, 2.0, 9)
        curve = CubicSpline(x, np.full_like(x, MHZ * 104.0))
        _, frequency = initial_guess(self.model, self.template, AMPLITUDE_BOUNDS,
                                     self.frequency_bounds, detuning_curve=curve)
        assert frequency == pytest.approx(MHZ * 52.0)


class TestSwapDuration:
    """Test cases for swap_duration."""

    def test_area_condition(self):
        """The stretched envelope carries exactly a quarter period of exchange."""
        coefficient = TWO_PI * 5e6 / 0.04
        wave = swap_duration(template(), 0.2, coefficient)
        assert coefficient * 0.2 ** 2 * wave.envelope_square_integral() == pytest.approx(
            math.pi / 2, rel=1e-4)
        assert wave.drive_duration == pytest.approx(50 * NS + 2.0 / 0.29e9, rel=1e-3)
        assert wave.idle_pad == template().idle_pad

    def test_invalid_inputs(self):
        """Nonpositive inputs and unreachable areas are rejected."""
        with pytest.raises(ValueError):
            swap_duration(template(), 0.0, 1e8)
        with pytest.raises(ValueError):
            swap_duration(template(), 0.2, 1e3, max_duration=1e-6)
