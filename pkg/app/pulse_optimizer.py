"""
Two-parameter pulse optimization: drive amplitude and frequency of the
tanh flat-top waveform are tuned to minimize the closed-system iSWAP
infidelity at fixed gate time, ramp and drive phase.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize

from .dynamics import GateMetrics, ReducedModel, evaluate_gate
from .errors import SimulationError
from .spectrum import STATE_01, STATE_10, quasi_static_average
from .utils import log_fit_event
from .waveform import DriveWaveform

logger = logging.getLogger(__name__)

FAILED_OBJECTIVE = 1.0
SIMPLEX_STEP = 0.05

STATUS_CONVERGED = "converged"
STATUS_EXHAUSTED = "max_evaluations"
STATUS_WARNING = "warning"


@dataclass(frozen=True)
class OptimizationResult:
    amplitude: float
    frequency: float
    metrics: Optional[GateMetrics]
    evaluations: int
    status: str
    start: Tuple[float, float]
    history: Tuple[Tuple[float, float, float], ...] = ()
    warnings: Tuple[str, ...] = ()

    @property
    def infidelity(self) -> float:
        return self.metrics.infidelity if self.metrics is not None else math.nan


def initial_guess(model: ReducedModel, template: DriveWaveform,
                  amplitude_bounds: Tuple[float, float],
                  frequency_bounds: Tuple[float, float],
                  rate_coefficient: Optional[float] = None,
                  detuning_curve: Optional[CubicSpline] = None) -> Tuple[float, float]:
    """
    Physics-informed start (phi_d, omega_d) inside the bounds.

    With g(phi_d) ~ rate_coefficient * phi_d^2, a pi/2 swap over the envelope
    needs rate_coefficient * phi_d^2 * integral(f_env^2) = pi/2. The drive
    frequency is half the detuning averaged over one drive period of the
    flux excursion, or half the static detuning without a detuning curve.
    """
    lo_a, hi_a = amplitude_bounds
    lo_f, hi_f = frequency_bounds
    amplitude = 0.5 * (lo_a + hi_a)
    if rate_coefficient is not None and rate_coefficient > 0.0:
        area = template.envelope_square_integral()
        amplitude = math.sqrt((math.pi / 2) / (rate_coefficient * area))
    amplitude = float(np.clip(amplitude, lo_a, hi_a))

    detuning = math.nan
    if detuning_curve is not None and amplitude <= float(detuning_curve.x[-1]):
        detuning = quasi_static_average(detuning_curve, amplitude)
    if not math.isfinite(detuning):
        detuning = (model.energies[model.index(STATE_01)]
                    - model.energies[model.index(STATE_10)])
    frequency = float(np.clip(0.5 * abs(detuning), lo_f, hi_f))
    return amplitude, frequency


def swap_duration(template: DriveWaveform, amplitude: float, rate_coefficient: float,
                  max_duration: float = 5e-6) -> DriveWaveform:
    """
    Template with its drive window stretched so that
    rate_coefficient * amplitude^2 * integral(f_env^2) = pi/2.
    """
    if amplitude <= 0.0 or rate_coefficient <= 0.0:
        raise ValueError("Amplitude and rate coefficient must be positive")
    target = (math.pi / 2) / (rate_coefficient * amplitude ** 2)

    def excess(duration: float) -> float:
        return replace(template, drive_duration=duration).envelope_square_integral() - target

    lower = 1e-12
    if excess(max_duration) < 0.0:
        raise ValueError(f"Swap needs more than {max_duration * 1e9:.0f} ns of drive "
                         f"at phi_d/2pi={amplitude / (2 * math.pi):.4f}")
    duration = brentq(excess, lower, max_duration, xtol=1e-13)
    return replace(template, drive_duration=duration)


def optimize_pulse(model: ReducedModel, template: DriveWaveform, dt: float,
                   amplitude_bounds: Tuple[float, float],
                   frequency_bounds: Tuple[float, float],
                   rate_coefficient: Optional[float] = None,
                   detuning_curve: Optional[CubicSpline] = None,
                   zeta_curve: Optional[CubicSpline] = None,
                   max_evaluations: int = 80,
                   start: Optional[Tuple[float, float]] = None) -> OptimizationResult:
    """
    Minimize 1 - F_avg over (phi_d, omega_d) by bounded Nelder-Mead.

    The search runs on the unit square mapped onto the bounds. An objective
    evaluation that raises is scored as total infidelity; the best point seen
    is returned in every case, with status "warning" when any evaluation
    failed.

    Args:
        model: Reduced model of the device
        template: Waveform fixing gate time, idle pad, ramp and drive phase
        dt: Integration step (s)
        amplitude_bounds: (lower, upper) phi_d in rad
        frequency_bounds: (lower, upper) omega_d in rad/s
        rate_coefficient: g_iSWAP / phi_d^2 (rad/s per rad^2) for the start
        detuning_curve: Delta_21(phi_ex) for the ac-shifted start
        zeta_curve: Static ZZ curve; when given, the final metrics carry zeta_avg
        max_evaluations: Objective budget
        start: Explicit starting point, overrides the physics-informed one

    Returns:
        OptimizationResult
    """
    lo_a, hi_a = amplitude_bounds
    lo_f, hi_f = frequency_bounds
    if not (math.isfinite(lo_a) and math.isfinite(hi_a) and math.isfinite(lo_f)
            and math.isfinite(hi_f)) or not (lo_a < hi_a and lo_f < hi_f):
        raise ValueError("Optimizer bounds must be finite and increasing")
    if max_evaluations < 3:
        raise ValueError(f"max_evaluations must be at least 3, got {max_evaluations}")

    if start is None:
        start = initial_guess(model, template, amplitude_bounds, frequency_bounds,
                              rate_coefficient, detuning_curve)
    start = (float(np.clip(start[0], lo_a, hi_a)), float(np.clip(start[1], lo_f, hi_f)))
    span = np.array([hi_a - lo_a, hi_f - lo_f])
    origin = np.array([lo_a, lo_f])

    def to_physical(x: np.ndarray) -> Tuple[float, float]:
        point = origin + np.clip(x, 0.0, 1.0) * span
        return float(point[0]), float(point[1])

    history: List[Tuple[float, float, float]] = []
    failures: List[str] = []
    best = {"value": math.inf, "point": start, "metrics": None}

    def objective(x: np.ndarray) -> float:
        amplitude, frequency = to_physical(x)
        wave = template.with_drive(amplitude, frequency)
        try:
            metrics = evaluate_gate(model, wave, dt)
            value = float(metrics.infidelity)
        except (SimulationError, ValueError) as e:
            failures.append(f"phi_d/2pi={amplitude / (2 * math.pi):.5f}, "
                            f"f_d={frequency / (2 * math.pi * 1e6):.4f} MHz: "
                            f"{type(e).__name__}: {e}")
            logger.warning(f"Objective evaluation failed: {failures[-1]}")
            metrics, value = None, FAILED_OBJECTIVE
        history.append((amplitude, frequency, value))
        if metrics is not None and value < best["value"]:
            best.update(value=value, point=(amplitude, frequency), metrics=metrics)
        log_fit_event("pulse", f"evaluation {len(history)}",
                      f"phi_d/2pi={amplitude / (2 * math.pi):.5f}, "
                      f"f_d={frequency / (2 * math.pi * 1e6):.4f} MHz, 1-F={value:.3e}")
        return value

    x0 = (np.array(start) - origin) / span
    simplex = np.array([x0, x0, x0])
    for axis in range(2):
        step = SIMPLEX_STEP if x0[axis] + SIMPLEX_STEP <= 1.0 else -SIMPLEX_STEP
        simplex[axis + 1, axis] += step

    log_fit_event("pulse", "start", f"phi_d/2pi={start[0] / (2 * math.pi):.5f}, "
                                    f"f_d={start[1] / (2 * math.pi * 1e6):.4f} MHz")
    result = minimize(objective, x0, method="Nelder-Mead",
                      bounds=[(0.0, 1.0), (0.0, 1.0)],
                      options={"initial_simplex": simplex, "maxfev": max_evaluations,
                               "xatol": 1e-4, "fatol": 1e-7})

    warnings = list(failures)
    if failures:
        status = STATUS_WARNING
    elif result.success:
        status = STATUS_CONVERGED
    else:
        status = STATUS_EXHAUSTED
        warnings.append(f"Optimizer stopped: {result.message}")

    metrics = best["metrics"]
    amplitude, frequency = best["point"]
    if metrics is not None and zeta_curve is not None:
        try:
            metrics = evaluate_gate(model, template.with_drive(amplitude, frequency), dt,
                                    zeta_curve=zeta_curve)
        except (SimulationError, ValueError) as e:
            warnings.append(f"Averaged ZZ unavailable: {e}")
    if metrics is None:
        status = STATUS_WARNING
        warnings.append("No objective evaluation succeeded")

    log_fit_event("pulse", status, f"{len(history)} evaluations, best 1-F="
                                   f"{best['value']:.3e}")
    return OptimizationResult(
        amplitude=amplitude,
        frequency=frequency,
        metrics=metrics,
        evaluations=len(history),
        status=status,
        start=start,
        history=tuple(history),
        warnings=tuple(warnings),
    )
