"""
Flux-drive waveforms phi_ex(t) = phi_d f_env(t) cos(omega_d t + phase).
"""
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .config import WaveformSettings

CONTINUOUS_WAVE = "continuous_wave"
TANH_FLATTOP = "tanh_flattop"
ENVELOPE_KINDS = (CONTINUOUS_WAVE, TANH_FLATTOP)

TWO_PI = 2.0 * math.pi
NS = 1e-9


@dataclass(frozen=True)
class DriveWaveform:
    """
    Sinusoidal flux drive with an optional tanh flat-top envelope.

    All quantities are SI: amplitude and phase in rad, frequency in rad/s,
    times in s and the ramp rate beta in 1/s. The tanh envelope is
    tanh[beta(t - t_idle)] tanh[beta(t_d + t_idle - t)] inside the drive
    window and zero outside; the total time is t_d + 2 t_idle.
    """
    amplitude: float
    frequency: float
    phase: float
    drive_duration: float
    idle_pad: float = 0.0
    ramp: float = 0.0
    envelope_kind: str = TANH_FLATTOP

    def __post_init__(self):
        if self.envelope_kind not in ENVELOPE_KINDS:
            raise ValueError(f"Unknown envelope '{self.envelope_kind}', "
                             f"expected one of {ENVELOPE_KINDS}")
        values = (self.amplitude, self.frequency, self.phase, self.drive_duration,
                  self.idle_pad, self.ramp)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("Waveform parameters must be finite")
        if self.amplitude < 0.0:
            raise ValueError(f"Amplitude must be nonnegative, got {self.amplitude}")
        if self.drive_duration <= 0.0 or self.idle_pad < 0.0:
            raise ValueError("Drive duration must be positive and idle pad nonnegative")
        if self.envelope_kind == TANH_FLATTOP and self.ramp <= 0.0:
            raise ValueError("tanh envelope needs a positive ramp rate")

    @classmethod
    def continuous_wave(cls, amplitude: float, frequency: float, duration: float,
                        phase: float = -math.pi / 2) -> "DriveWaveform":
        return cls(amplitude=amplitude, frequency=frequency, phase=phase,
                   drive_duration=duration, envelope_kind=CONTINUOUS_WAVE)

    @classmethod
    def tanh_flattop(cls, amplitude: float, frequency: float, phase: float,
                     drive_duration: float, idle_pad: float, ramp: float) -> "DriveWaveform":
        return cls(amplitude=amplitude, frequency=frequency, phase=phase,
                   drive_duration=drive_duration, idle_pad=idle_pad, ramp=ramp,
                   envelope_kind=TANH_FLATTOP)

    @classmethod
    def baseband(cls, amplitude: float, drive_duration: float, idle_pad: float,
                 ramp: float) -> "DriveWaveform":
        """Unmodulated flux excursion of the same envelope (omega_d = 0, phase 0)."""
        return cls.tanh_flattop(amplitude, 0.0, 0.0, drive_duration, idle_pad, ramp)

    @classmethod
    def from_settings(cls, settings: WaveformSettings, amplitude: Optional[float] = None,
                      frequency: Optional[float] = None) -> "DriveWaveform":
        """Gate waveform from configuration units (phi/2pi, MHz, ns, 1/ns)."""
        amplitude = TWO_PI * settings.amplitude_over_2pi if amplitude is None else amplitude
        frequency = TWO_PI * settings.frequency_mhz * 1e6 if frequency is None else frequency
        drive_duration = settings.total_time_ns - 2.0 * settings.idle_pad_ns
        return cls.tanh_flattop(amplitude, frequency, settings.drive_phase_rad,
                                drive_duration * NS, settings.idle_pad_ns * NS,
                                settings.ramp_rate_per_ns / NS)

    @property
    def total_time(self) -> float:
        return self.drive_duration + 2.0 * self.idle_pad

    def with_drive(self, amplitude: float, frequency: float) -> "DriveWaveform":
        return replace(self, amplitude=amplitude, frequency=frequency)

    def envelope(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.envelope_kind == CONTINUOUS_WAVE:
            return np.ones_like(t)
        start = self.idle_pad
        stop = self.idle_pad + self.drive_duration
        inside = (t >= start) & (t <= stop)
        rise = np.tanh(self.ramp * (t - start))
        fall = np.tanh(self.ramp * (stop - t))
        return np.where(inside, rise * fall, 0.0)

    def envelope_derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.envelope_kind == CONTINUOUS_WAVE:
            return np.zeros_like(t)
        start = self.idle_pad
        stop = self.idle_pad + self.drive_duration
        inside = (t >= start) & (t <= stop)
        rise = np.tanh(self.ramp * (t - start))
        fall = np.tanh(self.ramp * (stop - t))
        slope = self.ramp * ((1.0 - rise ** 2) * fall - rise * (1.0 - fall ** 2))
        return np.where(inside, slope, 0.0)

    def value(self, t) -> np.ndarray:
        """phi_ex(t) in rad."""
        t = np.asarray(t, dtype=float)
        return self.amplitude * self.envelope(t) * np.cos(self.frequency * t + self.phase)

    def derivative(self, t) -> np.ndarray:
        """d phi_ex / dt in rad/s."""
        t = np.asarray(t, dtype=float)
        carrier = self.frequency * t + self.phase
        return self.amplitude * (self.envelope_derivative(t) * np.cos(carrier)
                                 - self.envelope(t) * self.frequency * np.sin(carrier))

    def peak_flux(self) -> float:
        """Upper bound of |phi_ex(t)|."""
        return self.amplitude

    def envelope_square_integral(self, points: int = 20001) -> float:
        """Integral of f_env^2 over the gate (s)."""
        times = np.linspace(0.0, self.total_time, points)
        return float(trapezoid(self.envelope(times) ** 2, times))

    def sample(self, step: float, start: float = 0.0,
               stop: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(t, phi_ex(t)) on a uniform grid, end point included."""
        stop = self.total_time if stop is None else stop
        count = int(round((stop - start) / step)) + 1
        times = np.linspace(start, stop, max(count, 2))
        return times, self.value(times)
