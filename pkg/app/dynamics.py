"""
Flux-driven gate dynamics in a reduced static eigenbasis.

The lowest K eigenstates of H0 carry the static energies on the diagonal;
the flux coupling enters through the projected operators C_red, S_red and
D_red with time-dependent coefficients a(t), b(t) and c(t). Propagation uses
a fourth-order Runge-Kutta scheme in integrating-factor form: the diagonal
is advanced exactly and the coupling by RK4.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import curve_fit, minimize_scalar

from .circuit import ChargeBasisOperators, DerivedEnergies, HamiltonianAssembly
from .errors import (
    DepletedAmplitudeError,
    ExtractionError,
    FluxRangeError,
    PhaseCorrectionError,
    ReducedModelError,
    StepSizeError,
)
from .spectrum import (
    COMPUTATIONAL_LABELS,
    GROUND,
    M_MODE,
    P_MODE,
    STATE_01,
    STATE_10,
    STATE_11,
    Label,
    LabeledSpectrum,
    label_name,
)
from .utils import log_propagation, run_parallel
from .waveform import DriveWaveform

logger = logging.getLogger(__name__)

MANDATORY_LABELS: Tuple[Label, ...] = (GROUND, STATE_10, STATE_01, STATE_11, P_MODE, M_MODE)
IDEAL_ISWAP = np.array([[1, 0, 0, 0],
                        [0, 0, -1j, 0],
                        [0, -1j, 0, 0],
                        [0, 0, 0, 1]], dtype=complex)

STABILITY_LIMIT = 0.1
DRIFT_WARNING = 1e-8
DRIFT_LIMIT = 1e-6
HERMITIAN_TOLERANCE = 1e-12
MIN_SWAP_AMPLITUDE = 1e-6
MIN_CONTRAST = 0.05
MIN_COLUMNS = 5
TWO_PI = 2.0 * math.pi


def _hermitize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.conj().T)


@dataclass(frozen=True)
class ReducedModel:
    """
    Static energies and projected flux-coupling operators on K eigenstates.

    energies are ground-referenced (rad/s); coupler_frequency is E_J5/hbar
    and flux_rate_scale is hbar/E_C34 (s), so that
    a = 2 E_J5 sin^2(phi/2)/hbar, b = E_J5 sin(phi)/hbar and
    c = flux_rate_scale * dphi/dt.
    """
    energies: np.ndarray
    coupler_cos: np.ndarray
    coupler_sin: np.ndarray
    drive_op: np.ndarray
    label_map: Dict[Label, int]
    coupler_frequency: float
    flux_rate_scale: float
    include_flux_rate: bool = True
    projection_error: Optional[float] = None
    stacked: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        k = self.energies.size
        for name in ("coupler_cos", "coupler_sin", "drive_op"):
            matrix = getattr(self, name)
            if matrix.shape != (k, k):
                raise ValueError(f"{name} has shape {matrix.shape}, expected {(k, k)}")
            scale = max(float(np.max(np.abs(matrix))), 1.0) if matrix.size else 1.0
            if np.max(np.abs(matrix - matrix.conj().T), initial=0.0) > HERMITIAN_TOLERANCE * scale:
                raise ValueError(f"{name} is not Hermitian")
        object.__setattr__(self, "stacked",
                           np.vstack([self.coupler_cos, self.coupler_sin, self.drive_op]))

    @classmethod
    def from_eigenbasis(cls, energies: Sequence[float], coupler_cos: np.ndarray,
                        coupler_sin: np.ndarray, drive_op: np.ndarray,
                        coupler_frequency: float, flux_rate_scale: float = 0.0,
                        label_map: Optional[Dict[Label, int]] = None,
                        include_flux_rate: bool = True) -> "ReducedModel":
        """Build a model directly from matrices (no label requirements)."""
        return cls(
            energies=np.asarray(energies, dtype=float),
            coupler_cos=_hermitize(np.asarray(coupler_cos, dtype=complex)),
            coupler_sin=_hermitize(np.asarray(coupler_sin, dtype=complex)),
            drive_op=_hermitize(np.asarray(drive_op, dtype=complex)),
            label_map=dict(label_map or {}),
            coupler_frequency=float(coupler_frequency),
            flux_rate_scale=float(flux_rate_scale),
            include_flux_rate=include_flux_rate,
        )

    @property
    def dimension(self) -> int:
        return int(self.energies.size)

    def index(self, label: Label) -> int:
        if label not in self.label_map:
            raise ReducedModelError(f"State |{label_name(label)}> is not in the reduced basis",
                                    {"label": label_name(label)})
        return self.label_map[label]

    def basis_state(self, label: Label) -> np.ndarray:
        state = np.zeros(self.dimension, dtype=complex)
        state[self.index(label)] = 1.0
        return state

    def coefficients(self, wave: DriveWaveform, times) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """a(t), b(t), c(t) of C_red, S_red and D_red along a waveform."""
        flux = wave.value(times)
        a = 2.0 * self.coupler_frequency * np.sin(0.5 * flux) ** 2
        b = self.coupler_frequency * np.sin(flux)
        if self.include_flux_rate and self.flux_rate_scale != 0.0:
            c = self.flux_rate_scale * wave.derivative(times)
        else:
            c = np.zeros_like(a)
        return a, b, c

    def hamiltonian(self, flux: float, flux_rate: float = 0.0) -> np.ndarray:
        """Dense reduced Hamiltonian at a fixed flux (rad/s)."""
        a = 2.0 * self.coupler_frequency * math.sin(0.5 * flux) ** 2
        b = self.coupler_frequency * math.sin(flux)
        c = self.flux_rate_scale * flux_rate if self.include_flux_rate else 0.0
        return (np.diag(self.energies).astype(complex) + a * self.coupler_cos
                + b * self.coupler_sin + c * self.drive_op)


def build_reduced_model(spectrum: LabeledSpectrum, operators: ChargeBasisOperators,
                        energies: DerivedEnergies, dimension: int,
                        include_flux_rate: bool = True,
                        probe_flux: float = TWO_PI * 0.1,
                        mandatory: Sequence[Label] = MANDATORY_LABELS) -> ReducedModel:
    """
    Project C_hat, S_hat and D_hat onto the lowest `dimension` eigenstates.

    Args:
        spectrum: Labeled zero-flux spectrum with at least `dimension` pairs
        operators: Charge-basis operators
        energies: Derived energies (for E_J5 and E_C34)
        dimension: Reduced dimension K
        include_flux_rate: Keep the dphi/dt term
        probe_flux: Flux (rad) at which the leakage of V out of the subspace is measured
        mandatory: Labels that must lie inside the K states

    Returns:
        ReducedModel with its relative projection error at `probe_flux`
    """
    if abs(spectrum.flux) > 1e-15:
        raise ValueError("The reduced model is built on the zero-flux eigenbasis")
    if dimension > spectrum.count:
        raise ValueError(f"Reduced dimension {dimension} exceeds the "
                         f"{spectrum.count} computed eigenpairs")
    missing = [label_name(label) for label in mandatory
               if label not in spectrum.label_map or spectrum.label_map[label] >= dimension]
    if missing:
        raise ReducedModelError(
            f"States {missing} fall outside the lowest {dimension} eigenstates; "
            f"increase the reduced dimension",
            {"missing": missing, "dimension": dimension},
        )

    basis = spectrum.vectors[:, :dimension]

    def project(operator) -> np.ndarray:
        return _hermitize(basis.conj().T @ (operator @ basis))

    coupler_cos = project(operators.coupler_cos)
    coupler_sin = project(operators.coupler_sin)
    drive_op = project(operators.drive_op)

    a = 2.0 * energies.coupler_frequency * math.sin(0.5 * probe_flux) ** 2
    b = energies.coupler_frequency * math.sin(probe_flux)
    coupled = a * (operators.coupler_cos @ basis) + b * (operators.coupler_sin @ basis)
    outside = coupled - basis @ (basis.conj().T @ coupled)
    scale = np.linalg.norm(coupled)
    projection_error = float(np.linalg.norm(outside) / scale) if scale > 0.0 else 0.0

    label_map = {label: index for label, index in spectrum.label_map.items() if index < dimension}
    flux_rate_scale = energies.physical.hbar / energies.shunt_charging_energy
    logger.info(f"Reduced model K={dimension}: projection error {projection_error:.3e} "
                f"at phi/2pi={probe_flux / TWO_PI:.3f}")
    return ReducedModel(
        energies=spectrum.frequencies[:dimension].copy(),
        coupler_cos=coupler_cos,
        coupler_sin=coupler_sin,
        drive_op=drive_op,
        label_map=label_map,
        coupler_frequency=energies.coupler_frequency,
        flux_rate_scale=flux_rate_scale,
        include_flux_rate=include_flux_rate,
        projection_error=projection_error,
    )


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    norm_drift: float

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def populations(self, index: int) -> np.ndarray:
        return np.abs(self.states[:, index, ...]) ** 2


def _lawson_segment(model: ReducedModel, wave: DriveWaveform, psi: np.ndarray,
                    start: float, stop: float, steps: int) -> np.ndarray:
    h = (stop - start) / steps
    half = np.exp(-0.5j * h * model.energies)[:, None]
    full = half * half
    nodes = start + 0.5 * h * np.arange(2 * steps + 1)
    a, b, c = model.coefficients(wave, nodes)
    stacked = model.stacked
    k = model.dimension

    def coupling(node: int, state: np.ndarray) -> np.ndarray:
        if a[node] == 0.0 and b[node] == 0.0 and c[node] == 0.0:
            return np.zeros_like(state)
        product = stacked @ state
        return -1j * (a[node] * product[:k] + b[node] * product[k:2 * k]
                      + c[node] * product[2 * k:])

    for n in range(steps):
        k1 = coupling(2 * n, psi)
        k2 = coupling(2 * n + 1, half * (psi + 0.5 * h * k1))
        k3 = coupling(2 * n + 1, half * psi + 0.5 * h * k2)
        k4 = coupling(2 * n + 2, full * psi + h * half * k3)
        psi = full * psi + (h / 6.0) * (full * k1 + 2.0 * half * (k2 + k3) + k4)
    return psi


def propagate(model: ReducedModel, wave: DriveWaveform, psi0: np.ndarray, dt: float,
              times: Optional[Sequence[float]] = None, label: str = "state") -> Trajectory:
    """
    Integrate i dpsi/dt = [diag(w) + a C_red + b S_red + c D_red] psi.

    Args:
        model: Reduced model
        wave: Flux waveform
        psi0: Normalized initial state, shape (K,) or (K, m) for m columns at once
        dt: Largest step (s); each interval between output times is split evenly
        times: Output times, starting at the initial time; may decrease to
            integrate backwards. Defaults to (0, total gate time).
        label: Name used in log lines

    Returns:
        Trajectory with states at `times`

    Raises:
        StepSizeError: When the norm drifts by more than 1e-6
    """
    psi = np.array(psi0, dtype=complex, copy=True)
    single = psi.ndim == 1
    if single:
        psi = psi[:, None]
    if psi.shape[0] != model.dimension:
        raise ValueError(f"State dimension {psi.shape[0]} does not match K={model.dimension}")
    initial_norms = np.linalg.norm(psi, axis=0)
    if np.any(np.abs(initial_norms - 1.0) > 1e-10):
        raise ValueError("Initial states must be normalized")
    if not dt > 0.0:
        raise ValueError(f"Step must be positive, got {dt}")
    times = np.array([0.0, wave.total_time] if times is None else times, dtype=float)

    stiffness = dt * float(np.max(np.abs(model.energies)))
    if stiffness >= STABILITY_LIMIT:
        logger.warning(f"Step {dt * 1e12:.3f} ps gives dt*max|w| = {stiffness:.3f} "
                       f">= {STABILITY_LIMIT}")

    log_propagation(label, "start", f"K={model.dimension}, columns={psi.shape[1]}, "
                                    f"t={times[0] * 1e9:.2f}->{times[-1] * 1e9:.2f} ns")
    samples = [psi.copy()]
    for start, stop in zip(times[:-1], times[1:]):
        if stop != start:
            steps = max(1, int(math.ceil(abs(stop - start) / dt - 1e-9)))
            psi = _lawson_segment(model, wave, psi, start, stop, steps)
        samples.append(psi.copy())

    states = np.stack(samples)
    drift = float(np.max(np.abs(np.linalg.norm(states, axis=1) - 1.0)))
    if drift > DRIFT_LIMIT:
        raise StepSizeError(f"Norm drift {drift:.2e} exceeds {DRIFT_LIMIT:.0e}; reduce the step",
                            {"norm_drift": drift, "dt_ps": dt * 1e12})
    if drift > DRIFT_WARNING:
        logger.warning(f"Propagation [{label}] norm drift {drift:.2e}")
    log_propagation(label, "done", f"norm drift {drift:.2e}")
    if single:
        states = states[:, :, 0]
    return Trajectory(times=times, states=states, norm_drift=drift)


def propagate_full_space(assembly: HamiltonianAssembly, wave: DriveWaveform,
                         psi0: np.ndarray, dt: float, times: Optional[Sequence[float]] = None,
                         include_flux_rate: bool = True,
                         reference_energy: float = 0.0) -> Trajectory:
    """
    Plain RK4 on the full charge space, H(t) - reference_energy.

    Slow; meant as a cross-check of the reduced propagation on small cutoffs.
    """
    ops = assembly.operators
    static = (assembly.static_part
              - reference_energy * sp.identity(ops.grid.total_dim, format="csr")).astype(complex)
    ej5 = assembly.energies.coupler_frequency
    rate_scale = assembly.energies.physical.hbar / assembly.energies.shunt_charging_energy
    psi = np.array(psi0, dtype=complex, copy=True)
    times = np.array([0.0, wave.total_time] if times is None else times, dtype=float)

    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        flux = float(wave.value(t))
        a = 2.0 * ej5 * math.sin(0.5 * flux) ** 2
        b = ej5 * math.sin(flux)
        out = static @ state + a * (ops.coupler_cos @ state) + b * (ops.coupler_sin @ state)
        if include_flux_rate and rate_scale != 0.0:
            out = out + rate_scale * float(wave.derivative(t)) * (ops.drive_op @ state)
        return -1j * out

    samples = [psi.copy()]
    for start, stop in zip(times[:-1], times[1:]):
        steps = max(1, int(math.ceil(abs(stop - start) / dt - 1e-9))) if stop != start else 0
        h = (stop - start) / steps if steps else 0.0
        t = start
        for _ in range(steps):
            k1 = rhs(t, psi)
            k2 = rhs(t + 0.5 * h, psi + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, psi + 0.5 * h * k2)
            k4 = rhs(t + h, psi + h * k3)
            psi = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = start + (_ + 1) * h
        samples.append(psi.copy())
    states = np.stack(samples)
    drift = float(np.max(np.abs(np.linalg.norm(states, axis=1) - 1.0)))
    return Trajectory(times=times, states=states, norm_drift=drift)


# Chevron

CHEVRON_COLUMNS = ("omega_d_GHz", "t_ns", "P10", "P01")


@dataclass(frozen=True)
class ChevronMaps:
    """P10 and P01 from |01> under CW drive, indexed [frequency, time]."""
    amplitude: float
    frequencies: np.ndarray
    times: np.ndarray
    p10: np.ndarray
    p01: np.ndarray
    errors: Dict[float, str] = field(default_factory=dict)

    def csv_rows(self):
        rows = []
        for i, frequency in enumerate(self.frequencies):
            for j, t in enumerate(self.times):
                rows.append([frequency / TWO_PI / 1e9, t * 1e9,
                             None if np.isnan(self.p10[i, j]) else self.p10[i, j],
                             None if np.isnan(self.p01[i, j]) else self.p01[i, j]])
        return rows


def chevron(model: ReducedModel, amplitude: float, frequencies: Sequence[float],
            times: Sequence[float], dt: float, threads: int = 1,
            phase: float = -math.pi / 2) -> ChevronMaps:
    """
    Population maps under a continuous flux drive starting from |01>.

    Each drive frequency (rad/s) is one propagation sampled at `times` (s,
    ascending). Columns that fail keep NaN entries and an error message.
    """
    frequencies = np.asarray(frequencies, dtype=float)
    times = np.asarray(times, dtype=float)
    grid = times if times[0] == 0.0 else np.concatenate([[0.0], times])
    offset = grid.size - times.size
    i10 = model.index(STATE_10)
    i01 = model.index(STATE_01)
    psi0 = model.basis_state(STATE_01)

    def column(frequency: float):
        wave = DriveWaveform.continuous_wave(amplitude, frequency, max(grid[-1], dt), phase)
        trajectory = propagate(model, wave, psi0, dt, grid,
                               label=f"chevron {frequency / TWO_PI / 1e6:.2f} MHz")
        return trajectory.populations(i10)[offset:], trajectory.populations(i01)[offset:]

    results = run_parallel(column, list(frequencies), threads)
    p10 = np.full((frequencies.size, times.size), np.nan)
    p01 = np.full((frequencies.size, times.size), np.nan)
    errors: Dict[float, str] = {}
    for i, (frequency, result) in enumerate(zip(frequencies, results)):
        if isinstance(result, Exception):
            logger.warning(f"Chevron column {frequency / TWO_PI / 1e6:.3f} MHz failed: {result}")
            errors[float(frequency)] = f"{type(result).__name__}: {result}"
            continue
        p10[i], p01[i] = result
    return ChevronMaps(amplitude=amplitude, frequencies=frequencies, times=times,
                       p10=p10, p01=p01, errors=errors)


@dataclass(frozen=True)
class ChevronFit:
    """g and omega_res (rad/s) from Omega^2 = 4 g^2 + kappa (omega_d - omega_res)^2."""
    rate: float
    resonance: float
    curvature: float
    covariance: np.ndarray
    frequencies: np.ndarray
    oscillation: np.ndarray

    @property
    def rate_error(self) -> float:
        return float(math.sqrt(max(self.covariance[0, 0], 0.0)))

    @property
    def resonance_error(self) -> float:
        return float(math.sqrt(max(self.covariance[1, 1], 0.0)))


def _oscillation_frequency(times: np.ndarray, trace: np.ndarray) -> Optional[float]:
    """Dominant angular frequency of a uniformly sampled trace, refined by least squares."""
    if np.ptp(trace) < MIN_CONTRAST:
        return None
    step = times[1] - times[0]
    centred = trace - trace.mean()
    spectrum = np.abs(np.fft.rfft(centred))
    spectrum[0] = 0.0
    peak = int(np.argmax(spectrum))
    if peak < 1:
        return None
    bin_width = TWO_PI / (step * times.size)
    guess = peak * bin_width
    t = times - times[0]

    def residual(omega: float) -> float:
        design = np.column_stack([np.ones_like(t), np.cos(omega * t), np.sin(omega * t)])
        _, res, _, _ = np.linalg.lstsq(design, trace, rcond=None)
        if res.size:
            return float(res[0])
        fitted = design @ np.linalg.lstsq(design, trace, rcond=None)[0]
        return float(np.sum((trace - fitted) ** 2))

    lower = max(guess - bin_width, 0.5 * bin_width)
    result = minimize_scalar(residual, bounds=(lower, guess + bin_width), method="bounded",
                             options={"xatol": bin_width * 1e-6})
    omega = float(result.x)
    if omega * (times[-1] - times[0]) < TWO_PI:
        return None
    return omega


def extract_iswap_rate(maps: ChevronMaps, curvature_guess: float = 16.0) -> ChevronFit:
    """
    Fit the per-column oscillation frequency of P10 to a hyperbola in omega_d.

    Raises:
        ExtractionError: With fewer than five columns showing an oscillation
    """
    times = maps.times
    if times.size < 8 or not np.allclose(np.diff(times), times[1] - times[0]):
        raise ExtractionError("Chevron times must be uniform with at least 8 samples")
    used, omegas = [], []
    for frequency, trace in zip(maps.frequencies, maps.p10):
        if np.any(np.isnan(trace)):
            continue
        omega = _oscillation_frequency(times, trace)
        if omega is not None:
            used.append(frequency)
            omegas.append(omega)
    if len(used) < MIN_COLUMNS:
        raise ExtractionError(
            f"Only {len(used)} chevron columns oscillate with contrast >= {MIN_CONTRAST}",
            {"usable_columns": len(used), "required": MIN_COLUMNS},
        )

    unit = TWO_PI * 1e6
    x = np.asarray(used) / unit
    y = np.asarray(omegas) / unit

    def hyperbola(detuning, rate, resonance, curvature):
        return np.sqrt(4.0 * rate ** 2 + curvature * (detuning - resonance) ** 2)

    start = (0.5 * y.min(), x[int(np.argmin(y))], curvature_guess)
    try:
        params, covariance = curve_fit(hyperbola, x, y, p0=start,
                                       bounds=([0.0, x.min() - 10 * np.ptp(x) - 1, 0.0],
                                               [np.inf, x.max() + 10 * np.ptp(x) + 1, np.inf]),
                                       maxfev=20000)
    except (RuntimeError, ValueError) as e:
        raise ExtractionError(f"Hyperbola fit failed: {e}") from e
    rate, resonance, curvature = params
    covariance = np.asarray(covariance, dtype=float)
    scale = np.diag([unit, unit, 1.0])
    logger.info(f"Chevron fit: g/2pi={rate:.4f} MHz, omega_res/2pi={resonance:.4f} MHz, "
                f"kappa={curvature:.3f}")
    return ChevronFit(rate=float(rate * unit), resonance=float(resonance * unit),
                      curvature=float(curvature), covariance=scale @ covariance @ scale,
                      frequencies=np.asarray(used), oscillation=np.asarray(omegas))


# Process matrix and metrics

@dataclass(frozen=True)
class ProcessMatrix:
    """4x4 map on |00>, |01>, |10>, |11> (rows: outputs, columns: inputs)."""
    matrix: np.ndarray
    phase_corrected: bool = False

    @property
    def leakage_per_input(self) -> np.ndarray:
        return np.clip(1.0 - np.sum(np.abs(self.matrix) ** 2, axis=0), 0.0, 1.0)

    @property
    def leakage(self) -> float:
        return float(np.max(self.leakage_per_input))

    @property
    def unitarity_deficiency(self) -> float:
        """Spectral norm of U^dagger U - I."""
        gram = self.matrix.conj().T @ self.matrix
        return float(np.linalg.norm(gram - np.eye(4), 2))

    def table(self) -> Dict[str, list]:
        return {"real": self.matrix.real.tolist(), "imag": self.matrix.imag.tolist(),
                "magnitude": np.abs(self.matrix).tolist()}


def process_unitary(model: ReducedModel, wave: DriveWaveform, dt: float) -> ProcessMatrix:
    """
    Propagate the four computational states over the gate and build U.

    U[2i+j, 2i'+j'] = <ij|U|i'j'>, with the global phase fixed so that
    U[0, 0] is real and positive.
    """
    indices = [model.index(label) for label in COMPUTATIONAL_LABELS]
    psi0 = np.zeros((model.dimension, 4), dtype=complex)
    psi0[indices, np.arange(4)] = 1.0
    trajectory = propagate(model, wave, psi0, dt, label="process")
    final = trajectory.final
    matrix = final[indices, :]
    anchor = matrix[0, 0]
    if abs(anchor) > 0.0:
        matrix = matrix * (abs(anchor) / anchor)
    return ProcessMatrix(matrix=matrix)


def phase_correct(process: ProcessMatrix) -> ProcessMatrix:
    """
    Apply Z rotations on both qubits so the swap entries carry phase -pi/2.

    Raises:
        PhaseCorrectionError: When a swap entry is too small to define a phase
    """
    if process.phase_corrected:
        raise ValueError("Process matrix is already phase corrected")
    u = process.matrix
    if abs(u[1, 2]) < MIN_SWAP_AMPLITUDE or abs(u[2, 1]) < MIN_SWAP_AMPLITUDE:
        raise PhaseCorrectionError("Swap entries vanish; single-qubit frames are undefined",
                                   {"u_01_10": abs(u[1, 2]), "u_10_01": abs(u[2, 1])})
    theta_b = -math.pi / 2 - float(np.angle(u[1, 2]))
    theta_a = -math.pi / 2 - float(np.angle(u[2, 1]))
    frame = np.exp(1j * np.array([0.0, theta_b, theta_a, theta_a + theta_b]))
    return ProcessMatrix(matrix=frame[:, None] * u, phase_corrected=True)


def gate_fidelity(matrix: np.ndarray, ideal: np.ndarray = IDEAL_ISWAP) -> float:
    """(|Tr(U_ideal^dagger U)|^2 + Tr(U^dagger U)) / (d(d+1)), U possibly non-unitary."""
    matrix = np.asarray(matrix, dtype=complex)
    d = ideal.shape[0]
    overlap = abs(np.trace(ideal.conj().T @ matrix)) ** 2
    norm = float(np.real(np.trace(matrix.conj().T @ matrix)))
    return float((overlap + norm) / (d * (d + 1)))


def effective_zz(process: ProcessMatrix, total_time: float) -> Tuple[float, float]:
    """
    (phi_ZZ, zeta_eff) from the phase-corrected |11> entry: phi_ZZ = -arg(U'_33).

    Raises:
        DepletedAmplitudeError: When |U'_33| <= 0.5
    """
    entry = process.matrix[3, 3]
    if abs(entry) <= 0.5:
        raise DepletedAmplitudeError(f"|U_33| = {abs(entry):.3f} is too small",
                                     {"u_33": abs(entry)})
    phase = -float(np.angle(entry))
    return phase, phase / total_time


def _waveform_quadrature(wave: DriveWaveform, curve: CubicSpline, rtol: float) -> float:
    low, high = float(curve.x[0]), float(curve.x[-1])
    points = 4096
    previous = None
    while True:
        times = np.linspace(0.0, wave.total_time, points + 1)
        flux = wave.value(times)
        if flux.min() < low - 1e-12 or flux.max() > high + 1e-12:
            raise FluxRangeError(
                f"Waveform reaches phi/2pi in [{flux.min() / TWO_PI:.4f}, "
                f"{flux.max() / TWO_PI:.4f}], outside the tabulated "
                f"[{low / TWO_PI:.4f}, {high / TWO_PI:.4f}]")
        value = float(trapezoid(curve(flux), times)) / wave.total_time
        if previous is not None and abs(value - previous) <= rtol * max(abs(value), 1e-300):
            return value
        if points >= 2 ** 22:
            logger.warning("Waveform quadrature did not reach the requested tolerance")
            return value
        previous = value
        points *= 2


def averaged_static_zz(wave: DriveWaveform, zeta_curve: CubicSpline,
                       rtol: float = 1e-3) -> float:
    """zeta_avg = (1/t_tot) * integral of zeta(phi_ex(t)) dt, by doubling trapezoid quadrature."""
    return _waveform_quadrature(wave, zeta_curve, rtol)


def hybridization_trace(wave: DriveWaveform, pbar_curve: CubicSpline,
                        step: float = 0.1e-9) -> Tuple[np.ndarray, np.ndarray]:
    """p_bar^c(phi_ex(t)) sampled along the waveform."""
    times, flux = wave.sample(step)
    low, high = float(pbar_curve.x[0]), float(pbar_curve.x[-1])
    peak = wave.peak_flux()
    if peak > min(-low, high) and (flux.min() < low - 1e-12 or flux.max() > high + 1e-12):
        raise FluxRangeError(
            f"Waveform leaves the tabulated flux range [{low / TWO_PI:.4f}, {high / TWO_PI:.4f}]")
    return times, np.clip(pbar_curve(flux), 0.0, 1.0)


@dataclass(frozen=True)
class GateMetrics:
    fidelity: float
    zz_phase: float
    zeta_eff: float
    leakage: float
    process: ProcessMatrix
    zeta_avg: Optional[float] = None

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity

    @property
    def zeta_dyn(self) -> Optional[float]:
        if self.zeta_avg is None:
            return None
        return self.zeta_eff - self.zeta_avg


def evaluate_gate(model: ReducedModel, wave: DriveWaveform, dt: float,
                  zeta_curve: Optional[CubicSpline] = None) -> GateMetrics:
    """Process matrix, phase correction, fidelity and ZZ figures for one waveform."""
    raw = process_unitary(model, wave, dt)
    corrected = phase_correct(raw)
    fidelity = gate_fidelity(corrected.matrix)
    try:
        zz_phase, zeta_eff = effective_zz(corrected, wave.total_time)
    except DepletedAmplitudeError:
        zz_phase, zeta_eff = math.nan, math.nan
        logger.warning("ZZ phase undefined: |11> amplitude depleted")
    zeta_avg = averaged_static_zz(wave, zeta_curve) if zeta_curve is not None else None
    return GateMetrics(fidelity=fidelity, zz_phase=zz_phase, zeta_eff=zeta_eff,
                       leakage=raw.leakage, process=corrected, zeta_avg=zeta_avg)
