"""
Benchmarking and coherence analysis: randomized-benchmarking decay fits,
the iSWAP error budget and the flux-noise fit of echo decays.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit, least_squares, lsq_linear

from .config import CoherenceSettings
from .errors import FitError
from .utils import log_fit_event, read_csv_columns

logger = logging.getLogger(__name__)

SEQUENCE_FIDELITY = "sequence_fidelity"
LEAKAGE_FREE = "leakage_free"
STANDARD = "standard"
INTERLEAVED = "interleaved"
RB_KINDS = (SEQUENCE_FIDELITY, LEAKAGE_FREE)
RB_VARIANTS = (STANDARD, INTERLEAVED)

TWO_QUBIT_DIMENSION = 4
MIN_LENGTHS = 4
DEGENERATE_AMPLITUDE = 1e-9
DEGENERATE_CORRELATION = 0.98
MICRO = 1e-6


@dataclass(frozen=True)
class RBDataset:
    """One RB decay: Clifford counts m and the measured probability at each."""
    lengths: np.ndarray
    values: np.ndarray
    stderr: Optional[np.ndarray] = None
    kind: str = SEQUENCE_FIDELITY
    variant: str = STANDARD

    def __post_init__(self):
        lengths = np.asarray(self.lengths)
        values = np.asarray(self.values, dtype=float)
        if lengths.ndim != 1 or lengths.shape != values.shape:
            raise ValueError("lengths and values must be 1-D arrays of equal size")
        if np.any(lengths <= 0) or np.any(np.asarray(lengths, dtype=float) % 1.0 != 0.0):
            raise ValueError("Clifford counts must be positive integers")
        if np.any(values < 0.0) or np.any(values > 1.0) or not np.all(np.isfinite(values)):
            raise ValueError("RB values must be probabilities in [0, 1]")
        if self.stderr is not None:
            stderr = np.asarray(self.stderr, dtype=float)
            if stderr.shape != values.shape or np.any(stderr <= 0.0):
                raise ValueError("stderr must be positive and match the values")
            object.__setattr__(self, "stderr", stderr)
        if self.kind not in RB_KINDS:
            raise ValueError(f"Unknown RB kind '{self.kind}', expected one of {RB_KINDS}")
        if self.variant not in RB_VARIANTS:
            raise ValueError(f"Unknown RB variant '{self.variant}', expected one of {RB_VARIANTS}")
        object.__setattr__(self, "lengths", lengths.astype(int))
        object.__setattr__(self, "values", values)

    @classmethod
    def from_csv(cls, path: str, kind: str = SEQUENCE_FIDELITY,
                 variant: str = STANDARD) -> "RBDataset":
        """Columns m, value and optionally stderr."""
        columns = read_csv_columns(path)
        if "m" not in columns or "value" not in columns:
            raise ValueError(f"{path}: RB file needs 'm' and 'value' columns")
        try:
            lengths = np.array([int(float(cell)) for cell in columns["m"]])
            values = np.array([float(cell) for cell in columns["value"]])
            stderr = None
            if "stderr" in columns and all(cell for cell in columns["stderr"]):
                stderr = np.array([float(cell) for cell in columns["stderr"]])
        except ValueError as e:
            raise ValueError(f"{path}: malformed RB value ({e})") from e
        return cls(lengths=lengths, values=values, stderr=stderr, kind=kind, variant=variant)

    @property
    def distinct_lengths(self) -> int:
        return int(np.unique(self.lengths).size)


@dataclass(frozen=True)
class RBFit:
    """P(m) = A lambda^m + B."""
    amplitude: float
    decay: float
    offset: float
    amplitude_err: float
    decay_err: float
    offset_err: float
    residual_norm: float
    physical: bool = True
    warnings: Tuple[str, ...] = ()


def _decay_model(params: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    amplitude, decay, offset = params
    return amplitude * decay ** lengths + offset


def _decay_jacobian(params: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    amplitude, decay, _ = params
    powers = decay ** lengths
    return np.column_stack([powers,
                            amplitude * lengths * decay ** (lengths - 1.0),
                            np.ones_like(lengths)])


def _initial_decay(lengths: np.ndarray, values: np.ndarray) -> np.ndarray:
    order = np.argsort(lengths)
    lengths, values = lengths[order], values[order]
    tail = max(1, lengths.size // 4)
    offset = float(np.mean(values[-tail:]))
    amplitude = float(values[0] - offset)
    middle = lengths.size // 2
    head_excess = values[0] - offset
    middle_excess = values[middle] - offset
    decay = 0.99
    if head_excess * middle_excess > 0.0 and lengths[middle] > lengths[0]:
        ratio = middle_excess / head_excess
        decay = float(np.clip(ratio ** (1.0 / (lengths[middle] - lengths[0])), 0.5, 0.99999))
    return np.array([amplitude, decay, offset])


def fit_decay(data: RBDataset) -> RBFit:
    """
    Least-squares fit of A lambda^m + B with an analytic Jacobian.

    Points are weighted by 1/stderr when the dataset carries uncertainties.
    Standard errors come from the Jacobian at the optimum scaled by the
    reduced chi-square. A vanishing amplitude or lambda outside (0, 1]
    returns the fit flagged as unphysical.

    Raises:
        ValueError: Fewer than four distinct Clifford counts
        FitError: The solver did not converge
    """
    if data.distinct_lengths < MIN_LENGTHS:
        raise ValueError(f"Need at least {MIN_LENGTHS} distinct Clifford counts, "
                         f"got {data.distinct_lengths}")
    lengths = data.lengths.astype(float)
    values = data.values
    weights = 1.0 / data.stderr if data.stderr is not None else np.ones_like(values)
    scale = max(float(np.max(np.abs(values))), 1e-300)
    start = _initial_decay(lengths, values)

    if abs(start[0]) <= DEGENERATE_AMPLITUDE * scale and np.ptp(values) <= DEGENERATE_AMPLITUDE * scale:
        message = "Decay amplitude vanishes; lambda is unidentifiable"
        logger.warning(f"{data.variant}/{data.kind}: {message}")
        return RBFit(amplitude=0.0, decay=math.nan, offset=float(np.mean(values)),
                     amplitude_err=math.inf, decay_err=math.inf, offset_err=math.inf,
                     residual_norm=float(np.linalg.norm(values - np.mean(values))),
                     physical=False, warnings=(message,))

    def residuals(params):
        return weights * (_decay_model(params, lengths) - values)

    def jacobian(params):
        return weights[:, None] * _decay_jacobian(params, lengths)

    try:
        result = least_squares(residuals, start, jac=jacobian, method="trf",
                               x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                               max_nfev=2000)
    except (ValueError, FloatingPointError) as e:
        raise FitError(f"RB decay fit failed: {e}", {"variant": data.variant,
                                                     "kind": data.kind}) from e
    if not result.success or not np.all(np.isfinite(result.x)):
        raise FitError(f"RB decay fit did not converge: {result.message}",
                       {"variant": data.variant, "kind": data.kind})

    amplitude, decay, offset = (float(v) for v in result.x)
    dof = max(lengths.size - 3, 1)
    chi2 = float(np.sum(result.fun ** 2))
    try:
        covariance = np.linalg.inv(result.jac.T @ result.jac) * (chi2 / dof)
        errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    except np.linalg.LinAlgError:
        errors = np.full(3, math.inf)

    warnings: List[str] = []
    if abs(amplitude) <= DEGENERATE_AMPLITUDE * scale:
        warnings.append("Decay amplitude vanishes; lambda is unidentifiable")
    if not 0.0 < decay <= 1.0:
        warnings.append(f"lambda={decay:.6f} outside (0, 1]")
    for warning in warnings:
        logger.warning(f"{data.variant}/{data.kind}: {warning}")

    fit = RBFit(amplitude=amplitude, decay=decay, offset=offset,
                amplitude_err=float(errors[0]), decay_err=float(errors[1]),
                offset_err=float(errors[2]),
                residual_norm=float(np.linalg.norm(_decay_model(result.x, lengths) - values)),
                physical=not warnings, warnings=tuple(warnings))
    log_fit_event("rb", f"{data.variant}/{data.kind}",
                  f"lambda={decay:.6f}({fit.decay_err:.1e}), A={amplitude:.4f}, B={offset:.4f}")
    return fit


def decay_to_error(decay: float, dimension: int = TWO_QUBIT_DIMENSION) -> float:
    """r = (1 - lambda)(1 - 1/d)."""
    return (1.0 - decay) * (1.0 - 1.0 / dimension)


@dataclass(frozen=True)
class InterleavedError:
    """Reference, interleaved and gate error rates with 1-sigma uncertainties."""
    reference: float
    interleaved: float
    gate: float
    reference_err: float = 0.0
    interleaved_err: float = 0.0
    gate_err: float = 0.0
    warnings: Tuple[str, ...] = ()


def _interleave(lambda_srb: float, lambda_irb: float, dimension: int,
                lambda_srb_err: float, lambda_irb_err: float, what: str) -> InterleavedError:
    for name, value in (("reference", lambda_srb), ("interleaved", lambda_irb)):
        if not 0.0 < value <= 1.0:
            raise ValueError(f"{name} lambda must be in (0, 1], got {value}")
    if dimension < 2:
        raise ValueError(f"Dimension must be at least 2, got {dimension}")
    factor = 1.0 - 1.0 / dimension
    r_srb = decay_to_error(lambda_srb, dimension)
    r_irb = decay_to_error(lambda_irb, dimension)
    gate = 1.0 - (1.0 - r_irb) / (1.0 - r_srb)

    srb_err = factor * lambda_srb_err
    irb_err = factor * lambda_irb_err
    d_irb = 1.0 / (1.0 - r_srb)
    d_srb = -(1.0 - r_irb) / (1.0 - r_srb) ** 2
    gate_err = math.hypot(d_irb * irb_err, d_srb * srb_err)

    warnings = []
    if gate < 0.0:
        qualifier = "beyond" if gate + gate_err < 0.0 else "within"
        warnings.append(f"Negative {what} {gate:.3e} ({qualifier} its uncertainty "
                        f"{gate_err:.1e}); interleaved decay is slower than the reference")
        logger.warning(warnings[-1])
    return InterleavedError(reference=r_srb, interleaved=r_irb, gate=gate,
                            reference_err=srb_err, interleaved_err=irb_err,
                            gate_err=gate_err, warnings=tuple(warnings))


def interleaved_error(lambda_srb: float, lambda_irb: float,
                      dimension: int = TWO_QUBIT_DIMENSION,
                      lambda_srb_err: float = 0.0,
                      lambda_irb_err: float = 0.0) -> InterleavedError:
    """
    r^X = (1 - lambda^X)(1 - 1/d) and r_iSWAP = 1 - (1 - r^IRB)/(1 - r^SRB).

    Uncertainties are propagated to first order. A negative gate error is
    returned as is, with a warning.
    """
    return _interleave(lambda_srb, lambda_irb, dimension, lambda_srb_err, lambda_irb_err,
                       "gate error")


def leakage_error(lambda_srb: float, lambda_irb: float,
                  dimension: int = TWO_QUBIT_DIMENSION,
                  lambda_srb_err: float = 0.0,
                  lambda_irb_err: float = 0.0) -> InterleavedError:
    """L1 = 1 - (1 - L1^IRB)/(1 - L1^SRB) from the leakage-free decay rates."""
    return _interleave(lambda_srb, lambda_irb, dimension, lambda_srb_err, lambda_irb_err,
                       "leakage")


def coherent_zz_error(phase: float, compensated: bool = True, exact: bool = True) -> float:
    """
    Average infidelity from a residual controlled phase phi_ZZ.

    Compensated by equal virtual-Z rotations phi_ZZ/2:
    1 - (4|1 + exp(i phi/2)|^2 + 4)/20, about phi^2/20. Uncompensated:
    1 - (|3 + exp(-i phi)|^2 + 4)/20, about 3 phi^2/20.
    """
    if not abs(phase) < math.pi:
        raise ValueError(f"|phi_ZZ| must be below pi, got {phase}")
    if not exact:
        return phase ** 2 / 20.0 if compensated else 3.0 * phase ** 2 / 20.0
    if compensated:
        overlap = abs(1.0 + np.exp(0.5j * phase)) ** 2
        return float(1.0 - (4.0 * overlap + 4.0) / 20.0)
    overlap = abs(3.0 + np.exp(-1j * phase)) ** 2
    return float(1.0 - (overlap + 4.0) / 20.0)


def zz_compensation_angle(phase: float) -> float:
    """Virtual-Z angle on each qubit that minimizes the compensated error."""
    return 0.5 * phase


def dephasing_rate(t1: float, t2: float) -> float:
    """Pure dephasing 1/T2 - 1/(2 T1)."""
    if t1 <= 0.0 or t2 <= 0.0:
        raise ValueError("Coherence times must be positive")
    return 1.0 / t2 - 0.5 / t1


def idle_rate(t1: float, t2_star: float) -> float:
    """Gamma_idle = 1/T1 + Gamma*_phi, with the Ramsey dephasing time."""
    return 1.0 / t1 + dephasing_rate(t1, t2_star)


def idle_error(rates: Sequence[float], idle_pad: float) -> float:
    """r_idle = (2 * 2 t_idle / 5) * sum(Gamma_idle); idle_pad is one pad t_idle."""
    if any(rate < 0.0 for rate in rates):
        raise ValueError("Idle decay rates must be nonnegative")
    if idle_pad < 0.0:
        raise ValueError("Idle time must be nonnegative")
    return 2.0 * 2.0 * idle_pad / 5.0 * float(sum(rates))


def incoherent_error(total_time: float, t1: Sequence[float],
                     t_phi: Sequence[float]) -> Tuple[float, float]:
    """
    r_incoh = (2 t_tot / 5) sum_i (1/T1_i + 1/Tphi_i) and T_eff = (2/5) t_tot / r_incoh.

    Infinite times contribute nothing; T_eff is infinite when r_incoh = 0.
    """
    if total_time <= 0.0:
        raise ValueError("Gate time must be positive")
    if len(t1) != len(t_phi):
        raise ValueError("Need one T1 and one Tphi per qubit")
    if any(t <= 0.0 for t in (*t1, *t_phi)):
        raise ValueError("Coherence times must be positive")
    rate = sum(1.0 / t for t in t1) + sum(1.0 / t for t in t_phi)
    error = 2.0 * total_time / 5.0 * rate
    effective = 2.0 / 5.0 * total_time / error if error > 0.0 else math.inf
    return error, effective


def depolarizing_time(total_time: float, depolarizing_error: float) -> float:
    """T^D = (2/5) t_tot / r^D."""
    if depolarizing_error <= 0.0:
        return math.inf
    return 2.0 / 5.0 * total_time / depolarizing_error


@dataclass(frozen=True)
class ErrorBudget:
    """Gate error decomposition; rates dimensionless, times in s."""
    r_iswap: float
    leakage: float
    epsilon: float
    r_depolarizing: float
    dimension: int = TWO_QUBIT_DIMENSION
    r_iswap_err: float = 0.0
    leakage_err: float = 0.0
    epsilon_err: float = 0.0
    r_depolarizing_err: float = 0.0
    t_depolarizing: Optional[float] = None
    r_zz: Optional[float] = None
    r_idle: Optional[float] = None
    r_incoh: Optional[float] = None
    t_effective: Optional[float] = None
    warnings: Tuple[str, ...] = ()

    def as_report(self) -> Dict[str, Optional[float]]:
        report = {
            "r_iswap": self.r_iswap, "r_iswap_err": self.r_iswap_err,
            "leakage_l1": self.leakage, "leakage_l1_err": self.leakage_err,
            "epsilon": self.epsilon, "epsilon_err": self.epsilon_err,
            "r_depolarizing": self.r_depolarizing,
            "r_depolarizing_err": self.r_depolarizing_err,
            "dimension": self.dimension,
            "r_zz": self.r_zz, "r_idle": self.r_idle, "r_incoh": self.r_incoh,
        }
        if self.t_depolarizing is not None:
            report["t_depolarizing_us"] = self.t_depolarizing / MICRO
        if self.t_effective is not None:
            report["t_effective_us"] = self.t_effective / MICRO
        report["warnings"] = list(self.warnings)
        return report


def error_budget(gate: InterleavedError, leakage: InterleavedError,
                 dimension: int = TWO_QUBIT_DIMENSION,
                 total_time: Optional[float] = None,
                 zz_phase: Optional[float] = None,
                 idle_rates: Optional[Sequence[float]] = None,
                 idle_pad: Optional[float] = None,
                 coherence: Optional[CoherenceSettings] = None) -> ErrorBudget:
    """
    epsilon = r_iSWAP + L1/d and r^D = r_iSWAP - (d - 1) L1/d, plus whichever
    coherent-ZZ, idle and incoherent terms the inputs allow.
    """
    r, l1 = gate.gate, leakage.gate
    epsilon = r + l1 / dimension
    r_depolarizing = r - (dimension - 1) * l1 / dimension
    epsilon_err = math.hypot(gate.gate_err, leakage.gate_err / dimension)
    r_depolarizing_err = math.hypot(gate.gate_err, (dimension - 1) * leakage.gate_err / dimension)

    t_depolarizing = None
    r_incoh = t_effective = None
    if total_time is not None:
        t_depolarizing = depolarizing_time(total_time, r_depolarizing)
        if coherence is not None:
            t1 = [t * MICRO for t in coherence.t1_us]
            t_phi = [1.0 / dephasing_rate(t1_i, t2 * MICRO)
                     for t1_i, t2 in zip(t1, coherence.t2_echo_us)]
            r_incoh, t_effective = incoherent_error(total_time, t1, t_phi)

    r_idle = None
    if idle_pad is not None:
        if idle_rates is None and coherence is not None:
            idle_rates = [idle_rate(t1 * MICRO, t2 * MICRO)
                          for t1, t2 in zip(coherence.t1_us, coherence.t2_star_us)]
        if idle_rates is not None:
            r_idle = idle_error(idle_rates, idle_pad)

    r_zz = coherent_zz_error(zz_phase) if zz_phase is not None else None
    warnings = (*gate.warnings, *leakage.warnings)
    if r_depolarizing + r_depolarizing_err < 0.0:
        warnings += (f"Depolarizing error {r_depolarizing:.3e} is negative beyond "
                     f"its uncertainty",)
    return ErrorBudget(r_iswap=r, leakage=l1, epsilon=epsilon, r_depolarizing=r_depolarizing,
                       dimension=dimension, r_iswap_err=gate.gate_err,
                       leakage_err=leakage.gate_err, epsilon_err=epsilon_err,
                       r_depolarizing_err=r_depolarizing_err, t_depolarizing=t_depolarizing,
                       r_zz=r_zz, r_idle=r_idle, r_incoh=r_incoh, t_effective=t_effective,
                       warnings=warnings)


def synthesize_rb(decay: float, amplitude: float, offset: float, lengths: Sequence[int],
                  noise: float = 0.0, seed: int = 0, kind: str = SEQUENCE_FIDELITY,
                  variant: str = STANDARD) -> RBDataset:
    """Synthetic decay A lambda^m + B with Gaussian noise, clipped to [0, 1]."""
    if not 0.0 < decay <= 1.0:
        raise ValueError(f"lambda must be in (0, 1], got {decay}")
    if noise < 0.0:
        raise ValueError("Noise level must be nonnegative")
    lengths = np.asarray(lengths, dtype=int)
    values = amplitude * decay ** lengths.astype(float) + offset
    if noise > 0.0:
        rng = np.random.default_rng(seed)
        values = values + rng.normal(0.0, noise, size=values.shape)
    return RBDataset(lengths=lengths, values=np.clip(values, 0.0, 1.0),
                     stderr=np.full(values.shape, noise) if noise > 0.0 else None,
                     kind=kind, variant=variant)


@dataclass(frozen=True)
class CoherenceRecord:
    """Coherence of one mode; times in s, sensitivity in rad/s per rad of flux."""
    mode: str
    t1: float
    t2_star: float
    t2_echo: float
    t1_err: float = 0.0
    t2_star_err: float = 0.0
    t2_echo_err: float = 0.0
    gamma_exp: Optional[float] = None
    gamma_phi_echo: Optional[float] = None
    sensitivity: Optional[float] = None

    def __post_init__(self):
        if min(self.t1, self.t2_star, self.t2_echo) <= 0.0:
            raise ValueError(f"{self.mode}: coherence times must be positive")
        if self.gamma_phi_echo is not None and self.gamma_phi_echo < 0.0:
            raise ValueError(f"{self.mode}: echo dephasing rate must be nonnegative")

    @property
    def idle_rate(self) -> float:
        return idle_rate(self.t1, self.t2_star)

    @property
    def echo_dephasing_time(self) -> float:
        return 1.0 / dephasing_rate(self.t1, self.t2_echo)


def coherence_records(settings: CoherenceSettings) -> List[CoherenceRecord]:
    return [CoherenceRecord(mode=f"q{index + 1}", t1=t1 * MICRO, t2_star=t2s * MICRO,
                            t2_echo=t2e * MICRO)
            for index, (t1, t2s, t2e) in enumerate(zip(settings.t1_us, settings.t2_star_us,
                                                       settings.t2_echo_us))]


@dataclass(frozen=True)
class EchoTrace:
    """Echo decay of one mode at one bias point."""
    mode: str
    times: np.ndarray
    values: np.ndarray
    sensitivity: float


@dataclass(frozen=True)
class EchoDecayFit:
    mode: str
    amplitude: float
    offset: float
    gamma_exp: float
    gamma_phi_echo: float
    gamma_exp_err: float
    gamma_phi_echo_err: float
    sensitivity: float
    warnings: Tuple[str, ...] = ()


@dataclass(frozen=True)
class EchoNoiseFit:
    """Gamma_PhiE = slope |d omega/d phi| + intercept, slope = 2 pi sqrt(A_Phi ln 2)."""
    traces: Tuple[EchoDecayFit, ...]
    slope: float
    intercept: float
    sqrt_amplitude: float
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def sqrt_amplitude_micro_phi0(self) -> float:
        return self.sqrt_amplitude / MICRO


def echo_model(t, amplitude, gamma_exp, gamma_phi, offset):
    return amplitude * np.exp(-gamma_exp * t - (gamma_phi * t) ** 2) + offset


def fit_echo_decay(trace: EchoTrace) -> EchoDecayFit:
    """
    Fit P(t) = A exp(-Gamma_exp t - (Gamma_PhiE t)^2) + B.

    Times are rescaled to the 1/e time of the data before fitting.

    Raises:
        FitError: When curve_fit fails
    """
    times = np.asarray(trace.times, dtype=float)
    values = np.asarray(trace.values, dtype=float)
    if times.size < 5 or times.shape != values.shape:
        raise ValueError(f"{trace.mode}: echo trace needs at least 5 matching samples")
    order = np.argsort(times)
    times, values = times[order], values[order]
    tail = max(1, times.size // 10)
    offset = float(np.mean(values[-tail:]))
    amplitude = float(values[0] - offset)
    if amplitude == 0.0:
        raise FitError(f"{trace.mode}: echo trace does not decay", {"mode": trace.mode})
    normalized = (values - offset) / amplitude
    below = np.nonzero(normalized < math.exp(-1.0))[0]
    tau = float(times[below[0]]) if below.size else float(times[-1])
    tau = tau if tau > 0.0 else float(times[-1])

    warnings: List[str] = []
    if times[-1] - times[0] < 3.0 * tau:
        warnings.append(f"{trace.mode}: trace spans fewer than 3 decay times")

    scaled = times / tau
    try:
        popt, pcov = curve_fit(echo_model, scaled, values,
                               p0=[amplitude, 0.5, 0.7, offset],
                               bounds=([-np.inf, 0.0, 0.0, -np.inf], [np.inf] * 4),
                               method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14,
                               max_nfev=20000)
    except (RuntimeError, ValueError) as e:
        raise FitError(f"{trace.mode}: echo fit failed: {e}", {"mode": trace.mode}) from e

    errors = np.sqrt(np.clip(np.diag(pcov), 0.0, None)) if np.all(np.isfinite(pcov)) \
        else np.full(4, math.inf)
    if np.all(np.isfinite(pcov)) and errors[1] > 0.0 and errors[2] > 0.0:
        correlation = pcov[1, 2] / (errors[1] * errors[2])
        if abs(correlation) > DEGENERATE_CORRELATION:
            warnings.append(f"{trace.mode}: exponential and Gaussian rates are degenerate "
                            f"(correlation {correlation:+.3f})")
    for warning in warnings:
        logger.warning(warning)

    fit = EchoDecayFit(mode=trace.mode, amplitude=float(popt[0]), offset=float(popt[3]),
                       gamma_exp=float(popt[1] / tau), gamma_phi_echo=float(popt[2] / tau),
                       gamma_exp_err=float(errors[1] / tau),
                       gamma_phi_echo_err=float(errors[2] / tau),
                       sensitivity=abs(float(trace.sensitivity)), warnings=tuple(warnings))
    log_fit_event("echo", trace.mode, f"Gamma_exp={fit.gamma_exp:.4e}/s, "
                                      f"Gamma_PhiE={fit.gamma_phi_echo:.4e}/s")
    return fit


def echo_noise_fit(traces: Sequence[EchoTrace]) -> EchoNoiseFit:
    """
    Fit every echo trace, then Gamma_PhiE against |d omega/d phi| over all
    modes with a nonnegative slope and intercept. The slope gives the 1/f
    flux-noise amplitude sqrt(A_Phi), in units of the flux quantum.
    """
    if len(traces) < 2:
        raise ValueError("Need at least two echo traces for the sensitivity fit")
    fits = tuple(fit_echo_decay(trace) for trace in traces)
    sensitivity = np.array([fit.sensitivity for fit in fits])
    rates = np.array([fit.gamma_phi_echo for fit in fits])
    if np.ptp(sensitivity) <= 0.0:
        raise FitError("Echo traces share one flux sensitivity; slope is undetermined")

    design = np.column_stack([sensitivity, np.ones_like(sensitivity)])
    column_scale = np.array([np.max(sensitivity), 1.0])
    result = lsq_linear(design / column_scale, rates, bounds=([0.0, 0.0], [np.inf, np.inf]))
    slope, intercept = (float(v) for v in result.x / column_scale)
    sqrt_amplitude = slope / (2.0 * math.pi * math.sqrt(math.log(2.0)))

    warnings = tuple(w for fit in fits for w in fit.warnings)
    log_fit_event("flux-noise", "linear fit",
                  f"sqrt(A_Phi)={sqrt_amplitude / MICRO:.3f} uPhi0, intercept={intercept:.3e}/s")
    return EchoNoiseFit(traces=fits, slope=slope, intercept=intercept,
                        sqrt_amplitude=sqrt_amplitude, warnings=warnings)


def synthesize_echo(mode: str, times: Sequence[float], gamma_exp: float,
                    sqrt_amplitude: float, sensitivity: float, amplitude: float = 0.5,
                    offset: float = 0.5, intercept: float = 0.0) -> EchoTrace:
    """Noise-free echo decay for a given flux-noise amplitude and sensitivity."""
    gamma_phi = (2.0 * math.pi * sqrt_amplitude * math.sqrt(math.log(2.0)) * abs(sensitivity)
                 + intercept)
    times = np.asarray(times, dtype=float)
    return EchoTrace(mode=mode, times=times,
                     values=echo_model(times, amplitude, gamma_exp, gamma_phi, offset),
                     sensitivity=sensitivity)
