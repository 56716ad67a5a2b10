"""
Bosonic toy model of the parametric iSWAP: two Duffing qubits coupled to the
coupler P and M modes, with the M-mode frequency modulated by the flux drive.

The modulation is expanded in harmonics of the drive, turned into phase
modulation of the qubit-M couplings (Jacobi-Anger, weights J_n(eta)) and
eliminated to second order, giving closed forms for the exchange rate and the
drive-induced ZZ shift of |11>.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .circuit import DerivedEnergies
from .errors import FluxRangeError, SingularityError
from .spectrum import RESONANCE_GUARD, build_bare_basis

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
BESSEL_RESCALE = 1e250


@dataclass(frozen=True)
class ToyParams:
    """
    Mode frequencies, anharmonicities and couplings in rad/s.

    omegam_curve gives the flux-tunable M-mode frequency and is even in flux.
    """
    omega1: float
    omega2: float
    omegap: float
    omegam: float
    alpha1: float
    alpha2: float
    g1p: float
    g1m: float
    g2p: float
    g2m: float
    omegam_curve: CubicSpline

    @property
    def detuning(self) -> float:
        """Delta_21 = omega_2 - omega_1."""
        return self.omega2 - self.omega1

    def with_frequencies(self, **frequencies: float) -> "ToyParams":
        """Copy with some frequencies or anharmonicities replaced, e.g. by full-model values."""
        allowed = {"omega1", "omega2", "omegap", "omegam", "alpha1", "alpha2"}
        unknown = set(frequencies) - allowed
        if unknown:
            raise ValueError(f"Cannot override {sorted(unknown)}")
        return replace(self, **frequencies)


def symmetric_curve(fluxes: Sequence[float], values: Sequence[float]) -> CubicSpline:
    """Even cubic spline through (flux, value) data averaged with its mirror image."""
    fluxes = np.asarray(fluxes, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = np.isfinite(fluxes) & np.isfinite(values)
    magnitudes = np.round(np.abs(fluxes[mask]), 12)
    values = values[mask]
    keys = np.unique(magnitudes)
    averaged = np.array([values[magnitudes == key].mean() for key in keys])
    if keys[0] == 0.0:
        x = np.concatenate([-keys[:0:-1], keys])
        y = np.concatenate([averaged[:0:-1], averaged])
    else:
        x = np.concatenate([-keys[::-1], keys])
        y = np.concatenate([averaged[::-1], averaged])
    if x.size < 4:
        raise ValueError(f"Need at least 4 symmetric points for a curve, got {x.size}")
    return CubicSpline(x, y)


def coupler_mode_curve(energies: DerivedEnergies, cutoff: int,
                       fluxes: Sequence[float]) -> CubicSpline:
    """M-mode frequency of the isolated coupler versus flux, as an even spline."""
    values = []
    for flux in fluxes:
        bare = build_bare_basis(energies, cutoff, float(flux))
        ground = bare.coupler_energies[bare.coupler_labels[(0, 0)]]
        values.append(bare.coupler_energies[bare.coupler_labels[(0, 1)]] - ground)
    return symmetric_curve(fluxes, values)


def toy_params_from_circuit(energies: DerivedEnergies,
                            omegam_curve: Optional[CubicSpline] = None,
                            cutoff: int = 8) -> ToyParams:
    """
    Harmonic-mode estimates of the toy-model parameters.

    omega_j = sqrt(8 W_jj E_Jj/hbar) - W_jj for the qubits, sqrt(8 W_kk E_Jk/hbar)
    for the coupler modes, alpha_j = -W_jj and
    g_jk = (W_jk/2) sqrt((omega_j + W_jj) omega_k / (W_jj W_kk)).

    Args:
        energies: Derived circuit energies
        omegam_curve: M-mode frequency versus flux, e.g. from a labeled flux
            sweep; defaults to the isolated coupler's M mode
        cutoff: Charge cutoff for the default curve

    Returns:
        ToyParams
    """
    w = energies.charging_matrix
    ej = energies.josephson_frequency
    w_pp = (w[2, 2] + w[3, 3] + 2.0 * w[2, 3]) / 4.0
    w_mm = (w[2, 2] + w[3, 3] - 2.0 * w[2, 3]) / 4.0
    ej_p = ej[2] + ej[3]
    ej_m = ej[2] + ej[3] + 4.0 * ej[4]

    omega1 = math.sqrt(8.0 * w[0, 0] * ej[0]) - w[0, 0]
    omega2 = math.sqrt(8.0 * w[1, 1] * ej[1]) - w[1, 1]
    omegap = math.sqrt(8.0 * w_pp * ej_p)
    omegam = math.sqrt(8.0 * w_mm * ej_m)

    def coupling(j: int, omega_j: float, w_jk: float, omega_k: float, w_kk: float) -> float:
        return 0.5 * w_jk * math.sqrt((omega_j + w[j, j]) * omega_k / (w[j, j] * w_kk))

    g1p = coupling(0, omega1, (w[0, 2] + w[0, 3]) / 2.0, omegap, w_pp)
    g1m = coupling(0, omega1, (w[0, 2] - w[0, 3]) / 2.0, omegam, w_mm)
    g2p = coupling(1, omega2, (w[1, 2] + w[1, 3]) / 2.0, omegap, w_pp)
    g2m = coupling(1, omega2, (w[1, 2] - w[1, 3]) / 2.0, omegam, w_mm)

    if omegam_curve is None:
        grid = TWO_PI * np.linspace(0.0, 0.4, 41)
        omegam_curve = coupler_mode_curve(energies, cutoff, grid)

    logger.debug(f"Toy parameters: g1m/2pi={g1m / TWO_PI / 1e6:.2f} MHz, "
                 f"g2m/2pi={g2m / TWO_PI / 1e6:.2f} MHz")
    return ToyParams(omega1=omega1, omega2=omega2, omegap=omegap, omegam=omegam,
                     alpha1=-float(w[0, 0]), alpha2=-float(w[1, 1]),
                     g1p=g1p, g1m=g1m, g2p=g2p, g2m=g2m, omegam_curve=omegam_curve)


@dataclass(frozen=True)
class HarmonicDecomposition:
    """omega_m(phi_d cos theta) = mean + sum_k eps_2k cos(2k theta)."""
    amplitude: float
    drive_frequency: float
    mean_frequency: float
    harmonics: np.ndarray
    odd_residual: float
    points: int

    @property
    def epsilon2(self) -> float:
        return float(self.harmonics[0])

    @property
    def modulation_index(self) -> float:
        """eta = eps_2 / (2 omega_d)."""
        return self.epsilon2 / (2.0 * self.drive_frequency)


def harmonic_decompose(curve: CubicSpline, amplitude: float, drive_frequency: float,
                       harmonics: int = 4, rtol: float = 1e-8,
                       max_points: int = 2 ** 16) -> HarmonicDecomposition:
    """
    Fourier coefficients of the M-mode frequency over one drive period.

    Periodic trapezoid quadrature from 512 points, doubled until every
    coefficient changes by less than rtol * |mean|.

    Raises:
        FluxRangeError: When +-amplitude leaves the curve's tabulated range
    """
    low, high = float(curve.x[0]), float(curve.x[-1])
    if amplitude < 0.0:
        raise ValueError(f"Amplitude must be nonnegative, got {amplitude}")
    if -amplitude < low - 1e-12 or amplitude > high + 1e-12:
        raise FluxRangeError(f"Drive amplitude phi/2pi={amplitude / TWO_PI:.4f} exceeds "
                             f"the tabulated range [{low / TWO_PI:.4f}, {high / TWO_PI:.4f}]")
    if drive_frequency <= 0.0:
        raise ValueError(f"Drive frequency must be positive, got {drive_frequency}")

    orders = np.arange(1, 2 * harmonics + 1)

    def coefficients(points: int):
        theta = TWO_PI * np.arange(points) / points
        samples = curve(amplitude * np.cos(theta))
        mean = float(np.mean(samples))
        cosines = 2.0 * np.mean(samples[None, :] * np.cos(orders[:, None] * theta[None, :]),
                                axis=1)
        return mean, cosines

    points = 512
    mean, cosines = coefficients(points)
    while points < max_points:
        refined_mean, refined = coefficients(2 * points)
        points *= 2
        change = max(abs(refined_mean - mean), float(np.max(np.abs(refined - cosines))))
        mean, cosines = refined_mean, refined
        if change <= rtol * max(abs(mean), 1e-300):
            break

    even = cosines[1::2]
    odd = cosines[0::2]
    return HarmonicDecomposition(amplitude=amplitude, drive_frequency=drive_frequency,
                                 mean_frequency=mean, harmonics=even,
                                 odd_residual=float(np.max(np.abs(odd))), points=points)


def _bessel_table(order: int, x: float) -> np.ndarray:
    """J_0..J_order at x >= 0 by Miller's backward recurrence."""
    table = np.zeros(order + 1)
    if x == 0.0:
        table[0] = 1.0
        return table
    scale = max(order, int(x)) + 1
    start = 2 * ((scale + 30 + int(math.sqrt(60.0 * scale))) // 2)
    upper, current = 0.0, 1e-30
    normalization = 0.0
    for k in range(start, 0, -1):
        lower = (2.0 * k / x) * current - upper
        upper, current = current, lower
        if abs(current) > BESSEL_RESCALE:
            current /= BESSEL_RESCALE
            upper /= BESSEL_RESCALE
            table /= BESSEL_RESCALE
            normalization /= BESSEL_RESCALE
        if k - 1 <= order:
            table[k - 1] = current
        if (k - 1) % 2 == 0 and k - 1 > 0:
            normalization += 2.0 * current
    normalization += current
    return table / normalization


def bessel_j(n: int, x: float) -> float:
    """Bessel function of the first kind J_n(x) for integer n and real x."""
    n = int(n)
    sign = 1.0
    if n < 0:
        n = -n
        sign *= -1.0 if n % 2 else 1.0
    if x < 0.0:
        x = -x
        sign *= -1.0 if n % 2 else 1.0
    return sign * float(_bessel_table(n, float(x))[n])


def _bessel_weights(eta: float, order: int):
    """n -> J_n(eta) for |n| <= order from a single recurrence."""
    table = _bessel_table(order, abs(eta))

    def weight(n: int) -> float:
        odd = abs(n) % 2 == 1
        flipped = (n < 0) != (eta < 0.0)
        return -table[abs(n)] if odd and flipped else table[abs(n)]

    return weight


@dataclass(frozen=True)
class ToyRate:
    """g_iSWAP (rad/s) from the Bessel series and its closed-form limits."""
    value: float
    full_sum: float
    weak_drive: float
    next_order: float
    n_cutoff: int
    terms: Dict[int, float]


def _detuning(params: ToyParams, qubit: int, mean_m: float, n: int, k: int,
              drive_frequency: float) -> float:
    omega = params.omega1 if qubit == 1 else params.omega2
    alpha = params.alpha1 if qubit == 1 else params.alpha2
    return omega + k * alpha - mean_m - 2.0 * n * drive_frequency


def _guarded(denominator: float, n: int, what: str) -> float:
    if abs(denominator) < RESONANCE_GUARD:
        raise SingularityError(f"Resonant denominator {what} at harmonic n={n}",
                               {"harmonic": n, "denominator_mhz": denominator / TWO_PI / 1e6})
    return denominator


def analytic_iswap_rate(params: ToyParams, decomposition: HarmonicDecomposition,
                        n_cutoff: int = 2) -> ToyRate:
    """
    g_iSWAP = g_1m g_2m sum_n xi_n xi_{n+1} / (Delta_1m - n Delta_21), n in [-N_c, N_c - 1].

    Also returns the unsimplified half-sum over both qubit detunings with the
    exact drive harmonic 2 n omega_d, the weak-drive limit and its next-order
    correction.

    Raises:
        SingularityError: When a denominator vanishes; the details name n
    """
    if n_cutoff < 1:
        raise ValueError(f"n_cutoff must be at least 1, got {n_cutoff}")
    eta = decomposition.modulation_index
    mean_m = decomposition.mean_frequency
    delta_1m = params.omega1 - mean_m
    delta_2m = params.omega2 - mean_m
    delta_21 = params.detuning
    coupling = params.g1m * params.g2m

    xi = _bessel_weights(eta, n_cutoff + 1)

    terms: Dict[int, float] = {}
    full = 0.0
    for n in range(-n_cutoff, n_cutoff):
        weight = xi(n) * xi(n + 1)
        denominator = _guarded(delta_1m - n * delta_21, n, "Delta_1m - n Delta_21")
        terms[n] = coupling * weight / denominator
        first = _guarded(_detuning(params, 1, mean_m, n, 0, decomposition.drive_frequency),
                         n, "Delta_1m^(n,0)")
        second = _guarded(_detuning(params, 2, mean_m, n + 1, 0, decomposition.drive_frequency),
                          n + 1, "Delta_2m^(n+1,0)")
        full += 0.5 * coupling * weight * (1.0 / first + 1.0 / second)

    _guarded(delta_1m, 0, "Delta_1m")
    _guarded(delta_2m, 0, "Delta_2m")
    weak = 0.5 * coupling * eta * (1.0 / delta_1m - 1.0 / delta_2m)
    correction_denominator = (_guarded(delta_1m - delta_21, 1, "Delta_1m - Delta_21")
                              * _guarded(delta_2m + delta_21, -1, "Delta_2m + Delta_21"))
    next_order = weak * (1.0 + 3.0 * eta ** 2 * delta_21 ** 2 / (4.0 * correction_denominator))
    return ToyRate(value=float(sum(terms.values())), full_sum=float(full),
                   weak_drive=float(weak), next_order=float(next_order),
                   n_cutoff=n_cutoff, terms=terms)


@dataclass(frozen=True)
class DynamicalZZ:
    """Drive-induced ZZ (rad/s) from the |11> sideband couplings."""
    sideband: float
    simplified: float
    g_11_20: float
    g_11_02: float
    g_11_20_leading: float
    g_11_02_leading: float


def analytic_dynamical_zz(params: ToyParams, decomposition: HarmonicDecomposition,
                          g_iswap: Optional[float] = None, n_cutoff: int = 2) -> DynamicalZZ:
    """
    zeta_dyn = |g_11,20|^2/(-alpha_1) + |g_11,02|^2/(-alpha_2).

    The simplified form is 2 g_iSWAP^2 (1/(-alpha_1) + 1/(-alpha_2)
    + 2/Delta_1m + 2/Delta_2m); g_iswap defaults to the Bessel-series rate.
    """
    if params.alpha1 >= 0.0 or params.alpha2 >= 0.0:
        raise ValueError("Anharmonicities must be negative")
    if g_iswap is None:
        g_iswap = analytic_iswap_rate(params, decomposition, n_cutoff).value

    xi = _bessel_weights(decomposition.modulation_index, n_cutoff + 1)
    mean_m = decomposition.mean_frequency
    wd = decomposition.drive_frequency
    prefactor = params.g1m * params.g2m * math.sqrt(2.0) / 2.0

    g20 = 0.0
    g02 = 0.0
    for n in range(-n_cutoff, n_cutoff):
        weight = xi(n) * xi(n + 1)
        g20 += prefactor * weight * (
            1.0 / _guarded(_detuning(params, 1, mean_m, n, 1, wd), n, "Delta_1m^(n,1)")
            + 1.0 / _guarded(_detuning(params, 2, mean_m, n + 1, 0, wd), n + 1, "Delta_2m^(n+1,0)"))
        g02 += prefactor * weight * (
            1.0 / _guarded(_detuning(params, 1, mean_m, n, 0, wd), n, "Delta_1m^(n,0)")
            + 1.0 / _guarded(_detuning(params, 2, mean_m, n + 1, 1, wd), n + 1, "Delta_2m^(n+1,1)"))

    delta_1m = _guarded(params.omega1 - mean_m, 0, "Delta_1m")
    delta_2m = _guarded(params.omega2 - mean_m, 0, "Delta_2m")
    sideband = g20 ** 2 / -params.alpha1 + g02 ** 2 / -params.alpha2
    simplified = 2.0 * g_iswap ** 2 * (1.0 / -params.alpha1 + 1.0 / -params.alpha2
                                       + 2.0 / delta_1m + 2.0 / delta_2m)
    inverse = 1.0 / delta_1m + 1.0 / delta_2m
    return DynamicalZZ(
        sideband=float(sideband),
        simplified=float(simplified),
        g_11_20=float(g20),
        g_11_02=float(g02),
        g_11_20_leading=float(math.sqrt(2.0) * g_iswap * (1.0 - 0.5 * params.alpha1 * inverse)),
        g_11_02_leading=float(math.sqrt(2.0) * g_iswap * (1.0 - 0.5 * params.alpha2 * inverse)),
    )


def semianalytic_sideband_zz(elements: Dict[str, complex], amplitude: float,
                             alpha1: float, alpha2: float, coupler_frequency: float) -> float:
    """
    (E_J5 phi_d^2 / 8 hbar)^2 [|<20|C|11>|^2/(-alpha_1) + |<02|C|11>|^2/(-alpha_2)].

    Matrix elements come from the labeled zero-flux spectrum; the
    anharmonicities are the full-model values in rad/s.
    """
    if alpha1 >= 0.0 or alpha2 >= 0.0:
        raise ValueError("Anharmonicities must be negative")
    scale = (coupler_frequency * amplitude ** 2 / 8.0) ** 2
    return float(scale * (abs(elements["20"]) ** 2 / -alpha1
                          + abs(elements["02"]) ** 2 / -alpha2))
