"""
Static spectrum of the device: diagonalization, excitation-number labels,
static ZZ, matrix elements of the flux-coupling operators, semianalytic
iSWAP rates and coupler hybridization fractions.

Labels are tuples (n1, n2, np, nm): excitations of Q1, Q2 and of the
coupler P and M modes. Computational states |ij> are (i, j, 0, 0).
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .circuit import (
    ChargeBasisOperators,
    ChargeGrid,
    CircuitParams,
    DerivedEnergies,
    HamiltonianAssembly,
    build_assembly,
    build_operators,
    coupler_hamiltonian,
    derive_energies,
    mode_hamiltonian,
)
from .eigensolver import fix_phases, lowest_eigenpairs
from .errors import FluxRangeError, LabelingError, SimulationError, SingularityError
from .utils import log_sweep_point, run_parallel

logger = logging.getLogger(__name__)

Label = Tuple[int, int, int, int]

GROUND: Label = (0, 0, 0, 0)
STATE_10: Label = (1, 0, 0, 0)
STATE_01: Label = (0, 1, 0, 0)
STATE_11: Label = (1, 1, 0, 0)
STATE_20: Label = (2, 0, 0, 0)
STATE_02: Label = (0, 2, 0, 0)
P_MODE: Label = (0, 0, 1, 0)
M_MODE: Label = (0, 0, 0, 1)

# |00>, |01>, |10>, |11> in process-matrix order
COMPUTATIONAL_LABELS: Tuple[Label, ...] = (GROUND, STATE_01, STATE_10, STATE_11)
REQUIRED_LABELS: Tuple[Label, ...] = COMPUTATIONAL_LABELS + (P_MODE, M_MODE)
TRACKED_LABELS: Tuple[Label, ...] = tuple(sorted(
    (label for label in itertools.product(range(3), repeat=4) if sum(label) <= 2),
    key=lambda label: (sum(label), tuple(-n for n in label)),
))

DOMINANCE = 0.5
COVERAGE_FLOOR = 0.999
RESONANCE_GUARD = 2.0 * math.pi * 1e6
COUPLER_LABEL_DEPTH = 4


def label_name(label: Label) -> str:
    return "".join(str(n) for n in label)


@dataclass(frozen=True)
class BareProductBasis:
    """Eigenvectors of H_1, H_2 and H_PM(phi_ex); their tensor products span the space."""
    flux: float
    cutoff: int
    qubit_vectors: Tuple[np.ndarray, np.ndarray]
    qubit_energies: Tuple[np.ndarray, np.ndarray]
    coupler_vectors: np.ndarray
    coupler_energies: np.ndarray
    coupler_labels: Dict[Tuple[int, int], int]

    def coupler_vector(self, excitations: Tuple[int, int]) -> np.ndarray:
        if excitations not in self.coupler_labels:
            raise LabelingError(f"Coupler state {excitations} not resolved at "
                                f"flux {self.flux / (2 * math.pi):+.4f}",
                                {"coupler_label": list(excitations)})
        return self.coupler_vectors[:, self.coupler_labels[excitations]]

    def orthonormality_error(self) -> float:
        """Largest deviation of any factor Gram matrix from identity."""
        errors = []
        for vectors in (*self.qubit_vectors, self.coupler_vectors):
            gram = vectors.conj().T @ vectors
            errors.append(float(np.max(np.abs(gram - np.eye(gram.shape[0])))))
        return max(errors)


def build_bare_basis(energies: DerivedEnergies, cutoff: int, flux: float) -> BareProductBasis:
    """
    Diagonalize the isolated qubit and coupler Hamiltonians at `flux`.

    Coupler eigenstates are labeled in energy order by the nearest free
    (np, nm) pair, estimated from the charge variances of the two
    collective coordinates n3 + n4 and n3 - n4.
    """
    w = energies.charging_matrix
    ej = energies.josephson_frequency
    qubit_energies, qubit_vectors = [], []
    for j in range(2):
        values, vectors = np.linalg.eigh(mode_hamiltonian(cutoff, w[j, j], ej[j]))
        qubit_energies.append(values)
        qubit_vectors.append(fix_phases(vectors))

    coupler_values, coupler_vectors = np.linalg.eigh(coupler_hamiltonian(cutoff, energies, flux))
    coupler_vectors = fix_phases(coupler_vectors)
    return BareProductBasis(
        flux=flux,
        cutoff=cutoff,
        qubit_vectors=(qubit_vectors[0], qubit_vectors[1]),
        qubit_energies=(qubit_energies[0], qubit_energies[1]),
        coupler_vectors=coupler_vectors,
        coupler_energies=coupler_values,
        coupler_labels=_label_coupler_states(coupler_vectors, cutoff),
    )


def _label_coupler_states(vectors: np.ndarray, cutoff: int) -> Dict[Tuple[int, int], int]:
    charges = np.arange(-cutoff, cutoff + 1, dtype=float)
    d = charges.size
    n3 = np.repeat(charges, d)
    n4 = np.tile(charges, d)
    weights = np.abs(vectors) ** 2
    variance_p = weights.T @ (n3 + n4) ** 2
    variance_m = weights.T @ (n3 - n4) ** 2
    estimate_p = (variance_p / variance_p[0] - 1.0) / 2.0
    estimate_m = (variance_m / variance_m[0] - 1.0) / 2.0

    candidates = [(p, m) for p in range(COUPLER_LABEL_DEPTH + 1)
                  for m in range(COUPLER_LABEL_DEPTH + 1) if p + m <= COUPLER_LABEL_DEPTH]
    labels: Dict[Tuple[int, int], int] = {}
    for state in range(min(len(candidates), vectors.shape[1])):
        free = [c for c in candidates if c not in labels]
        best = min(free, key=lambda c: ((c[0] - estimate_p[state]) ** 2
                                        + (c[1] - estimate_m[state]) ** 2, sum(c)))
        labels[best] = state
    return labels


@dataclass(frozen=True)
class LabeledSpectrum:
    """Lowest eigenpairs at one flux with excitation-number labels."""
    flux: float
    energies: np.ndarray
    vectors: np.ndarray
    label_map: Dict[Label, int]
    overlap_quality: Dict[Label, float]
    degenerate: Tuple[Label, ...] = ()

    @property
    def frequencies(self) -> np.ndarray:
        """Eigenfrequencies relative to the ground state (rad/s)."""
        return self.energies - self.energies[0]

    @property
    def count(self) -> int:
        return int(self.energies.size)

    def has(self, label: Label) -> bool:
        return label in self.label_map

    def index(self, label: Label) -> int:
        if label not in self.label_map:
            raise LabelingError(f"State |{label_name(label)}> is not labeled at flux "
                                f"{self.flux / (2 * math.pi):+.4f}",
                                {"label": label_name(label)})
        return self.label_map[label]

    def frequency(self, label: Label) -> float:
        return float(self.frequencies[self.index(label)])

    def vector(self, label: Label) -> np.ndarray:
        return self.vectors[:, self.index(label)]

    def label_of(self, index: int) -> Optional[Label]:
        for label, position in self.label_map.items():
            if position == index:
                return label
        return None


def label_spectrum(eigenvalues: np.ndarray, eigenvectors: np.ndarray,
                   bare: BareProductBasis,
                   required: Sequence[Label] = REQUIRED_LABELS) -> LabeledSpectrum:
    """
    Assign excitation labels by squared overlap with bare product states.

    Pairs (label, eigenstate) are visited in descending overlap; a pair is
    accepted when neither side is taken. A required label that loses its
    best state to another label and has no dominant alternative raises.

    Args:
        eigenvalues: Ascending eigenvalues (rad/s)
        eigenvectors: Matching eigenvectors on the full charge space
        bare: Bare product basis at the same flux
        required: Labels that must be resolved

    Returns:
        LabeledSpectrum
    """
    overlaps = _bare_overlaps(eigenvectors, bare, TRACKED_LABELS)
    labels = [label for label in TRACKED_LABELS if label in overlaps]
    table = np.array([overlaps[label] for label in labels])

    ranked = np.argsort(-table, axis=None, kind="stable")
    order = np.dstack(np.unravel_index(ranked, table.shape))[0]
    label_map: Dict[Label, int] = {}
    quality: Dict[Label, float] = {}
    claimed: Dict[int, Label] = {}
    conflicts: Dict[Label, Dict[str, float]] = {}
    for row, column in order:
        label = labels[row]
        column = int(column)
        if label in label_map:
            continue
        if column in claimed:
            conflicts.setdefault(label, {
                "state": column,
                "overlap": float(table[row, column]),
                "holder": label_name(claimed[column]),
                "holder_overlap": float(table[labels.index(claimed[column]), column]),
            })
            continue
        label_map[label] = column
        quality[label] = float(table[row, column])
        claimed[column] = label

    for label in required:
        best = quality.get(label, 0.0)
        if best > DOMINANCE:
            continue
        if label in conflicts or label not in label_map:
            raise LabelingError(
                f"Ambiguous assignment for |{label_name(label)}> at flux "
                f"{bare.flux / (2 * math.pi):+.4f}",
                {"label": label_name(label), "assigned_overlap": best,
                 "conflict": conflicts.get(label)},
            )

    degenerate = tuple(label for label in labels if quality.get(label, 0.0) <= DOMINANCE)
    if degenerate:
        logger.debug(f"Weakly dominated labels at flux {bare.flux / (2 * math.pi):+.4f}: "
                     f"{[label_name(l) for l in degenerate]}")
    return LabeledSpectrum(
        flux=bare.flux,
        energies=np.asarray(eigenvalues, dtype=float),
        vectors=eigenvectors,
        label_map=label_map,
        overlap_quality=quality,
        degenerate=degenerate,
    )


def _reshape_states(vectors: np.ndarray, cutoff: int) -> np.ndarray:
    d = 2 * cutoff + 1
    return np.asarray(vectors).reshape(d, d, d * d, -1)


def _bare_overlaps(eigenvectors: np.ndarray, bare: BareProductBasis,
                   labels: Sequence[Label]) -> Dict[Label, np.ndarray]:
    """|<bare label|eigenstate j>|^2 for each resolvable label."""
    states = _reshape_states(eigenvectors, bare.cutoff)
    coupler_keys = sorted({label[2:] for label in labels if label[2:] in bare.coupler_labels})
    coupler = np.stack([bare.coupler_vector(key) for key in coupler_keys], axis=1)
    qubit_depth = max(label[0] for label in labels) + 1
    q1 = bare.qubit_vectors[0][:, :qubit_depth]
    q2 = bare.qubit_vectors[1][:, :qubit_depth]
    projected = np.einsum("cl,abcj->ablj", coupler.conj(), states, optimize=True)
    amplitudes = np.einsum("ai,bk,ablj->iklj", q1.conj(), q2.conj(), projected, optimize=True)
    weights = np.abs(amplitudes) ** 2
    result = {}
    for label in labels:
        if label[2:] not in bare.coupler_labels:
            continue
        result[label] = weights[label[0], label[1], coupler_keys.index(label[2:])]
    return result


def compute_spectrum(assembly: HamiltonianAssembly, flux: float, eigen_count: int,
                     tolerance: float, dense_limit: Optional[int] = None,
                     required: Sequence[Label] = REQUIRED_LABELS,
                     bare: Optional[BareProductBasis] = None) -> LabeledSpectrum:
    """Diagonalize H(flux, 0) and label its lowest `eigen_count` states."""
    hamiltonian = assembly.at(flux, 0.0)
    values, vectors = lowest_eigenpairs(hamiltonian, eigen_count, tolerance, dense_limit)
    if bare is None:
        bare = build_bare_basis(assembly.energies, assembly.operators.grid.cutoff, flux)
    return label_spectrum(values, vectors, bare, required)


def static_zz(spectrum: LabeledSpectrum) -> float:
    """zeta = w_11 - w_10 - w_01 + w_00 in rad/s."""
    e = spectrum.energies
    return float((e[spectrum.index(STATE_11)] - e[spectrum.index(STATE_10)])
                 - (e[spectrum.index(STATE_01)] - e[spectrum.index(GROUND)]))


def matrix_element(operator, bra: Label, ket: Label, spectrum: LabeledSpectrum) -> complex:
    """<bra|operator|ket> between labeled eigenstates (phase-fixed eigenvectors)."""
    bra_vector = spectrum.vector(bra)
    ket_vector = spectrum.vector(ket)
    return complex(np.vdot(bra_vector, operator @ ket_vector))


def direct_iswap_rate(amplitude: float, spectrum: LabeledSpectrum,
                      operators: ChargeBasisOperators, energies: DerivedEnergies) -> complex:
    """g_dir = (E_J5/hbar) phi_d^2/8 <01|C_hat|10> in rad/s."""
    if amplitude < 0.0:
        raise ValueError(f"Drive amplitude must be nonnegative, got {amplitude}")
    element = matrix_element(operators.coupler_cos, STATE_01, STATE_10, spectrum)
    return energies.coupler_frequency * amplitude ** 2 / 8.0 * element


@dataclass(frozen=True)
class IndirectRate:
    value: complex
    state_cutoff: int
    terms: Dict[int, complex]
    reference_cutoff: int
    truncation_change: float
    dominant_states: Tuple[Tuple[int, str, float], ...]


def indirect_iswap_rate(amplitude: float, spectrum: LabeledSpectrum,
                        operators: ChargeBasisOperators, energies: DerivedEnergies,
                        state_cutoff: int, reference_cutoff: Optional[int] = None) -> IndirectRate:
    """
    Second-order exchange through S_hat-coupled intermediate states.

    g_indir = -(E_J5/hbar)^2 phi_d^2/4 * sum_j <01|S|j><j|S|10> / (w_j - (w_10 + w_01)/2),
    summed over the lowest `state_cutoff` eigenstates other than |10> and |01>.
    truncation_change is |g_indir(state_cutoff) - g_indir(reference_cutoff)|,
    the reference defaulting to half the cutoff (at least 3).
    """
    if amplitude < 0.0:
        raise ValueError(f"Drive amplitude must be nonnegative, got {amplitude}")
    if state_cutoff > spectrum.count:
        raise ValueError(f"state_cutoff {state_cutoff} exceeds the {spectrum.count} "
                         f"computed eigenpairs")
    i10 = spectrum.index(STATE_10)
    i01 = spectrum.index(STATE_01)
    w = spectrum.frequencies
    centre = 0.5 * (w[i10] + w[i01])
    sin_op = operators.coupler_sin
    vectors = spectrum.vectors[:, :state_cutoff]
    from_10 = vectors.conj().T @ (sin_op @ spectrum.vectors[:, i10])
    to_01 = (spectrum.vectors[:, i01].conj() @ (sin_op @ vectors))
    prefactor = -(energies.coupler_frequency ** 2) * amplitude ** 2 / 4.0

    terms: Dict[int, complex] = {}
    for j in range(state_cutoff):
        if j in (i10, i01):
            continue
        denominator = w[j] - centre
        numerator = to_01[j] * from_10[j]
        if abs(denominator) < RESONANCE_GUARD:
            if abs(numerator) == 0.0:
                continue
            label = spectrum.label_of(j)
            raise SingularityError(
                f"Intermediate state {j} is resonant with the |10>/|01> midpoint",
                {"state": j, "label": label_name(label) if label else None,
                 "denominator_mhz": denominator / (2 * math.pi * 1e6)},
            )
        terms[j] = prefactor * numerator / denominator

    value = complex(sum(terms.values())) if terms else 0j
    if reference_cutoff is None:
        reference_cutoff = min(state_cutoff, max(3, state_cutoff // 2))
    if not 0 < reference_cutoff <= state_cutoff:
        raise ValueError(f"reference_cutoff must lie in [1, {state_cutoff}], "
                         f"got {reference_cutoff}")
    reduced = complex(sum(t for j, t in terms.items() if j < reference_cutoff))
    change = float(abs(value - reduced))
    ranking = sorted(terms.items(), key=lambda item: -abs(item[1]))[:5]
    dominant = tuple(
        (j, label_name(spectrum.label_of(j)) if spectrum.label_of(j) else "?", float(abs(t)))
        for j, t in ranking)
    return IndirectRate(value=value, state_cutoff=state_cutoff, terms=terms,
                        reference_cutoff=reference_cutoff, truncation_change=change,
                        dominant_states=dominant)


def sideband_matrix_elements(spectrum: LabeledSpectrum,
                             operators: ChargeBasisOperators) -> Dict[str, complex]:
    """<20|C_hat|11> and <02|C_hat|11>, the couplings of the |11> sidebands."""
    return {
        "20": matrix_element(operators.coupler_cos, STATE_20, STATE_11, spectrum),
        "02": matrix_element(operators.coupler_cos, STATE_02, STATE_11, spectrum),
    }


def anharmonicities(spectrum: LabeledSpectrum) -> Tuple[float, float]:
    """(alpha_1, alpha_2) = (w_20 - 2 w_10, w_02 - 2 w_01) in rad/s."""
    return (spectrum.frequency(STATE_20) - 2.0 * spectrum.frequency(STATE_10),
            spectrum.frequency(STATE_02) - 2.0 * spectrum.frequency(STATE_01))


@dataclass(frozen=True)
class HybridizationReport:
    flux: float
    fractions: Dict[Label, float]
    average: float
    coverage: Dict[Label, float]
    warnings: Tuple[str, ...] = ()


def hybridization(flux: float, spectrum: LabeledSpectrum,
                  bare: BareProductBasis) -> HybridizationReport:
    """
    Coupler participation p^c_ij of each computational state.

    p^c_ij sums |<i'j' kl_PM|ij>|^2 over all bare states with k + l >= 1,
    i.e. the total weight minus the weight on the coupler ground state.
    """
    if abs(bare.flux - flux) > 1e-12 or abs(spectrum.flux - flux) > 1e-12:
        raise ValueError("Bare basis, spectrum and flux must refer to the same bias point")
    coupler_ground = bare.coupler_vector((0, 0))
    fractions: Dict[Label, float] = {}
    coverage: Dict[Label, float] = {}
    warnings: List[str] = []
    for label in COMPUTATIONAL_LABELS:
        state = _reshape_states(spectrum.vector(label), bare.cutoff)[..., 0]
        full = np.einsum("cl,abc->abl", bare.coupler_vectors.conj(), state, optimize=True)
        total = float(np.sum(np.abs(full) ** 2))
        ground_weight = float(np.sum(np.abs(np.einsum("c,abc->ab", coupler_ground.conj(),
                                                      state)) ** 2))
        coverage[label] = total
        fractions[label] = float(min(1.0, max(0.0, total - ground_weight)))
        if total < COVERAGE_FLOOR:
            message = f"Bare-basis coverage {total:.4f} for |{label_name(label)[:2]}>"
            logger.warning(message)
            warnings.append(message)
    average = float(np.mean(list(fractions.values())))
    return HybridizationReport(flux=flux, fractions=fractions, average=average,
                               coverage=coverage, warnings=tuple(warnings))


# Sweeps

SWEEP_COLUMNS = ("flux_over_2pi", "omega1_GHz", "omega2_GHz", "omegap_GHz",
                 "omegam_GHz", "zeta_kHz", "pbar_c")


@dataclass(frozen=True)
class SweepPoint:
    flux: float
    omega1: float = math.nan
    omega2: float = math.nan
    omegap: float = math.nan
    omegam: float = math.nan
    zeta: float = math.nan
    pbar_c: float = math.nan
    error: Optional[str] = None


@dataclass(frozen=True)
class SweepTable:
    """Labeled frequencies, static ZZ and hybridization versus flux (rad, rad/s)."""
    points: Tuple[SweepPoint, ...]

    @property
    def fluxes(self) -> np.ndarray:
        return np.array([p.flux for p in self.points])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)

    @property
    def failures(self) -> Tuple[SweepPoint, ...]:
        return tuple(p for p in self.points if p.error is not None)

    def curve(self, name: str) -> CubicSpline:
        """Cubic spline of one column over flux, skipping failed points."""
        values = self.column(name)
        mask = np.isfinite(values)
        if mask.sum() < 4:
            raise SimulationError(f"Too few valid sweep points for '{name}' ({mask.sum()})")
        return CubicSpline(self.fluxes[mask], values[mask])

    def flux_sensitivity(self, name: str) -> np.ndarray:
        """d(omega)/d(phi_ex) of one frequency column at the sweep points (rad/s per rad)."""
        return self.curve(name)(self.fluxes, 1)

    def is_decreasing(self, name: str, lower: float, upper: float) -> bool:
        fluxes = self.fluxes
        values = self.column(name)
        mask = (fluxes >= lower) & (fluxes <= upper) & np.isfinite(values)
        return bool(np.all(np.diff(values[mask]) < 0.0))

    def zz_minima(self) -> List[Tuple[float, float]]:
        """Interior local minima of |zeta| as (flux, zeta)."""
        values = np.abs(self.column("zeta"))
        minima = []
        for i in range(1, len(values) - 1):
            if np.isfinite(values[i - 1:i + 2]).all() and values[i] < values[i - 1] \
                    and values[i] < values[i + 1]:
                minima.append((float(self.fluxes[i]), float(self.points[i].zeta)))
        return minima

    def csv_rows(self) -> List[List[Optional[float]]]:
        two_pi = 2.0 * math.pi
        rows = []
        for p in self.points:
            def scaled(value, unit):
                return None if not math.isfinite(value) else value / two_pi / unit
            rows.append([p.flux / two_pi, scaled(p.omega1, 1e9), scaled(p.omega2, 1e9),
                         scaled(p.omegap, 1e9), scaled(p.omegam, 1e9), scaled(p.zeta, 1e3),
                         None if not math.isfinite(p.pbar_c) else p.pbar_c])
        return rows


def sweep_point(assembly: HamiltonianAssembly, flux: float, eigen_count: int,
                tolerance: float, dense_limit: Optional[int] = None) -> SweepPoint:
    bare = build_bare_basis(assembly.energies, assembly.operators.grid.cutoff, flux)
    spectrum = compute_spectrum(assembly, flux, eigen_count, tolerance, dense_limit,
                                bare=bare)
    report = hybridization(flux, spectrum, bare)
    return SweepPoint(
        flux=flux,
        omega1=spectrum.frequency(STATE_10),
        omega2=spectrum.frequency(STATE_01),
        omegap=spectrum.frequency(P_MODE),
        omegam=spectrum.frequency(M_MODE),
        zeta=static_zz(spectrum),
        pbar_c=report.average,
    )


def flux_sweep(assembly: HamiltonianAssembly, fluxes: Sequence[float], eigen_count: int,
               tolerance: float, threads: int = 1,
               dense_limit: Optional[int] = None) -> SweepTable:
    """
    Labeled frequencies, static ZZ and p^c over a flux grid (rad).

    Points are independent and run on up to `threads` workers; a failing
    point is recorded with its error and the sweep continues.
    """
    fluxes = [float(f) for f in fluxes]
    out_of_range = [f for f in fluxes if abs(f) > math.pi + 1e-12]
    if out_of_range:
        raise FluxRangeError(f"Flux grid leaves |phi/2pi| <= 0.5: {out_of_range[:3]}",
                             {"flux_over_2pi": [f / (2 * math.pi) for f in out_of_range]})

    def _run(flux: float) -> SweepPoint:
        log_sweep_point(flux / (2 * math.pi), "start")
        return sweep_point(assembly, flux, eigen_count, tolerance, dense_limit)

    results = run_parallel(_run, fluxes, threads)
    points = []
    for flux, result in zip(fluxes, results):
        if isinstance(result, Exception):
            logger.warning(f"Sweep point {flux / (2 * math.pi):+.4f} failed: {result}")
            points.append(SweepPoint(flux=flux, error=f"{type(result).__name__}: {result}"))
        else:
            log_sweep_point(flux / (2 * math.pi), "done",
                            f"zeta/2pi={result.zeta / (2 * math.pi * 1e3):.3f} kHz")
            points.append(result)
    return SweepTable(points=tuple(points))


def quasi_static_average(curve: CubicSpline, amplitude: float, points: int = 512) -> float:
    """Average of curve(amplitude cos theta) over one drive period."""
    theta = 2.0 * math.pi * np.arange(points) / points
    return float(np.mean(curve(amplitude * np.cos(theta))))


@dataclass(frozen=True)
class ConvergenceRow:
    cutoff: int
    omega1: float
    omega2: float
    omegap: float
    omegam: float
    zeta: float


CONVERGENCE_COLUMNS = ("charge_cutoff", "omega1_GHz", "omega2_GHz", "omegap_GHz", "omegam_GHz",
                       "zeta_kHz", "d_omega1_kHz", "d_omega2_kHz", "d_omegap_kHz",
                       "d_omegam_kHz", "d_zeta_kHz")


@dataclass(frozen=True)
class ConvergenceReport:
    rows: Tuple[ConvergenceRow, ...]

    def differences(self, name: str) -> np.ndarray:
        """Successive changes of one quantity as the cutoff grows."""
        values = np.array([getattr(row, name) for row in self.rows])
        return np.diff(values)

    def csv_rows(self):
        """Values per cutoff; the d_ columns hold the change from the previous cutoff."""
        ghz = 2 * math.pi * 1e9
        khz = 2 * math.pi * 1e3
        names = ("omega1", "omega2", "omegap", "omegam", "zeta")
        out = []
        for i, row in enumerate(self.rows):
            values = [getattr(row, name) for name in names]
            if i == 0:
                changes = [None] * len(names)
            else:
                previous = self.rows[i - 1]
                changes = [(getattr(row, name) - getattr(previous, name)) / khz for name in names]
            out.append([row.cutoff, *(v / ghz for v in values[:4]), values[4] / khz, *changes])
        return out


def cutoff_convergence(params: CircuitParams, cutoffs: Sequence[int], eigen_count: int,
                       tolerance: float, dense_limit: Optional[int] = None,
                       flux: float = 0.0) -> ConvergenceReport:
    """Zero-flux frequencies and static ZZ for each charge cutoff."""
    energies = derive_energies(params)
    rows = []
    for cutoff in sorted(cutoffs):
        assembly = build_assembly(build_operators(ChargeGrid(cutoff), energies), energies)
        spectrum = compute_spectrum(assembly, flux, eigen_count, tolerance, dense_limit)
        rows.append(ConvergenceRow(
            cutoff=cutoff,
            omega1=spectrum.frequency(STATE_10),
            omega2=spectrum.frequency(STATE_01),
            omegap=spectrum.frequency(P_MODE),
            omegam=spectrum.frequency(M_MODE),
            zeta=static_zz(spectrum),
        ))
        logger.info(f"Cutoff N_C={cutoff}: zeta/2pi="
                    f"{rows[-1].zeta / (2 * math.pi * 1e3):.3f} kHz")
    return ConvergenceReport(rows=tuple(rows))
