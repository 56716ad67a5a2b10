"""
Circuit model of two transmon qubits coupled through a capacitively shunted
double-transmon coupler, written in the truncated Cooper-pair number basis.

Modes are ordered (Q1, Q2, coupler transmon 3, coupler transmon 4) with the
last mode varying fastest in the tensor index. Every Hamiltonian returned
here is divided by hbar, so its entries are angular frequencies (rad/s).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np
import scipy.sparse as sp
from scipy import constants

from .device_params import get_capacitances, get_critical_currents
from .errors import CapacityError, CircuitError

logger = logging.getLogger(__name__)

FEMTO = 1e-15
NANO = 1e-9
MODE_COUNT = 4
JUNCTION_COUNT = 5
SELF_KEYS = ("c11", "c22", "c33", "c44")
MUTUAL_KEYS = ("c12", "c13", "c14", "c23", "c24", "c34")
JUNCTION_KEYS = ("ic1", "ic2", "ic3", "ic4", "ic5")


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA constants from scipy."""
    hbar: float = constants.hbar
    elementary_charge: float = constants.e
    planck_constant: float = constants.h

    @property
    def flux_quantum(self) -> float:
        return self.planck_constant / (2.0 * self.elementary_charge)


PHYSICAL_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class CircuitParams:
    """
    Capacitances (fF) and critical currents (nA) defining the device.

    Keys follow the configuration file: c11..c44 are self capacitances,
    c12, c13, c14, c23, c24, c34 are mutual capacitances and ic1..ic5 are
    critical currents (ic5 belongs to the coupler junction).
    """
    capacitances_ff: Mapping[str, float] = field(default_factory=get_capacitances)
    critical_currents_na: Mapping[str, float] = field(default_factory=get_critical_currents)

    def __post_init__(self):
        caps = dict(self.capacitances_ff)
        currents = dict(self.critical_currents_na)
        missing = [k for k in SELF_KEYS + MUTUAL_KEYS if k not in caps]
        missing += [k for k in JUNCTION_KEYS if k not in currents]
        if missing:
            raise CircuitError(f"Missing circuit parameters: {', '.join(missing)}",
                               {"missing": missing})
        for key in SELF_KEYS:
            self._check(key, caps[key], allow_zero=False)
        for key in MUTUAL_KEYS:
            self._check(key, caps[key], allow_zero=True)
        for key in JUNCTION_KEYS:
            self._check(key, currents[key], allow_zero=False)
        object.__setattr__(self, "capacitances_ff", caps)
        object.__setattr__(self, "critical_currents_na", currents)

    @staticmethod
    def _check(key: str, value: float, allow_zero: bool) -> None:
        value = float(value)
        if not math.isfinite(value) or value < 0.0 or (value == 0.0 and not allow_zero):
            kind = "nonnegative" if allow_zero else "positive"
            raise CircuitError(f"Parameter {key} must be finite and {kind}, got {value}",
                               {"field": key, "value": value})

    @classmethod
    def fitted_device(cls) -> "CircuitParams":
        """Fitted device parameters."""
        return cls(get_capacitances(), get_critical_currents())

    def capacitance(self, j: int, l: int) -> float:
        """Capacitance C_jl in fF for 1-based mode indices; symmetric in (j, l)."""
        a, b = sorted((j, l))
        if not (1 <= a <= MODE_COUNT and 1 <= b <= MODE_COUNT):
            raise CircuitError(f"Mode index out of range: ({j}, {l})")
        return float(self.capacitances_ff[f"c{a}{b}"])

    def critical_current(self, j: int) -> float:
        return float(self.critical_currents_na[f"ic{j}"])

    def capacitance_matrix(self) -> np.ndarray:
        """Maxwell capacitance matrix (F): diagonal sums every C_jl, off-diagonal -C_jl."""
        matrix = np.zeros((MODE_COUNT, MODE_COUNT))
        for j in range(1, MODE_COUNT + 1):
            for l in range(1, MODE_COUNT + 1):
                if j != l:
                    matrix[j - 1, l - 1] = -self.capacitance(j, l)
            matrix[j - 1, j - 1] = sum(self.capacitance(j, l) for l in range(1, MODE_COUNT + 1))
        return matrix * FEMTO


@dataclass(frozen=True)
class DerivedEnergies:
    """Josephson energies (J), charging matrix W (rad/s) and shunt charging energy (J)."""
    josephson_energy: np.ndarray
    charging_matrix: np.ndarray
    shunt_charging_energy: float
    physical: PhysicalConstants = PHYSICAL_CONSTANTS

    @property
    def josephson_frequency(self) -> np.ndarray:
        """E_Jj / hbar in rad/s for j = 1..5."""
        return self.josephson_energy / self.physical.hbar

    @property
    def coupler_frequency(self) -> float:
        """E_J5 / hbar in rad/s."""
        return float(self.josephson_energy[4] / self.physical.hbar)


def derive_energies(params: CircuitParams,
                    physical: PhysicalConstants = PHYSICAL_CONSTANTS) -> DerivedEnergies:
    """
    Convert circuit values into Hamiltonian energy scales.

    Args:
        params: Device capacitances and critical currents
        physical: Physical constants

    Returns:
        DerivedEnergies with E_Jj = Phi0*I_cj/(2 pi), W = e^2 C^-1/(2 hbar)
        and E_C34 = e^2/(2 C_34)
    """
    capacitance = params.capacitance_matrix()
    try:
        condition = np.linalg.cond(capacitance)
        if not np.isfinite(condition) or condition > 1e14:
            raise np.linalg.LinAlgError(f"condition number {condition:.3g}")
        inverse = np.linalg.inv(capacitance)
    except np.linalg.LinAlgError as e:
        raise CircuitError(f"Capacitance matrix is not invertible: {e}",
                           {"capacitance_matrix_ff": (capacitance / FEMTO).tolist()}) from e

    inverse = 0.5 * (inverse + inverse.T)
    charging = physical.elementary_charge ** 2 * inverse / (2.0 * physical.hbar)
    if np.min(np.linalg.eigvalsh(charging)) <= 0.0:
        raise CircuitError("Charging matrix is not positive definite",
                           {"eigenvalues": np.linalg.eigvalsh(charging).tolist()})

    currents = np.array([params.critical_current(j) for j in range(1, JUNCTION_COUNT + 1)]) * NANO
    josephson = physical.flux_quantum * currents / (2.0 * math.pi)

    c34 = params.capacitance(3, 4) * FEMTO
    shunt = physical.elementary_charge ** 2 / (2.0 * c34) if c34 > 0.0 else math.inf

    logger.debug(f"Derived energies: E_J/h = "
                 f"{np.round(josephson / physical.planck_constant / 1e9, 4).tolist()} GHz")
    return DerivedEnergies(josephson_energy=josephson, charging_matrix=charging,
                           shunt_charging_energy=shunt, physical=physical)


@dataclass(frozen=True)
class ChargeGrid:
    """Cooper-pair numbers truncated at +-cutoff for each of the four modes."""
    cutoff: int

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise CircuitError(f"Charge cutoff must be an integer >= 1, got {self.cutoff}")

    @property
    def per_mode_dim(self) -> int:
        return 2 * self.cutoff + 1

    @property
    def total_dim(self) -> int:
        return self.per_mode_dim ** MODE_COUNT

    def charges(self) -> np.ndarray:
        return np.arange(-self.cutoff, self.cutoff + 1, dtype=float)

    def mode_charges(self) -> np.ndarray:
        """(4, total_dim) array of the charge of each mode for every basis state."""
        grids = np.meshgrid(*([self.charges()] * MODE_COUNT), indexing="ij")
        return np.stack([g.ravel() for g in grids])


# Single-mode matrices

def number_matrix(cutoff: int) -> sp.csr_matrix:
    return sp.diags(np.arange(-cutoff, cutoff + 1, dtype=float), 0, format="csr")


def raising_matrix(cutoff: int) -> sp.csr_matrix:
    """exp(i phi): |n> -> |n+1>, dropping the top charge state."""
    dim = 2 * cutoff + 1
    return sp.diags(np.ones(dim - 1), -1, format="csr")


def cos_matrix(cutoff: int) -> sp.csr_matrix:
    dim = 2 * cutoff + 1
    half = 0.5 * np.ones(dim - 1)
    return sp.diags([half, half], [-1, 1], format="csr")


def sin_matrix(cutoff: int) -> sp.csr_matrix:
    """sin phi with 1/(2i) below the diagonal and -1/(2i) above it."""
    dim = 2 * cutoff + 1
    below = np.full(dim - 1, 1.0 / 2j)
    above = np.full(dim - 1, -1.0 / 2j)
    return sp.diags([below, above], [-1, 1], format="csr", dtype=complex)


def lift(operator: sp.spmatrix, mode: int, grid: ChargeGrid) -> sp.csr_matrix:
    """Embed a single-mode operator (mode is 1-based) into the four-mode tensor space."""
    identity = sp.identity(grid.per_mode_dim, format="csr")
    factors = [identity] * MODE_COUNT
    factors[mode - 1] = operator
    result = factors[0]
    for factor in factors[1:]:
        result = sp.kron(result, factor, format="csr")
    return result


@dataclass(frozen=True)
class ChargeBasisOperators:
    """Sparse operators on the full (2N_C+1)^4 space."""
    grid: ChargeGrid
    number_ops: Tuple[sp.csr_matrix, ...]
    cos_ops: Tuple[sp.csr_matrix, ...]
    sin_ops: Tuple[sp.csr_matrix, ...]
    coupler_cos: sp.csr_matrix
    coupler_sin: sp.csr_matrix
    drive_op: sp.csr_matrix
    charging_op: sp.csr_matrix


def build_operators(grid: ChargeGrid, energies: DerivedEnergies) -> ChargeBasisOperators:
    """
    Build the charge-basis operators of the four-mode circuit.

    C_hat = cos(phi_3 - phi_4) and S_hat = sin(phi_3 - phi_4) are assembled
    from the charge-raising matrices so that each stays a two-band operator.
    D_hat = (0 0 -1 1) W n and the charging term 4 n^T W n are diagonal.
    """
    cutoff = grid.cutoff
    try:
        number_ops = tuple(lift(number_matrix(cutoff), j, grid) for j in range(1, 5))
        cos_ops = tuple(lift(cos_matrix(cutoff), j, grid) for j in range(1, 5))
        sin_ops = tuple(lift(sin_matrix(cutoff), j, grid) for j in range(1, 5))

        raise3 = lift(raising_matrix(cutoff), 3, grid)
        raise4 = lift(raising_matrix(cutoff), 4, grid)
        hop = (raise3 @ raise4.T).tocsr()
        coupler_cos = (0.5 * (hop + hop.T)).tocsr()
        coupler_sin = ((hop - hop.T) * (1.0 / 2j)).tocsr()

        charges = grid.mode_charges()
        w = energies.charging_matrix
        charging_diag = 4.0 * np.einsum("jd,jl,ld->d", charges, w, charges)
        drive_diag = (w[3, :] - w[2, :]) @ charges
        charging_op = sp.diags(charging_diag, 0, format="csr")
        drive_op = sp.diags(drive_diag, 0, format="csr")
    except MemoryError as e:
        raise CapacityError(f"Out of memory building operators at N_C={cutoff}",
                            {"charge_cutoff": cutoff, "total_dim": grid.total_dim}) from e

    logger.debug(f"Built charge-basis operators: N_C={cutoff}, dim={grid.total_dim}")
    return ChargeBasisOperators(
        grid=grid,
        number_ops=number_ops,
        cos_ops=cos_ops,
        sin_ops=sin_ops,
        coupler_cos=coupler_cos,
        coupler_sin=coupler_sin,
        drive_op=drive_op,
        charging_op=charging_op,
    )


def flux_coefficients(energies: DerivedEnergies, flux: float,
                      flux_rate: float = 0.0) -> Tuple[float, float, float]:
    """
    Coefficients (a, b, c) of C_hat, S_hat and D_hat in H - H0.

    a = -(E_J5/hbar)(cos phi - 1), b = (E_J5/hbar) sin phi and
    c = hbar*phi_dot/E_C34, all in rad/s except c which is dimensionless.
    """
    if not (math.isfinite(flux) and math.isfinite(flux_rate)):
        raise CircuitError(f"Flux inputs must be finite, got ({flux}, {flux_rate})")
    # exact periodicity: phi = 2 pi maps back to 0
    wrapped = math.remainder(flux, 2.0 * math.pi)
    ej5 = energies.coupler_frequency
    a = -ej5 * (math.cos(wrapped) - 1.0)
    b = ej5 * math.sin(wrapped)
    c = energies.physical.hbar * flux_rate / energies.shunt_charging_energy
    return a, b, c


@dataclass(frozen=True)
class HamiltonianAssembly:
    """H(phi, phi_dot) = H0 + a(phi) C_hat + b(phi) S_hat + c(phi_dot) D_hat."""
    static_part: sp.csr_matrix
    operators: ChargeBasisOperators
    energies: DerivedEnergies

    def coefficients(self, flux: float, flux_rate: float = 0.0) -> Tuple[float, float, float]:
        return flux_coefficients(self.energies, flux, flux_rate)

    def at(self, flux: float, flux_rate: float = 0.0) -> sp.csr_matrix:
        a, b, c = self.coefficients(flux, flux_rate)
        if a == 0.0 and b == 0.0 and c == 0.0:
            return self.static_part.copy()
        ops = self.operators
        hamiltonian = (self.static_part.astype(complex)
                       + a * ops.coupler_cos + b * ops.coupler_sin + c * ops.drive_op)
        return hamiltonian.tocsr()


def static_hamiltonian(ops: ChargeBasisOperators, energies: DerivedEnergies) -> sp.csr_matrix:
    """H0 = 4 n^T W n - sum_j (E_Jj/hbar) cos phi_j - (E_J5/hbar) C_hat."""
    ej = energies.josephson_frequency
    hamiltonian = ops.charging_op.copy()
    for j in range(MODE_COUNT):
        hamiltonian = hamiltonian - ej[j] * ops.cos_ops[j]
    hamiltonian = hamiltonian - ej[4] * ops.coupler_cos
    return hamiltonian.tocsr()


def build_assembly(ops: ChargeBasisOperators, energies: DerivedEnergies) -> HamiltonianAssembly:
    return HamiltonianAssembly(static_part=static_hamiltonian(ops, energies),
                               operators=ops, energies=energies)


def assemble_hamiltonian(ops: ChargeBasisOperators, energies: DerivedEnergies,
                         flux: float, flux_rate: float = 0.0) -> sp.csr_matrix:
    """
    Full Hamiltonian at external flux `flux` (rad) and flux rate `flux_rate` (rad/s).

    Returns:
        Sparse Hermitian matrix in rad/s; equals H0 when both arguments vanish
    """
    return build_assembly(ops, energies).at(flux, flux_rate)


# Isolated sub-Hamiltonians (dense, small)

def mode_hamiltonian(cutoff: int, charging: float, josephson: float) -> np.ndarray:
    """Single transmon 4 W n^2 - (E_J/hbar) cos phi, dense, rad/s."""
    n = number_matrix(cutoff).toarray()
    return 4.0 * charging * n @ n - josephson * cos_matrix(cutoff).toarray()


def coupler_hamiltonian(cutoff: int, energies: DerivedEnergies, flux: float) -> np.ndarray:
    """
    Two-mode coupler Hamiltonian H_PM(phi_ex) on modes 3 and 4, dense, rad/s.

    Contains the coupler charging block of W, both coupler junctions and the
    flux-biased shunt junction; the charge couplings to the qubits are left out.
    """
    d = 2 * cutoff + 1
    identity = np.eye(d)
    n = number_matrix(cutoff).toarray()
    cos = cos_matrix(cutoff).toarray()
    raising = raising_matrix(cutoff).toarray()
    w = energies.charging_matrix
    ej = energies.josephson_frequency

    n3 = np.kron(n, identity)
    n4 = np.kron(identity, n)
    hop = np.kron(raising, raising.T)
    coupler_cos = 0.5 * (hop + hop.T)
    coupler_sin = (hop - hop.T) / 2j

    wrapped = math.remainder(flux, 2.0 * math.pi)
    hamiltonian = (4.0 * (w[2, 2] * n3 @ n3 + w[3, 3] * n4 @ n4 + 2.0 * w[2, 3] * n3 @ n4)
                   - ej[2] * np.kron(cos, identity) - ej[3] * np.kron(identity, cos)
                   - ej[4] * (math.cos(wrapped) * coupler_cos - math.sin(wrapped) * coupler_sin))
    return 0.5 * (hamiltonian + hamiltonian.conj().T)


def transmon_transition(charging: float, josephson: float) -> float:
    """Perturbative transmon frequency sqrt(8 W E_J/hbar) - W (rad/s)."""
    return math.sqrt(8.0 * charging * josephson) - charging


def operator_sparsity(matrix: sp.spmatrix) -> Dict[str, float]:
    """Nonzero statistics of a sparse operator."""
    matrix = sp.csr_matrix(matrix)
    per_row = np.diff(matrix.indptr)
    return {"nnz": int(matrix.nnz), "max_per_row": int(per_row.max(initial=0)),
            "dim": int(matrix.shape[0])}

