"""
Per-run simulation session: builds the circuit objects once and caches the
expensive intermediate results that several commands share.
"""
import logging
import math
from typing import Dict, Optional, Tuple

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
    derive_energies,
    operator_sparsity,
)
from .config import RunConfig, config
from .dynamics import ReducedModel, build_reduced_model
from .errors import SimulationError
from .spectrum import (
    BareProductBasis,
    ConvergenceReport,
    IndirectRate,
    LabeledSpectrum,
    SweepTable,
    build_bare_basis,
    compute_spectrum,
    cutoff_convergence,
    direct_iswap_rate,
    flux_sweep,
    indirect_iswap_rate,
)
from .utils import log_command
from .waveform import DriveWaveform

TWO_PI = 2.0 * math.pi


class SimulationSession:
    """Lazily built device model for one RunConfig."""

    def __init__(self, run_config: RunConfig, dense_limit: Optional[int] = None):
        self.run_config = run_config
        self.dense_limit = config.DENSE_LIMIT if dense_limit is None else dense_limit
        self.logger = logging.getLogger(__name__)
        self.params = CircuitParams(run_config.capacitances_ff, run_config.critical_currents_na)
        self._energies: Optional[DerivedEnergies] = None
        self._operators: Optional[ChargeBasisOperators] = None
        self._assembly: Optional[HamiltonianAssembly] = None
        self._spectra: Dict[float, LabeledSpectrum] = {}
        self._bare: Dict[float, BareProductBasis] = {}
        self._sweep: Optional[SweepTable] = None
        self._reduced: Optional[ReducedModel] = None

    @property
    def simulation(self):
        return self.run_config.simulation

    @property
    def threads(self) -> int:
        return max(1, int(self.run_config.threads))

    @property
    def time_step(self) -> float:
        """Integrator step in s."""
        return self.simulation.time_step_ps * 1e-12

    @property
    def energies(self) -> DerivedEnergies:
        if self._energies is None:
            self._energies = derive_energies(self.params)
        return self._energies

    @property
    def operators(self) -> ChargeBasisOperators:
        if self._operators is None:
            grid = ChargeGrid(self.simulation.charge_cutoff)
            log_command("session", "operators", f"N_C={grid.cutoff}, dim={grid.total_dim}")
            self._operators = build_operators(grid, self.energies)
        return self._operators

    @property
    def assembly(self) -> HamiltonianAssembly:
        if self._assembly is None:
            self._assembly = build_assembly(self.operators, self.energies)
            stats = operator_sparsity(self._assembly.static_part)
            self.logger.debug(f"H0: dim={stats['dim']}, nnz={stats['nnz']}, "
                              f"max per row={stats['max_per_row']}")
        return self._assembly

    def bare_basis(self, flux: float = 0.0) -> BareProductBasis:
        key = round(float(flux), 15)
        if key not in self._bare:
            bare = build_bare_basis(self.energies, self.simulation.charge_cutoff, flux)
            self.logger.debug(f"Bare basis at phi/2pi={flux / TWO_PI:+.4f}: "
                              f"orthonormality error {bare.orthonormality_error():.2e}")
            self._bare[key] = bare
        return self._bare[key]

    def spectrum(self, flux: float = 0.0, eigen_count: Optional[int] = None) -> LabeledSpectrum:
        """Labeled spectrum at `flux`; the zero-flux one holds enough states for the reduced model."""
        key = round(float(flux), 15)
        count = eigen_count or self.eigen_count
        cached = self._spectra.get(key)
        if cached is None or cached.count < count:
            self.logger.info(f"Diagonalizing at phi/2pi={flux / TWO_PI:+.4f} ({count} states)")
            cached = compute_spectrum(self.assembly, flux, count,
                                      self.simulation.eigen_tolerance, self.dense_limit,
                                      bare=self.bare_basis(flux))
            self._spectra[key] = cached
        return cached

    @property
    def eigen_count(self) -> int:
        return max(self.simulation.eigen_count, self.simulation.reduced_dimension,
                   self.simulation.state_cutoff)

    def sweep(self) -> SweepTable:
        """Flux sweep over the configured grid."""
        if self._sweep is None:
            fluxes = TWO_PI * np.asarray(self.run_config.sweeps.flux_over_2pi, dtype=float)
            self._sweep = flux_sweep(self.assembly, fluxes, self.simulation.eigen_count,
                                     self.simulation.eigen_tolerance, self.threads,
                                     self.dense_limit)
            failures = self._sweep.failures
            if failures:
                self.logger.warning(f"{len(failures)} sweep points failed")
        return self._sweep

    def curve(self, name: str) -> CubicSpline:
        return self.sweep().curve(name)

    def detuning_curve(self) -> CubicSpline:
        """Delta_21(phi_ex) = omega_2 - omega_1 from the sweep."""
        table = self.sweep()
        values = table.column("omega2") - table.column("omega1")
        mask = np.isfinite(values)
        if mask.sum() < 4:
            raise SimulationError("Too few valid sweep points for the detuning curve")
        return CubicSpline(table.fluxes[mask], values[mask])

    def reduced_model(self) -> ReducedModel:
        if self._reduced is None:
            self._reduced = build_reduced_model(self.spectrum(0.0), self.operators,
                                                self.energies,
                                                self.simulation.reduced_dimension,
                                                self.simulation.include_flux_rate)
        return self._reduced

    def gate_waveform(self, amplitude: Optional[float] = None,
                      frequency: Optional[float] = None) -> DriveWaveform:
        return DriveWaveform.from_settings(self.run_config.waveform, amplitude, frequency)

    def indirect_rate(self, amplitude: float) -> IndirectRate:
        """Second-order rate over the configured state cutoff, with its truncation change."""
        spectrum = self.spectrum(0.0)
        return indirect_iswap_rate(amplitude, spectrum, self.operators, self.energies,
                                   min(self.simulation.state_cutoff, spectrum.count))

    def semianalytic_rate(self, amplitude: float) -> Tuple[complex, complex]:
        """(g_dir, g_indir) at drive amplitude `amplitude` (rad)."""
        direct = direct_iswap_rate(amplitude, self.spectrum(0.0), self.operators, self.energies)
        return direct, self.indirect_rate(amplitude).value

    def rate_coefficient(self) -> float:
        """|g_dir + g_indir| / phi_d^2 (rad/s per rad^2)."""
        direct, indirect = self.semianalytic_rate(1.0)
        return float(abs(direct + indirect))

    def cutoff_convergence(self) -> ConvergenceReport:
        """Zero-flux frequencies and ZZ at each configured convergence cutoff."""
        cutoffs = self.simulation.convergence_cutoffs
        log_command("session", "convergence", f"N_C in {list(cutoffs)}")
        return cutoff_convergence(self.params, cutoffs, self.simulation.eigen_count,
                                  self.simulation.eigen_tolerance, self.dense_limit)
