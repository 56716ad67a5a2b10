"""
Tests for labeled spectra, static ZZ, semianalytic rates and flux sweeps.
"""
import math

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from app.circuit import (
    ChargeGrid,
    CircuitParams,
    build_assembly,
    build_operators,
    derive_energies,
    mode_hamiltonian,
)
from app.device_params import get_capacitances, get_critical_currents
from app.errors import FluxRangeError, LabelingError, SimulationError
from app.spectrum import (
    GROUND,
    M_MODE,
    P_MODE,
    STATE_01,
    STATE_10,
    STATE_11,
    LabeledSpectrum,
    SweepPoint,
    SweepTable,
    anharmonicities,
    build_bare_basis,
    compute_spectrum,
    cutoff_convergence,
    direct_iswap_rate,
    flux_sweep,
    hybridization,
    indirect_iswap_rate,
    quasi_static_average,
    static_zz,
)

TWO_PI = 2.0 * math.pi
RUN_SLOW = os.getenv("CSDTC_RUN_SLOW") == "1"


def decoupled_params() -> CircuitParams:
    """Device with every qubit mutual capacitance removed: qubits and coupler separate exactly."""
    caps = get_capacitances()
    caps.update(c12=0.0, c13=0.0, c14=0.0, c23=0.0, c24=0.0)
    return CircuitParams(caps, get_critical_currents())


def synthetic_spectrum(frequencies_ghz) -> LabeledSpectrum:
    labels = [GROUND, STATE_10, STATE_01, STATE_11]
    energies = TWO_PI * 1e9 * np.asarray(frequencies_ghz, dtype=float)
    return LabeledSpectrum(flux=0.0, energies=energies, vectors=np.eye(len(labels)),
                           label_map={label: i for i, label in enumerate(labels)},
                           overlap_quality={label: 1.0 for label in labels})


class TestDecoupledDevice:
    """Exact statements for a device whose qubits do not couple to the coupler."""

    def setup_method(self):
        """Setup test fixtures."""
        self.energies = derive_energies(decoupled_params())
        self.cutoff = 2
        self.operators = build_operators(ChargeGrid(self.cutoff), self.energies)
        self.assembly = build_assembly(self.operators, self.energies)
        self.bare = build_bare_basis(self.energies, self.cutoff, 0.0)
        self.spectrum = compute_spectrum(self.assembly, 0.0, 20, 1e-12, dense_limit=1000,
                                         bare=self.bare)

    def test_required_labels_resolved_with_full_overlap(self):
        """Eigenstates are bare product states."""
        for label in (GROUND, STATE_10, STATE_01, STATE_11, P_MODE, M_MODE):
            assert self.spectrum.overlap_quality[label] == pytest.approx(1.0, abs=1e-9)
        assert self.spectrum.label_of(self.spectrum.index(STATE_10)) == STATE_10

    def test_qubit_frequency_matches_isolated_transmon(self):
        """omega_1 equals the isolated Q1 transition."""
        w = self.energies.charging_matrix
        levels = np.linalg.eigvalsh(mode_hamiltonian(self.cutoff, w[0, 0],
                                                     self.energies.josephson_frequency[0]))
        assert self.spectrum.frequency(STATE_10) == pytest.approx(levels[1] - levels[0],
                                                                  rel=1e-9)
        alpha1, _ = anharmonicities(self.spectrum)
        assert alpha1 == pytest.approx(levels[2] - 2 * levels[1] + levels[0], rel=1e-6)

    def test_static_zz_vanishes(self):
        """Uncoupled qubits have no ZZ."""
        assert abs(static_zz(self.spectrum)) < TWO_PI * 10.0

    def test_no_coupler_participation(self):
        """Computational states carry no coupler excitation."""
        report = hybridization(0.0, self.spectrum, self.bare)
        assert report.average < 1e-10
        assert all(value == pytest.approx(1.0, abs=1e-9) for value in report.coverage.values())
        assert report.warnings == ()

    def test_semianalytic_rates_vanish(self):
        """Without coupling there is neither a direct nor an indirect exchange."""
        amplitude = TWO_PI * 0.28
        direct = direct_iswap_rate(amplitude, self.spectrum, self.operators, self.energies)
        indirect = indirect_iswap_rate(amplitude, self.spectrum, self.operators,
                                       self.energies, 20)
        assert abs(direct) < TWO_PI
        assert abs(indirect.value) < TWO_PI

    def test_indirect_rate_truncation_change(self):
        """The reported truncation change is the contribution above the reference cutoff."""
        indirect = indirect_iswap_rate(TWO_PI * 0.28, self.spectrum, self.operators,
                                       self.energies, 20)
        assert indirect.reference_cutoff == 10
        upper = complex(sum(t for j, t in indirect.terms.items() if j >= 10))
        assert indirect.truncation_change == pytest.approx(abs(upper), rel=1e-9, abs=1e-12)
        full = indirect_iswap_rate(TWO_PI * 0.28, self.spectrum, self.operators,
                                   self.energies, 20, reference_cutoff=20)
        assert full.truncation_change == 0.0
        with pytest.raises(ValueError):
            indirect_iswap_rate(TWO_PI * 0.28, self.spectrum, self.operators,
                                self.energies, 20, reference_cutoff=0)

    def test_negative_amplitude_rejected(self):
        """Drive amplitudes are nonnegative."""
        with pytest.raises(ValueError):
            direct_iswap_rate(-0.1, self.spectrum, self.operators, self.energies)

    def test_state_cutoff_bounded_by_spectrum(self):
        """The intermediate-state sum needs the states it sums over."""
        with pytest.raises(ValueError):
            indirect_iswap_rate(1.0, self.spectrum, self.operators, self.energies, 21)

    def test_mismatched_bias_rejected(self):
        """Hybridization needs spectrum and bare basis at the same flux."""
        with pytest.raises(ValueError):
            hybridization(0.1, self.spectrum, self.bare)

    def test_missing_required_label(self):
        """Too few eigenpairs to contain |11> is a labeling error."""
        with pytest.raises(LabelingError) as excinfo:
            compute_spectrum(self.assembly, 0.0, 3, 1e-12, dense_limit=1000, bare=self.bare)
        assert excinfo.value.details["label"]

    def test_bare_basis_orthonormal(self):
        """Factor eigenbases are orthonormal."""
        assert self.bare.orthonormality_error() < 1e-12


class TestStaticZZ:
    """Test cases for static_zz on hand-built spectra."""

    def test_definition(self):
        """zeta = w11 - w10 - w01 + w00."""
        spectrum = synthetic_spectrum([0.0, 4.0, 4.5, 8.49996])
        zeta = static_zz(spectrum)
        assert zeta / TWO_PI / 1e3 == pytest.approx(-40.0, rel=1e-6)

    def test_gauge_invariance(self):
        """A common energy offset leaves zeta unchanged."""
        first = synthetic_spectrum([0.0, 4.0, 4.5, 8.5001])
        second = synthetic_spectrum([-100.0, -96.0, -95.5, -91.4999])
        assert static_zz(first) == pytest.approx(static_zz(second), abs=TWO_PI * 1e-2)

    def test_missing_label(self):
        """Unknown labels raise LabelingError."""
        with pytest.raises(LabelingError):
            synthetic_spectrum([0.0, 4.0, 4.5, 8.5]).index(P_MODE)


class TestSweepTable:
    """Test cases for sweep tables and quasi-static averages."""

    def setup_method(self):
        """Setup test fixtures."""
        fluxes = TWO_PI * np.linspace(-0.2, 0.2, 9)
        zetas = TWO_PI * 1e3 * np.array([-5.0, -12.0, -20.0, -30.0, -35.0,
                                         -30.0, -20.0, -12.0, -5.0])
        points = [SweepPoint(flux=f, omega1=TWO_PI * (3.95e9 - 1e8 * (f / TWO_PI) ** 2),
                             omega2=TWO_PI * 4.448e9, omegap=TWO_PI * 6.358e9,
                             omegam=TWO_PI * 5.987e9, zeta=z, pbar_c=0.01)
                  for f, z in zip(fluxes, zetas)]
        points[3] = SweepPoint(flux=fluxes[3], error="LabelingError: test")
        self.table = SweepTable(points=tuple(points))

    def test_failures_recorded(self):
        """Failed points keep their flux and message."""
        assert len(self.table.failures) == 1
        assert self.table.failures[0].error.startswith("LabelingError")

    def test_csv_rows_units(self):
        """Rows are in flux quanta, GHz and kHz; failed cells are blank."""
        rows = self.table.csv_rows()
        assert rows[0][0] == pytest.approx(-0.2)
        assert rows[4][2] == pytest.approx(4.448)
        assert rows[4][5] == pytest.approx(-35.0)
        assert rows[3][1] is None

    def test_curve_skips_failed_points(self):
        """Splines are built over the valid points only."""
        curve = self.table.curve("zeta")
        assert curve(0.0) / TWO_PI / 1e3 == pytest.approx(-35.0)

    def test_flux_sensitivity(self):
        """The spline derivative of a quadratic omega_1 is exact; omega_2 is flat."""
        slope = self.table.flux_sensitivity("omega1")
        assert slope[-1] == pytest.approx(-1e8 * self.table.fluxes[-1] / math.pi, rel=1e-6)
        assert slope[4] == pytest.approx(0.0, abs=1.0)
        assert np.allclose(self.table.flux_sensitivity("omega2"), 0.0, atol=1e-3)

    def test_zz_minima(self):
        """|zeta| has no interior minimum on a single well."""
        assert self.table.zz_minima() == []

    def test_is_decreasing(self):
        """omega_1 falls away from zero flux on the positive side."""
        assert self.table.is_decreasing("omega1", 0.0, TWO_PI * 0.2)
        assert not self.table.is_decreasing("omega1", -TWO_PI * 0.2, 0.0)

    def test_quasi_static_average(self):
        """Average of A^2 cos^2 over a period is A^2/2."""
        x = np.linspace(-1.0, 1.0, 21)
        quadratic = CubicSpline(x, 3.0 * x ** 2)
        assert quasi_static_average(quadratic, 0.5) == pytest.approx(3.0 * 0.25 / 2.0)
        linear = CubicSpline(x, 2.0 * x + 1.0)
        assert quasi_static_average(linear, 0.8) == pytest.approx(1.0)


class TestFluxSweep:
    """Test cases for flux_sweep."""

    def setup_method(self):
        """Setup test fixtures."""
        energies = derive_energies(decoupled_params())
        self.assembly = build_assembly(build_operators(ChargeGrid(2), energies), energies)

    def test_out_of_range_grid(self):
        """Fluxes beyond half a flux quantum are rejected."""
        with pytest.raises(FluxRangeError):
            flux_sweep(self.assembly, [0.0, TWO_PI * 0.6], 20, 1e-12)

    def test_failing_points_do_not_abort(self):
        """Each point records its own failure."""
        table = flux_sweep(self.assembly, [0.0, 0.5], 500, 1e-12, threads=2)
        assert len(table.failures) == 2
        assert all("ValueError" in p.error for p in table.failures)
        with pytest.raises(SimulationError):
            table.curve("zeta")

    def test_decoupled_sweep_has_no_zz(self):
        """Static ZZ stays zero at every bias of the decoupled device."""
        table = flux_sweep(self.assembly, TWO_PI * np.array([-0.2, 0.0, 0.2]), 20, 1e-12,
                           threads=2, dense_limit=1000)
        assert not table.failures
        assert np.all(np.abs(table.column("zeta")) < TWO_PI * 10.0)
        omega1 = table.column("omega1")
        assert omega1[0] == pytest.approx(omega1[1], rel=1e-9)

    def test_cutoff_convergence_rows(self):
        """One row per cutoff, in ascending order."""
        report = cutoff_convergence(decoupled_params(), [3, 2], 20, 1e-12, dense_limit=1000)
        assert [row.cutoff for row in report.rows] == [2, 3]
        assert report.differences("omega1").shape == (1,)
        rows = report.csv_rows()
        assert [row[0] for row in rows] == [2, 3]
        assert rows[0][6:] == [None] * 5
        assert rows[1][10] == pytest.approx(report.differences("zeta")[0] / (TWO_PI * 1e3))


@pytest.mark.skipif(not RUN_SLOW, reason="set CSDTC_RUN_SLOW=1 for full-scale checks")
class TestFittedDevice:
    """Converged zero-flux numbers of the fitted device."""

    def setup_method(self):
        """Setup test fixtures."""
        self.energies = derive_energies(CircuitParams.fitted_device())
        self.assembly = build_assembly(build_operators(ChargeGrid(6), self.energies),
                                       self.energies)
        self.spectrum = compute_spectrum(self.assembly, 0.0, 30, 1e-12)

    def test_frequencies(self):
        """Qubit and coupler frequencies near the characterization."""
        assert self.spectrum.frequency(STATE_10) / TWO_PI / 1e9 == pytest.approx(3.950, rel=0.02)
        assert self.spectrum.frequency(STATE_01) / TWO_PI / 1e9 == pytest.approx(4.448, rel=0.02)
        assert self.spectrum.frequency(M_MODE) < self.spectrum.frequency(P_MODE)

    def test_static_zz(self):
        """zeta(0)/2pi is a few tens of kHz and negative."""
        zeta_khz = static_zz(self.spectrum) / TWO_PI / 1e3
        assert zeta_khz == pytest.approx(-35.3, rel=0.15)
