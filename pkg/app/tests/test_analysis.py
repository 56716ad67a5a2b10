"""
Tests for RB fits, the error budget and the echo flux-noise analysis.
"""
import math

import numpy as np
import pytest
from unittest.mock import patch

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from app.analysis import (
    INTERLEAVED,
    LEAKAGE_FREE,
    CoherenceRecord,
    EchoTrace,
    InterleavedError,
    RBDataset,
    coherence_records,
    coherent_zz_error,
    decay_to_error,
    depolarizing_time,
    echo_noise_fit,
    error_budget,
    fit_decay,
    fit_echo_decay,
    idle_error,
    idle_rate,
    incoherent_error,
    interleaved_error,
    leakage_error,
    synthesize_echo,
    synthesize_rb,
    zz_compensation_angle,
)
from app.config import CoherenceSettings
from app.errors import FitError

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")
LENGTHS = [1, 2, 4, 8, 16, 32, 64, 96, 128, 192, 256, 384]
US = 1e-6
NS = 1e-9


class TestRBDataset:
    """Test cases for RBDataset validation and loading."""

    def test_invalid_values(self):
        """Probabilities, integer counts and known kinds are required."""
        with pytest.raises(ValueError):
            RBDataset(lengths=np.array([1, 2]), values=np.array([0.5, 1.2]))
        with pytest.raises(ValueError):
            RBDataset(lengths=np.array([1.5, 2.0]), values=np.array([0.5, 0.4]))
        with pytest.raises(ValueError):
            RBDataset(lengths=np.array([1, 2]), values=np.array([0.5, 0.4]), kind="purity")
        with pytest.raises(ValueError):
            RBDataset(lengths=np.array([1, 2]), values=np.array([0.5, 0.4]),
                      stderr=np.array([0.01, 0.0]))

    def test_from_csv(self):
        """m, value and stderr columns load into a dataset."""
        data = RBDataset.from_csv(os.path.join(FIXTURES, "srb.csv"))
        assert data.lengths.tolist() == [1, 2, 4, 8, 16, 32, 64, 128, 256]
        assert data.values[0] == pytest.approx(0.72 * 0.985 + 0.25)
        assert np.all(data.stderr == 0.002)

    def test_from_csv_missing_columns(self, tmp_path):
        """A file without a value column is rejected."""
        path = tmp_path / "bad.csv"
        path.write_text("m,probability\n1,0.9\n")
        with pytest.raises(ValueError):
            RBDataset.from_csv(str(path))


class TestFitDecay:
    """Test cases for fit_decay."""

    def test_exact_recovery(self):
        """Noise-free A lambda^m + B is recovered to 1e-8."""
        fit = fit_decay(synthesize_rb(0.99, 0.7, 0.25, LENGTHS))
        assert fit.decay == pytest.approx(0.99, abs=1e-8)
        assert fit.amplitude == pytest.approx(0.7, abs=1e-8)
        assert fit.offset == pytest.approx(0.25, abs=1e-8)
        assert fit.physical
        assert fit.residual_norm < 1e-8

    def test_noisy_fits_unbiased(self):
        """Over many seeds the mean lambda sits within two standard errors of the truth."""
        fits = [fit_decay(synthesize_rb(0.99, 0.7, 0.25, LENGTHS, noise=0.01, seed=seed))
                for seed in range(30)]
        decays = np.array([fit.decay for fit in fits])
        errors = np.array([fit.decay_err for fit in fits])
        assert np.all(errors > 0.0)
        assert abs(decays.mean() - 0.99) < 2.0 * errors.mean()

    def test_scale_equivariance(self):
        """Scaling the data scales A and B and leaves lambda unchanged."""
        data = synthesize_rb(0.98, 0.6, 0.3, LENGTHS, noise=0.01, seed=3)
        scaled = RBDataset(lengths=data.lengths, values=0.5 * data.values)
        fit = fit_decay(RBDataset(lengths=data.lengths, values=data.values))
        half = fit_decay(scaled)
        assert half.decay == pytest.approx(fit.decay, abs=1e-9)
        assert half.amplitude == pytest.approx(0.5 * fit.amplitude, rel=1e-6)
        assert half.offset == pytest.approx(0.5 * fit.offset, rel=1e-6)

    def test_constant_data_flagged(self):
        """A flat decay has no identifiable lambda."""
        fit = fit_decay(RBDataset(lengths=np.array(LENGTHS), values=np.full(len(LENGTHS), 0.4)))
        assert not fit.physical
        assert math.isnan(fit.decay)
        assert fit.warnings

    @patch("app.analysis._initial_decay", return_value=np.array([0.1, 1.005, 0.2]))
    def test_growth_flagged_unphysical(self, mock_start):
        """lambda > 1 at the optimum is reported, not hidden."""
        lengths = np.array([1, 5, 10, 20, 30, 40, 50])
        values = 0.1 * 1.01 ** lengths + 0.2
        fit = fit_decay(RBDataset(lengths=lengths, values=values))
        assert fit.decay == pytest.approx(1.01, rel=1e-6)
        assert not fit.physical

    def test_too_few_lengths(self):
        """Four distinct Clifford counts are the minimum."""
        data = RBDataset(lengths=np.array([1, 2, 4, 4]), values=np.array([0.9, 0.8, 0.7, 0.7]))
        with pytest.raises(ValueError):
            fit_decay(data)

    def test_synthesize_is_deterministic(self):
        """The same seed gives the same data."""
        first = synthesize_rb(0.99, 0.7, 0.25, LENGTHS, noise=0.01, seed=7)
        second = synthesize_rb(0.99, 0.7, 0.25, LENGTHS, noise=0.01, seed=7)
        assert np.array_equal(first.values, second.values)
        with pytest.raises(ValueError):
            synthesize_rb(1.1, 0.7, 0.25, LENGTHS)


class TestInterleavedError:
    """Test cases for interleaved and leakage errors."""

    def test_equal_decays(self):
        """Identical reference and interleaved decays give zero gate error."""
        result = interleaved_error(0.99, 0.99)
        assert result.gate == pytest.approx(0.0, abs=1e-15)
        assert result.reference == pytest.approx(0.0075)

    def test_formula(self):
        """r_iSWAP = 1 - (1 - r_IRB)/(1 - r_SRB)."""
        result = interleaved_error(0.985, 0.9775)
        assert result.reference == pytest.approx(0.01125)
        assert result.interleaved == pytest.approx(0.016875)
        assert result.gate == pytest.approx(1.0 - 0.983125 / 0.98875)

    def test_large_dimension_limit(self):
        """r -> 1 - lambda as d grows."""
        assert decay_to_error(0.99, 10 ** 9) == pytest.approx(0.01, rel=1e-8)

    def test_negative_error_warned(self):
        """A slower interleaved decay gives a signed negative error with a warning."""
        result = interleaved_error(0.98, 0.99, lambda_srb_err=1e-4, lambda_irb_err=1e-4)
        assert result.gate < 0.0
        assert "beyond" in result.warnings[0]
        assert result.gate_err > 0.0

    def test_invalid_lambda(self):
        """lambda must lie in (0, 1]."""
        with pytest.raises(ValueError):
            interleaved_error(1.01, 0.99)
        with pytest.raises(ValueError):
            leakage_error(0.99, 0.0)


class TestErrorBudget:
    """Test cases for the budget terms and their quoted values."""

    def test_budget_identity(self):
        """epsilon = r + L1/d = r^D + L1."""
        gate = InterleavedError(reference=0.0, interleaved=0.0, gate=7.8e-4, gate_err=1.5e-4)
        leak = InterleavedError(reference=0.0, interleaved=0.0, gate=1.1e-4, gate_err=0.7e-4)
        budget = error_budget(gate, leak, total_time=112 * NS)
        assert budget.epsilon == pytest.approx(7.8e-4 + 1.1e-4 / 4, abs=1e-12)
        assert budget.epsilon == pytest.approx(budget.r_depolarizing + budget.leakage, abs=1e-12)
        assert budget.epsilon == pytest.approx(8e-4, abs=1e-5)
        assert budget.epsilon_err > 0.0

    def test_depolarizing_time(self):
        """T^D = (2/5) t_tot / r^D: 112 ns at 0.078% is about 57 us."""
        assert depolarizing_time(112 * NS, 7.8e-4) / US == pytest.approx(57.4, abs=0.1)
        assert depolarizing_time(112 * NS, 0.0) == math.inf

    def test_idle_error_quoted_value(self):
        """T_idle of 163 and 133 us with 6 ns pads gives 0.0065%."""
        rates = [1.0 / (163 * US), 1.0 / (133 * US)]
        assert idle_error(rates, 6 * NS) == pytest.approx(6.55e-5, abs=5e-7)
        assert idle_error(rates, 0.0) == 0.0
        assert idle_error([2 * r for r in rates], 6 * NS) == pytest.approx(
            2 * idle_error(rates, 6 * NS))

    def test_effective_coherence_time(self):
        """Zero-flux T1 and echo T2 give T_eff of about 88 us."""
        settings = CoherenceSettings()
        budget = error_budget(InterleavedError(0.0, 0.0, 7.8e-4), InterleavedError(0.0, 0.0, 0.0),
                              total_time=112 * NS, coherence=settings, idle_pad=6 * NS)
        assert budget.t_effective / US == pytest.approx(88.4, abs=0.2)
        assert budget.r_idle is not None and budget.r_idle > 0.0
        report = budget.as_report()
        assert report["t_effective_us"] == pytest.approx(88.4, abs=0.2)
        assert report["t_depolarizing_us"] == pytest.approx(57.4, abs=0.1)

    def test_incoherent_error_limits(self):
        """Infinite coherence contributes nothing."""
        error, effective = incoherent_error(112 * NS, [math.inf, math.inf], [math.inf, math.inf])
        assert error == 0.0
        assert effective == math.inf
        with pytest.raises(ValueError):
            incoherent_error(112 * NS, [100 * US], [100 * US, 100 * US])

    def test_coherent_zz_error(self):
        """Compensation cuts the small-angle error by three."""
        assert coherent_zz_error(0.0) == pytest.approx(0.0, abs=1e-16)
        phase = 0.02
        exact = coherent_zz_error(phase)
        assert exact - phase ** 2 / 20.0 == pytest.approx(0.0, abs=phase ** 4)
        ratio = coherent_zz_error(phase, compensated=False) / exact
        assert ratio == pytest.approx(3.0, rel=1e-3)
        for value in np.linspace(-math.pi / 2, math.pi / 2, 21):
            assert coherent_zz_error(value) <= coherent_zz_error(value, compensated=False) + 1e-15
        assert zz_compensation_angle(phase) == 0.01
        with pytest.raises(ValueError):
            coherent_zz_error(math.pi)

    def test_coherence_records(self):
        """Records convert microseconds and expose idle times."""
        records = coherence_records(CoherenceSettings())
        assert [r.mode for r in records] == ["q1", "q2"]
        assert 1.0 / records[0].idle_rate / US == pytest.approx(1.0 / (1 / 226 + 1 / 256 - 1 / 452))
        assert idle_rate(226 * US, 256 * US) == records[0].idle_rate
        with pytest.raises(ValueError):
            CoherenceRecord(mode="q1", t1=0.0, t2_star=1.0, t2_echo=1.0)


class TestEchoAnalysis:
    """Test cases for echo decay fits and the flux-noise amplitude."""

    def setup_method(self):
        """Setup test fixtures."""
        self.times = np.linspace(0.0, 150 * US, 151)
        self.sqrt_amplitude = 4.37e-6
        self.gamma_exp = 2.2e3

    def _trace(self, mode: str, sensitivity: float) -> EchoTrace:
        return synthesize_echo(mode, self.times, self.gamma_exp, self.sqrt_amplitude,
                               sensitivity)

    def test_single_trace_recovery(self):
        """Both decay rates come back to 1%."""
        sensitivity = 2 * math.pi * 0.5e9
        trace = self._trace("q1", sensitivity)
        fit = fit_echo_decay(trace)
        expected = 2 * math.pi * self.sqrt_amplitude * math.sqrt(math.log(2.0)) * sensitivity
        assert fit.gamma_phi_echo == pytest.approx(expected, rel=1e-2)
        assert fit.gamma_exp == pytest.approx(self.gamma_exp, rel=1e-2)
        assert fit.sensitivity == sensitivity

    def test_flux_noise_amplitude(self):
        """sqrt(A_Phi) of 4.37 uPhi0 is recovered from traces at several sensitivities."""
        traces = [self._trace("q1", 2 * math.pi * 0.5e9), self._trace("q2", 2 * math.pi * 0.3e9),
                  self._trace("m", 2 * math.pi * 0.2e9)]
        fit = echo_noise_fit(traces)
        assert fit.sqrt_amplitude_micro_phi0 == pytest.approx(4.37, rel=1e-2)
        assert fit.intercept >= 0.0
        assert len(fit.traces) == 3

    def test_zero_sensitivity_matches_intercept(self):
        """At a sweet spot the echo dephasing equals the fitted intercept."""
        intercept = 5e3
        times = np.linspace(0.0, 600 * US, 601)
        traces = [synthesize_echo("q1", times, self.gamma_exp, self.sqrt_amplitude, s,
                                  intercept=intercept)
                  for s in (0.0, 2 * math.pi * 0.3e9, 2 * math.pi * 0.5e9)]
        fit = echo_noise_fit(traces)
        assert fit.traces[0].gamma_phi_echo == pytest.approx(fit.intercept, rel=0.05)
        assert fit.intercept == pytest.approx(intercept, rel=0.05)

    def test_invalid_inputs(self):
        """Single traces, shared sensitivities and flat traces are rejected."""
        trace = self._trace("q1", 2 * math.pi * 0.5e9)
        with pytest.raises(ValueError):
            echo_noise_fit([trace])
        with pytest.raises(FitError):
            echo_noise_fit([trace, trace])
        flat = EchoTrace(mode="q1", times=self.times, values=np.full(self.times.size, 0.5),
                         sensitivity=1.0)
        with pytest.raises(FitError):
            fit_echo_decay(flat)
        with pytest.raises(ValueError):
            fit_echo_decay(EchoTrace(mode="q1", times=self.times[:3], values=np.ones(3),
                                     sensitivity=1.0))


class TestFixtureBudget:
    """The bundled RB fixtures produce the expected interleaved numbers."""

    def test_fixture_round_trip(self):
        """Fits of the fixture files recover their generating decays."""
        srb = fit_decay(RBDataset.from_csv(os.path.join(FIXTURES, "srb.csv")))
        irb = fit_decay(RBDataset.from_csv(os.path.join(FIXTURES, "irb.csv"),
                                           variant=INTERLEAVED))
        leak_s = fit_decay(RBDataset.from_csv(os.path.join(FIXTURES, "srb_leakage.csv"),
                                              kind=LEAKAGE_FREE))
        leak_i = fit_decay(RBDataset.from_csv(os.path.join(FIXTURES, "irb_leakage.csv"),
                                              kind=LEAKAGE_FREE, variant=INTERLEAVED))
        assert srb.decay == pytest.approx(0.985, abs=1e-8)
        assert irb.decay == pytest.approx(0.9775, abs=1e-8)
        leakage = leakage_error(leak_s.decay, leak_i.decay)
        assert leakage.gate == pytest.approx(1.0 - (1 - 0.75 * 0.0015) / (1 - 0.75 * 0.001),
                                             rel=1e-5)
