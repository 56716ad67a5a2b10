"""
Tests for run configuration loading.
"""
import pytest
from unittest.mock import patch

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from app.config import Config, RunConfigLoader, SweepSettings, WaveformSettings, parse_cutoffs
from app.device_params import get_capacitances, get_critical_currents
from app.errors import ConfigError


class TestConfig:
    """Test cases for environment defaults."""

    def test_validate_defaults(self):
        """Default environment values are valid."""
        with patch.object(Config, 'LOG_LEVEL', 'INFO'), \
             patch.object(Config, 'THREADS', 2):
            Config.validate()

    def test_validate_names_every_invalid_variable(self):
        """Validation lists all offending variables."""
        with patch.object(Config, 'LOG_LEVEL', 'LOUD'), \
             patch.object(Config, 'TIME_STEP_PS', 0.0), \
             patch.object(Config, 'THREADS', 0):
            with pytest.raises(ValueError) as excinfo:
                Config.validate()
        message = str(excinfo.value)
        assert "LOG_LEVEL" in message
        assert "CSDTC_TIME_STEP_PS" in message
        assert "CSDTC_THREADS" in message


class TestRunConfigLoader:
    """Test cases for RunConfigLoader."""

    def setup_method(self):
        """Setup test fixtures."""
        self.loader = RunConfigLoader()

    def test_minimal_file_uses_tabulated_device(self):
        """Only [meta] given: every section falls back to its defaults."""
        run_config = self.loader.loads("[meta]\nformat = 1\n", output_dir="results", seed=7,
                                       threads=3)

        assert run_config.capacitances_ff == get_capacitances()
        assert run_config.critical_currents_na == get_critical_currents()
        assert run_config.waveform == WaveformSettings()
        assert run_config.sweeps == SweepSettings()
        assert run_config.output_dir == "results"
        assert run_config.seed == 7
        assert run_config.threads == 3

    def test_missing_format_rejected(self):
        """The schema version is mandatory."""
        with pytest.raises(ConfigError) as excinfo:
            self.loader.loads("[capacitances]\nc11 = 100\n")
        assert excinfo.value.field == "meta.format"

    def test_unsupported_format_reports_line(self):
        """Unknown schema versions are rejected with their line number."""
        with pytest.raises(ConfigError) as excinfo:
            self.loader.loads("# device\n[meta]\nformat = 2\n")
        assert excinfo.value.line == 3

    def test_overrides_and_partial_blocks(self):
        """Given keys override the tabulated values, others keep them."""
        text = (
            "[meta]\nformat = 1\n"
            "[capacitances]\nc11 = 100.0\nc12 = 0\n"
            "[junctions]\nic5 = 12.5\n"
            "[simulation]\ncharge_cutoff = 3\ninclude_flux_rate = no\n"
        )
        run_config = self.loader.loads(text)

        assert run_config.capacitances_ff["c11"] == 100.0
        assert run_config.capacitances_ff["c12"] == 0.0
        assert run_config.capacitances_ff["c22"] == get_capacitances()["c22"]
        assert run_config.critical_currents_na["ic5"] == 12.5
        assert run_config.simulation.charge_cutoff == 3
        assert run_config.simulation.include_flux_rate is False

    def test_zero_self_capacitance_rejected(self):
        """Self capacitances must be positive, mutual ones may vanish."""
        with pytest.raises(ConfigError) as excinfo:
            self.loader.loads("[meta]\nformat = 1\n[capacitances]\nc22 = 0\n")
        assert excinfo.value.field == "capacitances.c22"
        assert excinfo.value.line == 4

    def test_unknown_key_rejected(self):
        """Typos in block keys are reported."""
        with pytest.raises(ConfigError) as excinfo:
            self.loader.loads("[meta]\nformat = 1\n[junctions]\nic6 = 10\n")
        assert excinfo.value.field == "junctions.ic6"

    def test_non_numeric_value_reports_field_and_line(self):
        """Malformed numbers carry field and 1-based line."""
        text = "[meta]\nformat = 1\n\n[waveform]\nfrequency_mhz = fast\n"
        with pytest.raises(ConfigError) as excinfo:
            self.loader.loads(text, path="run.ini")
        error = excinfo.value
        assert error.field == "waveform.frequency_mhz"
        assert error.line == 5
        assert "run.ini" in str(error)
        assert error.to_payload()["details"]["line"] == 5

    def test_malformed_line(self):
        """A line that is not key = value is a parse error."""
        with pytest.raises(ConfigError):
            self.loader.loads("[meta]\nformat = 1\nthis is not a pair\n")

    def test_grid_range_syntax(self):
        """start:stop:count is an inclusive linspace."""
        text = "[meta]\nformat = 1\n[sweeps]\nflux_over_2pi = -0.1:0.1:5\n"
        run_config = self.loader.loads(text)
        assert run_config.sweeps.flux_over_2pi == (-0.1, -0.05, 0.0, 0.05, 0.1)

    def test_grid_list_syntax(self):
        """Comma lists are taken as given."""
        text = "[meta]\nformat = 1\n[sweeps]\ndrive_amplitude_over_2pi = 0.1, 0.28\n"
        run_config = self.loader.loads(text)
        assert run_config.sweeps.drive_amplitude_over_2pi == (0.1, 0.28)

    def test_empty_grid_rejected(self):
        """An empty flux grid is a configuration error."""
        text = "[meta]\nformat = 1\n[sweeps]\nflux_over_2pi = 0:0.3:0\n"
        with pytest.raises(ConfigError) as excinfo:
            self.loader.loads(text)
        assert excinfo.value.field == "sweeps.flux_over_2pi"

    def test_non_monotone_grid_rejected(self):
        """Grids must be strictly increasing."""
        text = "[meta]\nformat = 1\n[sweeps]\ntime_ns = 0, 10, 10, 20\n"
        with pytest.raises(ConfigError):
            self.loader.loads(text)

    def test_waveform_total_time_must_exceed_pads(self):
        """Idle pads cannot fill the whole gate."""
        text = "[meta]\nformat = 1\n[waveform]\nidle_pad_ns = 60\ntotal_time_ns = 112\n"
        with pytest.raises(ConfigError) as excinfo:
            self.loader.loads(text)
        assert excinfo.value.field == "waveform.total_time_ns"

    def test_bounds_must_ascend(self):
        """Optimizer bounds are (lower, upper)."""
        text = "[meta]\nformat = 1\n[waveform]\nfrequency_bounds_mhz = 255, 235\n"
        with pytest.raises(ConfigError):
            self.loader.loads(text)

    def test_convergence_cutoffs(self):
        """Convergence cutoffs are read as a sorted integer list."""
        text = "[meta]\nformat = 1\n[simulation]\nconvergence_cutoffs = 6, 4, 8\n"
        run_config = self.loader.loads(text)
        assert run_config.simulation.convergence_cutoffs == (4, 6, 8)
        assert self.loader.loads("[meta]\nformat = 1\n").simulation.convergence_cutoffs == ()

    def test_bad_convergence_cutoffs(self):
        """Repeated or nonpositive cutoffs name the field and line."""
        text = "[meta]\nformat = 1\n[simulation]\nconvergence_cutoffs = 4, 4\n"
        with pytest.raises(ConfigError) as excinfo:
            self.loader.loads(text)
        assert excinfo.value.field == "simulation.convergence_cutoffs"
        assert excinfo.value.line == 4
        with pytest.raises(ValueError):
            parse_cutoffs("0, 2")
        with pytest.raises(ValueError):
            parse_cutoffs("four")

    def test_coherence_pairs(self):
        """Coherence times are read per qubit."""
        text = "[meta]\nformat = 1\n[coherence]\nt1_us = 100, 90\n"
        run_config = self.loader.loads(text)
        assert run_config.coherence.t1_us == (100.0, 90.0)
        assert run_config.coherence.t2_echo_us == (322.0, 286.0)

    def test_load_missing_file(self, tmp_path):
        """Unreadable files raise ConfigError with the path."""
        missing = tmp_path / "absent.ini"
        with pytest.raises(ConfigError) as excinfo:
            self.loader.load(str(missing))
        assert excinfo.value.path == str(missing)

    def test_load_bundled_device_file(self):
        """The bundled run file parses and matches the tabulated device."""
        root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
        run_config = self.loader.load(os.path.join(root, "configs", "device_fitted.ini"))
        assert run_config.capacitances_ff == get_capacitances()
        assert run_config.critical_currents_na == get_critical_currents()


class TestRunConfigDigest:
    """Test cases for the configuration hash."""

    def setup_method(self):
        """Setup test fixtures."""
        self.loader = RunConfigLoader()

    def test_digest_stable_across_formatting(self):
        """Whitespace, comments and key order do not change the hash."""
        first = self.loader.loads("[meta]\nformat = 1\n[capacitances]\nc11 = 108\nc22 = 80\n")
        second = self.loader.loads(
            "[meta]\nformat=1\n\n[capacitances]\n# note\nc22 = 80.0\nc11=108.0\n")
        assert first.digest() == second.digest()

    def test_digest_ignores_output_location(self):
        """Output directory and worker cap are not part of the physics."""
        first = self.loader.loads("[meta]\nformat = 1\n", output_dir="a", threads=1)
        second = self.loader.loads("[meta]\nformat = 1\n", output_dir="b", threads=8)
        assert first.digest() == second.digest()

    def test_digest_tracks_parameters(self):
        """Any physical change changes the hash."""
        base = self.loader.loads("[meta]\nformat = 1\n")
        changed = self.loader.loads("[meta]\nformat = 1\n[junctions]\nic5 = 12\n")
        reseeded = self.loader.loads("[meta]\nformat = 1\n", seed=1)
        assert base.digest() != changed.digest()
        assert base.digest() != reseeded.digest()
        assert len(base.digest()) == 64
