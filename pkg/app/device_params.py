"""
Tabulated device data for the CSDTC two-qubit device.
Provides the fitted circuit parameters, the zero-flux characterization of
the four modes and the reference numbers reported for the iSWAP gate.
"""
import math
from typing import Any, Dict


# Fitted circuit capacitances (fF); c_jj are the self terms of the
# capacitance matrix, the rest are mutual capacitances.
CAPACITANCES_FF: Dict[str, float] = {
    "c11": 108.0,
    "c22": 80.0,
    "c33": 90.0,
    "c44": 90.0,
    "c12": 0.005,
    "c13": 12.6,
    "c14": 0.06,
    "c23": 0.06,
    "c24": 12.6,
    "c34": 30.04,
}

# Josephson-junction critical currents (nA); ic5 is the coupler junction.
CRITICAL_CURRENTS_NA: Dict[str, float] = {
    "ic1": 26.78,
    "ic2": 26.62,
    "ic3": 55.18,
    "ic4": 55.18,
    "ic5": 11.9,
}

# Zero-flux characterization of Q1, Q2 and the coupler P and M modes.
MODE_CHARACTERIZATION: Dict[str, Dict[str, Any]] = {
    "q1": {"frequency_ghz": 3.950, "anharmonicity_mhz": -176.0,
           "t1_us": 226.0, "t2_star_us": 256.0, "t2_echo_us": 322.0},
    "q2": {"frequency_ghz": 4.448, "anharmonicity_mhz": -213.0,
           "t1_us": 200.0, "t2_star_us": 200.0, "t2_echo_us": 286.0},
    "p": {"frequency_ghz": 6.358, "anharmonicity_mhz": None,
          "t1_us": 38.0, "t2_star_us": 64.0, "t2_echo_us": 73.0},
    "m": {"frequency_ghz": 5.987, "anharmonicity_mhz": None,
          "t1_us": 100.0, "t2_star_us": 128.0, "t2_echo_us": 175.0},
}

# Gate settings of the best benchmarked iSWAP.
GATE_SETTINGS: Dict[str, float] = {
    "total_time_ns": 112.0,
    "idle_pad_ns": 6.0,
    "ramp_rate_per_ns": 0.29,
    "drive_phase_rad": -math.pi / 2,
    "amplitude_over_2pi": 0.28,
    "frequency_mhz": 249.0,
}

# Reported numbers used as cross-checks in summaries.
REFERENCE_VALUES: Dict[str, float] = {
    "detuning_mhz": 498.0,
    "zz_zero_flux_khz": -35.3,
    "zz_minimum_khz": -13.8,
    "zz_minimum_flux_over_2pi": 0.18,
    "zz_effective_minimum_khz": -4.7,
    "zz_dynamical_khz_at_028": 42.4,
    "r_iswap": 0.00078,
    "leakage_l1": 0.00011,
    "r_idle": 0.000065,
    "t_depolarizing_us": 57.0,
    "t_effective_us": 88.0,
    "flux_noise_sqrt_amplitude_uphi0": 4.37,
    "hybridization_iswap_peak": 0.05,
    "hybridization_cz_peak": 0.40,
}


def get_capacitances() -> Dict[str, float]:
    """Get the fitted capacitances (fF)."""
    return CAPACITANCES_FF.copy()


def get_critical_currents() -> Dict[str, float]:
    """Get the fitted critical currents (nA)."""
    return CRITICAL_CURRENTS_NA.copy()


def get_mode_characterization() -> Dict[str, Dict[str, Any]]:
    """Get the zero-flux frequencies, anharmonicities and coherence times."""
    return {mode: values.copy() for mode, values in MODE_CHARACTERIZATION.items()}


def get_gate_settings() -> Dict[str, float]:
    return GATE_SETTINGS.copy()


def get_reference_values() -> Dict[str, float]:
    return REFERENCE_VALUES.copy()

