"""
Configuration module for the CSDTC iSWAP simulator.
Loads environment defaults and parses INI-style device/run files.
"""
import configparser
import hashlib
import json
import math
import os
import re
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .device_params import (
    get_capacitances,
    get_critical_currents,
    get_gate_settings,
    get_mode_characterization,
)
from .errors import ConfigError


SUPPORTED_FORMAT = 1


class Config:
    """Runtime defaults loaded from environment variables."""

    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Numerics
    CHARGE_CUTOFF: int = int(os.getenv("CSDTC_CHARGE_CUTOFF", "6"))
    EIGEN_COUNT: int = int(os.getenv("CSDTC_EIGEN_COUNT", "30"))
    EIGEN_TOLERANCE: float = float(os.getenv("CSDTC_EIGEN_TOLERANCE", "1e-12"))
    REDUCED_DIMENSION: int = int(os.getenv("CSDTC_REDUCED_DIMENSION", "60"))
    TIME_STEP_PS: float = float(os.getenv("CSDTC_TIME_STEP_PS", "0.5"))
    DENSE_LIMIT: int = int(os.getenv("CSDTC_DENSE_LIMIT", "1500"))

    # Execution
    THREADS: int = int(os.getenv("CSDTC_THREADS", str(os.cpu_count() or 1)))
    OUTPUT_DIR: str = os.getenv("CSDTC_OUTPUT_DIR", "out")

    @classmethod
    def validate(cls) -> None:
        """Validate that the environment-provided values are usable."""
        invalid = []

        if cls.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            invalid.append("LOG_LEVEL")
        if cls.CHARGE_CUTOFF < 1:
            invalid.append("CSDTC_CHARGE_CUTOFF")
        if cls.EIGEN_COUNT < 6:
            invalid.append("CSDTC_EIGEN_COUNT")
        if not 0.0 < cls.EIGEN_TOLERANCE <= 1e-6:
            invalid.append("CSDTC_EIGEN_TOLERANCE")
        if cls.REDUCED_DIMENSION < 6:
            invalid.append("CSDTC_REDUCED_DIMENSION")
        if cls.TIME_STEP_PS <= 0.0:
            invalid.append("CSDTC_TIME_STEP_PS")
        if cls.THREADS < 1:
            invalid.append("CSDTC_THREADS")

        if invalid:
            raise ValueError(f"Invalid environment variables: {', '.join(invalid)}")


# Global configuration instance
config = Config()

_GATE = get_gate_settings()
_MODES = get_mode_characterization()


@dataclass(frozen=True)
class SimulationSettings:
    charge_cutoff: int = config.CHARGE_CUTOFF
    eigen_count: int = config.EIGEN_COUNT
    eigen_tolerance: float = config.EIGEN_TOLERANCE
    reduced_dimension: int = config.REDUCED_DIMENSION
    time_step_ps: float = config.TIME_STEP_PS
    include_flux_rate: bool = True
    state_cutoff: int = 30
    sample_every: int = 200
    convergence_cutoffs: Tuple[int, ...] = ()


@dataclass(frozen=True)
class WaveformSettings:
    amplitude_over_2pi: float = _GATE["amplitude_over_2pi"]
    frequency_mhz: float = _GATE["frequency_mhz"]
    drive_phase_rad: float = _GATE["drive_phase_rad"]
    drive_duration_ns: float = _GATE["total_time_ns"] - 2.0 * _GATE["idle_pad_ns"]
    idle_pad_ns: float = _GATE["idle_pad_ns"]
    ramp_rate_per_ns: float = _GATE["ramp_rate_per_ns"]
    total_time_ns: float = _GATE["total_time_ns"]
    amplitude_bounds_over_2pi: Tuple[float, float] = (0.15, 0.35)
    frequency_bounds_mhz: Tuple[float, float] = (235.0, 255.0)
    cz_reference_amplitude_over_2pi: Optional[float] = None


@dataclass(frozen=True)
class SweepSettings:
    flux_over_2pi: Tuple[float, ...] = tuple(np.round(np.linspace(-0.3, 0.3, 61), 12))
    drive_frequency_mhz: Tuple[float, ...] = tuple(np.round(np.linspace(244.0, 250.0, 13), 12))
    drive_amplitude_over_2pi: Tuple[float, ...] = (0.1, 0.2, 0.28)
    time_ns: Tuple[float, ...] = tuple(np.round(np.linspace(0.0, 400.0, 801), 12))
    zz_amplitude_over_2pi: Tuple[float, ...] = tuple(np.round(np.linspace(0.05, 0.3, 6), 12))


@dataclass(frozen=True)
class CoherenceSettings:
    """Per-qubit (Q1, Q2) coherence times in microseconds."""
    t1_us: Tuple[float, float] = (_MODES["q1"]["t1_us"], _MODES["q2"]["t1_us"])
    t2_star_us: Tuple[float, float] = (_MODES["q1"]["t2_star_us"], _MODES["q2"]["t2_star_us"])
    t2_echo_us: Tuple[float, float] = (_MODES["q1"]["t2_echo_us"], _MODES["q2"]["t2_echo_us"])


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch command needs, parsed from one configuration file."""
    capacitances_ff: Dict[str, float] = field(default_factory=get_capacitances)
    critical_currents_na: Dict[str, float] = field(default_factory=get_critical_currents)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    waveform: WaveformSettings = field(default_factory=WaveformSettings)
    sweeps: SweepSettings = field(default_factory=SweepSettings)
    coherence: CoherenceSettings = field(default_factory=CoherenceSettings)
    device_path: Optional[str] = None
    output_dir: str = config.OUTPUT_DIR
    seed: int = 0
    threads: int = config.THREADS

    def digest(self) -> str:
        """SHA-256 of the canonical configuration (paths and threads excluded)."""
        payload = asdict(self)
        payload.pop("device_path", None)
        payload.pop("output_dir", None)
        payload.pop("threads", None)
        canonical = json.dumps(payload, sort_keys=True, default=_canonical_float)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _canonical_float(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"Unserializable value {value!r}")


def parse_cutoffs(text: str) -> Tuple[int, ...]:
    """Comma-separated distinct charge cutoffs (each >= 1), returned ascending."""
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"Expected comma-separated integers, got '{text}'") from None
    if not values:
        raise ValueError("At least one cutoff is required")
    if min(values) < 1 or len(set(values)) != len(values):
        raise ValueError(f"Cutoffs must be distinct and at least 1, got {values}")
    return tuple(sorted(values))


class RunConfigLoader:
    """Parses device/run INI files into RunConfig objects."""

    CAPACITANCE_KEYS = ("c11", "c22", "c33", "c44", "c12", "c13", "c14", "c23", "c24", "c34")
    JUNCTION_KEYS = ("ic1", "ic2", "ic3", "ic4", "ic5")

    def __init__(self):
        self.path: Optional[str] = None
        self.text: str = ""

    def load(self, path: str, output_dir: Optional[str] = None,
             seed: Optional[int] = None, threads: Optional[int] = None) -> RunConfig:
        """
        Load a configuration file.

        Args:
            path: INI file with [meta], [capacitances], [junctions] and the
                optional [simulation], [waveform], [sweeps], [coherence] sections
            output_dir: Overrides the default output directory
            seed: Overrides the default seed
            threads: Overrides the worker cap

        Returns:
            Parsed RunConfig
        """
        self.path = str(path)
        try:
            with open(path, "r", encoding="utf-8") as handle:
                self.text = handle.read()
        except OSError as e:
            raise ConfigError(f"Cannot read configuration: {e}", path=self.path) from e
        return self.loads(self.text, output_dir=output_dir, seed=seed,
                          threads=threads, path=self.path)

    def loads(self, text: str, output_dir: Optional[str] = None,
              seed: Optional[int] = None, threads: Optional[int] = None,
              path: Optional[str] = None) -> RunConfig:
        """Parse configuration text (see load)."""
        self.text = text
        self.path = path
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text, source=path or "<config>")
        except configparser.ParsingError as e:
            errors = getattr(e, "errors", None)
            line = errors[0][0] if errors else getattr(e, "lineno", None)
            raise ConfigError("Malformed line", line=line, path=path) from e
        except configparser.Error as e:
            raise ConfigError(str(e).splitlines()[0], line=getattr(e, "lineno", None),
                              path=path) from e

        self._check_format(parser)
        capacitances = self._read_block(parser, "capacitances", self.CAPACITANCE_KEYS,
                                        get_capacitances(), nonnegative_from=4)
        junctions = self._read_block(parser, "junctions", self.JUNCTION_KEYS,
                                     get_critical_currents(), nonnegative_from=None)

        return RunConfig(
            capacitances_ff=capacitances,
            critical_currents_na=junctions,
            simulation=self._read_simulation(parser),
            waveform=self._read_waveform(parser),
            sweeps=self._read_sweeps(parser),
            coherence=self._read_coherence(parser),
            device_path=path,
            output_dir=output_dir or config.OUTPUT_DIR,
            seed=0 if seed is None else int(seed),
            threads=threads or config.THREADS,
        )

    def _check_format(self, parser: configparser.ConfigParser) -> None:
        if not parser.has_option("meta", "format"):
            raise ConfigError("Missing schema version", field="meta.format", path=self.path)
        raw = parser.get("meta", "format")
        if raw.strip() != str(SUPPORTED_FORMAT):
            raise ConfigError(f"Unsupported format '{raw}', expected {SUPPORTED_FORMAT}",
                              field="meta.format", line=self._line_of("meta", "format"),
                              path=self.path)

    def _read_block(self, parser, section: str, keys: Tuple[str, ...],
                    defaults: Dict[str, float], nonnegative_from: Optional[int]) -> Dict[str, float]:
        values = dict(defaults)
        if not parser.has_section(section):
            return values
        for name in parser.options(section):
            if name not in keys:
                raise ConfigError("Unknown key", field=f"{section}.{name}",
                                  line=self._line_of(section, name), path=self.path)
        for index, key in enumerate(keys):
            if not parser.has_option(section, key):
                continue
            value = self._float(parser, section, key)
            may_be_zero = nonnegative_from is not None and index >= nonnegative_from
            if value < 0.0 or (value == 0.0 and not may_be_zero):
                raise ConfigError(f"Value must be {'nonnegative' if may_be_zero else 'positive'}",
                                  field=f"{section}.{key}",
                                  line=self._line_of(section, key), path=self.path)
            values[key] = value
        return values

    def _read_simulation(self, parser) -> SimulationSettings:
        base = SimulationSettings()
        if not parser.has_section("simulation"):
            return base
        section = "simulation"
        settings = SimulationSettings(
            charge_cutoff=self._int(parser, section, "charge_cutoff", base.charge_cutoff, minimum=1),
            eigen_count=self._int(parser, section, "eigen_count", base.eigen_count, minimum=6),
            eigen_tolerance=self._float(parser, section, "eigen_tolerance", base.eigen_tolerance),
            reduced_dimension=self._int(parser, section, "reduced_dimension",
                                        base.reduced_dimension, minimum=6),
            time_step_ps=self._float(parser, section, "time_step_ps", base.time_step_ps),
            include_flux_rate=self._bool(parser, section, "include_flux_rate",
                                         base.include_flux_rate),
            state_cutoff=self._int(parser, section, "state_cutoff", base.state_cutoff, minimum=3),
            sample_every=self._int(parser, section, "sample_every", base.sample_every, minimum=1),
            convergence_cutoffs=self._cutoffs(parser, section, "convergence_cutoffs",
                                              base.convergence_cutoffs),
        )
        if not 0.0 < settings.eigen_tolerance <= 1e-6:
            raise ConfigError("Tolerance must lie in (0, 1e-6]",
                              field="simulation.eigen_tolerance",
                              line=self._line_of(section, "eigen_tolerance"), path=self.path)
        if settings.time_step_ps <= 0.0:
            raise ConfigError("Step must be positive", field="simulation.time_step_ps",
                              line=self._line_of(section, "time_step_ps"), path=self.path)
        return settings

    def _read_waveform(self, parser) -> WaveformSettings:
        base = WaveformSettings()
        if not parser.has_section("waveform"):
            return base
        section = "waveform"
        cz = None
        if parser.has_option(section, "cz_reference_amplitude_over_2pi"):
            cz = self._float(parser, section, "cz_reference_amplitude_over_2pi")
        settings = WaveformSettings(
            amplitude_over_2pi=self._float(parser, section, "amplitude_over_2pi",
                                           base.amplitude_over_2pi),
            frequency_mhz=self._float(parser, section, "frequency_mhz", base.frequency_mhz),
            drive_phase_rad=self._float(parser, section, "drive_phase_rad", base.drive_phase_rad),
            drive_duration_ns=self._float(parser, section, "drive_duration_ns",
                                          base.drive_duration_ns),
            idle_pad_ns=self._float(parser, section, "idle_pad_ns", base.idle_pad_ns),
            ramp_rate_per_ns=self._float(parser, section, "ramp_rate_per_ns",
                                         base.ramp_rate_per_ns),
            total_time_ns=self._float(parser, section, "total_time_ns", base.total_time_ns),
            amplitude_bounds_over_2pi=self._pair(parser, section, "amplitude_bounds_over_2pi",
                                                 base.amplitude_bounds_over_2pi),
            frequency_bounds_mhz=self._pair(parser, section, "frequency_bounds_mhz",
                                            base.frequency_bounds_mhz),
            cz_reference_amplitude_over_2pi=cz,
        )
        if settings.idle_pad_ns < 0.0 or settings.drive_duration_ns <= 0.0:
            raise ConfigError("Durations must be positive", field="waveform.drive_duration_ns",
                              line=self._line_of(section, "drive_duration_ns"), path=self.path)
        if settings.total_time_ns <= 2.0 * settings.idle_pad_ns:
            raise ConfigError("Total time must exceed twice the idle pad",
                              field="waveform.total_time_ns",
                              line=self._line_of(section, "total_time_ns"), path=self.path)
        return settings

    def _read_sweeps(self, parser) -> SweepSettings:
        base = SweepSettings()
        if not parser.has_section("sweeps"):
            return base
        values = {}
        for name in ("flux_over_2pi", "drive_frequency_mhz", "drive_amplitude_over_2pi",
                     "time_ns", "zz_amplitude_over_2pi"):
            if parser.has_option("sweeps", name):
                values[name] = self._grid(parser, "sweeps", name)
        return SweepSettings(**{**asdict(base), **values})

    def _read_coherence(self, parser) -> CoherenceSettings:
        base = CoherenceSettings()
        if not parser.has_section("coherence"):
            return base
        settings = CoherenceSettings(
            t1_us=self._pair(parser, "coherence", "t1_us", base.t1_us,
                             ascending=False),
            t2_star_us=self._pair(parser, "coherence", "t2_star_us", base.t2_star_us,
                             ascending=False),
            t2_echo_us=self._pair(parser, "coherence", "t2_echo_us", base.t2_echo_us,
                             ascending=False),
        )
        for name, pair in asdict(settings).items():
            if min(pair) <= 0.0:
                raise ConfigError("Coherence times must be positive", field=f"coherence.{name}",
                                  line=self._line_of("coherence", name), path=self.path)
        return settings

    # Value helpers

    def _raw(self, parser, section: str, key: str) -> str:
        return parser.get(section, key).strip()

    def _float(self, parser, section: str, key: str, default: Optional[float] = None) -> float:
        if not parser.has_option(section, key):
            return default
        raw = self._raw(parser, section, key)
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"Expected a number, got '{raw}'", field=f"{section}.{key}",
                              line=self._line_of(section, key), path=self.path) from None
        if not math.isfinite(value):
            raise ConfigError("Value must be finite", field=f"{section}.{key}",
                              line=self._line_of(section, key), path=self.path)
        return value

    def _int(self, parser, section: str, key: str, default: int, minimum: int) -> int:
        if not parser.has_option(section, key):
            return default
        raw = self._raw(parser, section, key)
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"Expected an integer, got '{raw}'", field=f"{section}.{key}",
                              line=self._line_of(section, key), path=self.path) from None
        if value < minimum:
            raise ConfigError(f"Value must be at least {minimum}", field=f"{section}.{key}",
                              line=self._line_of(section, key), path=self.path)
        return value

    def _cutoffs(self, parser, section: str, key: str,
                 default: Tuple[int, ...]) -> Tuple[int, ...]:
        if not parser.has_option(section, key):
            return default
        try:
            return parse_cutoffs(self._raw(parser, section, key))
        except ValueError as e:
            raise ConfigError(str(e), field=f"{section}.{key}",
                              line=self._line_of(section, key), path=self.path) from None

    def _bool(self, parser, section: str, key: str, default: bool) -> bool:
        if not parser.has_option(section, key):
            return default
        try:
            return parser.getboolean(section, key)
        except ValueError:
            raise ConfigError("Expected a boolean", field=f"{section}.{key}",
                              line=self._line_of(section, key), path=self.path) from None

    def _pair(self, parser, section: str, key: str, default: Tuple[float, float],
              ascending: bool = True) -> Tuple[float, float]:
        if not parser.has_option(section, key):
            return default
        values = self._numbers(parser, section, key)
        if len(values) != 2 or (ascending and not values[0] < values[1]):
            order = " in ascending order" if ascending else ""
            raise ConfigError(f"Expected two numbers{order}", field=f"{section}.{key}",
                              line=self._line_of(section, key), path=self.path)
        return (values[0], values[1])

    def _grid(self, parser, section: str, key: str) -> Tuple[float, ...]:
        raw = self._raw(parser, section, key)
        if re.fullmatch(r"\s*[-+0-9.eE]+\s*:\s*[-+0-9.eE]+\s*:\s*\d+\s*", raw):
            start, stop, count = (part.strip() for part in raw.split(":"))
            try:
                grid = np.linspace(float(start), float(stop), int(count))
            except ValueError:
                grid = np.array([])
            values = [float(v) for v in np.round(grid, 12)]
        else:
            values = self._numbers(parser, section, key) if raw else []
        if not values:
            raise ConfigError("Grid must not be empty", field=f"{section}.{key}",
                              line=self._line_of(section, key), path=self.path)
        if len(values) > 1 and not np.all(np.diff(values) > 0.0):
            raise ConfigError("Grid must be strictly increasing", field=f"{section}.{key}",
                              line=self._line_of(section, key), path=self.path)
        return tuple(values)

    def _numbers(self, parser, section: str, key: str) -> List[float]:
        raw = self._raw(parser, section, key)
        try:
            return [float(part) for part in raw.split(",") if part.strip()]
        except ValueError:
            raise ConfigError(f"Expected comma-separated numbers, got '{raw}'",
                              field=f"{section}.{key}", line=self._line_of(section, key),
                              path=self.path) from None

    def _line_of(self, section: str, key: str) -> Optional[int]:
        """1-based line of `key` inside `[section]`, if it can be located."""
        current = None
        for number, line in enumerate(self.text.splitlines(), start=1):
            stripped = line.strip()
            if stripped.startswith("[") and stripped.endswith("]"):
                current = stripped[1:-1].strip().lower()
                continue
            if current == section.lower() and re.match(rf"{re.escape(key)}\s*[=:]", stripped,
                                                        flags=re.IGNORECASE):
                return number
        return None


# Global loader instance
run_config_loader = RunConfigLoader()

