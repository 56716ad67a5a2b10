"""
Exception hierarchy for the CSDTC simulator.

Every failure the numerics can report derives from SimulationError; errors
caused by bad inputs also derive from ValueError so argument validation can
be caught the usual way.
"""
from typing import Any, Dict, Optional


class SimulationError(RuntimeError):
    """Base class for simulator failures."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details: Dict[str, Any] = dict(details or {})

    def to_payload(self) -> Dict[str, Any]:
        """Machine-readable form used by the CLI error output."""
        return {
            "status": "error",
            "error_type": type(self).__name__,
            "message": str(self),
            "details": self.details,
        }


class ConfigError(SimulationError, ValueError):
    """Malformed run configuration, with field and line diagnostics."""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, path: Optional[str] = None):
        location = []
        if path:
            location.append(str(path))
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}",
                         {"field": field, "line": line, "path": path})
        self.field = field
        self.line = line
        self.path = path


class CircuitError(SimulationError, ValueError):
    """Invalid circuit parameters or a non-invertible capacitance matrix."""


class CapacityError(SimulationError):
    """Operator construction ran out of memory."""


class EigenSolverError(SimulationError):
    """Eigensolver did not converge to the requested residual."""


class LabelingError(SimulationError):
    """Eigenstate labels could not be assigned unambiguously."""


class SingularityError(SimulationError):
    """A perturbative denominator vanished (accidental resonance)."""


class ReducedModelError(SimulationError):
    """A mandatory state is missing from the reduced basis."""


class StepSizeError(SimulationError):
    """Integration step too coarse: norm drift exceeded its bound."""


class ExtractionError(SimulationError):
    """Chevron data does not contain a usable oscillation."""


class PhaseCorrectionError(SimulationError):
    """Swap entries too small to fix the single-qubit frames."""


class DepletedAmplitudeError(SimulationError):
    """The |11> amplitude is too small to define a ZZ phase."""


class FluxRangeError(SimulationError, ValueError):
    """A waveform leaves the flux range of a tabulated curve."""


class FitError(SimulationError):
    """Nonlinear least-squares fit failed."""
