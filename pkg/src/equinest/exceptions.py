"""Exception hierarchy for equinest.

All equinest exceptions inherit from EquinestError for easy catching.
"""

from pathlib import Path

__all__ = [
    "EquinestError",
    "ConfigError",
    "ValidationError",
    "DuplicateChannelError",
    "UnknownChannelKindError",
    "GeometryError",
    "SingularEvaluationError",
    "GeometryMismatchError",
    "DiagnosticError",
    "DegenerateGeometryError",
    "SamplerError",
    "ConstraintExhaustedError",
    "DegenerateWeightsError",
    "ConvergenceError",
    "ArtifactError",
]


class EquinestError(Exception):
    """Base exception for all equinest errors."""


class ConfigError(EquinestError):
    """Configuration and document errors (validation, lookup, duplicates)."""


class ValidationError(ConfigError):
    """Raised when a config, machine or diagnostic document is malformed."""


class DuplicateChannelError(ConfigError):
    """Raised when the same channel name appears twice in a diagnostic document."""


class UnknownChannelKindError(ConfigError):
    """Raised when a channel references a kind with no registered forward model."""


class GeometryError(EquinestError):
    """Beam and field-point geometry errors."""


class SingularEvaluationError(GeometryError):
    """Raised when a field point coincides with a current filament.

    Parameters
    ----------
    message : str
        Human-readable description.
    point_index : int | None, optional
        Row of the offending field point when raised during operator assembly.
    beam_index : int | None, optional
        Column of the offending beam when raised during operator assembly.
    """

    def __init__(
        self,
        message: str,
        *,
        point_index: int | None = None,
        beam_index: int | None = None,
    ) -> None:
        super().__init__(message)
        self.point_index = point_index
        self.beam_index = beam_index


class GeometryMismatchError(GeometryError):
    """Raised when a dense beam does not nest inside exactly one inference beam."""


class DiagnosticError(EquinestError):
    """Forward-model evaluation errors."""


class DegenerateGeometryError(DiagnosticError):
    """Raised when an MSE ratio denominator vanishes."""


class SamplerError(EquinestError):
    """Nested-sampling errors."""


class ConstraintExhaustedError(SamplerError):
    """Raised when constrained prior sampling discards too many chains.

    Parameters
    ----------
    message : str
        Human-readable description.
    checkpoint : Path | None, optional
        Last checkpoint written before the failure, if checkpointing was on.
    """

    def __init__(self, message: str, *, checkpoint: Path | None = None) -> None:
        super().__init__(message)
        self.checkpoint = checkpoint


class DegenerateWeightsError(SamplerError):
    """Raised when every posterior weight underflows to zero."""


class ConvergenceError(EquinestError):
    """Raised when the synthetic equilibrium generator does not converge.

    Parameters
    ----------
    message : str
        Human-readable description.
    residual : float
        Largest beam-current change of the final iteration, in amperes.
    """

    def __init__(self, message: str, *, residual: float) -> None:
        super().__init__(message)
        self.residual = residual


class ArtifactError(EquinestError):
    """Raised when run artifacts are missing or unreadable."""
