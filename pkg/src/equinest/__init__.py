"""Equinest - Bayesian tokamak equilibrium inference with nested-sampling evidence."""

from importlib.metadata import version

__version__ = version("equinest")

from equinest.config import RunConfig
from equinest.diagnostics import Channel, ChannelKind, DiagnosticSet, register_channel_kind
from equinest.equilibrium import ProfileCoeffs
from equinest.exceptions import (
    ArtifactError,
    ConfigError,
    ConstraintExhaustedError,
    ConvergenceError,
    DegenerateGeometryError,
    DegenerateWeightsError,
    DiagnosticError,
    DuplicateChannelError,
    EquinestError,
    GeometryError,
    GeometryMismatchError,
    SamplerError,
    SingularEvaluationError,
    UnknownChannelKindError,
    ValidationError,
)
from equinest.inference import EquilibriumPosterior, EquilibriumState, ParameterSpace
from equinest.machine import Machine, MachineGeometry
from equinest.reconstruction import Reconstruction
from equinest.sampler import RunParams, run_nested

__all__ = [
    "__version__",
    "Reconstruction",
    "RunConfig",
    "Machine",
    "MachineGeometry",
    "Channel",
    "ChannelKind",
    "DiagnosticSet",
    "register_channel_kind",
    "ProfileCoeffs",
    "EquilibriumState",
    "EquilibriumPosterior",
    "ParameterSpace",
    "RunParams",
    "run_nested",
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
