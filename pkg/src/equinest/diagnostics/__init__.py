"""Diagnostic channels and their forward models.

Importing this package registers the built-in channel kinds.
"""

# Import kind modules to trigger registration
from equinest.diagnostics import (
    magnetics,  # noqa: F401
    mse,  # noqa: F401
    rogowski,  # noqa: F401
)
from equinest.diagnostics.base import (
    Channel,
    ChannelFields,
    ChannelKind,
    ChannelLayout,
    ChannelModel,
    ChannelModelRegistry,
    PredictionPair,
    WeakObsWeights,
    get_channel_model,
    register_channel_kind,
    registered_kinds,
    weak_log_likelihood,
    weak_log_likelihoods,
)
from equinest.diagnostics.dataset import DiagnosticSet
from equinest.diagnostics.forward import GSSolution, PredictionSet, predict_all, solve_gs
from equinest.diagnostics.magnetics import predict_fluxloop, predict_pickup
from equinest.diagnostics.mse import predict_mse
from equinest.diagnostics.rogowski import predict_total_current

__all__ = [
    "Channel",
    "ChannelFields",
    "ChannelKind",
    "ChannelLayout",
    "ChannelModel",
    "ChannelModelRegistry",
    "DiagnosticSet",
    "GSSolution",
    "PredictionPair",
    "PredictionSet",
    "WeakObsWeights",
    "get_channel_model",
    "predict_all",
    "predict_fluxloop",
    "predict_mse",
    "predict_pickup",
    "predict_total_current",
    "register_channel_kind",
    "registered_kinds",
    "solve_gs",
    "weak_log_likelihood",
    "weak_log_likelihoods",
]
