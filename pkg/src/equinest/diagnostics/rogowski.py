"""Total plasma current (Rogowski coil) forward model."""

import numpy as np
from numpy.typing import ArrayLike, NDArray

from equinest.diagnostics.base import (
    ChannelFields,
    ChannelKind,
    ChannelLayout,
    ChannelModel,
    register_channel_kind,
)

__all__ = ["RogowskiModel", "predict_total_current"]


def predict_total_current(currents: ArrayLike) -> float:
    """Sum of beam currents in amperes; 0 for an empty list."""
    return float(np.sum(np.asarray(currents, dtype=np.float64)))


@register_channel_kind(ChannelKind.ROGOWSKI)
class RogowskiModel(ChannelModel):
    """Every Rogowski channel sees the model's total plasma current."""

    positioned = False

    def predict(
        self, fields: ChannelFields, layout: ChannelLayout, index: NDArray[np.intp]
    ) -> NDArray[np.float64]:
        return np.full(len(index), fields.plasma_current)
