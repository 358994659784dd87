"""Pickup coil and flux loop forward models."""

import numpy as np
from numpy.typing import ArrayLike, NDArray

from equinest.diagnostics.base import (
    ChannelFields,
    ChannelKind,
    ChannelLayout,
    ChannelModel,
    register_channel_kind,
)

__all__ = ["FluxLoopModel", "PickupModel", "predict_fluxloop", "predict_pickup"]


def predict_pickup(b_r: ArrayLike, b_z: ArrayLike, theta: ArrayLike) -> NDArray[np.float64]:
    """
    Field component along a pickup coil normal.

    Parameters
    ----------
    b_r, b_z : array_like
        Poloidal field at the coil, in tesla.
    theta : array_like
        Angle of the coil normal from the R axis, in radians.

    Returns
    -------
    ndarray
        B_R·cos θ + B_Z·sin θ.
    """
    theta = np.asarray(theta, dtype=np.float64)
    return np.asarray(np.asarray(b_r) * np.cos(theta) + np.asarray(b_z) * np.sin(theta))


def predict_fluxloop(psi: ArrayLike) -> NDArray[np.float64]:
    """Flux through a loop at the channel position, in webers."""
    return np.asarray(psi, dtype=np.float64).copy()


@register_channel_kind(ChannelKind.PICKUP)
class PickupModel(ChannelModel):
    def predict(
        self, fields: ChannelFields, layout: ChannelLayout, index: NDArray[np.intp]
    ) -> NDArray[np.float64]:
        return predict_pickup(fields.b_r[index], fields.b_z[index], layout.theta[index])


@register_channel_kind(ChannelKind.FLUXLOOP)
class FluxLoopModel(ChannelModel):
    def predict(
        self, fields: ChannelFields, layout: ChannelLayout, index: NDArray[np.intp]
    ) -> NDArray[np.float64]:
        return predict_fluxloop(fields.psi[index])
