"""Motional Stark effect forward model."""

import numpy as np
from numpy.typing import ArrayLike, NDArray

from equinest.diagnostics.base import (
    EPS_DIV,
    ChannelFields,
    ChannelKind,
    ChannelLayout,
    ChannelModel,
    register_channel_kind,
)
from equinest.exceptions import DegenerateGeometryError

__all__ = ["MSEModel", "predict_mse"]


def predict_mse(
    b_r: ArrayLike, b_z: ArrayLike, b_phi: ArrayLike, geom: ArrayLike
) -> NDArray[np.float64]:
    """
    MSE signal for a viewing geometry.

    Parameters
    ----------
    b_r, b_z, b_phi : array_like
        Field components at the viewing point, in tesla.
    geom : array_like
        Geometry constants A0..A5, shape ``(6,)`` or ``(n, 6)``.

    Returns
    -------
    ndarray
        (A0·B_Z + A1·B_R + A2·B_φ) / (A3·B_Z + A4·B_R + A5·B_φ).

    Raises
    ------
    DegenerateGeometryError
        If any denominator satisfies ``|den| <= 1e-12``.

    Examples
    --------
    >>> predict_mse(0.0, 0.1, 2.0, (1, 0, 0, 0, 0, 1))
    array(0.05)
    """
    a = np.asarray(geom, dtype=np.float64)
    b_r, b_z, b_phi = (np.asarray(v, dtype=np.float64) for v in (b_r, b_z, b_phi))
    num = a[..., 0] * b_z + a[..., 1] * b_r + a[..., 2] * b_phi
    den = a[..., 3] * b_z + a[..., 4] * b_r + a[..., 5] * b_phi
    bad = ~(np.abs(den) > EPS_DIV)
    if np.any(bad):
        raise DegenerateGeometryError(
            f"MSE denominator vanishes at {int(np.count_nonzero(bad))} channel(s) "
            f"(|den| <= {EPS_DIV})"
        )
    return np.asarray(num / den)


@register_channel_kind(ChannelKind.MSE)
class MSEModel(ChannelModel):
    def predict(
        self, fields: ChannelFields, layout: ChannelLayout, index: NDArray[np.intp]
    ) -> NDArray[np.float64]:
        return predict_mse(
            fields.b_r[index], fields.b_z[index], fields.b_phi[index], layout.mse_geometry[index]
        )
