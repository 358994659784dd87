"""
The two parallel forward-model chains.

Direct chain: beam currents -> fields at the channels -> predictions.
GS chain: beam currents -> ψ on the dense grid -> J_GS -> fields at the
channels from the dense beams -> predictions.

Conductor currents contribute identically to both chains, and B_φ is built
from f(ψ) of the direct flux in both.
"""

import logging
from collections.abc import Iterator
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from equinest.diagnostics.base import ChannelFields, PredictionPair, get_channel_model
from equinest.equilibrium import CurrentDensityField, eval_f, gs_current_density
from equinest.magnetostatics import MU0

if TYPE_CHECKING:
    from equinest.inference import EquilibriumState
    from equinest.machine import Machine

__all__ = ["GSSolution", "PredictionSet", "predict_all", "solve_gs"]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


@dataclass(frozen=True, slots=True, eq=False)
class GSSolution:
    """ψ at dense-beam centers and the GS current density it implies."""

    psi_dense: FloatArray
    j_gs: CurrentDensityField


@dataclass(frozen=True, slots=True, eq=False)
class PredictionSet:
    """Direct and GS predictions for every channel, in layout order."""

    direct: FloatArray
    gs: FloatArray
    names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self) -> Iterator[PredictionPair]:
        for d, g in zip(self.direct, self.gs, strict=True):
            yield PredictionPair(float(d), float(g))

    def __getitem__(self, index: int) -> PredictionPair:
        return PredictionPair(float(self.direct[index]), float(self.gs[index]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"direct": self.direct, "gs": self.gs}, index=pd.Index(self.names, name="channel")
        )


def solve_gs(state: "EquilibriumState", machine: "Machine") -> GSSolution:
    """
    Evaluate ψ on the dense grid and the GS current density.

    Parameters
    ----------
    state : EquilibriumState
        Model state.
    machine : Machine
        Machine with operators.

    Returns
    -------
    GSSolution
        Dense ψ and J_GS.
    """
    ops = machine.operators
    psi_dense = ops.psi_dense_plasma @ state.beam_currents
    if machine.n_conductors:
        psi_dense = psi_dense + ops.psi_dense_conductor @ state.passive_currents
    return GSSolution(psi_dense, gs_current_density(state, psi_dense, machine.dense))


def _fields(
    n: int,
    positioned: NDArray[np.intp],
    psi: FloatArray,
    b_r: FloatArray,
    b_z: FloatArray,
    b_phi: FloatArray,
    plasma_current: float,
) -> ChannelFields:
    def spread(values: FloatArray) -> FloatArray:
        out = np.full(n, np.nan)
        out[positioned] = values
        return out

    return ChannelFields(
        psi=spread(psi),
        b_r=spread(b_r),
        b_z=spread(b_z),
        b_phi=spread(b_phi),
        plasma_current=plasma_current,
    )


def predict_all(
    state: "EquilibriumState", machine: "Machine", *, gs: GSSolution | None = None
) -> PredictionSet:
    """
    Direct and GS predictions for every channel of the machine's layout.

    Parameters
    ----------
    state : EquilibriumState
        Model state.
    machine : Machine
        Machine with operators built for the channel layout.
    gs : GSSolution | None, optional
        Precomputed GS solution for ``state``.

    Returns
    -------
    PredictionSet
        Predictions with the additive biases applied to both chains.

    Raises
    ------
    DegenerateGeometryError
        If an MSE denominator vanishes.
    """
    if gs is None:
        gs = solve_gs(state, machine)
    ops, layout = machine.operators, machine.layout
    currents = state.beam_currents
    gs_currents = gs.j_gs.currents()

    psi_d = ops.psi_chan_plasma @ currents
    br_d = ops.b_r_chan_plasma @ currents
    bz_d = ops.b_z_chan_plasma @ currents
    psi_g = ops.psi_chan_dense @ gs_currents
    br_g = ops.b_r_chan_dense @ gs_currents
    bz_g = ops.b_z_chan_dense @ gs_currents
    if machine.n_conductors:
        conductor = state.passive_currents
        psi_c = ops.psi_chan_conductor @ conductor
        br_c = ops.b_r_chan_conductor @ conductor
        bz_c = ops.b_z_chan_conductor @ conductor
        psi_d, br_d, bz_d = psi_d + psi_c, br_d + br_c, bz_d + bz_c
        psi_g, br_g, bz_g = psi_g + psi_c, br_g + br_c, bz_g + bz_c

    positioned = layout.positioned_index
    r = layout.r[positioned]
    profile = state.profile
    f = np.where(
        psi_d >= state.psi_gamma, eval_f(profile, state.psi_gamma, psi_d), profile.f_boundary
    )
    b_phi = MU0 * f / (2.0 * np.pi * r)

    n = len(layout)
    direct_fields = _fields(n, positioned, psi_d, br_d, bz_d, b_phi, float(currents.sum()))
    gs_fields = _fields(n, positioned, psi_g, br_g, bz_g, b_phi, gs.j_gs.total())

    direct = np.zeros(n)
    gs_pred = np.zeros(n)
    for kind in dict.fromkeys(layout.kinds):
        model = get_channel_model(kind)
        index = layout.kind_index(kind)
        direct[index] = model.predict(direct_fields, layout, index)
        gs_pred[index] = model.predict(gs_fields, layout, index)

    biased = layout.bias_index >= 0
    if biased.any():
        offsets = np.asarray(state.biases, dtype=np.float64)[layout.bias_index[biased]]
        direct[biased] += offsets
        gs_pred[biased] += offsets

    return PredictionSet(direct, gs_pred, layout.names)
