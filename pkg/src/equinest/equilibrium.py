"""
Profile polynomials, the Grad-Shafranov current density and the ΔI/ΔJ discrepancy.

Profiles use raw ψ in webers:

- p′(ψ) = p_c0 + p_c1·ψ + p_c2·ψ² + p_c3·ψ³
- f(ψ) = f(ψ_γ) + Σ_k f_ck·(ψ^k - ψ_γ^k), k = 1..3
- p(ψ) = ∫_{ψ_γ}^{ψ} p′, so that p(ψ_γ) = 0

f is the poloidal current function in amperes, with B_φ = μ0·f / (2πR).
The plasma interior is {ψ >= ψ_γ}; the GS current density vanishes outside.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Self

import numpy as np
from numpy.polynomial import polynomial as P
from numpy.typing import ArrayLike, NDArray

from equinest.exceptions import ValidationError
from equinest.magnetostatics import MU0, BeamGrid, nest_index

if TYPE_CHECKING:
    from equinest.inference import EquilibriumState

__all__ = [
    "CurrentDensityField",
    "ProfileCoeffs",
    "current_discrepancy",
    "eval_f",
    "eval_fprime",
    "eval_pprime",
    "eval_pressure",
    "gs_current_density",
]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


@dataclass(frozen=True, slots=True, kw_only=True)
class ProfileCoeffs:
    """
    Polynomial coefficients of p′(ψ) and f(ψ).

    Parameters
    ----------
    p_c : tuple[float, float, float, float]
        p′ coefficients in ascending powers of ψ.
    f_c : tuple[float, float, float]
        f coefficients of (ψ - ψ_γ), (ψ² - ψ_γ²), (ψ³ - ψ_γ³).
    f_boundary : float
        f(ψ_γ), the measured toroidal-field-coil current term, in amperes.
    """

    p_c: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    f_c: tuple[float, float, float] = (0.0, 0.0, 0.0)
    f_boundary: float = 0.0

    def __post_init__(self) -> None:
        if len(self.p_c) != 4 or len(self.f_c) != 3:
            raise ValidationError(
                f"Expected 4 p_c and 3 f_c coefficients, got {len(self.p_c)} and {len(self.f_c)}"
            )
        values = (*self.p_c, *self.f_c, self.f_boundary)
        if not all(math.isfinite(v) for v in values):
            raise ValidationError(f"Profile coefficients must be finite, got {values}")
        object.__setattr__(self, "p_c", tuple(float(c) for c in self.p_c))
        object.__setattr__(self, "f_c", tuple(float(c) for c in self.f_c))

    def scaled_pressure(self, factor: float) -> "ProfileCoeffs":
        """Copy with every p_c multiplied by ``factor``."""
        return ProfileCoeffs(
            p_c=tuple(factor * c for c in self.p_c),  # type: ignore[arg-type]
            f_c=self.f_c,
            f_boundary=self.f_boundary,
        )

    def to_dict(self) -> dict[str, Any]:
        return {"p_c": list(self.p_c), "f_c": list(self.f_c), "f_boundary": self.f_boundary}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> Self:
        return cls(
            p_c=tuple(float(c) for c in raw.get("p_c", (0.0,) * 4)),  # type: ignore[arg-type]
            f_c=tuple(float(c) for c in raw.get("f_c", (0.0,) * 3)),  # type: ignore[arg-type]
            f_boundary=float(raw.get("f_boundary", 0.0)),
        )


def eval_pprime(coeffs: ProfileCoeffs, psi: ArrayLike) -> FloatArray:
    """p′(ψ) in Pa/Wb."""
    return np.asarray(P.polyval(np.asarray(psi, dtype=np.float64), coeffs.p_c))


def eval_f(coeffs: ProfileCoeffs, psi_gamma: float, psi: ArrayLike) -> FloatArray:
    """
    f(ψ) in amperes.

    Examples
    --------
    >>> coeffs = ProfileCoeffs(f_c=(1.0, 0.0, 0.0), f_boundary=2.0)
    >>> float(eval_f(coeffs, 0.0, 3.0))
    5.0
    """
    psi = np.asarray(psi, dtype=np.float64)
    f_poly = (0.0, *coeffs.f_c)
    return np.asarray(
        coeffs.f_boundary + P.polyval(psi, f_poly) - P.polyval(psi_gamma, f_poly)
    )


def eval_fprime(coeffs: ProfileCoeffs, psi: ArrayLike) -> FloatArray:
    """f′(ψ) in A/Wb."""
    return np.asarray(P.polyval(np.asarray(psi, dtype=np.float64), P.polyder((0.0, *coeffs.f_c))))


def eval_pressure(coeffs: ProfileCoeffs, psi_gamma: float, psi: ArrayLike) -> FloatArray:
    """p(ψ) in pascals, with p(ψ_γ) = 0."""
    antiderivative = P.polyint(coeffs.p_c)
    psi = np.asarray(psi, dtype=np.float64)
    return np.asarray(P.polyval(psi, antiderivative) - P.polyval(psi_gamma, antiderivative))


class CurrentDensityField:
    """
    Piecewise-constant toroidal current density over a beam grid.

    Parameters
    ----------
    values : array_like
        Current density per beam, in A/m².
    grid : BeamGrid
        Support of the field.
    """

    def __init__(self, values: ArrayLike, grid: BeamGrid) -> None:
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.shape != (len(grid),):
            raise ValueError(
                f"Expected {len(grid)} current-density values, got shape {self.values.shape}"
            )
        self.grid = grid

    @classmethod
    def from_currents(cls, currents: ArrayLike, grid: BeamGrid) -> Self:
        """Field carrying ``currents`` amperes in each beam."""
        return cls(np.asarray(currents, dtype=np.float64) / grid.areas, grid)

    def currents(self) -> FloatArray:
        """Beam currents in amperes."""
        return np.asarray(self.values * self.grid.areas)

    def total(self) -> float:
        """Total current in amperes."""
        return float(self.currents().sum())


def gs_current_density(
    state: "EquilibriumState", psi: ArrayLike, dense_grid: BeamGrid
) -> CurrentDensityField:
    """
    Grad-Shafranov current density on the dense grid.

    J_GS = 2πR·p′(ψ) + μ0/(2πR)·f(ψ)·f′(ψ) where ψ >= ψ_γ, and 0 elsewhere,
    with R the dense-beam center.

    Parameters
    ----------
    state : EquilibriumState
        Supplies the profile coefficients and ψ_γ.
    psi : array_like
        ψ at dense-beam centers, in webers.
    dense_grid : BeamGrid
        Dense grid.

    Returns
    -------
    CurrentDensityField
        J_GS on ``dense_grid``.
    """
    psi = np.asarray(psi, dtype=np.float64)
    profile, psi_gamma = state.profile, state.psi_gamma
    r = dense_grid.r_centers
    j = 2.0 * np.pi * r * eval_pprime(profile, psi) + MU0 / (2.0 * np.pi * r) * eval_f(
        profile, psi_gamma, psi
    ) * eval_fprime(profile, psi)
    return CurrentDensityField(np.where(psi >= psi_gamma, j, 0.0), dense_grid)


def current_discrepancy(
    j: CurrentDensityField,
    j_gs: CurrentDensityField,
    inference_grid: BeamGrid,
    parent: Sequence[int] | NDArray[np.intp] | None = None,
) -> tuple[FloatArray, CurrentDensityField]:
    """
    Integrated absolute difference between J and J_GS per inference beam.

    ΔI_i = Σ_{k ⊂ Ω_i} |J_i - J_GS,k|·area(k), and ΔJ = ΔI_i / area(Ω_i).

    Parameters
    ----------
    j : CurrentDensityField
        Direct current density on ``inference_grid``.
    j_gs : CurrentDensityField
        GS current density on the dense grid.
    inference_grid : BeamGrid
        Inference grid.
    parent : array_like | None, optional
        Precomputed parent index of every dense beam.

    Returns
    -------
    tuple[ndarray, CurrentDensityField]
        ΔI in amperes and ΔJ on ``inference_grid``.

    Raises
    ------
    GeometryMismatchError
        If ``parent`` is None and a dense beam does not nest.
    """
    if parent is None:
        parent = nest_index(j_gs.grid, inference_grid)
    parent = np.asarray(parent, dtype=np.intp)
    mismatch = np.abs(j.values[parent] - j_gs.values) * j_gs.grid.areas
    delta_i = np.bincount(parent, weights=mismatch, minlength=len(inference_grid))
    return delta_i, CurrentDensityField(delta_i / inference_grid.areas, inference_grid)
