"""
Beam geometry and Biot-Savart kernels for axisymmetric current filaments.

Conventions
-----------
ψ is the total poloidal flux through the horizontal disk of radius R at
height Z, ψ = 2πR·A_φ, in webers. The poloidal field follows from

    B_R = -(1 / 2πR) ∂ψ/∂Z,    B_Z = (1 / 2πR) ∂ψ/∂R.

Every beam carries a uniform toroidal current over a rectangular cross
section. Responses are per ampere of total beam current: the cross section is
split into ``n_r × n_z`` equal sub-filaments and the filament responses are
averaged.

Two filament kernels are available:

- ``elliptic`` (default): closed forms in the complete elliptic integrals K, E
  (``scipy.special.ellipkm1`` / ``ellipe``), with the complementary parameter
  1 - m formed directly so the near field keeps full precision.
- ``azimuthal``: fixed-order periodic trapezoid rule over the filament angle,
  spectrally accurate away from the filament.

Example
-------
>>> beam = Beam(r_center=1.0, z_center=0.0, width=0.1, height=0.1)
>>> psi = flux_response(beam, FieldPoint(r=0.5, z=0.2), QuadratureSettings())
"""

import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from enum import StrEnum, auto
from typing import Any, Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import ellipe, ellipkm1

from equinest.exceptions import GeometryError, GeometryMismatchError, SingularEvaluationError

__all__ = [
    "EPS_GEO",
    "MU0",
    "Beam",
    "BeamGrid",
    "BeamRole",
    "FieldPoint",
    "KernelMethod",
    "QuadratureSettings",
    "Quantity",
    "ResponseOperator",
    "build_field_responses",
    "build_response",
    "field_response",
    "flux_response",
    "loop_field",
    "loop_flux",
    "nest_index",
    "self_flux_response",
]

logger = logging.getLogger(__name__)

MU0 = 4.0e-7 * np.pi
EPS_GEO = 1.0e-9

# Geometric mean distance of a rectangle from itself, as a fraction of (w + h).
_GMD_FACTOR = 0.2235
_NEST_TOL = 1.0e-9

FloatArray = NDArray[np.float64]


class BeamRole(StrEnum):
    """Role tag of a beam within a machine."""

    PLASMA = auto()
    PASSIVE = auto()
    COIL = auto()


class KernelMethod(StrEnum):
    """Filament kernel evaluation method."""

    ELLIPTIC = auto()
    AZIMUTHAL = auto()


class Quantity(StrEnum):
    """Field quantity produced by a response operator."""

    PSI = auto()
    B_R = auto()
    B_Z = auto()


@dataclass(frozen=True, slots=True, kw_only=True)
class Beam:
    """
    Axisymmetric beam of rectangular cross section carrying uniform current.

    Parameters
    ----------
    r_center : float
        Major radius of the cross-section center, in meters.
    z_center : float
        Height of the cross-section center, in meters.
    width : float
        Radial extent, in meters.
    height : float
        Vertical extent, in meters.

    Raises
    ------
    GeometryError
        If the extents are not positive or the beam reaches R <= 0.
    """

    r_center: float
    z_center: float
    width: float
    height: float

    def __post_init__(self) -> None:
        values = (self.r_center, self.z_center, self.width, self.height)
        if not all(np.isfinite(v) for v in values):
            raise GeometryError(f"Beam geometry must be finite, got {values}")
        if self.width <= 0 or self.height <= 0:
            raise GeometryError(
                f"Beam extents must be positive, got width={self.width}, height={self.height}"
            )
        if self.r_center - self.width / 2 <= 0:
            raise GeometryError(
                f"Beam at r={self.r_center} with width={self.width} crosses the symmetry axis"
            )

    @property
    def area(self) -> float:
        """Cross-section area in m²."""
        return self.width * self.height

    @property
    def r_min(self) -> float:
        return self.r_center - self.width / 2

    @property
    def r_max(self) -> float:
        return self.r_center + self.width / 2

    @property
    def z_min(self) -> float:
        return self.z_center - self.height / 2

    @property
    def z_max(self) -> float:
        return self.z_center + self.height / 2

    def sub_filaments(self, n_r: int, n_z: int) -> tuple[FloatArray, FloatArray]:
        """
        Midpoints of an ``n_r × n_z`` split of the cross section.

        Returns
        -------
        tuple[ndarray, ndarray]
            Flattened radii and heights, ``n_r * n_z`` entries each.
        """
        r = self.r_min + (np.arange(n_r) + 0.5) * (self.width / n_r)
        z = self.z_min + (np.arange(n_z) + 0.5) * (self.height / n_z)
        rr, zz = np.meshgrid(r, z, indexing="xy")
        return rr.ravel(), zz.ravel()

    def refine(self, n_r: int, n_z: int) -> list["Beam"]:
        """Split into ``n_r × n_z`` child beams, row-major in z then r."""
        rs, zs = self.sub_filaments(n_r, n_z)
        w, h = self.width / n_r, self.height / n_z
        return [
            Beam(r_center=float(r), z_center=float(z), width=w, height=h)
            for r, z in zip(rs, zs, strict=True)
        ]

    def to_dict(self) -> dict[str, float]:
        return {"r": self.r_center, "z": self.z_center, "width": self.width, "height": self.height}


@dataclass(frozen=True, slots=True)
class FieldPoint:
    """
    Point of the poloidal (R, Z) plane.

    Parameters
    ----------
    r : float
        Major radius in meters, ``r >= 0``.
    z : float
        Height in meters.
    """

    r: float
    z: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.r) and np.isfinite(self.z)):
            raise GeometryError(f"Field point must be finite, got ({self.r}, {self.z})")
        if self.r < 0:
            raise GeometryError(f"Field point radius must be >= 0, got {self.r}")


@dataclass(frozen=True, slots=True, kw_only=True)
class QuadratureSettings:
    """
    Quadrature controls for beam responses.

    Parameters
    ----------
    n_r, n_z : int, optional
        Sub-filament split per beam. Default 4 × 4.
    method : KernelMethod, optional
        Filament kernel. Default elliptic.
    azimuthal_order : int, optional
        Node count of the azimuthal trapezoid rule. Default 512.
    """

    n_r: int = 4
    n_z: int = 4
    method: KernelMethod = KernelMethod.ELLIPTIC
    azimuthal_order: int = 512

    def __post_init__(self) -> None:
        if min(self.n_r, self.n_z, self.azimuthal_order) < 1:
            raise GeometryError(
                "Quadrature orders must be >= 1, got "
                f"n_r={self.n_r}, n_z={self.n_z}, azimuthal_order={self.azimuthal_order}"
            )
        object.__setattr__(self, "method", KernelMethod(self.method))

    @property
    def n_sub(self) -> int:
        return self.n_r * self.n_z

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_r": self.n_r,
            "n_z": self.n_z,
            "method": str(self.method),
            "azimuthal_order": self.azimuthal_order,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> Self:
        return cls(
            n_r=int(raw.get("n_r", 4)),
            n_z=int(raw.get("n_z", 4)),
            method=KernelMethod(raw.get("method", KernelMethod.ELLIPTIC)),
            azimuthal_order=int(raw.get("azimuthal_order", 512)),
        )


def _azimuthal_nodes(order: int) -> FloatArray:
    return 2.0 * np.pi * np.arange(order) / order


def loop_flux(
    a: ArrayLike,
    zc: ArrayLike,
    r: ArrayLike,
    z: ArrayLike,
    *,
    method: KernelMethod = KernelMethod.ELLIPTIC,
    order: int = 512,
) -> FloatArray:
    """
    Flux per ampere of circular filaments through disks at (r, z).

    Parameters
    ----------
    a, zc : array_like
        Filament radius and height.
    r, z : array_like
        Evaluation points. All inputs broadcast together.
    method : KernelMethod, optional
        Kernel evaluation method.
    order : int, optional
        Azimuthal node count for the ``azimuthal`` method.

    Returns
    -------
    ndarray
        ψ in Wb/A. Exactly zero where ``r == 0``.
    """
    a, zc, r, z = (np.asarray(v, dtype=np.float64) for v in (a, zc, r, z))
    dz = z - zc
    if method is KernelMethod.AZIMUTHAL:
        phi = _azimuthal_nodes(order)
        cos_phi = np.cos(phi)
        dist = np.sqrt(
            (dz**2 + r**2 + a**2)[..., None] - 2.0 * (r * a)[..., None] * cos_phi
        )
        integral = (cos_phi / dist).sum(axis=-1) * (2.0 * np.pi / order)
        return 0.5 * MU0 * r * a * integral

    beta2 = (a + r) ** 2 + dz**2
    alpha2 = (a - r) ** 2 + dz**2
    m = 4.0 * a * r / beta2
    k = ellipkm1(alpha2 / beta2)
    e = ellipe(m)
    return np.asarray(MU0 * np.sqrt(beta2) * ((1.0 - 0.5 * m) * k - e), dtype=np.float64)


def loop_field(
    a: ArrayLike,
    zc: ArrayLike,
    r: ArrayLike,
    z: ArrayLike,
    *,
    method: KernelMethod = KernelMethod.ELLIPTIC,
    order: int = 512,
) -> tuple[FloatArray, FloatArray]:
    """
    Poloidal field per ampere of circular filaments at (r, z).

    Parameters
    ----------
    a, zc : array_like
        Filament radius and height.
    r, z : array_like
        Evaluation points.
    method : KernelMethod, optional
        Kernel evaluation method.
    order : int, optional
        Azimuthal node count for the ``azimuthal`` method.

    Returns
    -------
    tuple[ndarray, ndarray]
        (B_R, B_Z) in T/A. B_R is zero on the axis.
    """
    a, zc, r, z = (np.asarray(v, dtype=np.float64) for v in (a, zc, r, z))
    dz = z - zc
    if method is KernelMethod.AZIMUTHAL:
        phi = _azimuthal_nodes(order)
        cos_phi = np.cos(phi)
        dist3 = (
            (dz**2 + r**2 + a**2)[..., None] - 2.0 * (r * a)[..., None] * cos_phi
        ) ** 1.5
        weight = 2.0 * np.pi / order
        b_r = MU0 * a * dz / (4.0 * np.pi) * (cos_phi / dist3).sum(axis=-1) * weight
        b_z = (
            MU0
            * a
            / (4.0 * np.pi)
            * ((a[..., None] - r[..., None] * cos_phi) / dist3).sum(axis=-1)
            * weight
        )
        return np.asarray(b_r), np.asarray(b_z)

    beta2 = (a + r) ** 2 + dz**2
    alpha2 = (a - r) ** 2 + dz**2
    beta = np.sqrt(beta2)
    m = 4.0 * a * r / beta2
    k = ellipkm1(alpha2 / beta2)
    e = ellipe(m)
    b_z = MU0 / (2.0 * np.pi * beta) * (k + (a**2 - r**2 - dz**2) / alpha2 * e)
    with np.errstate(divide="ignore", invalid="ignore"):
        b_r = MU0 * dz / (2.0 * np.pi * r * beta) * (-k + (a**2 + r**2 + dz**2) / alpha2 * e)
    b_r = np.where(r > 0, b_r, 0.0)
    return np.asarray(b_r, dtype=np.float64), np.asarray(b_z, dtype=np.float64)


def _self_flux(beam: Beam, radius: FloatArray, quad: QuadratureSettings) -> FloatArray:
    """Small-filament self flux per ampere of a sub-filament at ``radius``."""
    gmd = _GMD_FACTOR * (beam.width / quad.n_r + beam.height / quad.n_z)
    return np.asarray(MU0 * radius * (np.log(8.0 * radius / gmd) - 2.0))


def flux_response(
    beam: Beam,
    pt: FieldPoint,
    quad: QuadratureSettings | None = None,
    *,
    self_field: bool = False,
) -> float:
    """
    Flux at ``pt`` per ampere of uniformly distributed beam current.

    Parameters
    ----------
    beam : Beam
        Source beam.
    pt : FieldPoint
        Evaluation point.
    quad : QuadratureSettings | None, optional
        Quadrature controls. Defaults to 4 × 4 elliptic.
    self_field : bool, optional
        If True, a sub-filament closer than ``EPS_GEO`` contributes its
        small-filament self flux instead of raising.

    Returns
    -------
    float
        ψ in Wb/A.

    Raises
    ------
    SingularEvaluationError
        If ``pt`` lies on a sub-filament and ``self_field`` is False.
    """
    quad = quad or QuadratureSettings()
    rs, zs = beam.sub_filaments(quad.n_r, quad.n_z)
    singular = np.hypot(rs - pt.r, zs - pt.z) < EPS_GEO
    if singular.any() and not self_field:
        raise SingularEvaluationError(
            f"Field point ({pt.r}, {pt.z}) lies on a filament of beam at "
            f"({beam.r_center}, {beam.z_center})"
        )
    regular = loop_flux(
        rs[~singular], zs[~singular], pt.r, pt.z, method=quad.method, order=quad.azimuthal_order
    )
    total = regular.sum() + _self_flux(beam, rs[singular], quad).sum()
    return float(total / quad.n_sub)


def self_flux_response(beam: Beam, quad: QuadratureSettings | None = None) -> float:
    """
    Flux per ampere at the center of ``beam`` due to the beam itself.

    The center coincides with a sub-filament for odd splits; that filament is
    replaced by the small-filament limit μ0·a·(ln(8a/g) - 2), with g the
    geometric mean distance of the sub-filament cross section.
    """
    return flux_response(
        beam, FieldPoint(r=beam.r_center, z=beam.z_center), quad, self_field=True
    )


def field_response(
    beam: Beam,
    pt: FieldPoint,
    quad: QuadratureSettings | None = None,
    *,
    self_field: bool = False,
) -> tuple[float, float]:
    """
    Poloidal field at ``pt`` per ampere of beam current.

    Analytic filament derivatives averaged over sub-filaments. A singular
    sub-filament contributes zero under ``self_field``.

    Returns
    -------
    tuple[float, float]
        (B_R, B_Z) in T/A.

    Raises
    ------
    SingularEvaluationError
        If ``pt`` lies on a sub-filament and ``self_field`` is False.
    """
    quad = quad or QuadratureSettings()
    rs, zs = beam.sub_filaments(quad.n_r, quad.n_z)
    singular = np.hypot(rs - pt.r, zs - pt.z) < EPS_GEO
    if singular.any() and not self_field:
        raise SingularEvaluationError(
            f"Field point ({pt.r}, {pt.z}) lies on a filament of beam at "
            f"({beam.r_center}, {beam.z_center})"
        )
    b_r, b_z = loop_field(
        rs[~singular], zs[~singular], pt.r, pt.z, method=quad.method, order=quad.azimuthal_order
    )
    return float(b_r.sum() / quad.n_sub), float(b_z.sum() / quad.n_sub)


class BeamGrid:
    """
    Ordered collection of beams with role labels.

    The list order is the canonical index of the current vector. Plasma beams
    must not overlap.

    Parameters
    ----------
    beams : Sequence[Beam]
        Beams in canonical order.
    labels : Sequence[BeamRole | str] | None, optional
        Role per beam. Defaults to plasma for every beam.

    Raises
    ------
    GeometryError
        If label count mismatches or plasma beams overlap.
    """

    def __init__(
        self,
        beams: Sequence[Beam],
        labels: Sequence[BeamRole | str] | None = None,
    ) -> None:
        self._beams = tuple(beams)
        if labels is None:
            labels = [BeamRole.PLASMA] * len(self._beams)
        if len(labels) != len(self._beams):
            raise GeometryError(
                f"Got {len(labels)} labels for {len(self._beams)} beams"
            )
        self._labels = tuple(BeamRole(label) for label in labels)

        self.r_centers = np.array([b.r_center for b in self._beams], dtype=np.float64)
        self.z_centers = np.array([b.z_center for b in self._beams], dtype=np.float64)
        self.widths = np.array([b.width for b in self._beams], dtype=np.float64)
        self.heights = np.array([b.height for b in self._beams], dtype=np.float64)
        self.areas = self.widths * self.heights

        self._check_plasma_overlap()

    def _check_plasma_overlap(self) -> None:
        idx = self.indices(BeamRole.PLASMA)
        if len(idx) < 2:
            return
        r, z = self.r_centers[idx], self.z_centers[idx]
        w, h = self.widths[idx], self.heights[idx]
        gap_r = np.abs(r[:, None] - r[None, :]) - 0.5 * (w[:, None] + w[None, :])
        gap_z = np.abs(z[:, None] - z[None, :]) - 0.5 * (h[:, None] + h[None, :])
        overlap = (gap_r < -_NEST_TOL) & (gap_z < -_NEST_TOL)
        np.fill_diagonal(overlap, False)
        if overlap.any():
            i, j = np.argwhere(overlap)[0]
            raise GeometryError(f"Plasma beams {idx[i]} and {idx[j]} overlap")

    @classmethod
    def rectangular(
        cls,
        r_range: tuple[float, float],
        z_range: tuple[float, float],
        n_r: int,
        n_z: int,
        role: BeamRole = BeamRole.PLASMA,
    ) -> Self:
        """
        Tile a rectangle with ``n_r × n_z`` equal beams, row-major in z then r.

        Examples
        --------
        >>> grid = BeamGrid.rectangular((0.55, 1.45), (-0.65, 0.65), 9, 13)
        >>> len(grid)
        117
        """
        (r0, r1), (z0, z1) = r_range, z_range
        if r1 <= r0 or z1 <= z0 or n_r < 1 or n_z < 1:
            raise GeometryError(
                f"Invalid lattice: r_range={r_range}, z_range={z_range}, n_r={n_r}, n_z={n_z}"
            )
        outline = Beam(
            r_center=0.5 * (r0 + r1), z_center=0.5 * (z0 + z1), width=r1 - r0, height=z1 - z0
        )
        beams = outline.refine(n_r, n_z)
        return cls(beams, [role] * len(beams))

    @property
    def beams(self) -> tuple[Beam, ...]:
        return self._beams

    @property
    def labels(self) -> tuple[BeamRole, ...]:
        return self._labels

    def __len__(self) -> int:
        return len(self._beams)

    def __iter__(self) -> Iterator[Beam]:
        return iter(self._beams)

    def __getitem__(self, index: int) -> Beam:
        return self._beams[index]

    def indices(self, *roles: BeamRole) -> NDArray[np.intp]:
        """Canonical indices of beams carrying any of ``roles``."""
        wanted = set(roles)
        return np.array(
            [i for i, label in enumerate(self._labels) if label in wanted], dtype=np.intp
        )

    def select(self, *roles: BeamRole) -> "BeamGrid":
        """Sub-grid of the beams carrying any of ``roles``, order preserved."""
        idx = self.indices(*roles)
        return BeamGrid([self._beams[i] for i in idx], [self._labels[i] for i in idx])

    def refine(self, n_r: int = 2, n_z: int = 2) -> "BeamGrid":
        """Split every beam into ``n_r × n_z`` children; children of beam i are contiguous."""
        beams: list[Beam] = []
        labels: list[BeamRole] = []
        for beam, label in zip(self._beams, self._labels, strict=True):
            children = beam.refine(n_r, n_z)
            beams.extend(children)
            labels.extend([label] * len(children))
        return BeamGrid(beams, labels)

    def lattice(self) -> tuple[FloatArray, FloatArray, NDArray[np.intp]]:
        """
        Describe the grid as a rectangular lattice.

        Returns
        -------
        tuple[ndarray, ndarray, ndarray]
            Sorted radial axis, sorted vertical axis, and for every beam its
            flat position in a ``(len(z_axis), len(r_axis))`` array.

        Raises
        ------
        GeometryError
            If the beam centers do not form a complete lattice.
        """
        r_key = np.round(self.r_centers, 9)
        z_key = np.round(self.z_centers, 9)
        r_axis = np.unique(r_key)
        z_axis = np.unique(z_key)
        if len(r_axis) * len(z_axis) != len(self):
            raise GeometryError(
                f"Beam centers do not form a lattice: {len(r_axis)} radii x "
                f"{len(z_axis)} heights for {len(self)} beams"
            )
        flat = np.searchsorted(z_axis, z_key) * len(r_axis) + np.searchsorted(r_axis, r_key)
        if len(np.unique(flat)) != len(self):
            raise GeometryError("Beam centers repeat within the lattice")
        return r_axis.astype(np.float64), z_axis.astype(np.float64), flat.astype(np.intp)

    def to_lattice(self, values: ArrayLike) -> FloatArray:
        """Arrange per-beam ``values`` as a ``(n_z, n_r)`` array."""
        r_axis, z_axis, flat = self.lattice()
        out = np.full(len(r_axis) * len(z_axis), np.nan)
        out[flat] = np.asarray(values, dtype=np.float64)
        return out.reshape(len(z_axis), len(r_axis))

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {**beam.to_dict(), "label": str(label)}
            for beam, label in zip(self._beams, self._labels, strict=True)
        ]


@dataclass(frozen=True, slots=True, kw_only=True, eq=False)
class ResponseOperator:
    """
    Linear map from beam currents to a field quantity at field points.

    Parameters
    ----------
    matrix : ndarray
        ``(n_points, n_beams)`` per-ampere responses.
    quantity : Quantity
        Which field the rows hold.
    quadrature : QuadratureSettings
        Quadrature used to build the matrix.
    """

    matrix: FloatArray
    quantity: Quantity
    quadrature: QuadratureSettings

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise GeometryError(f"Response matrix must be 2-D, got shape {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise GeometryError(f"Response matrix for {self.quantity} has non-finite entries")

    @property
    def shape(self) -> tuple[int, int]:
        rows, cols = self.matrix.shape
        return int(rows), int(cols)

    def apply(self, currents: ArrayLike) -> FloatArray:
        """Field values for beam ``currents`` (amperes)."""
        return np.asarray(self.matrix @ np.asarray(currents, dtype=np.float64))

    def __matmul__(self, currents: ArrayLike) -> FloatArray:
        return self.apply(currents)


def _point_arrays(pts: Sequence[FieldPoint]) -> tuple[FloatArray, FloatArray]:
    r = np.array([p.r for p in pts], dtype=np.float64)
    z = np.array([p.z for p in pts], dtype=np.float64)
    return r, z


def _assemble(
    grid: BeamGrid,
    pts: Sequence[FieldPoint],
    quad: QuadratureSettings,
    *,
    flux: bool,
    field: bool,
    self_field: bool,
) -> dict[Quantity, FloatArray]:
    r_pts, z_pts = _point_arrays(pts)
    out: dict[Quantity, FloatArray] = {}
    if flux:
        out[Quantity.PSI] = np.zeros((len(pts), len(grid)))
    if field:
        out[Quantity.B_R] = np.zeros((len(pts), len(grid)))
        out[Quantity.B_Z] = np.zeros((len(pts), len(grid)))

    kernel = {"method": quad.method, "order": quad.azimuthal_order}
    for i, beam in enumerate(grid):
        rs, zs = beam.sub_filaments(quad.n_r, quad.n_z)
        dist = np.hypot(r_pts[:, None] - rs[None, :], z_pts[:, None] - zs[None, :])
        singular = dist < EPS_GEO
        if singular.any():
            if not self_field:
                j = int(np.argwhere(singular)[0, 0])
                raise SingularEvaluationError(
                    f"Field point {j} at ({r_pts[j]}, {z_pts[j]}) lies on a filament of beam {i}",
                    point_index=j,
                    beam_index=i,
                )
            logger.debug("self_field_correction: beam=%d, points=%d", i, int(singular.sum()))

        a = np.broadcast_to(rs[None, :], dist.shape)
        zc = np.broadcast_to(zs[None, :], dist.shape)
        r = np.broadcast_to(r_pts[:, None], dist.shape)
        z = np.broadcast_to(z_pts[:, None], dist.shape)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if flux:
                psi = loop_flux(a, zc, r, z, **kernel)
                psi = np.where(singular, _self_flux(beam, a, quad), psi)
                out[Quantity.PSI][:, i] = psi.mean(axis=1)
            if field:
                b_r, b_z = loop_field(a, zc, r, z, **kernel)
                out[Quantity.B_R][:, i] = np.where(singular, 0.0, b_r).mean(axis=1)
                out[Quantity.B_Z][:, i] = np.where(singular, 0.0, b_z).mean(axis=1)
    return out


def build_response(
    grid: BeamGrid,
    pts: Sequence[FieldPoint],
    quantity: Quantity | str,
    quad: QuadratureSettings | None = None,
    *,
    self_field: bool = False,
) -> ResponseOperator:
    """
    Assemble the response operator of ``quantity`` at ``pts`` to ``grid`` currents.

    Entry (j, i) is the per-ampere response at ``pts[j]`` to ``grid[i]``.
    Columns are computed independently, so the result does not depend on
    evaluation order.

    Parameters
    ----------
    grid : BeamGrid
        Source beams.
    pts : Sequence[FieldPoint]
        Evaluation points.
    quantity : Quantity | str
        ``psi``, ``b_r`` or ``b_z``.
    quad : QuadratureSettings | None, optional
        Quadrature controls.
    self_field : bool, optional
        Apply the self-field convention instead of raising on coincident points.

    Returns
    -------
    ResponseOperator
        ``(len(pts), len(grid))`` operator.

    Raises
    ------
    SingularEvaluationError
        With ``point_index`` and ``beam_index`` of the first coincidence.
    """
    quad = quad or QuadratureSettings()
    quantity = Quantity(quantity)
    is_flux = quantity is Quantity.PSI
    matrices = _assemble(grid, pts, quad, flux=is_flux, field=not is_flux, self_field=self_field)
    logger.debug(
        "response_built: quantity=%s, points=%d, beams=%d", quantity, len(pts), len(grid)
    )
    return ResponseOperator(matrix=matrices[quantity], quantity=quantity, quadrature=quad)


def build_field_responses(
    grid: BeamGrid,
    pts: Sequence[FieldPoint],
    quad: QuadratureSettings | None = None,
    *,
    self_field: bool = False,
) -> tuple[ResponseOperator, ResponseOperator, ResponseOperator]:
    """
    Assemble ψ, B_R and B_Z operators in one pass over the beams.

    Returns
    -------
    tuple[ResponseOperator, ResponseOperator, ResponseOperator]
        (psi, b_r, b_z) operators.
    """
    quad = quad or QuadratureSettings()
    matrices = _assemble(grid, pts, quad, flux=True, field=True, self_field=self_field)
    return tuple(  # type: ignore[return-value]
        ResponseOperator(matrix=matrices[q], quantity=q, quadrature=quad)
        for q in (Quantity.PSI, Quantity.B_R, Quantity.B_Z)
    )


def nest_index(dense: BeamGrid, inference: BeamGrid) -> NDArray[np.intp]:
    """
    Map every dense beam to the inference beam that contains it.

    Parameters
    ----------
    dense : BeamGrid
        Fine grid.
    inference : BeamGrid
        Coarse grid.

    Returns
    -------
    ndarray
        Parent index per dense beam.

    Raises
    ------
    GeometryMismatchError
        If a dense beam lies in no inference beam or straddles several.
    """
    d_rmin = (dense.r_centers - dense.widths / 2)[:, None]
    d_rmax = (dense.r_centers + dense.widths / 2)[:, None]
    d_zmin = (dense.z_centers - dense.heights / 2)[:, None]
    d_zmax = (dense.z_centers + dense.heights / 2)[:, None]
    i_rmin = (inference.r_centers - inference.widths / 2)[None, :]
    i_rmax = (inference.r_centers + inference.widths / 2)[None, :]
    i_zmin = (inference.z_centers - inference.heights / 2)[None, :]
    i_zmax = (inference.z_centers + inference.heights / 2)[None, :]

    inside = (
        (d_rmin >= i_rmin - _NEST_TOL)
        & (d_rmax <= i_rmax + _NEST_TOL)
        & (d_zmin >= i_zmin - _NEST_TOL)
        & (d_zmax <= i_zmax + _NEST_TOL)
    )
    counts = inside.sum(axis=1)
    bad = np.flatnonzero(counts != 1)
    if len(bad):
        k = int(bad[0])
        raise GeometryMismatchError(
            f"Dense beam {k} at ({dense.r_centers[k]}, {dense.z_centers[k]}) nests in "
            f"{int(counts[k])} inference beams (expected exactly 1)"
        )
    return np.argmax(inside, axis=1).astype(np.intp)
