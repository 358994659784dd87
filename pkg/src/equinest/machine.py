"""
Machine geometry documents and the bundle of response operators built from them.

A machine-geometry document lists every beam with its role, the refinement of
the dense grid on which the GS current density is evaluated, and the
quadrature settings. Channel positions come from the diagnostic document, so
operators are built for a (geometry, channel layout) pair.

Example
-------
>>> geometry = MachineGeometry.from_file("machine.json")
>>> data = DiagnosticSet.from_file("diagnostics.json")
>>> with OperatorCache() as cache:
...     machine = Machine.build(geometry, data.layout(), cache=cache)
"""

import hashlib
import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Self

import numpy as np
from numpy.typing import NDArray

from equinest.cache import OperatorCache
from equinest.diagnostics.base import ChannelLayout
from equinest.exceptions import GeometryError, ValidationError
from equinest.files import read_document, write_json
from equinest.magnetostatics import (
    Beam,
    BeamGrid,
    BeamRole,
    FieldPoint,
    QuadratureSettings,
    build_field_responses,
    build_response,
    nest_index,
)

__all__ = ["Machine", "MachineGeometry", "MachineOperators"]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


@dataclass(frozen=True, slots=True, kw_only=True, eq=False)
class MachineGeometry:
    """
    Beams, dense-grid refinement and quadrature of one machine.

    Parameters
    ----------
    name : str
        Machine label.
    grid : BeamGrid
        All beams with role labels, in canonical order.
    dense_refinement : tuple[int, int], optional
        Split of every plasma beam into dense beams. Default (2, 2).
    quadrature : QuadratureSettings, optional
        Quadrature for every response operator.
    """

    name: str
    grid: BeamGrid
    dense_refinement: tuple[int, int] = (2, 2)
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self) -> None:
        n_r, n_z = self.dense_refinement
        if n_r < 1 or n_z < 1:
            raise GeometryError(f"dense_refinement must be >= 1, got {self.dense_refinement}")
        if len(self.grid.indices(BeamRole.PLASMA)) == 0:
            raise GeometryError(f"Machine '{self.name}' has no plasma beams")

    @property
    def plasma(self) -> BeamGrid:
        return self.grid.select(BeamRole.PLASMA)

    @property
    def conductors(self) -> BeamGrid:
        return self.grid.select(BeamRole.PASSIVE, BeamRole.COIL)

    @property
    def dense(self) -> BeamGrid:
        return self.plasma.refine(*self.dense_refinement)

    @classmethod
    def from_file(cls, path: str | Path) -> Self:
        """
        Load a machine-geometry document (YAML or JSON).

        Raises
        ------
        ValidationError
            If the file is missing, malformed or lists invalid beams. All beam
            errors are reported together.
        GeometryError
            If plasma beams overlap.
        """
        logger.info("loading_machine: path=%s", path)
        geometry = cls.from_mapping(read_document(path, what="machine geometry"), source=path)
        logger.info(
            "machine_loaded: name=%s, plasma=%d, conductors=%d",
            geometry.name,
            len(geometry.plasma),
            len(geometry.conductors),
        )
        return geometry

    @classmethod
    def from_mapping(cls, raw: Any, *, source: str | Path = "<mapping>") -> Self:
        """Build from a parsed machine-geometry document."""
        if not isinstance(raw, Mapping) or not isinstance(raw.get("beams"), list):
            raise ValidationError(f"Machine document {source} must contain a 'beams' list")

        beams: list[Beam] = []
        labels: list[BeamRole] = []
        errors: list[str] = []
        for num, entry in enumerate(raw["beams"]):
            try:
                missing = [k for k in ("r", "z", "width", "height") if k not in entry]
                if missing:
                    raise ValidationError(f"missing field(s) {', '.join(missing)}")
                beams.append(
                    Beam(
                        r_center=float(entry["r"]),
                        z_center=float(entry["z"]),
                        width=float(entry["width"]),
                        height=float(entry["height"]),
                    )
                )
                labels.append(BeamRole(entry.get("label", BeamRole.PLASMA)))
            except (GeometryError, ValidationError, TypeError, ValueError) as e:
                errors.append(f"Beam {num}: {e}")

        if errors:
            error_list = "\n  ".join(errors)
            raise ValidationError(f"{len(errors)} error(s) in {source}:\n  {error_list}")

        refinement = raw.get("dense_refinement", [2, 2])
        try:
            quadrature = QuadratureSettings.from_dict(raw.get("quadrature") or {})
            dense = (int(refinement[0]), int(refinement[1]))
        except (GeometryError, TypeError, ValueError, IndexError) as e:
            raise ValidationError(f"Invalid quadrature or dense_refinement in {source}: {e}") from e

        return cls(
            name=str(raw.get("name", "machine")),
            grid=BeamGrid(beams, labels),
            dense_refinement=dense,
            quadrature=quadrature,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "beams": self.grid.to_records(),
            "dense_refinement": list(self.dense_refinement),
            "quadrature": self.quadrature.to_dict(),
        }

    def to_file(self, path: str | Path) -> Path:
        """Write the document as JSON."""
        target = write_json(path, self.to_dict())
        logger.info("machine_exported: path=%s, beams=%d", target, len(self.grid))
        return target

    def content_hash(self) -> str:
        """SHA-256 of the canonical document."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True, slots=True, kw_only=True, eq=False)
class MachineOperators:
    """
    Response matrices of a machine for one channel layout.

    Channel operators have one row per positioned channel, in layout order.
    The dense-grid operators give ψ at dense-beam centers.
    """

    psi_dense_plasma: FloatArray
    psi_dense_conductor: FloatArray
    psi_chan_plasma: FloatArray
    b_r_chan_plasma: FloatArray
    b_z_chan_plasma: FloatArray
    psi_chan_conductor: FloatArray
    b_r_chan_conductor: FloatArray
    b_z_chan_conductor: FloatArray
    psi_chan_dense: FloatArray
    b_r_chan_dense: FloatArray
    b_z_chan_dense: FloatArray

    def to_arrays(self) -> dict[str, FloatArray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, FloatArray]) -> Self:
        names = [f.name for f in fields(cls)]
        missing = [n for n in names if n not in arrays]
        if missing:
            raise KeyError(f"Operator arrays missing: {', '.join(missing)}")
        return cls(**{n: np.asarray(arrays[n], dtype=np.float64) for n in names})


def _channel_operators(
    source: BeamGrid, pts: list[FieldPoint], quad: QuadratureSettings
) -> tuple[FloatArray, FloatArray, FloatArray]:
    if len(source) == 0 or len(pts) == 0:
        empty = np.zeros((len(pts), len(source)))
        return empty, empty.copy(), empty.copy()
    psi, b_r, b_z = build_field_responses(source, pts, quad)
    return psi.matrix, b_r.matrix, b_z.matrix


def _dense_operator(source: BeamGrid, dense: BeamGrid, quad: QuadratureSettings) -> FloatArray:
    if len(source) == 0:
        return np.zeros((len(dense), 0))
    centers = [FieldPoint(r=b.r_center, z=b.z_center) for b in dense]
    return build_response(source, centers, "psi", quad, self_field=True).matrix


def _assemble_operators(geometry: MachineGeometry, layout: ChannelLayout) -> MachineOperators:
    quad = geometry.quadrature
    plasma, conductors, dense = geometry.plasma, geometry.conductors, geometry.dense
    pts = layout.field_points()

    psi_p, br_p, bz_p = _channel_operators(plasma, pts, quad)
    psi_c, br_c, bz_c = _channel_operators(conductors, pts, quad)
    psi_d, br_d, bz_d = _channel_operators(dense, pts, quad)
    return MachineOperators(
        psi_dense_plasma=_dense_operator(plasma, dense, quad),
        psi_dense_conductor=_dense_operator(conductors, dense, quad),
        psi_chan_plasma=psi_p,
        b_r_chan_plasma=br_p,
        b_z_chan_plasma=bz_p,
        psi_chan_conductor=psi_c,
        b_r_chan_conductor=br_c,
        b_z_chan_conductor=bz_c,
        psi_chan_dense=psi_d,
        b_r_chan_dense=br_d,
        b_z_chan_dense=bz_d,
    )


class Machine:
    """
    Geometry, channel layout and response operators ready for inference.

    Use ``Machine.build`` rather than the constructor.

    Parameters
    ----------
    geometry : MachineGeometry
        Beam geometry.
    layout : ChannelLayout
        Channels the operators were built for.
    operators : MachineOperators
        Response matrices.
    """

    def __init__(
        self, geometry: MachineGeometry, layout: ChannelLayout, operators: MachineOperators
    ) -> None:
        self.geometry = geometry
        self.layout = layout
        self.operators = operators
        self.plasma = geometry.plasma
        self.conductors = geometry.conductors
        self.dense = geometry.dense
        self.parent_index = nest_index(self.dense, self.plasma)

    @property
    def n_plasma(self) -> int:
        return len(self.plasma)

    @property
    def n_conductors(self) -> int:
        return len(self.conductors)

    @property
    def f_boundary(self) -> float:
        """Toroidal-field-coil current term f(ψ_γ) of the discharge, in amperes."""
        return self.layout.toroidal_field_current

    @staticmethod
    def cache_key(geometry: MachineGeometry, layout: ChannelLayout) -> str:
        """SHA-256 over geometry, channel positions and quadrature."""
        payload = {
            "geometry": geometry.to_dict(),
            "positions": layout.position_content(),
            "quadrature": geometry.quadrature.to_dict(),
        }
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def build(
        cls,
        geometry: MachineGeometry,
        layout: ChannelLayout,
        cache: OperatorCache | None = None,
    ) -> "Machine":
        """
        Build or load the response operators of ``geometry`` for ``layout``.

        Parameters
        ----------
        geometry : MachineGeometry
            Beam geometry.
        layout : ChannelLayout
            Channel layout from the diagnostic document.
        cache : OperatorCache | None, optional
            Operator cache; None builds without caching.

        Returns
        -------
        Machine
            Ready machine.

        Raises
        ------
        SingularEvaluationError
            If a channel lies on a filament.
        GeometryMismatchError
            If the dense grid does not nest in the plasma grid.
        """
        key = cls.cache_key(geometry, layout)
        operators: MachineOperators | None = None
        if cache is not None:
            arrays = cache.get(key)
            if arrays is not None:
                try:
                    operators = MachineOperators.from_arrays(arrays)
                    logger.info("operators_loaded_from_cache: machine=%s", geometry.name)
                except KeyError:
                    logger.warning("cache_entry_incomplete: key=%s", key[:12], exc_info=True)

        if operators is None:
            logger.info(
                "building_operators: machine=%s, plasma=%d, conductors=%d, channels=%d",
                geometry.name,
                len(geometry.plasma),
                len(geometry.conductors),
                len(layout),
            )
            operators = _assemble_operators(geometry, layout)
            if cache is not None:
                cache.put(key, operators.to_arrays(), label=geometry.name)

        return cls(geometry, layout, operators)
