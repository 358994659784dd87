"""
Synthetic machines, force-balance ground truth and noisy diagnostics.

A synthetic machine is a rectangular lattice of plasma beams inside a
rectangular wall, with four poloidal-field coils and two passive plates.
Pickup coils sit in pairs (tangential and normal) along the wall, flux
loops just outside it, MSE points on the midplane, plus one Rogowski coil.

Ground truth comes from a Picard iteration on the GS current density, so
the direct and GS forward chains agree up to discretization.

Example
-------
>>> geometry, template = build_synthetic_machine(SyntheticMachineSpec.preset("desk"))
>>> machine = Machine.build(geometry, template.layout())
>>> truth = generate_gs_truth(machine, DESK_PROFILE, 4.5e5)
>>> data = synthesize_data(truth, template, noise_seed=7)
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Self

import numpy as np
from numpy.typing import ArrayLike, NDArray

from equinest.diagnostics import (
    Channel,
    ChannelKind,
    DiagnosticSet,
    PredictionSet,
    predict_all,
)
from equinest.equilibrium import ProfileCoeffs, eval_f, eval_fprime, eval_pprime
from equinest.exceptions import ConvergenceError, ValidationError
from equinest.files import read_document, write_json
from equinest.inference import EquilibriumState
from equinest.machine import Machine, MachineGeometry
from equinest.magnetostatics import (
    MU0,
    Beam,
    BeamGrid,
    BeamRole,
    FieldPoint,
    QuadratureSettings,
)

__all__ = [
    "DESK_PROFILE",
    "Blob",
    "SyntheticMachineSpec",
    "TruthRecord",
    "build_synthetic_machine",
    "generate_gs_truth",
    "perturb_truth",
    "picard_step",
    "synthesize_data",
]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

Rect = tuple[float, float, float, float]

DESK_PROFILE = ProfileCoeffs(p_c=(2.0e4, 8.0e4, 0.0, 0.0), f_c=(2.0e5, 0.0, 0.0), f_boundary=2.5e6)

_MSE_GEOMETRY = (1.0, 0.0, 0.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True, slots=True, kw_only=True)
class SyntheticMachineSpec:
    """
    Layout of a synthetic machine.

    Rectangles are ``(r_min, r_max, z_min, z_max)``; conductors are
    ``(r, z, width, height)``. Lengths in meters, currents in amperes.
    """

    name: str
    plasma_r: tuple[float, float]
    plasma_z: tuple[float, float]
    n_r: int
    n_z: int
    coils: tuple[Rect, ...]
    coil_currents: tuple[float, ...]
    passives: tuple[Rect, ...]
    pickup_wall: Rect
    n_pickup_positions: int = 38
    fluxloop_wall: Rect = (0.35, 1.65, -0.85, 0.85)
    n_fluxloops: int = 24
    mse_r: tuple[float, float] = (0.6, 1.4)
    n_mse: int = 31
    sigma_pickup: float = 2.0e-3
    sigma_fluxloop: float = 2.0e-3
    sigma_mse: float = 2.0e-3
    sigma_rogowski: float = 1.0e3
    bias_groups: tuple[str, ...] = ("pickup", "fluxloop")
    toroidal_field_current: float = 2.5e6
    dense_refinement: tuple[int, int] = (2, 2)
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self) -> None:
        if len(self.coil_currents) != len(self.coils):
            raise ValidationError(
                f"Got {len(self.coil_currents)} coil currents for {len(self.coils)} coils"
            )
        if min(self.n_pickup_positions, self.n_fluxloops, self.n_mse) < 1:
            raise ValidationError("Channel counts must be >= 1")

    @property
    def conductor_currents(self) -> FloatArray:
        """Coil currents followed by zero passive currents."""
        return np.concatenate([np.asarray(self.coil_currents), np.zeros(len(self.passives))])

    @classmethod
    def preset(cls, name: str) -> Self:
        """
        Named layout: ``desk`` (9×13 beams) or ``full`` (11×43 beams).

        Raises
        ------
        ValidationError
            For an unknown name.
        """
        if name == "desk":
            return cls(
                name="desk",
                plasma_r=(0.55, 1.45),
                plasma_z=(-0.65, 0.65),
                n_r=9,
                n_z=13,
                coils=(
                    (1.90, 0.60, 0.1, 0.1),
                    (1.90, -0.60, 0.1, 0.1),
                    (0.90, 1.05, 0.1, 0.1),
                    (0.90, -1.05, 0.1, 0.1),
                ),
                coil_currents=(-2.0e4, -2.0e4, 1.0e4, 1.0e4),
                passives=((1.75, 0.25, 0.04, 0.20), (1.75, -0.25, 0.04, 0.20)),
                pickup_wall=(0.4, 1.6, -0.8, 0.8),
                fluxloop_wall=(0.35, 1.65, -0.85, 0.85),
                mse_r=(0.6, 1.4),
            )
        if name == "full":
            return cls(
                name="full",
                plasma_r=(0.25, 1.35),
                plasma_z=(-1.075, 1.075),
                n_r=11,
                n_z=43,
                coils=(
                    (1.75, 0.90, 0.1, 0.1),
                    (1.75, -0.90, 0.1, 0.1),
                    (0.90, 1.50, 0.1, 0.1),
                    (0.90, -1.50, 0.1, 0.1),
                ),
                coil_currents=(-2.0e4, -2.0e4, 1.0e4, 1.0e4),
                passives=((1.62, 0.30, 0.04, 0.20), (1.62, -0.30, 0.04, 0.20)),
                pickup_wall=(0.18, 1.5, -1.25, 1.25),
                fluxloop_wall=(0.15, 1.55, -1.3, 1.3),
                mse_r=(0.4, 1.3),
            )
        raise ValidationError(f"Unknown synthetic machine preset '{name}'; use 'desk' or 'full'")


@dataclass(frozen=True, slots=True, kw_only=True)
class Blob:
    """
    Gaussian current perturbation.

    Parameters
    ----------
    r, z : float
        Center in meters.
    radius : float
        Gaussian width in meters.
    amplitude : float
        Integrated current in amperes.
    """

    r: float
    z: float
    radius: float
    amplitude: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValidationError(f"Blob radius must be > 0, got {self.radius}")

    def to_dict(self) -> dict[str, float]:
        return {"r": self.r, "z": self.z, "radius": self.radius, "amplitude": self.amplitude}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> Self:
        return cls(
            r=float(raw["r"]),
            z=float(raw["z"]),
            radius=float(raw["radius"]),
            amplitude=float(raw["amplitude"]),
        )


@dataclass(frozen=True, slots=True, kw_only=True, eq=False)
class TruthRecord:
    """
    Ground truth archived beside synthetic data.

    Parameters
    ----------
    state : EquilibriumState
        True model state.
    predictions : PredictionSet
        Noiseless direct and GS predictions of every channel.
    target_current : float
        Total plasma current the generator was asked for.
    iterations : int
        Picard iterations used.
    residual : float
        Largest beam-current change of the last iteration, in amperes.
    noise_seed : int | None
        Seed of the noise added to the observations.
    blob : Blob | None
        Perturbation applied after generation.
    """

    state: EquilibriumState
    predictions: PredictionSet
    target_current: float
    iterations: int = 0
    residual: float = 0.0
    noise_seed: int | None = None
    blob: Blob | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "state": self.state.to_dict(),
            "predictions": {
                "names": list(self.predictions.names),
                "direct": self.predictions.direct.tolist(),
                "gs": self.predictions.gs.tolist(),
            },
            "target_current": self.target_current,
            "iterations": self.iterations,
            "residual": self.residual,
            "noise_seed": self.noise_seed,
            "blob": None if self.blob is None else self.blob.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> Self:
        pred = raw["predictions"]
        return cls(
            state=EquilibriumState.from_dict(raw["state"]),
            predictions=PredictionSet(
                np.asarray(pred["direct"], dtype=np.float64),
                np.asarray(pred["gs"], dtype=np.float64),
                tuple(pred["names"]),
            ),
            target_current=float(raw["target_current"]),
            iterations=int(raw.get("iterations", 0)),
            residual=float(raw.get("residual", 0.0)),
            noise_seed=raw.get("noise_seed"),
            blob=Blob.from_dict(raw["blob"]) if raw.get("blob") else None,
        )

    def to_file(self, path: str | Path) -> Path:
        target = write_json(path, self.to_dict())
        logger.info("truth_exported: path=%s", target)
        return target

    @classmethod
    def from_file(cls, path: str | Path) -> Self:
        raw = read_document(path, what="truth record")
        try:
            return cls.from_dict(raw)
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed truth record {path}: {e}") from e


def _perimeter(rect: Rect, n: int) -> list[tuple[float, float, float]]:
    """
    ``n`` points evenly spaced along a rectangle, counter-clockwise from
    ``(r_min, z_min)`` with a half-step offset.

    Returns (r, z, tangent angle) per point.
    """
    r0, r1, z0, z1 = rect
    w, h = r1 - r0, z1 - z0
    edges = (
        (r0, z0, 1.0, 0.0, w),
        (r1, z0, 0.0, 1.0, h),
        (r1, z1, -1.0, 0.0, w),
        (r0, z1, 0.0, -1.0, h),
    )
    total = 2.0 * (w + h)
    points = []
    for k in range(n):
        s = (k + 0.5) * total / n
        for r_start, z_start, dr, dz, length in edges:
            if s <= length:
                points.append((r_start + dr * s, z_start + dz * s, math.atan2(dz, dr)))
                break
            s -= length
    return points


def _beams(rects: Sequence[Rect]) -> list[Beam]:
    return [Beam(r_center=r, z_center=z, width=w, height=h) for r, z, w, h in rects]


def build_synthetic_machine(spec: SyntheticMachineSpec) -> tuple[MachineGeometry, DiagnosticSet]:
    """
    Machine geometry and a channel template with zero observations.

    Parameters
    ----------
    spec : SyntheticMachineSpec
        Layout.

    Returns
    -------
    tuple[MachineGeometry, DiagnosticSet]
        Geometry (plasma beams, then coils, then passives) and the channel
        template.
    """
    plasma = BeamGrid.rectangular(spec.plasma_r, spec.plasma_z, spec.n_r, spec.n_z)
    beams = [*plasma, *_beams(spec.coils), *_beams(spec.passives)]
    labels = (
        [BeamRole.PLASMA] * len(plasma)
        + [BeamRole.COIL] * len(spec.coils)
        + [BeamRole.PASSIVE] * len(spec.passives)
    )
    geometry = MachineGeometry(
        name=spec.name,
        grid=BeamGrid(beams, labels),
        dense_refinement=spec.dense_refinement,
        quadrature=spec.quadrature,
    )

    channels: list[Channel] = []
    pickup_bias = spec.bias_groups.index("pickup") if "pickup" in spec.bias_groups else None
    flux_bias = spec.bias_groups.index("fluxloop") if "fluxloop" in spec.bias_groups else None
    for k, (r, z, tangent) in enumerate(_perimeter(spec.pickup_wall, spec.n_pickup_positions)):
        for suffix, theta in (("t", tangent), ("n", tangent + math.pi / 2)):
            channels.append(
                Channel(
                    name=f"pickup_{suffix}_{k:02d}",
                    kind=ChannelKind.PICKUP,
                    position=FieldPoint(r=r, z=z),
                    uncertainty=spec.sigma_pickup,
                    theta=theta,
                    bias_index=pickup_bias,
                )
            )
    for k, (r, z, _) in enumerate(_perimeter(spec.fluxloop_wall, spec.n_fluxloops)):
        channels.append(
            Channel(
                name=f"fluxloop_{k:02d}",
                kind=ChannelKind.FLUXLOOP,
                position=FieldPoint(r=r, z=z),
                uncertainty=spec.sigma_fluxloop,
                bias_index=flux_bias,
            )
        )
    for k, r in enumerate(np.linspace(*spec.mse_r, spec.n_mse)):
        channels.append(
            Channel(
                name=f"mse_{k:02d}",
                kind=ChannelKind.MSE,
                position=FieldPoint(r=float(r), z=0.0),
                uncertainty=spec.sigma_mse,
                mse_geometry=_MSE_GEOMETRY,
            )
        )
    channels.append(
        Channel(name="rogowski", kind=ChannelKind.ROGOWSKI, uncertainty=spec.sigma_rogowski)
    )

    template = DiagnosticSet(
        channels,
        bias_groups=spec.bias_groups,
        toroidal_field_current=spec.toroidal_field_current,
    )
    logger.info(
        "synthetic_machine_built: preset=%s, plasma=%d, channels=%d",
        spec.name,
        len(plasma),
        len(template),
    )
    return geometry, template


def _parabolic_currents(grid: BeamGrid, total: float) -> FloatArray:
    half_w, half_h = grid.widths / 2, grid.heights / 2
    r_lo, r_hi = np.min(grid.r_centers - half_w), np.max(grid.r_centers + half_w)
    z_lo, z_hi = np.min(grid.z_centers - half_h), np.max(grid.z_centers + half_h)
    r0, a = 0.5 * (r_lo + r_hi), 0.5 * (r_hi - r_lo)
    z0, b = 0.5 * (z_lo + z_hi), 0.5 * (z_hi - z_lo)
    rho_sq = ((grid.r_centers - r0) / a) ** 2 + ((grid.z_centers - z0) / b) ** 2
    j = np.clip(1.0 - rho_sq, 0.0, None) * grid.areas
    return total * j / j.sum()


def picard_step(
    machine: Machine,
    currents: ArrayLike,
    profile: ProfileCoeffs,
    target_current: float,
    *,
    conductor_currents: ArrayLike | None = None,
    boundary_fraction: float = 0.99,
) -> tuple[FloatArray, ProfileCoeffs, float]:
    """
    One fixed-point update of the plasma beam currents.

    ψ on the dense grid gives ψ_γ = ψ_axis - fraction·(ψ_axis - ψ_min); the
    pressure term of J_GS is rescaled so that the total current equals
    ``target_current``, and J_GS is integrated back onto the plasma beams.

    Returns
    -------
    tuple[ndarray, ProfileCoeffs, float]
        New beam currents, the rescaled profile and ψ_γ.

    Raises
    ------
    ValidationError
        If the pressure term carries no current inside ψ_γ.
    """
    ops = machine.operators
    dense = machine.dense
    currents = np.asarray(currents, dtype=np.float64)
    psi = ops.psi_dense_plasma @ currents
    if machine.n_conductors:
        conductor = (
            np.zeros(machine.n_conductors)
            if conductor_currents is None
            else np.asarray(conductor_currents, dtype=np.float64)
        )
        psi = psi + ops.psi_dense_conductor @ conductor

    axis, edge = float(psi.max()), float(psi.min())
    psi_gamma = axis - boundary_fraction * (axis - edge)
    inside = psi >= psi_gamma
    r = dense.r_centers
    j_pp = np.where(inside, 2.0 * np.pi * r * eval_pprime(profile, psi), 0.0)
    j_ff = np.where(
        inside,
        MU0 / (2.0 * np.pi * r) * eval_f(profile, psi_gamma, psi) * eval_fprime(profile, psi),
        0.0,
    )
    i_pp = float(np.sum(j_pp * dense.areas))
    i_ff = float(np.sum(j_ff * dense.areas))
    if abs(i_pp) < 1e-12 * max(abs(target_current), 1.0):
        raise ValidationError("Pressure term carries no current inside the boundary contour")
    scale = (target_current - i_ff) / i_pp
    j = scale * j_pp + j_ff
    new = np.bincount(machine.parent_index, weights=j * dense.areas, minlength=machine.n_plasma)
    return new, profile.scaled_pressure(scale), psi_gamma


def generate_gs_truth(
    machine: Machine,
    profile: ProfileCoeffs,
    target_current: float,
    *,
    tol: float = 1.0e-6,
    max_iterations: int = 200,
    boundary_fraction: float = 0.99,
    relaxation: float = 1.0,
    conductor_currents: ArrayLike | None = None,
    sigma_star_sq: float = 1.0e-3,
) -> TruthRecord:
    """
    Force-balance ground truth by Picard iteration.

    Starts from a parabolic current profile centered on the plasma grid and
    repeats ``picard_step`` until the largest beam-current change drops
    below ``tol * target_current``.

    Parameters
    ----------
    machine : Machine
        Machine with operators for the channel template.
    profile : ProfileCoeffs
        Shape of p′ and f; the pressure coefficients get rescaled. f(ψ_γ)
        is taken from the machine.
    target_current : float
        Total plasma current, in amperes.
    tol : float, optional
        Relative convergence tolerance.
    max_iterations : int, optional
        Iteration limit. Default 200.
    boundary_fraction : float, optional
        Position of ψ_γ between the axis and the grid minimum. Default 0.99.
    relaxation : float, optional
        Fraction of each update applied. Default 1 (plain Picard).
    conductor_currents : array_like | None, optional
        Coil and passive currents; zeros when None.
    sigma_star_sq : float, optional
        σ*² stored in the true state, in (kA)².

    Returns
    -------
    TruthRecord
        Converged state with its noiseless predictions.

    Raises
    ------
    ConvergenceError
        If the iteration limit is reached; carries the last residual.
    """
    if not 0.0 < boundary_fraction < 1.0:
        raise ValidationError(f"boundary_fraction must lie in (0, 1), got {boundary_fraction}")
    if not 0.0 < relaxation <= 1.0:
        raise ValidationError(f"relaxation must lie in (0, 1], got {relaxation}")
    profile = replace(profile, f_boundary=machine.f_boundary)
    conductor = (
        np.zeros(machine.n_conductors)
        if conductor_currents is None
        else np.asarray(conductor_currents, dtype=np.float64)
    )
    currents = _parabolic_currents(machine.plasma, target_current)
    threshold = tol * abs(target_current)

    residual = math.inf
    for iteration in range(1, max_iterations + 1):
        new, scaled, psi_gamma = picard_step(
            machine,
            currents,
            profile,
            target_current,
            conductor_currents=conductor,
            boundary_fraction=boundary_fraction,
        )
        residual = float(np.max(np.abs(new - currents)))
        currents = currents + relaxation * (new - currents)
        logger.debug("picard_iteration: iteration=%d, residual=%.3g", iteration, residual)
        if residual < threshold:
            break
    else:
        raise ConvergenceError(
            f"Picard iteration did not converge in {max_iterations} iterations "
            f"(residual {residual:.3g} A, tolerance {threshold:.3g} A)",
            residual=residual,
        )

    state = EquilibriumState(
        beam_currents=currents,
        profile=scaled,
        psi_gamma=psi_gamma,
        sigma_star_sq=sigma_star_sq,
        biases=np.zeros(machine.layout.n_bias),
        passive_currents=conductor,
    )
    logger.info(
        "gs_truth_generated: iterations=%d, residual=%.3g, total_current=%.6g, psi_gamma=%.6g",
        iteration,
        residual,
        float(currents.sum()),
        psi_gamma,
    )
    return TruthRecord(
        state=state,
        predictions=predict_all(state, machine),
        target_current=float(target_current),
        iterations=iteration,
        residual=residual,
    )


def perturb_truth(record: TruthRecord, machine: Machine, blob: Blob) -> TruthRecord:
    """
    Add a Gaussian current blob to the plasma beams.

    The blob current density is a Gaussian normalized so that the added beam
    currents sum to ``blob.amplitude``. Nothing is rescaled.

    Returns
    -------
    TruthRecord
        Perturbed state with recomputed predictions and the blob descriptor.
    """
    grid = machine.plasma
    d_sq = (grid.r_centers - blob.r) ** 2 + (grid.z_centers - blob.z) ** 2
    weight = np.exp(-0.5 * d_sq / blob.radius**2) * grid.areas
    total = weight.sum()
    added = blob.amplitude * weight / total if total > 0 else np.zeros(len(grid))
    state = replace(record.state, beam_currents=record.state.beam_currents + added)
    logger.info(
        "truth_perturbed: r=%.3g, z=%.3g, radius=%.3g, amplitude=%.6g",
        blob.r,
        blob.z,
        blob.radius,
        blob.amplitude,
    )
    return replace(record, state=state, predictions=predict_all(state, machine), blob=blob)


def synthesize_data(
    record: TruthRecord,
    template: DiagnosticSet,
    noise_seed: int,
    *,
    noise_scale: float = 1.0,
) -> DiagnosticSet:
    """
    Noisy observations of the true direct predictions.

    x_i = direct_i + noise_scale·σ_i·ε_i with ε_i standard normal from
    ``default_rng(noise_seed)``.

    Raises
    ------
    ValidationError
        If the template channels differ from the record's.
    """
    if tuple(template.list_names()) != record.predictions.names:
        raise ValidationError("Channel template does not match the truth record")
    rng = np.random.default_rng(noise_seed)
    noise = noise_scale * template.uncertainties * rng.standard_normal(len(template))
    logger.info(
        "data_synthesized: channels=%d, noise_seed=%d, noise_scale=%.3g",
        len(template),
        noise_seed,
        noise_scale,
    )
    return template.with_observations(record.predictions.direct + noise)
