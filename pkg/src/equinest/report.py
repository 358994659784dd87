"""
Posterior summaries of an inference run.

Every statistic is a Monte Carlo estimator over the resampled posterior
draws and carries its sample count. A report depends only on the stored
draws, the machine and the diagnostics, so rebuilding it from
``samples.npz`` gives identical bytes.
"""

import json
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Self

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy.ndimage import map_coordinates
from skimage.measure import find_contours

from equinest.diagnostics import DiagnosticSet, predict_all, solve_gs
from equinest.equilibrium import (
    CurrentDensityField,
    current_discrepancy,
    eval_f,
    eval_pprime,
    eval_pressure,
)
from equinest.exceptions import DegenerateGeometryError, ValidationError
from equinest.files import atomic_write_text
from equinest.inference import ParameterSpace
from equinest.machine import Machine
from equinest.magnetostatics import MU0, BeamGrid
from equinest.sampler import EvidenceResult

__all__ = [
    "FluxMap",
    "RunReport",
    "Statistic",
    "build_report",
    "flux_map_and_lcfs",
    "q_proxy",
]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

PRESSURE_CAVEAT = (
    "Pressure is weakly constrained by magnetic data and is effectively a nuisance parameter."
)

Q_PROXY_NOTE = (
    "q_proxy is (1/2π)∮ B_φ/(R·B_pol) dl on contours of the posterior-mean flux, "
    "with B_φ from the posterior-mean f; a derived proxy, not an inferred quantity."
)

LCFS_NOTE = "The LCFS is taken to be the ψ = E[ψ_γ] contour of the posterior-mean flux."


@dataclass(frozen=True, slots=True, kw_only=True)
class Statistic:
    """Mean, sample standard deviation and central 95% interval of a scalar."""

    mean: float
    std: float
    lower: float
    upper: float
    count: int

    @classmethod
    def from_samples(cls, values: ArrayLike) -> Self:
        s = pd.Series(np.asarray(values, dtype=np.float64))
        return cls(
            mean=float(s.mean()),
            std=float(s.std(ddof=1)) if len(s) > 1 else 0.0,
            lower=float(s.quantile(0.025)),
            upper=float(s.quantile(0.975)),
            count=len(s),
        )

    @property
    def standard_error(self) -> float:
        return self.std / math.sqrt(self.count) if self.count else math.nan

    def to_dict(self) -> dict[str, float | int]:
        return {
            "mean": self.mean,
            "std": self.std,
            "lower": self.lower,
            "upper": self.upper,
            "count": self.count,
        }


@dataclass(frozen=True, slots=True, kw_only=True, eq=False)
class FluxMap:
    """
    Posterior flux on the dense grid and the boundary contour.

    ``contours`` are ``(n, 2)`` arrays of (R, Z) points at ψ = ``level``.
    """

    mean: FloatArray
    std: FloatArray
    level: float
    contours: list[FloatArray]
    closed: list[bool]
    count: int

    @property
    def is_closed(self) -> bool:
        return bool(self.contours) and all(self.closed)


def _lattice_field(
    grid: BeamGrid, values: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    r_axis, z_axis, _ = grid.lattice()
    return r_axis, z_axis, grid.to_lattice(values)


def _to_rz(contour: FloatArray, r_axis: FloatArray, z_axis: FloatArray) -> FloatArray:
    rows, cols = contour[:, 0], contour[:, 1]
    r = np.interp(cols, np.arange(len(r_axis)), r_axis)
    z = np.interp(rows, np.arange(len(z_axis)), z_axis)
    return np.column_stack([r, z])


def _contours(field_2d: FloatArray, level: float) -> list[FloatArray]:
    mask = np.isfinite(field_2d)
    filled = np.where(mask, field_2d, np.nanmin(field_2d))
    return list(find_contours(filled, level, mask=mask))


def _is_closed(contour: FloatArray) -> bool:
    return len(contour) > 2 and bool(np.allclose(contour[0], contour[-1]))


def flux_map_and_lcfs(
    psi_samples: ArrayLike, psi_gamma_samples: ArrayLike, dense: BeamGrid
) -> FluxMap:
    """
    Mean and standard deviation of ψ per dense beam, and the ψ = E[ψ_γ] contour.

    The contour is traced by marching squares over the dense lattice.

    Parameters
    ----------
    psi_samples : array_like
        ``(K, n_dense)`` ψ per posterior draw, in webers.
    psi_gamma_samples : array_like
        ``(K,)`` ψ_γ per draw.
    dense : BeamGrid
        Dense grid forming a rectangular lattice.

    Returns
    -------
    FluxMap
        Flux statistics and contour polylines.

    Raises
    ------
    ValueError
        If fewer than two draws are given.
    """
    psi = np.asarray(psi_samples, dtype=np.float64)
    psi_gamma = np.asarray(psi_gamma_samples, dtype=np.float64)
    if psi.ndim != 2 or len(psi) < 2:
        raise ValueError(f"Need at least 2 flux samples, got array of shape {psi.shape}")
    mean = psi.mean(axis=0)
    std = psi.std(axis=0, ddof=1)
    level = float(psi_gamma.mean())

    r_axis, z_axis, mean_2d = _lattice_field(dense, mean)
    raw = _contours(mean_2d, level)
    contours = [_to_rz(c, r_axis, z_axis) for c in raw]
    closed = [_is_closed(c) for c in raw]
    if not contours:
        logger.warning("lcfs_contour_missing: level=%.6g", level)
    elif not all(closed):
        logger.warning(
            "lcfs_contour_open: level=%.6g, open=%d, total=%d",
            level,
            closed.count(False),
            len(closed),
        )
    return FluxMap(
        mean=mean, std=std, level=level, contours=contours, closed=closed, count=len(psi)
    )


def q_proxy(
    psi_mean: ArrayLike,
    dense: BeamGrid,
    levels: Sequence[float],
    f_values: Sequence[float],
) -> FloatArray:
    """
    Safety-factor proxy on contours of the mean flux.

    q = (1/2π)·∮ B_φ/(R·B_pol) dl with B_φ = μ0·f/(2πR) and
    B_pol = |∇ψ|/(2πR), evaluated on the longest closed contour of each
    level. Gradients come from central differences on the lattice,
    interpolated bilinearly onto the contour.

    Returns
    -------
    ndarray
        q per level; NaN where no closed contour exists.
    """
    r_axis, z_axis, psi_2d = _lattice_field(dense, np.asarray(psi_mean, dtype=np.float64))
    finite = np.where(np.isfinite(psi_2d), psi_2d, np.nanmin(psi_2d))
    dpsi_dz, dpsi_dr = np.gradient(finite, z_axis, r_axis)
    out = np.full(len(levels), np.nan)
    for k, (level, f) in enumerate(zip(levels, f_values, strict=True)):
        closed = [c for c in _contours(psi_2d, level) if _is_closed(c)]
        if not closed:
            continue
        contour = max(closed, key=len)
        coords = contour.T
        grad_r = map_coordinates(dpsi_dr, coords, order=1, mode="nearest")
        grad_z = map_coordinates(dpsi_dz, coords, order=1, mode="nearest")
        rz = _to_rz(contour, r_axis, z_axis)
        grad = np.hypot(grad_r, grad_z)
        integrand = MU0 * f / (rz[:, 0] * np.maximum(grad, 1e-300))
        mid = 0.5 * (integrand[1:] + integrand[:-1])
        dl = np.hypot(np.diff(rz[:, 0]), np.diff(rz[:, 1]))
        out[k] = abs(float(np.sum(mid * dl))) / (2.0 * np.pi)
    return out


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


def _clean(obj: Any) -> Any:
    if isinstance(obj, float):
        return _finite_or_none(obj)
    if isinstance(obj, Mapping):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list | tuple):
        return [_clean(v) for v in obj]
    return obj


def _band(matrix: FloatArray, prefix: str) -> dict[str, FloatArray]:
    frame = pd.DataFrame(matrix)
    return {
        f"{prefix}_mean": frame.mean().to_numpy(),
        f"{prefix}_std": frame.std(ddof=1).to_numpy(),
        f"{prefix}_lower": frame.quantile(0.025).to_numpy(),
        f"{prefix}_upper": frame.quantile(0.975).to_numpy(),
    }


@dataclass(frozen=True, slots=True, kw_only=True, eq=False)
class RunReport:
    """
    Posterior summary of one run.

    Parameters
    ----------
    evidence : EvidenceResult
        Evidence statistics.
    scalars : dict[str, Statistic]
        ``sigma_star_sq`` (kA²), ``psi_gamma`` (Wb), ``total_current`` (A) and
        ``delta_i_total`` (A).
    j_mean, j_gs_mean, delta_j_mean : ndarray
        Expectations of J per inference beam, J_GS per dense beam and ΔJ per
        inference beam, in A/m².
    flux : FluxMap
        Flux statistics and boundary contour.
    profiles : pandas.DataFrame
        p, f and p′ bands against normalized flux.
    q : pandas.DataFrame
        q-proxy per normalized-flux level.
    channels : pandas.DataFrame
        Posterior-predictive table per channel.
    weights_summary : dict[str, float]
        Distribution of the posterior weights P_i.
    counts : dict[str, int]
        Sample, evaluation and iteration counts.
    """

    evidence: EvidenceResult
    scalars: dict[str, Statistic]
    j_mean: FloatArray
    j_gs_mean: FloatArray
    delta_j_mean: FloatArray
    flux: FluxMap
    profiles: pd.DataFrame
    q: pd.DataFrame
    channels: pd.DataFrame
    weights_summary: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return _clean(
            {
                "evidence": self.evidence.to_dict(),
                "scalars": {k: s.to_dict() for k, s in sorted(self.scalars.items())},
                "maps": {
                    "j_mean": self.j_mean.tolist(),
                    "j_gs_mean": self.j_gs_mean.tolist(),
                    "delta_j_mean": self.delta_j_mean.tolist(),
                    "psi_mean": self.flux.mean.tolist(),
                    "psi_std": self.flux.std.tolist(),
                },
                "lcfs": {
                    "level": self.flux.level,
                    "closed": self.flux.closed,
                    "contours": [c.tolist() for c in self.flux.contours],
                    "note": LCFS_NOTE,
                },
                "profiles": self.profiles.to_dict(orient="list"),
                "q_proxy": {**self.q.to_dict(orient="list"), "note": Q_PROXY_NOTE},
                "pressure_note": PRESSURE_CAVEAT,
                "channels": self.channels.reset_index().to_dict(orient="list"),
                "weights": self.weights_summary,
                "counts": dict(sorted(self.counts.items())),
            }
        )

    def to_file(self, path: str | Path) -> Path:
        """Write ``report.json``; same report, same bytes."""
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)
        target = atomic_write_text(path, text + "\n")
        logger.info("report_written: path=%s", target)
        return target

    def export_csv(self, out_dir: str | Path, machine: Machine) -> list[Path]:
        """
        Write map, profile, contour and channel tables as CSV files.

        Maps are ``(Z rows, R columns)`` lattices indexed by the beam-center
        coordinates.
        """
        out = Path(out_dir)
        written: list[Path] = []

        def put(name: str, frame: pd.DataFrame, *, index: bool = True) -> None:
            written.append(atomic_write_text(out / name, frame.to_csv(index=index)))

        for name, values, grid in (
            ("j_map.csv", self.j_mean, machine.plasma),
            ("j_gs_map.csv", self.j_gs_mean, machine.dense),
            ("delta_j_map.csv", self.delta_j_mean, machine.plasma),
            ("psi_mean_map.csv", self.flux.mean, machine.dense),
            ("psi_std_map.csv", self.flux.std, machine.dense),
        ):
            r_axis, z_axis, lattice = _lattice_field(grid, values)
            put(
                name,
                pd.DataFrame(
                    lattice,
                    index=pd.Index(z_axis, name="z"),
                    columns=pd.Index(r_axis, name="r"),
                ),
            )
        put("profiles.csv", self.profiles, index=False)
        put("q_proxy.csv", self.q, index=False)
        put("channels.csv", self.channels)
        lcfs = pd.DataFrame(
            [
                (k, float(r), float(z))
                for k, contour in enumerate(self.flux.contours)
                for r, z in contour
            ],
            columns=["contour", "r", "z"],
        )
        put("lcfs.csv", lcfs, index=False)
        logger.info("report_exported: dir=%s, files=%d", out, len(written))
        return written


def build_report(
    machine: Machine,
    data: DiagnosticSet,
    space: ParameterSpace,
    samples: ArrayLike,
    evidence: EvidenceResult,
    *,
    weights: ArrayLike | None = None,
    psi_norm_points: int = 51,
    q_levels: int = 10,
    counts: Mapping[str, int] | None = None,
) -> RunReport:
    """
    Summarize resampled posterior draws.

    Parameters
    ----------
    machine : Machine
        Machine the run used.
    data : DiagnosticSet
        Diagnostics the run used, with their weights.
    space : ParameterSpace
        Maps the stored box vectors to states.
    samples : array_like
        ``(K, d)`` resampled box vectors, K >= 2.
    evidence : EvidenceResult
        Evidence statistics of the run.
    weights : array_like | None, optional
        Posterior weights P_i of the quadrature points.
    psi_norm_points : int, optional
        Nodes of the profile curves. Default 51.
    q_levels : int, optional
        Flux surfaces of the q-proxy. Default 10.
    counts : Mapping[str, int] | None, optional
        Extra counts recorded in the report.

    Returns
    -------
    RunReport
        The summary.

    Raises
    ------
    ValidationError
        If fewer than two draws are given or a draw has the wrong dimension.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2 or x.shape[1] != space.dim:
        raise ValidationError(
            f"Need at least 2 samples of dimension {space.dim}, got array of shape {x.shape}"
        )
    unique, inverse = np.unique(x, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    logger.info("report_started: samples=%d, distinct=%d", len(x), len(unique))

    psi_norm = np.linspace(0.0, 1.0, psi_norm_points)
    a_tilde, b_tilde, _ = data.weight_arrays()
    obs, sigma = data.observations, data.uncertainties

    rows: dict[str, list[Any]] = {
        k: []
        for k in (
            "j",
            "j_gs",
            "dj",
            "psi",
            "psi_gamma",
            "sigma_star_sq",
            "total",
            "delta_total",
            "p",
            "f",
            "pprime",
            "direct",
            "gs",
            "state",
        )
    }
    for u in unique:
        state = space.state_from_vector(u, machine.f_boundary)
        gs = solve_gs(state, machine)
        try:
            pred = predict_all(state, machine, gs=gs)
        except DegenerateGeometryError:
            pred = None
        j = CurrentDensityField.from_currents(state.beam_currents, machine.plasma)
        delta_i, dj = current_discrepancy(j, gs.j_gs, machine.plasma, machine.parent_index)
        axis = float(gs.psi_dense.max())
        psi_nodes = axis + psi_norm * (state.psi_gamma - axis)
        rows["j"].append(j.values)
        rows["j_gs"].append(gs.j_gs.values)
        rows["dj"].append(dj.values)
        rows["psi"].append(gs.psi_dense)
        rows["psi_gamma"].append(state.psi_gamma)
        rows["sigma_star_sq"].append(state.sigma_star_sq)
        rows["total"].append(float(state.beam_currents.sum()))
        rows["delta_total"].append(float(delta_i.sum()))
        rows["p"].append(eval_pressure(state.profile, state.psi_gamma, psi_nodes))
        rows["f"].append(eval_f(state.profile, state.psi_gamma, psi_nodes))
        rows["pprime"].append(eval_pprime(state.profile, psi_nodes))
        nan = np.full(len(data), np.nan)
        rows["direct"].append(nan if pred is None else pred.direct)
        rows["gs"].append(nan if pred is None else pred.gs)
        rows["state"].append(state)

    def stack(key: str) -> FloatArray:
        return np.asarray(rows[key], dtype=np.float64)[inverse]

    psi = stack("psi")
    psi_gamma = stack("psi_gamma")
    flux = flux_map_and_lcfs(psi, psi_gamma, machine.dense)

    profiles = pd.DataFrame(
        {
            "psi_norm": psi_norm,
            **_band(stack("p"), "p"),
            **_band(stack("f"), "f"),
            **_band(stack("pprime"), "pprime"),
        }
    )

    # Flux levels of the q-proxy sit on the posterior-mean flux.
    q_norm = np.linspace(0.0, 1.0, q_levels + 2)[1:-1]
    axis_mean = float(flux.mean.max())
    q_psi = axis_mean + q_norm * (flux.level - axis_mean)
    f_distinct = np.array(
        [eval_f(s.profile, s.psi_gamma, q_psi) for s in rows["state"]], dtype=np.float64
    )
    f_at = f_distinct[inverse].mean(axis=0)
    q = pd.DataFrame(
        {
            "psi_norm": q_norm,
            "psi": q_psi,
            "q_proxy": q_proxy(flux.mean, machine.dense, q_psi, f_at),
        }
    )

    direct, gs_pred = stack("direct"), stack("gs")
    with np.errstate(invalid="ignore"):
        mean_direct = np.nanmean(direct, axis=0)
        mean_gs = np.nanmean(gs_pred, axis=0)
    weighted = a_tilde * mean_direct + b_tilde * mean_gs
    channels = pd.DataFrame(
        {
            "kind": [c.kind for c in data],
            "observation": obs,
            "uncertainty": sigma,
            "direct_mean": mean_direct,
            "gs_mean": mean_gs,
            "normalized_residual": (obs - weighted) / sigma,
        },
        index=pd.Index(data.list_names(), name="channel"),
    )

    weights_summary: dict[str, float] = {}
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        weights_summary = {
            "count": float(len(w)),
            "nonzero": float(np.count_nonzero(w)),
            "max": float(w.max()),
            "effective_sample_size": float(1.0 / np.sum(w**2)),
        }

    report = RunReport(
        evidence=evidence,
        scalars={
            "sigma_star_sq": Statistic.from_samples(stack("sigma_star_sq")),
            "psi_gamma": Statistic.from_samples(psi_gamma),
            "total_current": Statistic.from_samples(stack("total")),
            "delta_i_total": Statistic.from_samples(stack("delta_total")),
        },
        j_mean=stack("j").mean(axis=0),
        j_gs_mean=stack("j_gs").mean(axis=0),
        delta_j_mean=stack("dj").mean(axis=0),
        flux=flux,
        profiles=profiles,
        q=q,
        channels=channels,
        weights_summary=weights_summary,
        counts={"samples": len(x), "distinct_samples": len(unique), **(counts or {})},
    )
    logger.info(
        "report_finished: sigma_star_sq=%.6g, lcfs_closed=%s",
        report.scalars["sigma_star_sq"].mean,
        flux.is_closed,
    )
    return report
