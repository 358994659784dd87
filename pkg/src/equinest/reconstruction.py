"""Client orchestrating synthetic data generation, inference and reporting."""

import io
import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Self

import numpy as np

from equinest.cache import OperatorCache
from equinest.config import RunConfig
from equinest.diagnostics import DiagnosticSet
from equinest.exceptions import ArtifactError, ValidationError
from equinest.files import atomic_write_bytes, write_json
from equinest.inference import EquilibriumPosterior, ParameterSpace
from equinest.machine import Machine, MachineGeometry
from equinest.report import RunReport, build_report
from equinest.sampler import EvidenceResult, NestedRun, run_nested
from equinest.synthetic import (
    SyntheticMachineSpec,
    TruthRecord,
    build_synthetic_machine,
    generate_gs_truth,
    perturb_truth,
    synthesize_data,
)

__all__ = ["InferenceOutcome", "Reconstruction", "RunFiles"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class RunFiles:
    """Artifact locations inside a run directory."""

    root: Path

    @property
    def config(self) -> Path:
        return self.root / "config.json"

    @property
    def samples(self) -> Path:
        return self.root / "samples.npz"

    @property
    def evidence(self) -> Path:
        return self.root / "evidence.json"

    @property
    def report(self) -> Path:
        return self.root / "report.json"

    @property
    def run_info(self) -> Path:
        return self.root / "run_info.json"

    @property
    def trace(self) -> Path:
        return self.root / "trace.csv"

    @property
    def checkpoint(self) -> Path:
        return self.root / "checkpoint.npz"


@dataclass(frozen=True, slots=True, kw_only=True, eq=False)
class InferenceOutcome:
    """Result of ``Reconstruction.infer``."""

    run: NestedRun
    report: RunReport
    files: RunFiles
    wall_time: float


def _load_json(path: Path, what: str) -> Any:
    if not path.exists():
        raise ArtifactError(f"Missing {what}: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactError(f"Unreadable {what} {path}: {e}") from e


class Reconstruction:
    """
    Equilibrium reconstruction client.

    Loads the machine and diagnostics named by a run configuration, builds
    (or fetches from the operator cache) the response operators and runs the
    pipeline steps.

    Parameters
    ----------
    config : RunConfig
        Run configuration.
    cache_path : str | Path | None, optional
        Operator-cache database. If None, uses the default location.
    cache_enabled : bool, optional
        Whether the operator cache is used. Default is True.

    Examples
    --------
    >>> with Reconstruction(RunConfig.from_file("run.yaml")) as rec:
    ...     outcome = rec.infer()
    >>> outcome.report.scalars["sigma_star_sq"].mean
    """

    def __init__(
        self,
        config: RunConfig,
        *,
        cache_path: str | Path | None = None,
        cache_enabled: bool = True,
    ) -> None:
        self.config = config
        self._cache = OperatorCache(path=cache_path, enabled=cache_enabled)
        logger.info(
            "reconstruction_initialized: seed=%d, workers=%d, cache_enabled=%s",
            config.seed,
            config.run.workers,
            cache_enabled,
        )

    @property
    def cache(self) -> OperatorCache:
        return self._cache

    def load(self) -> tuple[Machine, DiagnosticSet]:
        """
        Machine and weighted diagnostics named by the configuration.

        Raises
        ------
        ValidationError
            If a path is missing from the configuration or a document is invalid.
        """
        paths = self.config.paths
        if paths.machine is None or paths.diagnostics is None:
            raise ValidationError("Config needs paths.machine and paths.diagnostics")
        geometry = MachineGeometry.from_file(paths.machine)
        data = self.config.apply_weights(DiagnosticSet.from_file(paths.diagnostics))
        machine = Machine.build(geometry, data.layout(), cache=self._cache)
        return machine, data

    def synthesize(self) -> dict[str, Path]:
        """
        Generate a synthetic machine, ground truth and noisy diagnostics.

        Files go to ``paths.machine``, ``paths.diagnostics`` and
        ``paths.truth`` when set, else into ``paths.output_dir``.

        Returns
        -------
        dict[str, Path]
            Written files keyed ``machine``, ``diagnostics`` and ``truth``.

        Raises
        ------
        ConvergenceError
            If the ground-truth iteration does not converge.
        """
        cfg = self.config.synthetic
        paths = self.config.paths
        out = paths.output_dir
        spec = SyntheticMachineSpec.preset(cfg.preset)
        geometry, template = build_synthetic_machine(spec)
        machine = Machine.build(geometry, template.layout(), cache=self._cache)

        truth = generate_gs_truth(
            machine,
            cfg.profile,
            cfg.target_current,
            tol=cfg.tol,
            max_iterations=cfg.max_iterations,
            boundary_fraction=cfg.boundary_fraction,
            conductor_currents=spec.conductor_currents,
            sigma_star_sq=cfg.sigma_star_sq,
        )
        if cfg.blob is not None:
            truth = perturb_truth(truth, machine, cfg.blob)
        data = synthesize_data(truth, template, cfg.noise_seed, noise_scale=cfg.noise_scale)
        truth = replace(truth, noise_seed=cfg.noise_seed)

        files = {
            "machine": geometry.to_file(paths.machine or out / "machine.json"),
            "diagnostics": data.to_file(paths.diagnostics or out / "diagnostics.json"),
            "truth": truth.to_file(paths.truth or out / "truth.json"),
        }
        logger.info(
            "synthesis_finished: preset=%s, channels=%d, perturbed=%s",
            cfg.preset,
            len(data),
            cfg.blob is not None,
        )
        return files

    def infer(self, *, resume: bool = False) -> InferenceOutcome:
        """
        Run nested sampling on the configured data and write the run directory.

        Parameters
        ----------
        resume : bool, optional
            Continue from ``checkpoint.npz`` in the output directory.

        Returns
        -------
        InferenceOutcome
            Nested-sampling result, report and artifact locations.

        Raises
        ------
        ConstraintExhaustedError
            If constrained sampling gives up; carries the checkpoint path.
        """
        files = RunFiles(self.config.paths.output_dir)
        files.root.mkdir(parents=True, exist_ok=True)
        write_json(files.config, self.config.to_dict())

        machine, data = self.load()
        space = ParameterSpace.for_machine(machine, self.config.priors, data.bias_groups)
        checkpoint = files.checkpoint if self.config.run.checkpoint_every > 0 or resume else None

        started = time.perf_counter()
        with EquilibriumPosterior(data, machine, space, trace_path=files.trace) as posterior:
            logger.info(
                "inference_started: dim=%d, channels=%d, output_dir=%s",
                space.dim,
                len(data),
                files.root,
            )
            run = run_nested(
                posterior,
                self.config.run,
                self.config.seed,
                count=self.config.posterior_samples,
                budget=self.config.seeding,
                checkpoint=checkpoint,
                resume=resume,
            )
            degenerate = posterior.mse_degenerate_count
        wall_time = time.perf_counter() - started

        self._write_samples(files, run, space)
        write_json(files.evidence, run.evidence.to_dict())
        report = self._report(machine, data, space, files)
        write_json(
            files.run_info,
            {
                "wall_time_seconds": wall_time,
                "n_evaluations": run.n_evaluations,
                "iterations": run.iterations,
                "total_iterations": run.total_iterations,
                "n_maxima": run.n_maxima,
                "used_mcmc": run.used_mcmc,
                "discarded_chains": run.discarded_chains,
                "mse_degenerate_count": degenerate,
                "final_acceptance": run.acceptance_history[-1] if run.acceptance_history else None,
                "workers": self.config.run.workers,
                "seed": self.config.seed,
            },
        )
        logger.info(
            "inference_finished: log_z=%.6g, sigma_star_sq=%.6g, wall_time=%.1f",
            run.evidence.log_evidence_mean,
            report.scalars["sigma_star_sq"].mean,
            wall_time,
        )
        return InferenceOutcome(run=run, report=report, files=files, wall_time=wall_time)

    def report(self, run_dir: str | Path | None = None) -> RunReport:
        """
        Rebuild the report and CSV exports from a run directory.

        Nothing is resampled; the stored draws are summarized again.

        Raises
        ------
        ArtifactError
            If ``samples.npz`` or ``evidence.json`` is missing or unreadable.
        """
        files = RunFiles(Path(run_dir) if run_dir is not None else self.config.paths.output_dir)
        machine, data = self.load()
        space = ParameterSpace.for_machine(machine, self.config.priors, data.bias_groups)
        return self._report(machine, data, space, files)

    def _write_samples(self, files: RunFiles, run: NestedRun, space: ParameterSpace) -> None:
        buffer = io.BytesIO()
        np.savez(
            buffer,
            samples=run.posterior.samples,
            indices=run.posterior.indices,
            points=run.posterior.points,
            log_likelihoods=run.posterior.log_likelihoods,
            weights=run.posterior.weights,
            names=np.array(space.names),
        )
        atomic_write_bytes(files.samples, buffer.getvalue())
        logger.info("samples_written: path=%s, count=%d", files.samples, len(run.posterior.indices))

    def _report(
        self, machine: Machine, data: DiagnosticSet, space: ParameterSpace, files: RunFiles
    ) -> RunReport:
        if not files.samples.exists():
            raise ArtifactError(f"Missing samples: {files.samples}")
        try:
            with np.load(files.samples, allow_pickle=False) as stored:
                samples = stored["samples"]
                weights = stored["weights"]
                names = [str(n) for n in stored["names"]]
        except (OSError, ValueError, KeyError) as e:
            raise ArtifactError(f"Unreadable samples {files.samples}: {e}") from e
        if names != space.names:
            raise ArtifactError(
                f"Samples in {files.samples} were drawn in another parameter space"
            )
        raw = _load_json(files.evidence, "evidence")
        evidence = EvidenceResult(
            log_evidence_mean=float(raw["log_evidence_mean"]),
            log_evidence_2sigma=float(raw["log_evidence_2sigma"]),
            entropy=float(raw["entropy"]),
            log_evidences=tuple(float(v) for v in raw["log_evidences"]),
            quadrature_size=int(raw["quadrature_size"]),
        )
        report = build_report(
            machine,
            data,
            space,
            samples,
            evidence,
            weights=weights,
            psi_norm_points=self.config.report.psi_norm_points,
            q_levels=self.config.report.q_levels,
        )
        report.to_file(files.report)
        report.export_csv(files.root, machine)
        return report

    def truth(self) -> TruthRecord:
        """Ground truth named by ``paths.truth``."""
        if self.config.paths.truth is None:
            raise ValidationError("Config has no paths.truth")
        return TruthRecord.from_file(self.config.paths.truth)

    def clear_cache(self) -> None:
        """Remove every cached operator bundle."""
        self._cache.clear()
        logger.info("cache_cleared: all")

    def list_cached(self) -> list[dict[str, str]]:
        """
        List cached operator bundles.

        Returns
        -------
        list[dict[str, str]]
            Dicts with keys ``key``, ``label`` and ``created_at``.
        """
        return self._cache.list_cached_entries()

    def close(self) -> None:
        """Close the operator cache."""
        self._cache.close()
        logger.debug("reconstruction_closed")

    def __enter__(self) -> Self:
        return self

    def __exit__(self, *args: object) -> None:
        self.close()
