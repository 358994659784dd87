"""
Run configuration.

A configuration is a YAML or JSON document with the sections ``paths``,
``run``, ``seeding``, ``priors``, ``weights``, ``seed``,
``posterior_samples``, ``report`` and ``synthetic``. Every section is
optional. Problems across all sections are collected and raised as one
``ValidationError``.

Example
-------
.. code-block:: yaml

    paths:
      machine: machine.json
      diagnostics: diagnostics.json
      output_dir: runs/consistent
    run:
      sizeSamplePool: 150
      numEvidenceSamples: 36
    seed: 11
    weights:
      mse: {a_tilde: 0.5, b_tilde: 0.5, sigma_tilde_scale: 1.0}
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Self

import yaml

from equinest.diagnostics import DiagnosticSet, registered_kinds
from equinest.equilibrium import ProfileCoeffs
from equinest.exceptions import ConfigError, ValidationError
from equinest.files import load_yaml, read_document
from equinest.inference import PriorBounds
from equinest.sampler import RunParams, SeedBudget
from equinest.synthetic import DESK_PROFILE, Blob

__all__ = [
    "KindWeights",
    "PathsConfig",
    "ReportConfig",
    "RunConfig",
    "SyntheticConfig",
    "apply_overrides",
]

logger = logging.getLogger(__name__)

_PRESETS = ("desk", "full")

_SECTIONS = (
    "paths",
    "run",
    "seeding",
    "priors",
    "weights",
    "seed",
    "posterior_samples",
    "report",
    "synthetic",
)


@dataclass(frozen=True, slots=True, kw_only=True)
class PathsConfig:
    """Input and output locations, resolved against the config file directory."""

    machine: Path | None = None
    diagnostics: Path | None = None
    output_dir: Path = Path("runs/latest")
    truth: Path | None = None

    def to_dict(self) -> dict[str, str | None]:
        """Absolute paths, so a snapshot stays valid wherever it is stored."""
        out: dict[str, str | None] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = None if value is None else str(Path(value).resolve())
        return out


@dataclass(frozen=True, slots=True, kw_only=True)
class KindWeights:
    """Weak-observation weights applied to every channel of one kind."""

    a_tilde: float = 0.5
    b_tilde: float = 0.5
    sigma_tilde_scale: float = 1.0

    def __post_init__(self) -> None:
        if not math.isclose(self.a_tilde + self.b_tilde, 1.0, abs_tol=1e-12):
            raise ValidationError(
                f"a_tilde + b_tilde must equal 1, got {self.a_tilde} + {self.b_tilde}"
            )
        if not self.sigma_tilde_scale > 0:
            raise ValidationError(f"sigma_tilde_scale must be > 0, got {self.sigma_tilde_scale}")

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True, slots=True, kw_only=True)
class ReportConfig:
    """
    Report resolution.

    Parameters
    ----------
    psi_norm_points : int
        Number of normalized-flux nodes of the profile curves.
    q_levels : int
        Number of flux surfaces the q-proxy is evaluated on.
    """

    psi_norm_points: int = 51
    q_levels: int = 10

    def __post_init__(self) -> None:
        if self.psi_norm_points < 2:
            raise ValidationError(f"psi_norm_points must be >= 2, got {self.psi_norm_points}")
        if self.q_levels < 1:
            raise ValidationError(f"q_levels must be >= 1, got {self.q_levels}")

    def to_dict(self) -> dict[str, int]:
        return asdict(self)


@dataclass(frozen=True, slots=True, kw_only=True)
class SyntheticConfig:
    """Settings of ``equinest synth``."""

    preset: str = "desk"
    profile: ProfileCoeffs = DESK_PROFILE
    target_current: float = 4.5e5
    noise_seed: int = 7
    noise_scale: float = 1.0
    blob: Blob | None = None
    tol: float = 1.0e-6
    max_iterations: int = 200
    boundary_fraction: float = 0.99
    sigma_star_sq: float = 1.0e-3

    def __post_init__(self) -> None:
        errors = []
        if self.preset not in _PRESETS:
            errors.append(f"preset must be one of {list(_PRESETS)}, got '{self.preset}'")
        if not self.target_current > 0:
            errors.append(f"target_current must be > 0, got {self.target_current}")
        if self.noise_scale < 0:
            errors.append(f"noise_scale must be >= 0, got {self.noise_scale}")
        if not self.tol > 0:
            errors.append(f"tol must be > 0, got {self.tol}")
        if self.max_iterations < 1:
            errors.append(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not 0 < self.boundary_fraction < 1:
            errors.append(f"boundary_fraction must lie in (0, 1), got {self.boundary_fraction}")
        if errors:
            raise ValidationError("; ".join(errors))

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> Self:
        values = dict(raw)
        if "profile" in values:
            values["profile"] = ProfileCoeffs.from_dict(
                {
                    "p_c": DESK_PROFILE.p_c,
                    "f_c": DESK_PROFILE.f_c,
                    "f_boundary": DESK_PROFILE.f_boundary,
                    **values["profile"],
                }
            )
        if values.get("blob") is not None:
            values["blob"] = Blob.from_dict(values["blob"])
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {f.name: getattr(self, f.name) for f in fields(self)}
        out["profile"] = self.profile.to_dict()
        out["blob"] = None if self.blob is None else self.blob.to_dict()
        return out


def _set_dotted(raw: dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        if not isinstance(child, dict):
            raise ValidationError(f"Cannot set '{dotted}': '{key}' is not a section")
        node = child
    node[keys[-1]] = value


def apply_overrides(raw: Mapping[str, Any], overrides: Sequence[str]) -> dict[str, Any]:
    """
    Apply ``dotted.key=value`` overrides to a raw config mapping.

    Values are parsed with YAML scalar rules, so ``3`` is an int, ``1e-3`` a
    float and ``[1, 2]`` a list.

    Raises
    ------
    ValidationError
        If an override is not of the form ``key=value``.
    """
    out = _deep_copy(raw)
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep or not key.strip():
            raise ValidationError(f"Override must look like key=value, got '{item}'")
        try:
            value = load_yaml(text)
        except yaml.YAMLError as e:
            raise ValidationError(f"Unparsable override value in '{item}': {e}") from e
        _set_dotted(out, key.strip(), value)
        logger.debug("config_override: key=%s, value=%r", key.strip(), value)
    return out


def _deep_copy(raw: Mapping[str, Any]) -> dict[str, Any]:
    return {k: _deep_copy(v) if isinstance(v, Mapping) else v for k, v in raw.items()}


def _resolve(base_dir: Path | None, value: Any) -> Path | None:
    if value is None:
        return None
    path = Path(value)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return path


@dataclass(frozen=True, slots=True, kw_only=True)
class RunConfig:
    """
    Complete configuration of one inference run.

    Parameters
    ----------
    paths : PathsConfig
        Input documents and output directory.
    run : RunParams
        Nested-sampling parameters.
    seeding : SeedBudget
        Optimal-seeding effort.
    priors : PriorBounds
        Uniform prior bounds per parameter family.
    weights : dict[str, KindWeights]
        Weak-observation weights per channel kind; kinds not listed keep
        the weights of the diagnostic document.
    seed : int
        Root seed of every random stream.
    posterior_samples : int
        Number of simulated posterior draws. Default 1800.
    report : ReportConfig
        Report resolution.
    synthetic : SyntheticConfig
        Settings of the synthetic bench.
    """

    paths: PathsConfig = field(default_factory=PathsConfig)
    run: RunParams = field(default_factory=RunParams)
    seeding: SeedBudget = field(default_factory=SeedBudget)
    priors: PriorBounds = field(default_factory=PriorBounds)
    weights: dict[str, KindWeights] = field(default_factory=dict)
    seed: int = 0
    posterior_samples: int = 1800
    report: ReportConfig = field(default_factory=ReportConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    @classmethod
    def from_file(cls, path: str | Path, overrides: Sequence[str] = ()) -> Self:
        """
        Load a configuration document.

        Relative paths in the ``paths`` section are resolved against the
        directory of ``path``.

        Raises
        ------
        ValidationError
            If the file is missing or malformed, or any value is invalid.
        """
        raw = read_document(path, what="config")
        if raw is None:
            raw = {}
        if not isinstance(raw, Mapping):
            raise ValidationError(f"Config file {path} must contain a mapping")
        config = cls.from_mapping(
            apply_overrides(raw, overrides), base_dir=Path(path).parent, source=path
        )
        logger.info("config_loaded: path=%s, seed=%d", path, config.seed)
        return config

    @classmethod
    def from_mapping(
        cls,
        raw: Mapping[str, Any],
        *,
        base_dir: Path | None = None,
        source: str | Path = "<mapping>",
    ) -> Self:
        """
        Build and validate a configuration from a mapping.

        Raises
        ------
        ValidationError
            Listing every unknown key and invalid value.
        """
        errors: list[str] = []
        unknown = sorted(set(raw) - set(_SECTIONS))
        errors.extend(f"Unknown config section '{key}'" for key in unknown)

        def section(name: str) -> Mapping[str, Any]:
            value = raw.get(name) or {}
            if not isinstance(value, Mapping):
                errors.append(f"Section '{name}' must be a mapping")
                return {}
            return value

        def build(name: str, factory: Any, value: Any) -> Any:
            try:
                return factory(value)
            except (ConfigError, TypeError, ValueError, KeyError) as e:
                errors.append(f"{name}: {e}")
                return None

        paths_raw = section("paths")
        path_keys = {f.name for f in fields(PathsConfig)}
        errors.extend(f"Unknown key 'paths.{k}'" for k in sorted(set(paths_raw) - path_keys))
        paths = PathsConfig(
            machine=_resolve(base_dir, paths_raw.get("machine")),
            diagnostics=_resolve(base_dir, paths_raw.get("diagnostics")),
            output_dir=_resolve(base_dir, paths_raw.get("output_dir", "runs/latest"))
            or Path("runs/latest"),
            truth=_resolve(base_dir, paths_raw.get("truth")),
        )

        run = build("run", RunParams.from_mapping, section("run"))
        seeding = build("seeding", lambda v: SeedBudget(**v), section("seeding"))
        priors_raw = section("priors")
        prior_keys = {f.name for f in fields(PriorBounds)}
        errors.extend(f"Unknown key 'priors.{k}'" for k in sorted(set(priors_raw) - prior_keys))
        priors = build("priors", PriorBounds.from_mapping, priors_raw)
        report = build("report", lambda v: ReportConfig(**v), section("report"))
        synthetic = build("synthetic", SyntheticConfig.from_mapping, section("synthetic"))

        weights: dict[str, KindWeights] = {}
        kinds = set(registered_kinds())
        for kind, value in section("weights").items():
            if kind not in kinds:
                errors.append(f"weights: unknown channel kind '{kind}'")
                continue
            built = build(f"weights.{kind}", lambda v: KindWeights(**v), value or {})
            if built is not None:
                weights[kind] = built

        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            errors.append(f"seed must be a non-negative integer, got {seed!r}")
        posterior_samples = raw.get("posterior_samples", 1800)
        if not isinstance(posterior_samples, int) or posterior_samples < 2:
            errors.append(f"posterior_samples must be an integer >= 2, got {posterior_samples!r}")

        if errors:
            error_list = "\n  ".join(errors)
            raise ValidationError(f"{len(errors)} error(s) in {source}:\n  {error_list}")

        return cls(
            paths=paths,
            run=run,
            seeding=seeding,
            priors=priors,
            weights=weights,
            seed=seed,
            posterior_samples=posterior_samples,
            report=report,
            synthetic=synthetic,
        )

    def apply_weights(self, data: DiagnosticSet) -> DiagnosticSet:
        """Diagnostic set with the configured per-kind weights applied."""
        for kind, w in sorted(self.weights.items()):
            data = data.with_weights(
                kind,
                a_tilde=w.a_tilde,
                b_tilde=w.b_tilde,
                sigma_tilde_scale=w.sigma_tilde_scale,
            )
        return data

    def to_dict(self) -> dict[str, Any]:
        """Resolved snapshot; loading it back gives an equal configuration."""
        return {
            "paths": self.paths.to_dict(),
            "run": self.run.to_dict(),
            "seeding": asdict(self.seeding),
            "priors": self.priors.to_dict(),
            "weights": {k: w.to_dict() for k, w in sorted(self.weights.items())},
            "seed": self.seed,
            "posterior_samples": self.posterior_samples,
            "report": self.report.to_dict(),
            "synthetic": self.synthetic.to_dict(),
        }
