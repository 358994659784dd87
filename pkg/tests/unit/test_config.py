"""Tests for run configuration."""

import math
from pathlib import Path

import pytest

from equinest.config import (
    KindWeights,
    ReportConfig,
    RunConfig,
    SyntheticConfig,
    apply_overrides,
)
from equinest.diagnostics import DiagnosticSet
from equinest.exceptions import ValidationError
from equinest.files import write_json
from equinest.synthetic import DESK_PROFILE, Blob


class TestApplyOverrides:
    """Tests for dotted key=value overrides."""

    def test_values_parsed_as_yaml(self) -> None:
        """Ints, floats, lists and strings keep their types."""
        out = apply_overrides(
            {},
            [
                "seed=3",
                "priors.bias=[-0.001, 0.001]",
                "run.entropyFloor=1e-3",
                "synthetic.tol=1e-7",
                "x.y=text",
            ],
        )
        assert out["seed"] == 3
        assert out["priors"]["bias"] == [-0.001, 0.001]
        assert out["run"]["entropyFloor"] == pytest.approx(1e-3)
        assert out["synthetic"]["tol"] == 1e-7
        assert isinstance(out["synthetic"]["tol"], float)
        assert out["x"]["y"] == "text"

    def test_input_not_mutated(self) -> None:
        """Overrides work on a copy."""
        raw = {"run": {"sizeSamplePool": 20}}
        out = apply_overrides(raw, ["run.sizeSamplePool=40"])
        assert raw["run"]["sizeSamplePool"] == 20
        assert out["run"]["sizeSamplePool"] == 40

    def test_malformed(self) -> None:
        """Overrides need key=value."""
        with pytest.raises(ValidationError, match="key=value"):
            apply_overrides({}, ["seed"])

    def test_scalar_is_not_a_section(self) -> None:
        """A dotted key cannot descend into a scalar."""
        with pytest.raises(ValidationError, match="not a section"):
            apply_overrides({"seed": 1}, ["seed.x=2"])


class TestSectionTypes:
    """Tests for the small config sections."""

    def test_kind_weights(self) -> None:
        """Weights sum to one; the σ̃ scale may be infinite."""
        with pytest.raises(ValidationError, match="must equal 1"):
            KindWeights(a_tilde=0.7, b_tilde=0.7)
        weights = KindWeights(a_tilde=1.0, b_tilde=0.0, sigma_tilde_scale=math.inf)
        assert math.isinf(weights.sigma_tilde_scale)

    def test_report_config(self) -> None:
        """Resolutions have lower bounds."""
        with pytest.raises(ValidationError, match="psi_norm_points"):
            ReportConfig(psi_norm_points=1)
        with pytest.raises(ValidationError, match="q_levels"):
            ReportConfig(q_levels=0)

    def test_synthetic_errors_joined(self) -> None:
        """Every invalid synthetic setting is listed."""
        with pytest.raises(ValidationError) as excinfo:
            SyntheticConfig(preset="huge", target_current=-1.0)
        assert "preset" in str(excinfo.value)
        assert "target_current" in str(excinfo.value)

    def test_synthetic_from_mapping(self) -> None:
        """Profile entries override the default shape; blobs are parsed."""
        cfg = SyntheticConfig.from_mapping(
            {
                "profile": {"f_c": [1.0e5, 0.0, 0.0]},
                "blob": {"r": 1.1, "z": 0.0, "radius": 0.1, "amplitude": 2.0e4},
            }
        )
        assert cfg.profile.p_c == DESK_PROFILE.p_c
        assert cfg.profile.f_c == (1.0e5, 0.0, 0.0)
        assert cfg.blob == Blob(r=1.1, z=0.0, radius=0.1, amplitude=2.0e4)


class TestRunConfig:
    """Tests for RunConfig."""

    def test_defaults(self) -> None:
        """An empty document is a valid configuration."""
        config = RunConfig.from_mapping({})
        assert config.seed == 0
        assert config.posterior_samples == 1800
        assert config.run.size_sample_pool == 150
        assert config.weights == {}

    def test_errors_are_aggregated(self) -> None:
        """Problems in every section are reported together."""
        raw = {
            "colour": 1,
            "paths": {"machin": "m.json"},
            "run": {"sizeSamplePool": 3},
            "weights": {"bolometer": {}, "mse": {"a_tilde": 0.9}},
            "seed": -1,
            "posterior_samples": 1,
        }
        with pytest.raises(ValidationError) as excinfo:
            RunConfig.from_mapping(raw, source="run.yaml")
        message = str(excinfo.value)
        assert message.startswith("7 error(s) in run.yaml")
        assert "Unknown config section 'colour'" in message
        assert "Unknown key 'paths.machin'" in message
        assert "run: " in message
        assert "unknown channel kind 'bolometer'" in message
        assert "weights.mse" in message
        assert "seed must be a non-negative integer" in message
        assert "posterior_samples" in message

    def test_unknown_prior_family(self) -> None:
        """Prior families are checked by name."""
        with pytest.raises(ValidationError, match="priors.beam_currents"):
            RunConfig.from_mapping({"priors": {"beam_currents": [0, 1]}})

    def test_paths_resolved_against_base_dir(self, tmp_path: Path) -> None:
        """Relative paths are taken relative to the config file."""
        config = RunConfig.from_mapping(
            {"paths": {"machine": "m.json", "diagnostics": "/abs/d.json"}}, base_dir=tmp_path
        )
        assert config.paths.machine == tmp_path / "m.json"
        assert config.paths.diagnostics == Path("/abs/d.json")
        assert config.paths.output_dir == tmp_path / "runs/latest"

    def test_from_file_with_overrides(self, tmp_path: Path) -> None:
        """YAML documents load and overrides win."""
        path = tmp_path / "run.yaml"
        path.write_text(
            "seed: 11\n"
            "run:\n"
            "  sizeSamplePool: 30\n"
            "weights:\n"
            "  mse: {a_tilde: 1.0, b_tilde: 0.0, sigma_tilde_scale: .inf}\n"
        )
        config = RunConfig.from_file(path, ["run.sizeSamplePool=40", "seeding.enabled=false"])
        assert config.seed == 11
        assert config.run.size_sample_pool == 40
        assert not config.seeding.enabled
        assert math.isinf(config.weights["mse"].sigma_tilde_scale)

    def test_from_file_missing(self, tmp_path: Path) -> None:
        """A missing config is a validation error."""
        with pytest.raises(ValidationError, match="Config file not found"):
            RunConfig.from_file(tmp_path / "none.yaml")

    def test_from_file_not_a_mapping(self, tmp_path: Path) -> None:
        """The document must be a mapping."""
        path = tmp_path / "run.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ValidationError, match="must contain a mapping"):
            RunConfig.from_file(path)

    def test_snapshot_round_trip(self, tmp_path: Path) -> None:
        """The resolved snapshot loads back to an equal configuration."""
        config = RunConfig.from_mapping(
            {
                "paths": {"machine": "m.json", "diagnostics": "d.json"},
                "run": {"sizeSamplePool": 25, "workers": 2},
                "seeding": {"swarm_size": 12},
                "weights": {"pickup": {"a_tilde": 0.8, "b_tilde": 0.2}},
                "seed": 4,
                "synthetic": {"preset": "full", "noise_seed": 3},
            },
            base_dir=tmp_path.resolve(),
        )
        assert RunConfig.from_mapping(config.to_dict()) == config

    def test_snapshot_file_round_trip(self, tmp_path: Path) -> None:
        """A snapshot written as JSON reloads with its exponent floats intact."""
        config = RunConfig.from_mapping(
            {
                "priors": {"conductor_current": [-1.0e20, 1.0e20]},
                "weights": {"mse": {"sigma_tilde_scale": math.inf}},
                "synthetic": {"tol": 1.0e-7},
            },
            base_dir=tmp_path.resolve(),
        )
        path = write_json(tmp_path / "config.json", config.to_dict())
        assert "1e-05" in path.read_text()

        loaded = RunConfig.from_file(path)

        assert loaded == config
        assert loaded.synthetic.tol == 1.0e-7
        assert loaded.priors.conductor_current == (-1.0e20, 1.0e20)

    def test_yaml_exponent_floats(self, tmp_path: Path) -> None:
        """Unsigned and dotless exponents in YAML are floats."""
        path = tmp_path / "run.yaml"
        path.write_text("synthetic:\n  tol: 1e-7\n  target_current: 4.5e5\n")
        config = RunConfig.from_file(path)
        assert config.synthetic.tol == 1.0e-7
        assert config.synthetic.target_current == 4.5e5

    def test_apply_weights(self) -> None:
        """Configured kinds get their weights; σ̃ scales with σ."""
        data = DiagnosticSet.from_mapping(
            {
                "channels": [
                    {
                        "name": "f0",
                        "kind": "fluxloop",
                        "r": 1.0,
                        "z": 0.0,
                        "observation": 0.0,
                        "uncertainty": 0.01,
                    },
                    {"name": "rog", "kind": "rogowski", "observation": 0.0, "uncertainty": 1.0e3},
                ]
            }
        )
        config = RunConfig.from_mapping(
            {"weights": {"fluxloop": {"a_tilde": 0.9, "b_tilde": 0.1, "sigma_tilde_scale": 2.0}}}
        )
        weighted = config.apply_weights(data)
        w = weighted["f0"].effective_weights()
        assert (w.a_tilde, w.b_tilde) == (0.9, 0.1)
        assert w.sigma_tilde == pytest.approx(0.02)
        assert weighted["rog"].effective_weights().a_tilde == 0.5
