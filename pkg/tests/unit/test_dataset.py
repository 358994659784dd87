"""Tests for diagnostic documents."""

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from equinest.diagnostics import Channel, DiagnosticSet
from equinest.exceptions import DuplicateChannelError, UnknownChannelKindError, ValidationError


@pytest.fixture
def document() -> dict:
    return {
        "toroidal_field_current": 2.5e6,
        "bias_groups": ["pickup"],
        "channels": [
            {
                "name": "pickup_t_00",
                "kind": "pickup",
                "r": 0.5,
                "z": -0.6,
                "theta": 0.0,
                "observation": 1.0e-3,
                "uncertainty": 2.0e-3,
                "bias_index": 0,
            },
            {
                "name": "fluxloop_00",
                "kind": "fluxloop",
                "r": 0.45,
                "z": 0.0,
                "observation": 0.01,
                "uncertainty": 2.0e-3,
                "weights": {"a_tilde": 0.8, "b_tilde": 0.2, "sigma_tilde": 0.01},
            },
            {
                "name": "mse_00",
                "kind": "mse",
                "r": 1.0,
                "z": 0.0,
                "mse_geometry": [1, 0, 0, 0, 0, 1],
                "observation": 0.05,
                "uncertainty": 2.0e-3,
            },
            {"name": "rogowski", "kind": "rogowski", "observation": 4.5e5, "uncertainty": 1.0e3},
        ],
    }


@pytest.fixture
def data(document: dict) -> DiagnosticSet:
    return DiagnosticSet.from_mapping(document)


class TestDiagnosticSetLoading:
    """Tests for DiagnosticSet.from_mapping and from_file."""

    def test_from_mapping(self, data: DiagnosticSet) -> None:
        """Channels, bias groups and the toroidal-field current are parsed."""
        assert len(data) == 4
        assert data.list_names() == ["pickup_t_00", "fluxloop_00", "mse_00", "rogowski"]
        assert data.bias_groups == ("pickup",)
        assert data.toroidal_field_current == 2.5e6
        assert data["mse_00"].mse_geometry == (1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
        assert data["rogowski"].position is None

    def test_missing_channels_list(self) -> None:
        """The document needs a channels list."""
        with pytest.raises(ValidationError, match="'channels' list"):
            DiagnosticSet.from_mapping({"bias_groups": []})

    def test_errors_are_aggregated(self, document: dict) -> None:
        """Every invalid channel is reported in one error."""
        del document["channels"][0]["theta"]
        document["channels"][1]["uncertainty"] = -1.0
        document["channels"][3]["r"] = 1.0
        document["channels"][3]["z"] = 0.0
        with pytest.raises(ValidationError) as excinfo:
            DiagnosticSet.from_mapping(document, source="diag.yaml")
        message = str(excinfo.value)
        assert message.startswith("3 error(s) in diag.yaml")
        assert "requires 'theta'" in message
        assert "uncertainty must be finite and > 0" in message
        assert "rogowski does not use position" in message

    def test_missing_required_field(self, document: dict) -> None:
        """observation and uncertainty are required."""
        del document["channels"][2]["observation"]
        with pytest.raises(ValidationError, match="Missing required field 'observation'"):
            DiagnosticSet.from_mapping(document)

    def test_unknown_key_rejected(self, document: dict) -> None:
        """Typos in channel keys are caught."""
        document["channels"][1]["uncertanty"] = 1.0
        with pytest.raises(ValidationError, match="unknown key"):
            DiagnosticSet.from_mapping(document)

    def test_half_position_rejected(self, document: dict) -> None:
        """r without z is an error."""
        del document["channels"][1]["z"]
        with pytest.raises(ValidationError, match="both 'r' and 'z'"):
            DiagnosticSet.from_mapping(document)

    def test_mse_bias_forbidden(self, document: dict) -> None:
        """MSE channels carry no additive bias."""
        document["channels"][2]["bias_index"] = 0
        with pytest.raises(ValidationError, match="bias_index"):
            DiagnosticSet.from_mapping(document)

    def test_duplicate_names(self, document: dict) -> None:
        """Channel names are unique."""
        document["channels"].append(dict(document["channels"][1]))
        with pytest.raises(DuplicateChannelError, match="fluxloop_00"):
            DiagnosticSet.from_mapping(document)

    def test_unknown_kind(self, document: dict) -> None:
        """Kinds without a forward model are rejected."""
        document["channels"].append(
            {"name": "bolo", "kind": "bolometer", "observation": 0.0, "uncertainty": 1.0}
        )
        with pytest.raises(UnknownChannelKindError, match="bolometer"):
            DiagnosticSet.from_mapping(document)

    def test_bias_index_out_of_range(self, document: dict) -> None:
        """Bias indices must point at a defined group."""
        document["bias_groups"] = []
        with pytest.raises(ValidationError, match="bias_index 0"):
            DiagnosticSet.from_mapping(document)

    def test_from_file_missing(self, tmp_path: Path) -> None:
        """A missing document is a validation error."""
        with pytest.raises(ValidationError, match="Diagnostics file not found"):
            DiagnosticSet.from_file(tmp_path / "nope.yaml")


class TestDiagnosticSetExport:
    """Tests for writing diagnostic documents."""

    def test_json_round_trip(self, data: DiagnosticSet, tmp_path: Path) -> None:
        """JSON export loads back to the same document."""
        path = data.to_file(tmp_path / "diag.json")
        assert DiagnosticSet.from_file(path).to_dict() == data.to_dict()

    def test_yaml_export(self, data: DiagnosticSet, tmp_path: Path) -> None:
        """A .yaml suffix writes YAML."""
        path = data.to_file(tmp_path / "diag.yaml")
        assert not path.read_text().lstrip().startswith("{")
        assert DiagnosticSet.from_file(path).list_names() == data.list_names()

    def test_infinite_sigma_tilde_survives_json(self, data: DiagnosticSet, tmp_path: Path) -> None:
        """σ̃ = inf is written as the string 'inf' and read back as infinity."""
        switched = data.with_weights("mse", a_tilde=1.0, b_tilde=0.0, sigma_tilde_scale=math.inf)
        path = switched.to_file(tmp_path / "diag.json")
        raw = json.loads(path.read_text())
        assert raw["channels"][2]["weights"]["sigma_tilde"] == "inf"
        loaded = DiagnosticSet.from_file(path)
        weights = loaded["mse_00"].weights
        assert weights is not None
        assert math.isinf(weights.sigma_tilde)

    def test_to_frame(self, data: DiagnosticSet) -> None:
        """One row per channel with effective weights."""
        frame = data.to_frame()
        assert list(frame["name"]) == data.list_names()
        assert frame.loc[1, "a_tilde"] == 0.8
        assert frame.loc[0, "sigma_tilde"] == 2.0e-3
        assert frame.loc[3, "bias_index"] == -1
        assert np.isnan(frame.loc[3, "r"])

    def test_to_csv(self, data: DiagnosticSet, tmp_path: Path) -> None:
        """CSV export carries the channel table."""
        path = data.to_csv(tmp_path / "channels.csv")
        frame = pd.read_csv(path)
        assert list(frame.columns)[:3] == ["name", "kind", "r"]
        assert len(frame) == 4


class TestDiagnosticSetAccess:
    """Tests for container access and copies."""

    def test_container_protocol(self, data: DiagnosticSet) -> None:
        """Membership, lookup and iteration by name."""
        assert "mse_00" in data
        assert "nope" not in data
        assert [c.name for c in data] == data.list_names()
        with pytest.raises(KeyError, match="nope"):
            data["nope"]

    def test_arrays(self, data: DiagnosticSet) -> None:
        """Observations, uncertainties and weights in channel order."""
        np.testing.assert_allclose(data.observations, [1.0e-3, 0.01, 0.05, 4.5e5])
        np.testing.assert_allclose(data.uncertainties, [2.0e-3, 2.0e-3, 2.0e-3, 1.0e3])
        a, b, sigma_tilde = data.weight_arrays()
        np.testing.assert_allclose(a, [0.5, 0.8, 0.5, 0.5])
        np.testing.assert_allclose(b, [0.5, 0.2, 0.5, 0.5])
        np.testing.assert_allclose(sigma_tilde, [2.0e-3, 0.01, 2.0e-3, 1.0e3])

    def test_with_observations(self, data: DiagnosticSet) -> None:
        """Only observations change."""
        updated = data.with_observations([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(updated.observations, [1.0, 2.0, 3.0, 4.0])
        assert updated["fluxloop_00"].weights == data["fluxloop_00"].weights
        assert updated.bias_groups == data.bias_groups
        np.testing.assert_array_equal(data.observations, [1.0e-3, 0.01, 0.05, 4.5e5])

    def test_with_observations_shape_mismatch(self, data: DiagnosticSet) -> None:
        """The observation vector must match the channel count."""
        with pytest.raises(ValidationError, match="Expected 4 observations"):
            data.with_observations([1.0, 2.0])

    def test_with_weights(self, data: DiagnosticSet) -> None:
        """Weights of one kind are replaced; σ̃ scales with the uncertainty."""
        updated = data.with_weights("pickup", a_tilde=0.9, b_tilde=0.1, sigma_tilde_scale=3.0)
        weights = updated["pickup_t_00"].effective_weights()
        assert (weights.a_tilde, weights.b_tilde) == (0.9, 0.1)
        assert weights.sigma_tilde == pytest.approx(6.0e-3)
        assert updated["fluxloop_00"].weights == data["fluxloop_00"].weights

    def test_layout_is_cached(self, data: DiagnosticSet) -> None:
        """The array view is built once."""
        assert data.layout() is data.layout()
        assert data.layout().n_bias == 1

    def test_direct_construction_duplicate(self) -> None:
        """The constructor checks names too."""
        chan = Channel(name="f", kind="fluxloop")
        with pytest.raises(DuplicateChannelError):
            DiagnosticSet([chan, chan])
