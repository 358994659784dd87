"""Diagnostic documents: channel lists with observations and weights."""

import logging
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import replace
from enum import StrEnum, auto
from pathlib import Path
from typing import Any, Self

import numpy as np
import pandas as pd
import yaml
from numpy.typing import ArrayLike, NDArray

from equinest.diagnostics.base import (
    Channel,
    ChannelKind,
    ChannelLayout,
    WeakObsWeights,
    build_layout,
    registered_kinds,
)
from equinest.exceptions import (
    DuplicateChannelError,
    UnknownChannelKindError,
    ValidationError,
)
from equinest.files import atomic_write_text, read_document, write_json
from equinest.magnetostatics import FieldPoint

__all__ = ["DiagnosticSet"]

logger = logging.getLogger(__name__)

_CSV_COLUMNS = [
    "name",
    "kind",
    "r",
    "z",
    "theta",
    "observation",
    "uncertainty",
    "bias_index",
    "a_tilde",
    "b_tilde",
    "sigma_tilde",
]


class _AttrRule(StrEnum):
    """Validation rule for channel attributes."""

    REQUIRED = auto()
    FORBIDDEN = auto()
    ALLOWED = auto()


_KIND_VALIDATION: dict[str, dict[str, _AttrRule]] = {
    ChannelKind.PICKUP: {
        "position": _AttrRule.REQUIRED,
        "theta": _AttrRule.REQUIRED,
        "mse_geometry": _AttrRule.FORBIDDEN,
        "bias_index": _AttrRule.ALLOWED,
    },
    ChannelKind.FLUXLOOP: {
        "position": _AttrRule.REQUIRED,
        "theta": _AttrRule.FORBIDDEN,
        "mse_geometry": _AttrRule.FORBIDDEN,
        "bias_index": _AttrRule.ALLOWED,
    },
    ChannelKind.MSE: {
        "position": _AttrRule.REQUIRED,
        "theta": _AttrRule.FORBIDDEN,
        "mse_geometry": _AttrRule.REQUIRED,
        "bias_index": _AttrRule.FORBIDDEN,
    },
    ChannelKind.ROGOWSKI: {
        "position": _AttrRule.FORBIDDEN,
        "theta": _AttrRule.FORBIDDEN,
        "mse_geometry": _AttrRule.FORBIDDEN,
        "bias_index": _AttrRule.FORBIDDEN,
    },
}


def _validate_kind_attributes(chan: Channel, source_file: str | Path) -> str | None:
    """
    Check a channel against the attribute rules of its kind.

    Returns
    -------
    str | None
        Error message, or None if valid. Kinds without rules pass.
    """
    rules = _KIND_VALIDATION.get(chan.kind)
    if rules is None:
        return None

    attr_values = {
        "position": chan.position,
        "theta": chan.theta,
        "mse_geometry": chan.mse_geometry,
        "bias_index": chan.bias_index,
    }
    for attr, rule in rules.items():
        value = attr_values[attr]
        if rule == _AttrRule.REQUIRED and value is None:
            return (
                f"{chan.kind.capitalize()} channel '{chan.name}' requires "
                f"'{attr}' but none provided in {source_file}"
            )
        if rule == _AttrRule.FORBIDDEN and value is not None:
            return (
                f"{chan.kind.capitalize()} channel '{chan.name}' has '{attr}' set, "
                f"but {chan.kind} does not use {attr}. Remove it. In {source_file}"
            )
    return None


def _parse_channel(raw: Any, source_file: str | Path) -> Channel:
    if not isinstance(raw, Mapping):
        raise ValidationError(f"Channel entries must be mappings, got {type(raw).__name__}")
    for key in ("name", "kind", "observation", "uncertainty"):
        if key not in raw:
            raise ValidationError(
                f"Missing required field '{key}' in channel {raw.get('name', '?')!r}"
            )
    unknown = set(raw) - {
        "name",
        "kind",
        "r",
        "z",
        "theta",
        "mse_geometry",
        "observation",
        "uncertainty",
        "bias_index",
        "weights",
    }
    if unknown:
        raise ValidationError(
            f"Channel '{raw['name']}' has unknown key(s): {', '.join(sorted(unknown))}"
        )

    has_r, has_z = raw.get("r") is not None, raw.get("z") is not None
    if has_r != has_z:
        raise ValidationError(f"Channel '{raw['name']}' needs both 'r' and 'z' or neither")
    position = FieldPoint(r=float(raw["r"]), z=float(raw["z"])) if has_r else None

    weights = None
    if raw.get("weights") is not None:
        w = raw["weights"]
        weights = WeakObsWeights(
            a_tilde=float(w.get("a_tilde", 0.5)),
            b_tilde=float(w.get("b_tilde", 0.5)),
            sigma_tilde=float(w.get("sigma_tilde", raw["uncertainty"])),
        )

    geometry = raw.get("mse_geometry")
    chan = Channel(
        name=str(raw["name"]),
        kind=str(raw["kind"]),
        position=position,
        observation=float(raw["observation"]),
        uncertainty=float(raw["uncertainty"]),
        theta=None if raw.get("theta") is None else float(raw["theta"]),
        mse_geometry=None if geometry is None else tuple(float(c) for c in geometry),
        bias_index=None if raw.get("bias_index") is None else int(raw["bias_index"]),
        weights=weights,
    )
    error = _validate_kind_attributes(chan, source_file)
    if error:
        raise ValidationError(error)
    return chan


def _channel_to_dict(chan: Channel) -> dict[str, Any]:
    out: dict[str, Any] = {"name": chan.name, "kind": chan.kind}
    if chan.position is not None:
        out["r"] = chan.position.r
        out["z"] = chan.position.z
    if chan.theta is not None:
        out["theta"] = chan.theta
    if chan.mse_geometry is not None:
        out["mse_geometry"] = list(chan.mse_geometry)
    out["observation"] = chan.observation
    out["uncertainty"] = chan.uncertainty
    if chan.bias_index is not None:
        out["bias_index"] = chan.bias_index
    if chan.weights is not None:
        out["weights"] = chan.weights.to_dict()
    return out


class DiagnosticSet:
    """
    Ordered channel list of one discharge.

    Parameters
    ----------
    channels : Sequence[Channel]
        Channels in canonical order.
    bias_groups : Sequence[str], optional
        Names of the additive bias groups; ``Channel.bias_index`` indexes
        this list.
    toroidal_field_current : float, optional
        f(ψ_γ) of the discharge, in amperes.

    Raises
    ------
    DuplicateChannelError
        If two channels share a name.
    ValidationError
        If a bias index is out of range.
    """

    def __init__(
        self,
        channels: Sequence[Channel],
        *,
        bias_groups: Sequence[str] = (),
        toroidal_field_current: float = 0.0,
    ) -> None:
        self._channels = tuple(channels)
        self._bias_groups = tuple(bias_groups)
        self._toroidal_field_current = float(toroidal_field_current)
        self._by_name: dict[str, int] = {}
        for i, chan in enumerate(self._channels):
            if chan.name in self._by_name:
                raise DuplicateChannelError(f"Duplicate channel name: {chan.name}")
            self._by_name[chan.name] = i
            if chan.bias_index is not None and not 0 <= chan.bias_index < len(self._bias_groups):
                raise ValidationError(
                    f"Channel '{chan.name}' has bias_index {chan.bias_index} but only "
                    f"{len(self._bias_groups)} bias group(s) are defined"
                )
        self._layout: ChannelLayout | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> Self:
        """
        Load a diagnostic document (YAML or JSON).

        Raises
        ------
        ValidationError
            If the file is missing, malformed, or has invalid channels. All
            channel errors are reported together.
        DuplicateChannelError
            If a channel name repeats.
        UnknownChannelKindError
            If a channel kind has no registered forward model.
        """
        logger.info("loading_diagnostics: path=%s", path)
        raw = read_document(path, what="diagnostics")
        data = cls.from_mapping(raw, source=path)
        logger.info(
            "diagnostics_loaded: channels=%d, bias_groups=%d", len(data), len(data.bias_groups)
        )
        return data

    @classmethod
    def from_mapping(cls, raw: Any, *, source: str | Path = "<mapping>") -> Self:
        """Build from a parsed diagnostic document."""
        if not isinstance(raw, Mapping) or not isinstance(raw.get("channels"), list):
            raise ValidationError(f"Diagnostics document {source} must contain a 'channels' list")

        channels: list[Channel] = []
        seen: set[str] = set()
        errors: list[str] = []
        for num, entry in enumerate(raw["channels"]):
            try:
                chan = _parse_channel(entry, source)
            except (ValidationError, TypeError, ValueError) as e:
                errors.append(f"Channel {num}: {e}")
                continue
            if chan.name in seen:
                raise DuplicateChannelError(f"Duplicate channel name: {chan.name}")
            seen.add(chan.name)
            channels.append(chan)

        if errors:
            error_list = "\n  ".join(errors)
            raise ValidationError(f"{len(errors)} error(s) in {source}:\n  {error_list}")

        known = set(registered_kinds())
        unknown = {c.kind for c in channels} - known
        if unknown:
            raise UnknownChannelKindError(
                f"Unknown channel kind(s) in {source}: {', '.join(sorted(unknown))}. "
                f"Registered kinds: {', '.join(sorted(known))}"
            )

        return cls(
            channels,
            bias_groups=[str(g) for g in raw.get("bias_groups") or []],
            toroidal_field_current=float(raw.get("toroidal_field_current", 0.0)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "toroidal_field_current": self._toroidal_field_current,
            "bias_groups": list(self._bias_groups),
            "channels": [_channel_to_dict(c) for c in self._channels],
        }

    def to_file(self, path: str | Path) -> Path:
        """Write the document as JSON, or YAML for a ``.yaml``/``.yml`` suffix."""
        target = Path(path)
        if target.suffix in (".yaml", ".yml"):
            atomic_write_text(target, yaml.safe_dump(self.to_dict(), sort_keys=False))
        else:
            payload = self.to_dict()
            # JSON has no infinity literal; float("inf") reads it back.
            for chan in payload["channels"]:
                weights = chan.get("weights")
                if weights and math.isinf(weights["sigma_tilde"]):
                    weights["sigma_tilde"] = "inf"
            write_json(target, payload)
        logger.info("diagnostics_exported: path=%s, channels=%d", target, len(self))
        return target

    def to_frame(self) -> pd.DataFrame:
        """One row per channel with geometry, data and effective weights."""
        rows = []
        for chan in self._channels:
            w = chan.effective_weights()
            rows.append(
                {
                    "name": chan.name,
                    "kind": chan.kind,
                    "r": chan.position.r if chan.position else np.nan,
                    "z": chan.position.z if chan.position else np.nan,
                    "theta": np.nan if chan.theta is None else chan.theta,
                    "observation": chan.observation,
                    "uncertainty": chan.uncertainty,
                    "bias_index": -1 if chan.bias_index is None else chan.bias_index,
                    "a_tilde": w.a_tilde,
                    "b_tilde": w.b_tilde,
                    "sigma_tilde": w.sigma_tilde,
                }
            )
        return pd.DataFrame(rows, columns=_CSV_COLUMNS)

    def to_csv(self, path: str | Path) -> Path:
        """Export the channel table to CSV."""
        target = Path(path)
        atomic_write_text(target, self.to_frame().to_csv(index=False))
        logger.info("diagnostics_exported_csv: path=%s, channels=%d", target, len(self))
        return target

    @property
    def channels(self) -> tuple[Channel, ...]:
        return self._channels

    @property
    def bias_groups(self) -> tuple[str, ...]:
        return self._bias_groups

    @property
    def toroidal_field_current(self) -> float:
        return self._toroidal_field_current

    def layout(self) -> ChannelLayout:
        """Array view of the channels, built once."""
        if self._layout is None:
            self._layout = build_layout(
                self._channels,
                n_bias=len(self._bias_groups),
                toroidal_field_current=self._toroidal_field_current,
            )
        return self._layout

    @property
    def observations(self) -> NDArray[np.float64]:
        return np.array([c.observation for c in self._channels], dtype=np.float64)

    @property
    def uncertainties(self) -> NDArray[np.float64]:
        return np.array([c.uncertainty for c in self._channels], dtype=np.float64)

    def weight_arrays(self) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Effective (a_tilde, b_tilde, sigma_tilde) per channel."""
        weights = [c.effective_weights() for c in self._channels]
        return (
            np.array([w.a_tilde for w in weights], dtype=np.float64),
            np.array([w.b_tilde for w in weights], dtype=np.float64),
            np.array([w.sigma_tilde for w in weights], dtype=np.float64),
        )

    def with_observations(self, values: ArrayLike) -> "DiagnosticSet":
        """Copy with replaced observations; geometry and weights are kept."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(self),):
            raise ValidationError(
                f"Expected {len(self)} observations, got array of shape {values.shape}"
            )
        channels = [
            replace(c, observation=float(v)) for c, v in zip(self._channels, values, strict=True)
        ]
        return DiagnosticSet(
            channels,
            bias_groups=self._bias_groups,
            toroidal_field_current=self._toroidal_field_current,
        )

    def with_weights(
        self,
        kind: str,
        *,
        a_tilde: float = 0.5,
        b_tilde: float = 0.5,
        sigma_tilde_scale: float = 1.0,
    ) -> "DiagnosticSet":
        """
        Copy with the weights of every ``kind`` channel replaced.

        ``sigma_tilde`` is set to ``sigma_tilde_scale`` times each channel's
        uncertainty; an infinite scale switches the agreement factor off.
        """
        channels = [
            replace(
                c,
                weights=WeakObsWeights(
                    a_tilde=a_tilde,
                    b_tilde=b_tilde,
                    sigma_tilde=sigma_tilde_scale * c.uncertainty,
                ),
            )
            if c.kind == kind
            else c
            for c in self._channels
        ]
        return DiagnosticSet(
            channels,
            bias_groups=self._bias_groups,
            toroidal_field_current=self._toroidal_field_current,
        )

    def __len__(self) -> int:
        return len(self._channels)

    def __iter__(self) -> Iterator[Channel]:
        return iter(self._channels)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> Channel:
        if name not in self._by_name:
            raise KeyError(f"Channel not found: {name}")
        return self._channels[self._by_name[name]]

    def list_names(self) -> list[str]:
        return [c.name for c in self._channels]
