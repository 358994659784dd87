"""Channel types, forward-model registry and the weak-observation likelihood."""

import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum, auto

import numpy as np
from numpy.typing import ArrayLike, NDArray

from equinest.exceptions import UnknownChannelKindError, ValidationError
from equinest.magnetostatics import FieldPoint

__all__ = [
    "Channel",
    "ChannelFields",
    "ChannelKind",
    "ChannelLayout",
    "ChannelModel",
    "ChannelModelRegistry",
    "EPS_DIV",
    "PredictionPair",
    "WeakObsWeights",
    "build_layout",
    "get_channel_model",
    "register_channel_kind",
    "registered_kinds",
    "weak_log_likelihood",
    "weak_log_likelihoods",
]

EPS_DIV = 1.0e-12
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

FloatArray = NDArray[np.float64]


class ChannelKind(StrEnum):
    """Built-in diagnostic channel kinds."""

    PICKUP = auto()
    FLUXLOOP = auto()
    MSE = auto()
    ROGOWSKI = auto()


@dataclass(frozen=True, slots=True, kw_only=True)
class WeakObsWeights:
    """
    Weights of the weak-observation likelihood of one channel.

    Parameters
    ----------
    a_tilde : float
        Weight of the direct prediction in the data-fit term.
    b_tilde : float
        Weight of the GS prediction. ``a_tilde + b_tilde`` must equal 1.
    sigma_tilde : float
        Width of the model-agreement factor, in channel units. ``inf``
        switches the agreement factor off.
    """

    a_tilde: float = 0.5
    b_tilde: float = 0.5
    sigma_tilde: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a_tilde) and math.isfinite(self.b_tilde)):
            raise ValidationError(
                f"Weights must be finite, got a_tilde={self.a_tilde}, b_tilde={self.b_tilde}"
            )
        if abs(self.a_tilde + self.b_tilde - 1.0) > 1e-9:
            raise ValidationError(
                f"a_tilde + b_tilde must equal 1, got {self.a_tilde} + {self.b_tilde}"
            )
        if not self.sigma_tilde > 0:
            raise ValidationError(f"sigma_tilde must be > 0, got {self.sigma_tilde}")

    def to_dict(self) -> dict[str, float]:
        return {"a_tilde": self.a_tilde, "b_tilde": self.b_tilde, "sigma_tilde": self.sigma_tilde}


@dataclass(frozen=True, slots=True)
class PredictionPair:
    """Direct-J and GS-derived predictions of one channel."""

    direct: float
    gs: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.direct) and math.isfinite(self.gs)):
            raise ValueError(f"Predictions must be finite, got ({self.direct}, {self.gs})")


@dataclass(frozen=True, slots=True, kw_only=True)
class Channel:
    """
    One diagnostic channel.

    Parameters
    ----------
    name : str
        Unique channel name.
    kind : str
        Registered channel kind (see ``ChannelKind``).
    position : FieldPoint | None
        Measurement point. None for integral channels (Rogowski coils).
    observation : float
        Measured value x_i, in channel units.
    uncertainty : float
        Standard deviation σ_i, ``> 0``.
    theta : float | None
        Pickup coil normal angle in radians.
    mse_geometry : tuple[float, ...] | None
        MSE viewing-geometry constants A0..A5.
    bias_index : int | None
        Index into the bias vector, or None.
    weights : WeakObsWeights | None
        Weak-observation weights; None selects the defaults.
    """

    name: str
    kind: str
    position: FieldPoint | None = None
    observation: float = 0.0
    uncertainty: float = 1.0
    theta: float | None = None
    mse_geometry: tuple[float, ...] | None = None
    bias_index: int | None = None
    weights: WeakObsWeights | None = None

    def __post_init__(self) -> None:
        if not self.uncertainty > 0 or not math.isfinite(self.uncertainty):
            raise ValidationError(
                f"Channel '{self.name}': uncertainty must be finite and > 0, got {self.uncertainty}"
            )
        if not math.isfinite(self.observation):
            raise ValidationError(f"Channel '{self.name}': observation must be finite")
        if self.mse_geometry is not None:
            if len(self.mse_geometry) != 6:
                raise ValidationError(
                    f"Channel '{self.name}': mse_geometry needs 6 constants, "
                    f"got {len(self.mse_geometry)}"
                )
            if all(c == 0 for c in self.mse_geometry[3:]):
                raise ValidationError(
                    f"Channel '{self.name}': MSE denominator coefficients are all zero"
                )

    def effective_weights(self) -> WeakObsWeights:
        """Configured weights, or equal weights with ``sigma_tilde = uncertainty``."""
        if self.weights is not None:
            return self.weights
        return WeakObsWeights(a_tilde=0.5, b_tilde=0.5, sigma_tilde=self.uncertainty)


def _log_normal(residual: FloatArray | float, sigma: FloatArray | float) -> FloatArray:
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.asarray(residual, dtype=np.float64) / sigma
        return np.asarray(-0.5 * z * z - np.log(sigma) - _LOG_SQRT_2PI)


def weak_log_likelihoods(
    direct: ArrayLike,
    gs: ArrayLike,
    observations: ArrayLike,
    uncertainties: ArrayLike,
    a_tilde: ArrayLike,
    b_tilde: ArrayLike,
    sigma_tilde: ArrayLike,
) -> FloatArray:
    """
    Per-channel weak-observation log-likelihoods.

    Each channel contributes a Gaussian data-fit term on the weighted
    prediction and a Gaussian agreement term between the two models:

        ln N(x - (ã·direct + b̃·gs); σ) + ln N(direct - gs; σ̃)

    Both terms carry their normalization constants. Channels with
    ``σ̃ = inf`` contribute no agreement term.

    Returns
    -------
    ndarray
        Log-density per channel.
    """
    direct = np.asarray(direct, dtype=np.float64)
    gs = np.asarray(gs, dtype=np.float64)
    sigma_tilde = np.asarray(sigma_tilde, dtype=np.float64)
    a = np.asarray(a_tilde, dtype=np.float64)
    b = np.asarray(b_tilde, dtype=np.float64)

    fit = _log_normal(np.asarray(observations) - (a * direct + b * gs), np.asarray(uncertainties))
    finite = np.isfinite(sigma_tilde)
    agreement = np.where(
        finite, _log_normal(direct - gs, np.where(finite, sigma_tilde, 1.0)), 0.0
    )
    return np.asarray(fit + agreement, dtype=np.float64)


def weak_log_likelihood(
    pair: PredictionPair, chan: Channel, w: WeakObsWeights | None = None
) -> float:
    """
    Weak-observation log-likelihood of a single channel.

    Parameters
    ----------
    pair : PredictionPair
        Direct and GS predictions.
    chan : Channel
        Channel providing the observation and uncertainty.
    w : WeakObsWeights | None, optional
        Weights; defaults to ``chan.effective_weights()``.

    Examples
    --------
    >>> chan = Channel(name="f1", kind="fluxloop", observation=0.1, uncertainty=0.01)
    >>> value = weak_log_likelihood(PredictionPair(0.1, 0.1), chan)
    """
    w = w or chan.effective_weights()
    return float(
        weak_log_likelihoods(
            pair.direct,
            pair.gs,
            chan.observation,
            chan.uncertainty,
            w.a_tilde,
            w.b_tilde,
            w.sigma_tilde,
        )
    )


@dataclass(frozen=True, slots=True, kw_only=True, eq=False)
class ChannelLayout:
    """
    Array view of a channel list consumed by operators and forward models.

    Unpositioned channels carry NaN coordinates; unset pickup angles and MSE
    constants are NaN; ``bias_index`` is -1 where a channel has no bias.
    """

    names: tuple[str, ...]
    kinds: tuple[str, ...]
    r: FloatArray
    z: FloatArray
    theta: FloatArray
    mse_geometry: FloatArray
    bias_index: NDArray[np.intp]
    n_bias: int = 0
    toroidal_field_current: float = 0.0
    _kind_cache: dict[str, NDArray[np.intp]] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.names)

    @property
    def positioned(self) -> NDArray[np.bool_]:
        """Mask of channels with a measurement point."""
        return np.isfinite(self.r)

    @property
    def positioned_index(self) -> NDArray[np.intp]:
        return np.flatnonzero(self.positioned).astype(np.intp)

    def kind_index(self, kind: str) -> NDArray[np.intp]:
        """Indices of the channels of ``kind``."""
        if kind not in self._kind_cache:
            self._kind_cache[kind] = np.array(
                [i for i, k in enumerate(self.kinds) if k == kind], dtype=np.intp
            )
        return self._kind_cache[kind]

    def field_points(self) -> list[FieldPoint]:
        """Measurement points of positioned channels, in channel order."""
        return [
            FieldPoint(r=float(self.r[i]), z=float(self.z[i])) for i in self.positioned_index
        ]

    def position_content(self) -> list[list[float]]:
        """Positioned coordinates as plain lists for content hashing."""
        return [[float(self.r[i]), float(self.z[i])] for i in self.positioned_index]


@dataclass(frozen=True, slots=True, kw_only=True)
class ChannelFields:
    """
    Field values at every channel of a layout.

    Arrays are indexed by channel; unpositioned channels hold NaN.
    ``plasma_current`` is the total toroidal current of the model.
    """

    psi: FloatArray
    b_r: FloatArray
    b_z: FloatArray
    b_phi: FloatArray
    plasma_current: float


class ChannelModel(ABC):
    """Forward model of one channel kind.

    Subclasses implement ``predict`` over all channels of their kind at once.
    """

    #: Whether channels of this kind need a measurement point.
    positioned: bool = True

    @abstractmethod
    def predict(
        self, fields: ChannelFields, layout: ChannelLayout, index: NDArray[np.intp]
    ) -> FloatArray:
        """
        Predict the channels ``index`` of ``layout`` from ``fields``.

        Parameters
        ----------
        fields : ChannelFields
            Fields at every channel.
        layout : ChannelLayout
            Channel geometry.
        index : ndarray
            Channels of this model's kind.

        Returns
        -------
        ndarray
            One prediction per entry of ``index``.

        Raises
        ------
        DegenerateGeometryError
            If a prediction is undefined for the given fields.
        """
        pass


class ChannelModelRegistry:
    """Registry of forward models by channel kind.

    Instances are created on first use and reused.
    """

    def __init__(self) -> None:
        self._models: dict[str, type[ChannelModel]] = {}
        self._instances: dict[str, ChannelModel] = {}

    def register(self, kind: str, model_class: type[ChannelModel]) -> None:
        self._models[kind] = model_class
        self._instances.pop(kind, None)

    def get(self, kind: str) -> ChannelModel:
        """
        Get the forward model for ``kind``.

        Raises
        ------
        UnknownChannelKindError
            If no model is registered for ``kind``.
        """
        if kind not in self._models:
            raise UnknownChannelKindError(
                f"Unknown channel kind: {kind}. "
                f"Available kinds: {', '.join(self._models.keys()) or 'none'}"
            )
        if kind not in self._instances:
            self._instances[kind] = self._models[kind]()
        return self._instances[kind]

    def list_kinds(self) -> list[str]:
        return list(self._models.keys())


_global_registry = ChannelModelRegistry()


def register_channel_kind(kind: str) -> Callable[[type[ChannelModel]], type[ChannelModel]]:
    """
    Decorator registering a forward model for a channel kind.

    Examples
    --------
    >>> @register_channel_kind("saddle")
    ... class SaddleModel(ChannelModel):
    ...     def predict(self, fields, layout, index):
    ...         ...
    """

    def decorator(cls: type[ChannelModel]) -> type[ChannelModel]:
        _global_registry.register(kind, cls)
        return cls

    return decorator


def get_channel_model(kind: str) -> ChannelModel:
    """Forward model registered for ``kind``."""
    return _global_registry.get(kind)


def registered_kinds() -> list[str]:
    return _global_registry.list_kinds()


def build_layout(
    channels: Sequence[Channel], *, n_bias: int = 0, toroidal_field_current: float = 0.0
) -> ChannelLayout:
    """Assemble the array view of ``channels``."""
    n = len(channels)
    r = np.full(n, np.nan)
    z = np.full(n, np.nan)
    theta = np.full(n, np.nan)
    mse = np.full((n, 6), np.nan)
    bias = np.full(n, -1, dtype=np.intp)
    for i, chan in enumerate(channels):
        if chan.position is not None:
            r[i], z[i] = chan.position.r, chan.position.z
        if chan.theta is not None:
            theta[i] = chan.theta
        if chan.mse_geometry is not None:
            mse[i] = chan.mse_geometry
        if chan.bias_index is not None:
            bias[i] = chan.bias_index
    return ChannelLayout(
        names=tuple(c.name for c in channels),
        kinds=tuple(c.kind for c in channels),
        r=r,
        z=z,
        theta=theta,
        mse_geometry=mse,
        bias_index=bias,
        n_bias=n_bias,
        toroidal_field_current=toroidal_field_current,
    )
