"""
Parameter space, force-balance prior and the equilibrium posterior.

The sampler works on a box: every parameter is uniform between its bounds,
either in its physical value (``linear``) or in its logarithm (``log``). The
posterior exposed to the sampler folds the log Jacobian and the box volume
into the likelihood, so the evidence over the uniform box equals the
evidence of the physical model:

    Z = ∫ L(x) / V_box dx,    L(x) = π(θ(x)) · |dθ/dx| · V_box

where π is the unnormalized physical posterior (prior times likelihood).
"""

import csv
import hashlib
import logging
import math
import threading
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum, auto
from pathlib import Path
from typing import IO, Any, Self

import numpy as np
from numpy.typing import ArrayLike, NDArray

from equinest.diagnostics import (
    DiagnosticSet,
    PredictionSet,
    predict_all,
    solve_gs,
    weak_log_likelihoods,
)
from equinest.equilibrium import CurrentDensityField, ProfileCoeffs, current_discrepancy
from equinest.exceptions import DegenerateGeometryError, ValidationError
from equinest.machine import Machine

__all__ = [
    "EquilibriumPosterior",
    "EquilibriumState",
    "ParameterSpace",
    "ParameterSpec",
    "PosteriorEvaluation",
    "PriorBounds",
    "Transform",
    "log_posterior",
    "log_prior",
]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

SIGMA_STAR_SQ_RANGE = (1.0e-5, 10.0)
# ΔI enters the force-balance prior in kA, matching the (kA)² units of σ*².
_KILOAMPERE = 1.0e3


class Transform(StrEnum):
    """Map between a box coordinate and a physical parameter value."""

    LINEAR = auto()
    LOG = auto()


@dataclass(frozen=True, slots=True, kw_only=True)
class ParameterSpec:
    """
    One parameter of the model.

    Parameters
    ----------
    name : str
        Unique parameter name.
    units : str
        Physical units.
    lower, upper : float
        Uniform prior bounds of the physical value.
    transform : Transform, optional
        Box coordinate. ``log`` requires ``lower > 0``.
    family : str, optional
        Group the parameter belongs to (``beam_currents``, ``p_c``, ...).
    """

    name: str
    units: str
    lower: float
    upper: float
    transform: Transform = Transform.LINEAR
    family: str = ""

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValidationError(f"Parameter '{self.name}' bounds must be finite")
        if not self.lower < self.upper:
            raise ValidationError(
                f"Parameter '{self.name}' needs lower < upper, got [{self.lower}, {self.upper}]"
            )
        object.__setattr__(self, "transform", Transform(self.transform))
        if self.transform is Transform.LOG and self.lower <= 0:
            raise ValidationError(f"Log parameter '{self.name}' needs lower > 0")

    @property
    def box(self) -> tuple[float, float]:
        if self.transform is Transform.LOG:
            return math.log(self.lower), math.log(self.upper)
        return self.lower, self.upper

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "units": self.units,
            "lower": self.lower,
            "upper": self.upper,
            "transform": str(self.transform),
            "family": self.family,
        }


@dataclass(frozen=True, slots=True, kw_only=True)
class PriorBounds:
    """
    Uniform prior bounds per parameter family.

    Currents are in amperes, ψ_γ in webers, σ*² in (kA)², biases in channel
    units.
    """

    beam_current: tuple[float, float] = (-5.0e3, 2.0e4)
    conductor_current: tuple[float, float] = (-1.0e5, 1.0e5)
    p_c: tuple[tuple[float, float], ...] = (
        (-2.0e5, 2.0e5),
        (-1.0e6, 1.0e6),
        (-1.0e6, 1.0e6),
        (-1.0e6, 1.0e6),
    )
    f_c: tuple[tuple[float, float], ...] = ((-1.0e6, 1.0e6),) * 3
    psi_gamma: tuple[float, float] = (-1.0, 1.0)
    sigma_star_sq: tuple[float, float] = SIGMA_STAR_SQ_RANGE
    bias: tuple[float, float] = (-0.05, 0.05)

    def __post_init__(self) -> None:
        if len(self.p_c) != 4 or len(self.f_c) != 3:
            raise ValidationError("priors need 4 p_c and 3 f_c bound pairs")
        lo, hi = self.sigma_star_sq
        if lo < SIGMA_STAR_SQ_RANGE[0] or hi > SIGMA_STAR_SQ_RANGE[1]:
            raise ValidationError(
                f"sigma_star_sq bounds must lie within {list(SIGMA_STAR_SQ_RANGE)}, got {[lo, hi]}"
            )

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> Self:
        def pair(value: Any) -> tuple[float, float]:
            lo, hi = value
            return float(lo), float(hi)

        defaults = cls()
        return cls(
            beam_current=pair(raw.get("beam_current", defaults.beam_current)),
            conductor_current=pair(raw.get("conductor_current", defaults.conductor_current)),
            p_c=tuple(pair(v) for v in raw.get("p_c", defaults.p_c)),
            f_c=tuple(pair(v) for v in raw.get("f_c", defaults.f_c)),
            psi_gamma=pair(raw.get("psi_gamma", defaults.psi_gamma)),
            sigma_star_sq=pair(raw.get("sigma_star_sq", defaults.sigma_star_sq)),
            bias=pair(raw.get("bias", defaults.bias)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "beam_current": list(self.beam_current),
            "conductor_current": list(self.conductor_current),
            "p_c": [list(p) for p in self.p_c],
            "f_c": [list(p) for p in self.f_c],
            "psi_gamma": list(self.psi_gamma),
            "sigma_star_sq": list(self.sigma_star_sq),
            "bias": list(self.bias),
        }


@dataclass(frozen=True, slots=True, kw_only=True, eq=False)
class EquilibriumState:
    """
    Full model parameter set.

    Parameters
    ----------
    beam_currents : ndarray
        Current per plasma beam, in amperes.
    profile : ProfileCoeffs
        p′ and f coefficients with f(ψ_γ).
    psi_gamma : float
        Flux at the last closed flux surface, in webers.
    sigma_star_sq : float
        Force-balance prior variance, in (kA)².
    biases : ndarray, optional
        Additive bias per bias group.
    passive_currents : ndarray, optional
        Current per conductor beam (passive structure and coils), in amperes.
    """

    beam_currents: FloatArray
    profile: ProfileCoeffs
    psi_gamma: float
    sigma_star_sq: float
    biases: FloatArray = field(default_factory=lambda: np.zeros(0))
    passive_currents: FloatArray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        for name in ("beam_currents", "biases", "passive_currents"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    def to_dict(self) -> dict[str, Any]:
        return {
            "beam_currents": self.beam_currents.tolist(),
            "profile": self.profile.to_dict(),
            "psi_gamma": self.psi_gamma,
            "sigma_star_sq": self.sigma_star_sq,
            "biases": self.biases.tolist(),
            "passive_currents": self.passive_currents.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> Self:
        return cls(
            beam_currents=np.asarray(raw["beam_currents"], dtype=np.float64),
            profile=ProfileCoeffs.from_dict(raw["profile"]),
            psi_gamma=float(raw["psi_gamma"]),
            sigma_star_sq=float(raw["sigma_star_sq"]),
            biases=np.asarray(raw.get("biases", []), dtype=np.float64),
            passive_currents=np.asarray(raw.get("passive_currents", []), dtype=np.float64),
        )


class ParameterSpace:
    """
    Ordered parameter descriptors and the box they map to.

    Parameters
    ----------
    specs : Sequence[ParameterSpec]
        Parameters in vector order.

    Raises
    ------
    ValidationError
        If names repeat.
    """

    def __init__(self, specs: Sequence[ParameterSpec]) -> None:
        self._specs = tuple(specs)
        names = [s.name for s in self._specs]
        if len(set(names)) != len(names):
            raise ValidationError("Parameter names must be unique")
        self.lower = np.array([s.box[0] for s in self._specs], dtype=np.float64)
        self.upper = np.array([s.box[1] for s in self._specs], dtype=np.float64)
        self.physical_lower = np.array([s.lower for s in self._specs], dtype=np.float64)
        self.physical_upper = np.array([s.upper for s in self._specs], dtype=np.float64)
        self._log_mask = np.array([s.transform is Transform.LOG for s in self._specs], dtype=bool)
        self._families: dict[str, NDArray[np.intp]] = {}
        for i, spec in enumerate(self._specs):
            self._families.setdefault(spec.family, np.zeros(0, dtype=np.intp))
            self._families[spec.family] = np.append(self._families[spec.family], i)

    @classmethod
    def for_machine(
        cls,
        machine: Machine,
        priors: PriorBounds | None = None,
        bias_groups: Sequence[str] = (),
    ) -> Self:
        """
        Parameter space of a machine.

        Order: plasma beam currents, conductor currents, p_c0..p_c3,
        f_c1..f_c3, ψ_γ, σ*² (log), one bias per group.
        """
        priors = priors or PriorBounds()
        specs: list[ParameterSpec] = []
        lo, hi = priors.beam_current
        specs += [
            ParameterSpec(name=f"I[{i}]", units="A", lower=lo, upper=hi, family="beam_currents")
            for i in range(machine.n_plasma)
        ]
        lo, hi = priors.conductor_current
        specs += [
            ParameterSpec(
                name=f"I_conductor[{i}]", units="A", lower=lo, upper=hi, family="passive_currents"
            )
            for i in range(machine.n_conductors)
        ]
        p_units = ("Pa/Wb", "Pa/Wb^2", "Pa/Wb^3", "Pa/Wb^4")
        specs += [
            ParameterSpec(name=f"p_c{k}", units=p_units[k], lower=lo, upper=hi, family="p_c")
            for k, (lo, hi) in enumerate(priors.p_c)
        ]
        f_units = ("A/Wb", "A/Wb^2", "A/Wb^3")
        specs += [
            ParameterSpec(name=f"f_c{k + 1}", units=f_units[k], lower=lo, upper=hi, family="f_c")
            for k, (lo, hi) in enumerate(priors.f_c)
        ]
        lo, hi = priors.psi_gamma
        specs.append(
            ParameterSpec(name="psi_gamma", units="Wb", lower=lo, upper=hi, family="psi_gamma")
        )
        lo, hi = priors.sigma_star_sq
        specs.append(
            ParameterSpec(
                name="sigma_star_sq",
                units="kA^2",
                lower=lo,
                upper=hi,
                transform=Transform.LOG,
                family="sigma_star_sq",
            )
        )
        lo, hi = priors.bias
        specs += [
            ParameterSpec(name=f"bias[{group}]", units="", lower=lo, upper=hi, family="biases")
            for group in bias_groups
        ]
        return cls(specs)

    @property
    def specs(self) -> tuple[ParameterSpec, ...]:
        return self._specs

    @property
    def dim(self) -> int:
        return len(self._specs)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self._specs]

    def family(self, name: str) -> NDArray[np.intp]:
        """Vector indices of the parameters in family ``name``."""
        return self._families.get(name, np.zeros(0, dtype=np.intp))

    def to_physical(self, x: ArrayLike) -> FloatArray:
        """Physical values of box coordinates ``x`` (last axis = parameters)."""
        x = np.asarray(x, dtype=np.float64)
        return np.where(self._log_mask, np.exp(np.where(self._log_mask, x, 0.0)), x)

    def to_box(self, values: ArrayLike) -> FloatArray:
        """Box coordinates of physical ``values``."""
        values = np.asarray(values, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self._log_mask, np.log(np.where(self._log_mask, values, 1.0)), values)

    def log_jacobian(self, x: ArrayLike) -> float:
        """ln |dθ/dx| of the box-to-physical map at ``x``."""
        return float(np.sum(np.asarray(x, dtype=np.float64)[self._log_mask]))

    @property
    def log_box_volume(self) -> float:
        return float(np.sum(np.log(self.upper - self.lower)))

    @property
    def log_uniform_density(self) -> float:
        """ln of the product of the uniform prior densities in physical units."""
        return float(-np.sum(np.log(self.physical_upper - self.physical_lower)))

    def contains(self, x: ArrayLike) -> bool:
        """Whether box coordinates ``x`` lie inside the box."""
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(np.isfinite(x)) and np.all(x >= self.lower) and np.all(x <= self.upper))

    def contains_state(self, state: EquilibriumState) -> bool:
        """Whether every parameter of ``state`` lies within its physical bounds."""
        values = self.values_from_state(state)
        return bool(
            len(values) == self.dim
            and np.all(np.isfinite(values))
            and np.all(values >= self.physical_lower)
            and np.all(values <= self.physical_upper)
        )

    def sample(self, rng: np.random.Generator, n: int | None = None) -> FloatArray:
        """Uniform draws on the box."""
        size = (self.dim,) if n is None else (n, self.dim)
        return np.asarray(rng.uniform(self.lower, self.upper, size=size))

    def state_from_vector(self, x: ArrayLike, f_boundary: float) -> EquilibriumState:
        """Equilibrium state of box coordinates ``x``."""
        v = self.to_physical(x)
        p_c = v[self.family("p_c")]
        f_c = v[self.family("f_c")]
        return EquilibriumState(
            beam_currents=v[self.family("beam_currents")],
            profile=ProfileCoeffs(
                p_c=tuple(float(c) for c in p_c),  # type: ignore[arg-type]
                f_c=tuple(float(c) for c in f_c),  # type: ignore[arg-type]
                f_boundary=f_boundary,
            ),
            psi_gamma=float(v[self.family("psi_gamma")][0]),
            sigma_star_sq=float(v[self.family("sigma_star_sq")][0]),
            biases=v[self.family("biases")],
            passive_currents=v[self.family("passive_currents")],
        )

    def values_from_state(self, state: EquilibriumState) -> FloatArray:
        """Physical parameter vector of ``state``."""
        parts = {
            "beam_currents": state.beam_currents,
            "passive_currents": state.passive_currents,
            "p_c": np.asarray(state.profile.p_c),
            "f_c": np.asarray(state.profile.f_c),
            "psi_gamma": np.array([state.psi_gamma]),
            "sigma_star_sq": np.array([state.sigma_star_sq]),
            "biases": state.biases,
        }
        values = np.full(self.dim, np.nan)
        for family, index in self._families.items():
            part = np.asarray(parts.get(family, []), dtype=np.float64)
            if part.shape != index.shape:
                return np.full(0, np.nan)
            values[index] = part
        return values

    def vector_from_state(self, state: EquilibriumState) -> FloatArray:
        """Box coordinates of ``state``."""
        values = self.values_from_state(state)
        if len(values) != self.dim:
            raise ValidationError("State does not match the parameter space dimensions")
        return self.to_box(values)

    def to_dict(self) -> dict[str, Any]:
        return {"parameters": [s.to_dict() for s in self._specs]}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> Self:
        return cls([ParameterSpec(**p) for p in raw["parameters"]])


def log_prior(state: EquilibriumState, space: ParameterSpace, delta_i: ArrayLike) -> float:
    """
    Force-balance prior with uniform bounds on every parameter.

    Σ_i ln N(ΔI_i / 1 kA; 0, σ*²) plus the log uniform densities, or -inf
    outside the bounds.

    Parameters
    ----------
    state : EquilibriumState
        Model state.
    space : ParameterSpace
        Uniform bounds.
    delta_i : array_like
        ΔI per plasma beam, in amperes.

    Returns
    -------
    float
        Log prior density.
    """
    s = state.sigma_star_sq
    if not (SIGMA_STAR_SQ_RANGE[0] <= s <= SIGMA_STAR_SQ_RANGE[1]):
        return -math.inf
    if not space.contains_state(state):
        return -math.inf
    d = np.asarray(delta_i, dtype=np.float64) / _KILOAMPERE
    gaussian = -0.5 * float(np.sum(d * d)) / s - 0.5 * len(d) * math.log(2.0 * math.pi * s)
    return gaussian + space.log_uniform_density


@dataclass(frozen=True, slots=True, eq=False)
class PosteriorEvaluation:
    """
    Log posterior of one state with the intermediate results.

    A rejected evaluation has ``log_value = -inf`` and a ``reason``.
    """

    log_value: float
    log_prior: float = -math.inf
    log_likelihood: float = -math.inf
    predictions: PredictionSet | None = None
    delta_i: FloatArray | None = None
    rejected: bool = False
    reason: str | None = None

    @classmethod
    def reject(cls, reason: str) -> "PosteriorEvaluation":
        return cls(log_value=-math.inf, rejected=True, reason=reason)


class _Counter:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._value = 0

    def increment(self) -> int:
        with self._lock:
            self._value += 1
            return self._value

    @property
    def value(self) -> int:
        with self._lock:
            return self._value


def log_posterior(
    state: EquilibriumState,
    data: DiagnosticSet,
    machine: Machine,
    space: ParameterSpace,
    *,
    degeneracy_counter: _Counter | None = None,
) -> PosteriorEvaluation:
    """
    Log prior plus the weak-observation log-likelihood of every channel.

    Parameters
    ----------
    state : EquilibriumState
        Model state.
    data : DiagnosticSet
        Observations in the machine's channel order.
    machine : Machine
        Machine with operators.
    space : ParameterSpace
        Parameter bounds.

    Returns
    -------
    PosteriorEvaluation
        Value with predictions and ΔI, or a rejection.
    """
    if not space.contains_state(state):
        return PosteriorEvaluation.reject("out_of_bounds")

    gs = solve_gs(state, machine)
    try:
        predictions = predict_all(state, machine, gs=gs)
    except DegenerateGeometryError:
        count = degeneracy_counter.increment() if degeneracy_counter else 0
        logger.warning("mse_degenerate: evaluation rejected, count=%d", count)
        return PosteriorEvaluation.reject("mse_degenerate")

    j = CurrentDensityField.from_currents(state.beam_currents, machine.plasma)
    delta_i, _ = current_discrepancy(j, gs.j_gs, machine.plasma, machine.parent_index)
    prior = log_prior(state, space, delta_i)
    if prior == -math.inf:
        return PosteriorEvaluation.reject("out_of_bounds")

    a, b, sigma_tilde = data.weight_arrays()
    likelihood = float(
        np.sum(
            weak_log_likelihoods(
                predictions.direct,
                predictions.gs,
                data.observations,
                data.uncertainties,
                a,
                b,
                sigma_tilde,
            )
        )
    )
    value = prior + likelihood
    if not math.isfinite(value):
        return PosteriorEvaluation.reject("non_finite")
    return PosteriorEvaluation(
        log_value=value,
        log_prior=prior,
        log_likelihood=likelihood,
        predictions=predictions,
        delta_i=delta_i,
    )


class EquilibriumPosterior:
    """
    Equilibrium posterior on the sampler's box.

    Parameters
    ----------
    data : DiagnosticSet
        Observations.
    machine : Machine
        Machine whose operators were built for ``data.layout()``.
    space : ParameterSpace
        Parameter space.
    trace_path : str | Path | None, optional
        If given, one CSV row per evaluation (index, parameter hash,
        log-value) is appended to this file.

    Raises
    ------
    ValidationError
        If the machine layout and the data disagree on the channels.
    """

    def __init__(
        self,
        data: DiagnosticSet,
        machine: Machine,
        space: ParameterSpace,
        *,
        trace_path: str | Path | None = None,
    ) -> None:
        if tuple(data.list_names()) != machine.layout.names:
            raise ValidationError("Diagnostic channels do not match the machine's channel layout")
        self.data = data
        self.machine = machine
        self.space = space
        self.lower = space.lower
        self.upper = space.upper
        self._log_volume = space.log_box_volume
        self._lock = threading.Lock()
        self._evaluations = 0
        self._degeneracies = _Counter()
        self._trace: IO[str] | None = None
        self._trace_writer: Any = None
        if trace_path is not None:
            path = Path(trace_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._trace = open(path, "w", newline="", encoding="utf-8")
            self._trace_writer = csv.writer(self._trace)
            self._trace_writer.writerow(["index", "parameters_hash", "log_value"])

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def n_evaluations(self) -> int:
        with self._lock:
            return self._evaluations

    @property
    def mse_degenerate_count(self) -> int:
        return self._degeneracies.value

    def state(self, x: ArrayLike) -> EquilibriumState:
        return self.space.state_from_vector(x, self.machine.f_boundary)

    def evaluate(self, x: ArrayLike) -> PosteriorEvaluation:
        """Physical log posterior at box coordinates ``x``, not counted."""
        x = np.asarray(x, dtype=np.float64)
        if not self.space.contains(x):
            return PosteriorEvaluation.reject("out_of_bounds")
        return log_posterior(
            self.state(x),
            self.data,
            self.machine,
            self.space,
            degeneracy_counter=self._degeneracies,
        )

    def log_likelihood(self, x: ArrayLike) -> float:
        """Sampler likelihood: log posterior + log Jacobian + ln box volume."""
        x = np.asarray(x, dtype=np.float64)
        evaluation = self.evaluate(x)
        value = (
            -math.inf
            if evaluation.rejected
            else evaluation.log_value + self.space.log_jacobian(x) + self._log_volume
        )
        with self._lock:
            self._evaluations += 1
            index = self._evaluations
            if self._trace_writer is not None:
                digest = hashlib.blake2b(x.tobytes(), digest_size=8).hexdigest()
                self._trace_writer.writerow([index, digest, repr(value)])
        return value

    def close(self) -> None:
        if self._trace is not None:
            self._trace.close()
            self._trace = None
            self._trace_writer = None

    def __enter__(self) -> Self:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
