"""
Sampling the prior under a likelihood constraint.

Points carry a uniform tie-breaker u next to their log-likelihood, and the
constraint is lexicographic on (log L, u). Plateaus in the likelihood then
still shrink the constrained region.

New points are drawn ab initio from the prior until a configured number of
consecutive failures has occurred, after which the sampler switches
permanently to short Metropolis chains started from the seed set.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from equinest.exceptions import ConstraintExhaustedError
from equinest.sampler.params import RunParams
from equinest.sampler.posterior import PosteriorDef
from equinest.sampler.streams import child_generators

__all__ = [
    "AdaptiveScale",
    "ConstrainedSampler",
    "Constraint",
    "Draw",
    "SeedSet",
    "evict_seeds",
    "sample_constrained_prior",
]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

_SIDE_FALLBACK = 1.0e-3


@dataclass(frozen=True, slots=True)
class Constraint:
    """Lexicographic floor on (log-likelihood, tie-breaker)."""

    log_likelihood: float = -math.inf
    tiebreak: float = -math.inf

    def admits(self, log_likelihood: float, tiebreak: float) -> bool:
        """Whether (log_likelihood, tiebreak) lies strictly above the floor."""
        if log_likelihood != self.log_likelihood:
            return log_likelihood > self.log_likelihood
        return tiebreak > self.tiebreak

    def admits_many(self, log_likelihoods: ArrayLike, tiebreaks: ArrayLike) -> NDArray[np.bool_]:
        ll = np.asarray(log_likelihoods, dtype=np.float64)
        u = np.asarray(tiebreaks, dtype=np.float64)
        return np.asarray(
            (ll > self.log_likelihood) | ((ll == self.log_likelihood) & (u > self.tiebreak))
        )


@dataclass(frozen=True, slots=True, eq=False)
class SeedSet:
    """
    Chain starting points: the live pool plus located maxima.

    Parameters
    ----------
    points : ndarray
        ``(k, d)`` box coordinates.
    log_likelihoods : ndarray
        ``(k,)`` log-likelihoods.
    tiebreaks : ndarray
        ``(k,)`` tie-breakers. Maxima carry 1.0.
    is_maximum : ndarray
        ``(k,)`` flags marking located maxima.
    """

    points: FloatArray
    log_likelihoods: FloatArray
    tiebreaks: FloatArray
    is_maximum: NDArray[np.bool_]

    @classmethod
    def empty(cls, dim: int) -> "SeedSet":
        return cls(np.zeros((0, dim)), np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool))

    @classmethod
    def from_pool(
        cls, points: ArrayLike, log_likelihoods: ArrayLike, tiebreaks: ArrayLike
    ) -> "SeedSet":
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return cls(
            pts,
            np.asarray(log_likelihoods, dtype=np.float64),
            np.asarray(tiebreaks, dtype=np.float64),
            np.zeros(len(pts), dtype=bool),
        )

    @classmethod
    def from_maxima(cls, points: ArrayLike, log_likelihoods: ArrayLike) -> "SeedSet":
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return cls(
            pts,
            np.asarray(log_likelihoods, dtype=np.float64),
            np.ones(len(pts)),
            np.ones(len(pts), dtype=bool),
        )

    def __len__(self) -> int:
        return len(self.log_likelihoods)

    @property
    def maxima(self) -> "SeedSet":
        return self._subset(self.is_maximum)

    def _subset(self, mask: NDArray[np.bool_]) -> "SeedSet":
        return SeedSet(
            self.points[mask],
            self.log_likelihoods[mask],
            self.tiebreaks[mask],
            self.is_maximum[mask],
        )

    def merge(self, other: "SeedSet") -> "SeedSet":
        return SeedSet(
            np.concatenate([self.points, other.points]),
            np.concatenate([self.log_likelihoods, other.log_likelihoods]),
            np.concatenate([self.tiebreaks, other.tiebreaks]),
            np.concatenate([self.is_maximum, other.is_maximum]),
        )

    def with_pool(
        self, points: ArrayLike, log_likelihoods: ArrayLike, tiebreaks: ArrayLike
    ) -> "SeedSet":
        """Replace the pool members and keep the maxima."""
        return SeedSet.from_pool(points, log_likelihoods, tiebreaks).merge(self.maxima)

    def bounding_sides(self, lower: ArrayLike, upper: ArrayLike) -> FloatArray:
        """
        Side lengths of the smallest axis-aligned box around the members.

        Degenerate sides fall back to 1e-3 of the prior box width.
        """
        width = np.asarray(upper, dtype=np.float64) - np.asarray(lower, dtype=np.float64)
        if len(self) == 0:
            return _SIDE_FALLBACK * width
        sides = np.ptp(self.points, axis=0)
        return np.where(sides > 0, sides, _SIDE_FALLBACK * width)


def evict_seeds(seeds: SeedSet, constraint: Constraint) -> SeedSet:
    """Remove members that no longer satisfy ``constraint``."""
    return seeds._subset(constraint.admits_many(seeds.log_likelihoods, seeds.tiebreaks))


@dataclass(slots=True)
class AdaptiveScale:
    """
    Global proposal scale adapted toward a target acceptance rate.

    After each chain, ``log_scale += gain·(rate - target)`` with
    ``gain = max(min_gain, 1/sqrt(k + 1))`` for the k-th update.
    """

    target: float = 0.234
    log_scale: float = math.log(0.5)
    min_gain: float = 0.05
    log_bounds: tuple[float, float] = (math.log(1e-6), math.log(10.0))
    updates: int = 0
    history: list[float] = field(default_factory=list)

    @property
    def value(self) -> float:
        return math.exp(self.log_scale)

    def update(self, rate: float) -> None:
        gain = max(self.min_gain, 1.0 / math.sqrt(self.updates + 1))
        lo, hi = self.log_bounds
        self.log_scale = min(hi, max(lo, self.log_scale + gain * (rate - self.target)))
        self.updates += 1
        self.history.append(rate)

    def trailing_rate(self, window: int = 50) -> float:
        """Mean acceptance rate of the last ``window`` chains."""
        if not self.history:
            return math.nan
        return float(np.mean(self.history[-window:]))

    def state(self) -> dict[str, Any]:
        return {"log_scale": self.log_scale, "updates": self.updates, "history": list(self.history)}

    def restore(self, state: dict[str, Any]) -> None:
        self.log_scale = float(state["log_scale"])
        self.updates = int(state["updates"])
        self.history = [float(r) for r in state["history"]]


@dataclass(frozen=True, slots=True, eq=False)
class Draw:
    """A point satisfying the constraint."""

    x: FloatArray
    log_likelihood: float
    tiebreak: float
    mcmc: bool
    accepted: int = 0


@dataclass(frozen=True, slots=True, eq=False)
class _Chain:
    x: FloatArray
    log_likelihood: float
    tiebreak: float
    accepted: int


class ConstrainedSampler:
    """
    Draws from the prior restricted to the constrained region.

    Parameters
    ----------
    posterior : PosteriorDef
        Box prior and likelihood.
    params : RunParams
        Run parameters.
    rng : numpy.random.Generator
        Stream for draws and chains.
    executor : ThreadPoolExecutor | None, optional
        Runs chain batches when ``params.workers > 1``.
    """

    def __init__(
        self,
        posterior: PosteriorDef,
        params: RunParams,
        rng: np.random.Generator,
        *,
        executor: ThreadPoolExecutor | None = None,
    ) -> None:
        self.posterior = posterior
        self.params = params
        self.rng = rng
        self.scale = AdaptiveScale(target=params.target_acceptance)
        self._executor = executor
        self._consecutive_failures = 0
        self._mcmc = params.num_abi_failures == 0
        self.discarded_chains = 0

    @property
    def using_mcmc(self) -> bool:
        return self._mcmc

    def sample(self, constraint: Constraint, seeds: SeedSet) -> Draw:
        """
        One draw satisfying ``constraint``.

        Raises
        ------
        ConstraintExhaustedError
            If ``max_discarded_chains`` consecutive chains fail, or the seed
            set is empty when a chain is needed.
        """
        if not self._mcmc:
            draw = self._ab_initio(constraint)
            if draw is not None:
                return draw
        return self._mcmc_draw(constraint, seeds)

    def _ab_initio(self, constraint: Constraint) -> Draw | None:
        lower, upper = self.posterior.lower, self.posterior.upper
        while True:
            x = self.rng.uniform(lower, upper)
            u = float(self.rng.random())
            ll = self.posterior.log_likelihood(x)
            if constraint.admits(ll, u):
                self._consecutive_failures = 0
                return Draw(x=x, log_likelihood=ll, tiebreak=u, mcmc=False)
            self._consecutive_failures += 1
            if self._consecutive_failures >= self.params.num_abi_failures:
                self._mcmc = True
                logger.info(
                    "switching_to_mcmc: consecutive_failures=%d", self._consecutive_failures
                )
                return None

    def _run_chain(
        self,
        rng: np.random.Generator,
        constraint: Constraint,
        seeds: SeedSet,
        sides: FloatArray,
        scale: float,
    ) -> _Chain:
        lower, upper = self.posterior.lower, self.posterior.upper
        start = int(rng.integers(len(seeds)))
        x = seeds.points[start].copy()
        ll = float(seeds.log_likelihoods[start])
        u = float(seeds.tiebreaks[start])
        accepted = 0
        for _ in range(self.params.num_mcmc_jumps):
            proposal = x + rng.normal(size=x.shape) * scale * sides
            u_new = float(rng.random())
            if np.any(proposal < lower) or np.any(proposal > upper):
                continue
            ll_new = self.posterior.log_likelihood(proposal)
            if constraint.admits(ll_new, u_new):
                x, ll, u = proposal, ll_new, u_new
                accepted += 1
        return _Chain(x=x, log_likelihood=ll, tiebreak=u, accepted=accepted)

    def _mcmc_draw(self, constraint: Constraint, seeds: SeedSet) -> Draw:
        if len(seeds) == 0:
            raise ConstraintExhaustedError("Seed set is empty; no chain can start")

        sides = seeds.bounding_sides(self.posterior.lower, self.posterior.upper)
        jumps = self.params.num_mcmc_jumps
        workers = self.params.workers
        discarded = 0
        while True:
            scale = self.scale.value
            if workers > 1 and self._executor is not None:
                rngs = child_generators(self.rng, workers)
                chains = list(
                    self._executor.map(
                        lambda g: self._run_chain(g, constraint, seeds, sides, scale), rngs
                    )
                )
            else:
                chains = [self._run_chain(self.rng, constraint, seeds, sides, scale)]

            winner: _Chain | None = None
            failed = 0
            for chain in chains:
                self.scale.update(chain.accepted / jumps)
                if winner is None:
                    if chain.accepted >= self.params.min_accepted_jumps:
                        winner = chain
                    else:
                        failed += 1
            discarded += failed
            self.discarded_chains += failed
            if winner is not None:
                return Draw(
                    x=winner.x,
                    log_likelihood=winner.log_likelihood,
                    tiebreak=winner.tiebreak,
                    mcmc=True,
                    accepted=winner.accepted,
                )
            logger.debug("chains_discarded: count=%d, scale=%.3g", discarded, scale)
            if discarded >= self.params.max_discarded_chains:
                raise ConstraintExhaustedError(
                    f"{discarded} consecutive chains accepted fewer than "
                    f"{self.params.min_accepted_jumps} of {jumps} jumps at "
                    f"log-likelihood floor {constraint.log_likelihood:.6g}"
                )

    def state(self) -> dict[str, Any]:
        return {
            "consecutive_failures": self._consecutive_failures,
            "mcmc": self._mcmc,
            "discarded_chains": self.discarded_chains,
            "scale": self.scale.state(),
        }

    def restore(self, state: dict[str, Any]) -> None:
        self._consecutive_failures = int(state["consecutive_failures"])
        self._mcmc = bool(state["mcmc"])
        self.discarded_chains = int(state["discarded_chains"])
        self.scale.restore(state["scale"])


def sample_constrained_prior(
    posterior: PosteriorDef,
    constraint: Constraint | float,
    seeds: SeedSet,
    params: RunParams,
    rng: np.random.Generator,
    *,
    count: int = 1,
) -> list[Draw]:
    """
    ``count`` independent-start draws above ``constraint``.

    A float constraint is a floor on the log-likelihood alone.
    """
    if not isinstance(constraint, Constraint):
        constraint = Constraint(float(constraint), math.inf)
    sampler = ConstrainedSampler(posterior, params, rng)
    return [sampler.sample(constraint, seeds) for _ in range(count)]
