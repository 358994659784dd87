"""
Nested sampling with multiple abscissa sequences.

The main loop keeps m live prior samples and a pool of m abscissa values.
Every iteration removes the lowest (log L, tie-breaker) sample, pairs it
with the largest pooled abscissa, and replaces both: the sample by a draw
above the constraint, the abscissa by a uniform draw on [0, t_i]. Evidence
accumulates as Σ L_i·(t_{i-1} - t_i) in log space, plus t_N/m for each
final live sample.

After the main loop terminates, the stored likelihood sequence is replayed
against freshly generated abscissa sequences. A replay that needs more
points than were stored extends the main loop; the live set of any earlier
iteration is reconstructed from birth and death iterations.
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from equinest.exceptions import (
    ConstraintExhaustedError,
    DegenerateWeightsError,
    SamplerError,
)
from equinest.sampler.checkpoint import load_checkpoint, save_checkpoint, validate_checkpoint
from equinest.sampler.constrained import ConstrainedSampler, Constraint, SeedSet, evict_seeds
from equinest.sampler.params import RunParams
from equinest.sampler.posterior import PosteriorDef
from equinest.sampler.seeding import SeedBudget, find_seeds
from equinest.sampler.streams import RunStreams

__all__ = [
    "AbscissaPool",
    "AbscissaSequence",
    "EvidenceResult",
    "NestedRun",
    "QuadraturePoint",
    "SimulatedPosterior",
    "relative_entropy",
    "run_nested",
    "simulate_posterior",
]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

_PROGRESS_EVERY = 500


@dataclass(frozen=True, slots=True, eq=False)
class QuadraturePoint:
    """A removed (or final live) sample with its place in the sequence."""

    log_likelihood: float
    tiebreak: float
    x: FloatArray
    index: int


class AbscissaPool:
    """
    Pool of m abscissa values; ``next`` extracts the largest and refills.

    Values are kept as logarithms. After an extraction of t_i the pool again
    holds m independent uniforms on [0, t_i].

    Parameters
    ----------
    size : int
        Pool size m.
    rng : numpy.random.Generator
        Abscissa stream.
    log_values : array_like | None, optional
        Restored pool contents.
    """

    def __init__(
        self, size: int, rng: np.random.Generator, log_values: ArrayLike | None = None
    ) -> None:
        self.size = size
        self.rng = rng
        if log_values is None:
            self.log_values = np.log1p(-rng.random(size))
        else:
            self.log_values = np.array(log_values, dtype=np.float64)

    def next(self) -> float:
        i = int(np.argmax(self.log_values))
        log_t = float(self.log_values[i])
        self.log_values[i] = log_t + math.log1p(-float(self.rng.random()))
        return log_t


@dataclass(frozen=True, slots=True, eq=False)
class AbscissaSequence:
    """
    Abscissa values of one sequence and the live-remainder size.

    Parameters
    ----------
    log_t : ndarray
        ln t_i for the removed samples, strictly decreasing.
    live : int
        Number of live samples sharing the remainder t_N.
    """

    log_t: FloatArray
    live: int

    def __post_init__(self) -> None:
        if np.any(np.diff(self.log_t) >= 0) or (len(self.log_t) and self.log_t[0] > 0):
            raise SamplerError("Abscissa sequence is not strictly decreasing in (0, 1]")

    def __len__(self) -> int:
        return len(self.log_t)

    @property
    def t(self) -> FloatArray:
        return np.exp(self.log_t)

    def log_weights(self) -> FloatArray:
        """
        ln(t_{i-1} - t_i) for every removed sample (t_0 = 1), followed by
        ln(t_N / live) for every live sample.
        """
        previous = np.concatenate([[0.0], self.log_t[:-1]])
        gaps = previous + np.log1p(-np.exp(self.log_t - previous))
        last = self.log_t[-1] if len(self.log_t) else 0.0
        return np.concatenate([gaps, np.full(self.live, last - math.log(self.live))])

    def log_evidence(self, log_likelihoods: ArrayLike) -> float:
        """ln Σ L_i·w_i over removed then live samples."""
        return float(logsumexp(np.asarray(log_likelihoods, dtype=np.float64) + self.log_weights()))


@dataclass(frozen=True, slots=True, kw_only=True)
class EvidenceResult:
    """
    Evidence statistics over all abscissa sequences.

    ``log_evidence_2sigma`` is twice the sample standard deviation of the
    per-sequence log-evidences.
    """

    log_evidence_mean: float
    log_evidence_2sigma: float
    entropy: float
    log_evidences: tuple[float, ...]
    quadrature_size: int

    @classmethod
    def from_sequences(
        cls, log_evidences: Sequence[float], *, entropy: float, quadrature_size: int
    ) -> "EvidenceResult":
        values = np.asarray(log_evidences, dtype=np.float64)
        spread = 2.0 * float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return cls(
            log_evidence_mean=float(values.mean()),
            log_evidence_2sigma=spread,
            entropy=entropy,
            log_evidences=tuple(float(v) for v in values),
            quadrature_size=quadrature_size,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "log_evidence_mean": self.log_evidence_mean,
            "log_evidence_2sigma": self.log_evidence_2sigma,
            "entropy": self.entropy,
            "log_evidences": list(self.log_evidences),
            "quadrature_size": self.quadrature_size,
        }


@dataclass(frozen=True, slots=True, eq=False)
class SimulatedPosterior:
    """
    Posterior weights of the quadrature points and an equal-weight resample.

    Parameters
    ----------
    weights : ndarray
        P_i per quadrature point, summing to one.
    log_likelihoods : ndarray
        ln L_i per quadrature point.
    points : ndarray
        ``(n, d)`` box coordinates of the quadrature points.
    indices : ndarray
        Resampled quadrature indices.
    """

    weights: FloatArray
    log_likelihoods: FloatArray
    points: FloatArray
    indices: NDArray[np.intp]

    @property
    def samples(self) -> FloatArray:
        """``(count, d)`` resampled box coordinates."""
        return self.points[self.indices]

    @property
    def effective_sample_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


@dataclass(frozen=True, slots=True, kw_only=True)
class NestedRun:
    """Everything a nested-sampling run produced."""

    evidence: EvidenceResult
    posterior: SimulatedPosterior
    quadrature: list[QuadraturePoint]
    sequences: list[AbscissaSequence]
    iterations: int
    total_iterations: int
    n_evaluations: int
    n_maxima: int
    used_mcmc: bool
    discarded_chains: int
    acceptance_history: list[float] = field(default_factory=list)


def relative_entropy(weights: ArrayLike, log_likelihoods: ArrayLike, log_evidence: float) -> float:
    """
    Σ P_i·(ln L_i - ln Z) in nats, over the points with nonzero weight.

    Examples
    --------
    >>> relative_entropy([0.5, 0.5], [0.0, 0.0], 0.0)
    0.0
    """
    p = np.asarray(weights, dtype=np.float64)
    ll = np.asarray(log_likelihoods, dtype=np.float64)
    mask = p > 0
    return float(np.sum(p[mask] * (ll[mask] - log_evidence)))


def simulate_posterior(
    quadrature: Sequence[QuadraturePoint],
    abscissa: AbscissaSequence,
    log_evidence: float,
    count: int,
    *,
    rng: np.random.Generator,
) -> SimulatedPosterior:
    """
    Assign posterior probabilities to the quadrature points and resample.

    P_i = exp(ln L_i + ln w_i - ln Z); ``count`` indices are drawn with
    replacement according to P_i.

    Parameters
    ----------
    quadrature : Sequence[QuadraturePoint]
        Removed samples followed by the final live samples.
    abscissa : AbscissaSequence
        The sequence the quadrature was accumulated with.
    log_evidence : float
        ln Z of that sequence.
    count : int
        Number of resampled points.
    rng : numpy.random.Generator
        Resampling stream.

    Raises
    ------
    ValueError
        If the quadrature and abscissa lengths disagree.
    DegenerateWeightsError
        If every weight underflows to zero.
    """
    log_w = abscissa.log_weights()
    if len(log_w) != len(quadrature):
        raise ValueError(
            f"Quadrature has {len(quadrature)} points but the abscissa sequence gives "
            f"{len(log_w)} weights"
        )
    ll = np.array([q.log_likelihood for q in quadrature], dtype=np.float64)
    with np.errstate(invalid="ignore"):
        weights = np.exp(ll + log_w - log_evidence)
    weights = np.where(np.isfinite(weights), weights, 0.0)
    total = weights.sum()
    if not total > 0:
        raise DegenerateWeightsError(
            f"All {len(weights)} posterior weights underflow at ln Z = {log_evidence:.6g}"
        )
    points = np.array([q.x for q in quadrature], dtype=np.float64)
    indices = rng.choice(len(weights), size=count, replace=True, p=weights / total)
    return SimulatedPosterior(weights, ll, points, np.asarray(indices, dtype=np.intp))


@dataclass(slots=True)
class _Accumulator:
    """Running ln Z and information H over one abscissa sequence."""

    log_z: float = -math.inf
    h: float = 0.0
    log_t_prev: float = 0.0
    n: int = 0

    def add(self, log_likelihood: float, log_t: float) -> None:
        log_w = self.log_t_prev + math.log1p(-math.exp(log_t - self.log_t_prev))
        self.log_t_prev = log_t
        self.n += 1
        log_wt = log_likelihood + log_w
        if log_wt == -math.inf:
            return
        log_z_new = float(np.logaddexp(self.log_z, log_wt))
        carried = 0.0
        if self.log_z > -math.inf:
            carried = math.exp(self.log_z - log_z_new) * (self.h + self.log_z)
        self.h = math.exp(log_wt - log_z_new) * log_likelihood + carried - log_z_new
        self.log_z = log_z_new

    def terminated(self, size: int, entropy_floor: float) -> bool:
        return self.n >= size and self.n > 2 * size * max(self.h, entropy_floor)

    def state(self) -> dict[str, Any]:
        return {"log_z": self.log_z, "h": self.h, "log_t_prev": self.log_t_prev, "n": self.n}


class _PointStore:
    """Every sample ever created, with birth and death iterations."""

    def __init__(self, dim: int, capacity: int = 1024) -> None:
        self.n = 0
        self.x = np.zeros((capacity, dim))
        self.ll = np.zeros(capacity)
        self.u = np.zeros(capacity)
        self.birth = np.zeros(capacity, dtype=np.int64)
        self.death = np.full(capacity, -1, dtype=np.int64)

    def _grow(self) -> None:
        extra = len(self.ll)
        self.x = np.concatenate([self.x, np.zeros_like(self.x[:extra])])
        self.ll = np.concatenate([self.ll, np.zeros(extra)])
        self.u = np.concatenate([self.u, np.zeros(extra)])
        self.birth = np.concatenate([self.birth, np.zeros(extra, dtype=np.int64)])
        self.death = np.concatenate([self.death, np.full(extra, -1, dtype=np.int64)])

    def append(self, x: FloatArray, ll: float, u: float, birth: int) -> int:
        if self.n == len(self.ll):
            self._grow()
        i = self.n
        self.x[i], self.ll[i], self.u[i], self.birth[i] = x, ll, u, birth
        self.n += 1
        return i

    def alive_at(self, iteration: int) -> NDArray[np.intp]:
        """Store indices of the live set after ``iteration``, ascending in (ll, u)."""
        birth, death = self.birth[: self.n], self.death[: self.n]
        idx = np.flatnonzero((birth <= iteration) & ((death < 0) | (death > iteration)))
        order = np.lexsort((self.u[idx], self.ll[idx]))
        return idx[order]

    def to_arrays(self) -> dict[str, NDArray[Any]]:
        n = self.n
        return {
            "store_x": self.x[:n],
            "store_ll": self.ll[:n],
            "store_u": self.u[:n],
            "store_birth": self.birth[:n],
            "store_death": self.death[:n],
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, NDArray[Any]]) -> "_PointStore":
        x = arrays["store_x"]
        store = cls(x.shape[1], capacity=max(1024, 2 * len(x)))
        store.n = len(x)
        store.x[: store.n] = x
        store.ll[: store.n] = arrays["store_ll"]
        store.u[: store.n] = arrays["store_u"]
        store.birth[: store.n] = arrays["store_birth"]
        store.death[: store.n] = arrays["store_death"]
        return store


class _Replay:
    """One replayed abscissa sequence over the stored likelihoods."""

    def __init__(self, size: int, rng: np.random.Generator, entropy_floor: float) -> None:
        self.size = size
        self.pool = AbscissaPool(size, rng)
        self.acc = _Accumulator()
        self.log_t: list[float] = []
        self.entropy_floor = entropy_floor

    def advance(self, dead_ll: FloatArray) -> bool:
        """Consume stored likelihoods until terminated; False if they ran out."""
        while not self.acc.terminated(self.size, self.entropy_floor):
            i = self.acc.n
            if i >= len(dead_ll):
                return False
            log_t = self.pool.next()
            self.log_t.append(log_t)
            self.acc.add(float(dead_ll[i]), log_t)
        return True


class _NestedLoop:
    """State of the main loop; checkpointable at iteration boundaries."""

    def __init__(
        self,
        posterior: PosteriorDef,
        params: RunParams,
        seed: int,
        *,
        executor: ThreadPoolExecutor | None,
        checkpoint: Path | None,
    ) -> None:
        self.posterior = posterior
        self.params = params
        self.seed = int(seed)
        self.size = params.size_sample_pool
        self.streams = RunStreams(self.seed)
        self.executor = executor
        self.checkpoint = checkpoint
        self.sampler = ConstrainedSampler(
            posterior, params, self.streams.constrained, executor=executor
        )
        self.store = _PointStore(posterior.dim)
        self.live = np.zeros(self.size, dtype=np.intp)
        self.dead: list[int] = []
        self.log_t: list[float] = []
        self.abscissa = AbscissaPool(self.size, self.streams.abscissa)
        self.acc = _Accumulator()
        self.maxima = SeedSet.empty(posterior.dim)
        self.iteration = 0
        self.evaluation_offset = 0
        self.last_checkpoint: Path | None = None

    def initialize(self, budget: SeedBudget | None) -> None:
        rng = self.streams.pool
        lower, upper = self.posterior.lower, self.posterior.upper
        xs = rng.uniform(lower, upper, size=(self.size, self.posterior.dim))
        us = rng.random(self.size)
        if self.executor is not None:
            lls = list(self.executor.map(self.posterior.log_likelihood, xs))
        else:
            lls = [self.posterior.log_likelihood(x) for x in xs]
        for i, (x, ll, u) in enumerate(zip(xs, lls, us, strict=True)):
            self.live[i] = self.store.append(x, _finite(ll), float(u), 0)

        if budget is not None:
            seeds = find_seeds(
                self.posterior,
                budget,
                self.streams.swarm,
                pool=self._live_seeds(self.live),
                executor=self.executor,
            )
            self.maxima = seeds.maxima
        logger.info(
            "nested_initialized: live=%d, maxima=%d, dim=%d",
            self.size,
            len(self.maxima),
            self.posterior.dim,
        )

    def _live_seeds(self, members: NDArray[np.intp]) -> SeedSet:
        s = self.store
        return SeedSet.from_pool(s.x[members], s.ll[members], s.u[members])

    def step(self) -> None:
        s = self.store
        live = self.live
        worst_pos = int(np.lexsort((s.u[live], s.ll[live]))[0])
        worst = int(live[worst_pos])
        log_likelihood = float(s.ll[worst])
        if self.dead and log_likelihood < s.ll[self.dead[-1]]:
            raise SamplerError(
                f"Likelihood sequence decreased at iteration {self.iteration + 1}: "
                f"{log_likelihood:.6g} < {s.ll[self.dead[-1]]:.6g}"
            )
        constraint = Constraint(log_likelihood, float(s.u[worst]))

        log_t = self.abscissa.next()
        self.iteration += 1
        s.death[worst] = self.iteration
        self.dead.append(worst)
        self.log_t.append(log_t)
        self.acc.add(log_likelihood, log_t)

        self.maxima = evict_seeds(self.maxima, constraint)
        others = np.delete(live, worst_pos)
        seeds = self._live_seeds(others).merge(self.maxima)
        try:
            draw = self.sampler.sample(constraint, seeds)
        except ConstraintExhaustedError as e:
            raise ConstraintExhaustedError(
                f"Iteration {self.iteration}: {e}", checkpoint=self.last_checkpoint
            ) from e
        live[worst_pos] = s.append(draw.x, draw.log_likelihood, draw.tiebreak, self.iteration)

        if self.iteration % _PROGRESS_EVERY == 0:
            logger.info(
                "nested_progress: iteration=%d, log_z=%.6g, entropy=%.4g, mcmc=%s",
                self.iteration,
                self.acc.log_z,
                self.acc.h,
                self.sampler.using_mcmc,
            )

    def run_main(self) -> int:
        floor = self.params.entropy_floor
        every = self.params.checkpoint_every
        while not self.acc.terminated(self.size, floor):
            self.step()
            if every and self.checkpoint is not None and self.iteration % every == 0:
                self.save()
        if self.acc.h < floor:
            logger.warning(
                "entropy_floor_active: entropy=%.4g, floor=%.4g, iterations=%d",
                self.acc.h,
                floor,
                self.iteration,
            )
        logger.info(
            "nested_main_finished: iterations=%d, log_z=%.6g, entropy=%.4g",
            self.iteration,
            self.acc.log_z,
            self.acc.h,
        )
        return self.iteration

    def extend(self, count: int) -> None:
        logger.debug("nested_extending: from=%d, count=%d", self.iteration, count)
        for _ in range(count):
            self.step()

    def dead_log_likelihoods(self) -> FloatArray:
        return self.store.ll[np.asarray(self.dead, dtype=np.intp)]

    def quadrature(self, iterations: int) -> list[QuadraturePoint]:
        """Removed samples up to ``iterations`` followed by the live set then."""
        s = self.store
        members = [*self.dead[:iterations], *self.store.alive_at(iterations)]
        return [
            QuadraturePoint(float(s.ll[k]), float(s.u[k]), s.x[k].copy(), i)
            for i, k in enumerate(members)
        ]

    def evidence_of(self, log_t: Sequence[float]) -> tuple[AbscissaSequence, float, FloatArray]:
        n = len(log_t)
        sequence = AbscissaSequence(np.asarray(log_t, dtype=np.float64), self.size)
        members = np.concatenate(
            [np.asarray(self.dead[:n], dtype=np.intp), self.store.alive_at(n)]
        )
        ll = self.store.ll[members]
        return sequence, sequence.log_evidence(ll), ll

    def n_evaluations(self) -> int:
        return self.evaluation_offset + self.posterior.n_evaluations

    def save(self) -> None:
        if self.checkpoint is None:
            return
        arrays = {
            **self.store.to_arrays(),
            "live": self.live,
            "dead": np.asarray(self.dead, dtype=np.int64),
            "log_t": np.asarray(self.log_t, dtype=np.float64),
            "abscissa_pool": self.abscissa.log_values,
            "maxima_points": self.maxima.points,
            "maxima_ll": self.maxima.log_likelihoods,
        }
        meta = {
            "seed": self.seed,
            "size_sample_pool": self.size,
            "dim": self.posterior.dim,
            "iteration": self.iteration,
            "accumulator": self.acc.state(),
            "streams": self.streams.state(),
            "sampler": self.sampler.state(),
            "n_evaluations": self.n_evaluations(),
        }
        self.last_checkpoint = save_checkpoint(self.checkpoint, arrays, meta)

    def restore(self, path: Path) -> None:
        arrays, meta = load_checkpoint(path)
        validate_checkpoint(
            meta, seed=self.seed, size_sample_pool=self.size, dim=self.posterior.dim
        )
        self.store = _PointStore.from_arrays(arrays)
        self.live = np.asarray(arrays["live"], dtype=np.intp).copy()
        self.dead = [int(k) for k in arrays["dead"]]
        self.log_t = [float(v) for v in arrays["log_t"]]
        self.streams.restore(meta["streams"])
        self.abscissa = AbscissaPool(self.size, self.streams.abscissa, arrays["abscissa_pool"])
        self.acc = _Accumulator(**meta["accumulator"])
        self.sampler.restore(meta["sampler"])
        self.maxima = SeedSet.from_maxima(
            arrays["maxima_points"].reshape(-1, self.posterior.dim), arrays["maxima_ll"]
        )
        self.iteration = int(meta["iteration"])
        self.evaluation_offset = int(meta["n_evaluations"]) - self.posterior.n_evaluations
        self.last_checkpoint = path
        logger.info("nested_resumed: iteration=%d, path=%s", self.iteration, path)


def _finite(value: float) -> float:
    return value if not math.isnan(value) else -math.inf


def run_nested(
    posterior: PosteriorDef,
    params: RunParams,
    seed: int,
    *,
    count: int = 1800,
    budget: SeedBudget | None = None,
    checkpoint: str | Path | None = None,
    resume: bool = False,
) -> NestedRun:
    """
    Run nested sampling and simulate the posterior.

    Parameters
    ----------
    posterior : PosteriorDef
        Box prior and likelihood.
    params : RunParams
        Run parameters.
    seed : int
        Run seed; every random stream derives from it.
    count : int, optional
        Number of resampled posterior points. Default 1800.
    budget : SeedBudget | None, optional
        Maxima search before the main loop; None skips it.
    checkpoint : str | Path | None, optional
        Checkpoint file, written every ``params.checkpoint_every`` iterations.
    resume : bool, optional
        Continue from ``checkpoint`` instead of starting afresh.

    Returns
    -------
    NestedRun
        Evidence statistics, simulated posterior and the main quadrature.

    Raises
    ------
    ConstraintExhaustedError
        If constrained sampling gives up; carries the last checkpoint path.
    ArtifactError
        If resuming from a missing or mismatching checkpoint.
    """
    checkpoint_path = Path(checkpoint) if checkpoint is not None else None
    if resume and checkpoint_path is None:
        raise ValueError("resume=True needs a checkpoint path")

    executor = ThreadPoolExecutor(max_workers=params.workers) if params.workers > 1 else None
    try:
        loop = _NestedLoop(
            posterior, params, seed, executor=executor, checkpoint=checkpoint_path
        )
        if resume and checkpoint_path is not None:
            loop.restore(checkpoint_path)
        else:
            loop.initialize(budget)

        iterations = loop.run_main()
        main_sequence, main_log_z, _ = loop.evidence_of(loop.log_t[:iterations])

        replays = [
            _Replay(loop.size, g, params.entropy_floor)
            for g in loop.streams.replay_generators(params.num_evidence_samples - 1)
        ]
        pending = replays
        while pending:
            dead_ll = loop.dead_log_likelihoods()
            if executor is not None:
                finished = list(executor.map(lambda r: r.advance(dead_ll), pending))
            else:
                finished = [r.advance(dead_ll) for r in pending]
            pending = [r for r, done in zip(pending, finished, strict=True) if not done]
            if pending:
                loop.extend(loop.size)

        sequences = [main_sequence]
        log_evidences = [main_log_z]
        for replay in replays:
            sequence, log_z, _ = loop.evidence_of(replay.log_t)
            sequences.append(sequence)
            log_evidences.append(log_z)

        quadrature = loop.quadrature(iterations)
        posterior_sample = simulate_posterior(
            quadrature, main_sequence, main_log_z, count, rng=loop.streams.resample
        )
        entropy = relative_entropy(
            posterior_sample.weights, posterior_sample.log_likelihoods, main_log_z
        )
        evidence = EvidenceResult.from_sequences(
            log_evidences, entropy=entropy, quadrature_size=len(quadrature)
        )
    finally:
        if executor is not None:
            executor.shutdown()

    logger.info(
        "nested_finished: log_z=%.6g, two_sigma=%.3g, entropy=%.4g, evaluations=%d",
        evidence.log_evidence_mean,
        evidence.log_evidence_2sigma,
        evidence.entropy,
        loop.n_evaluations(),
    )
    return NestedRun(
        evidence=evidence,
        posterior=posterior_sample,
        quadrature=quadrature,
        sequences=sequences,
        iterations=iterations,
        total_iterations=loop.iteration,
        n_evaluations=loop.n_evaluations(),
        n_maxima=len(loop.maxima),
        used_mcmc=loop.sampler.using_mcmc,
        discarded_chains=loop.sampler.discarded_chains,
        acceptance_history=list(loop.sampler.scale.history),
    )
