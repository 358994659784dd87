"""
Locating posterior maxima to seed the constrained chains.

A particle swarm explores the whole box, then Hooke-Jeeves pattern search
(and optionally conjugate gradients) polishes the most promising points. The
distinct maxima found are added to the seed set next to the live pool.
"""

import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize

from equinest.sampler.constrained import SeedSet
from equinest.sampler.posterior import PosteriorDef

__all__ = ["SeedBudget", "find_seeds", "hooke_jeeves", "particle_swarm"]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

_HJ_INITIAL_STEP = 0.05
_CG_INVALID = 1.0e300


@dataclass(frozen=True, slots=True, kw_only=True)
class SeedBudget:
    """
    Effort spent on locating maxima.

    Parameters
    ----------
    enabled : bool
        If False, ``find_seeds`` returns the pool unchanged.
    swarm_size, swarm_iterations : int
        Particle swarm size and iteration count.
    polish_starts : int
        Number of points polished by local search.
    pattern_tolerance : float
        Hooke-Jeeves stops when its step (box-normalized) falls below this.
    max_polish_evaluations : int
        Evaluation budget per local search.
    conjugate_gradient : bool
        Also polish with conjugate gradients on finite-difference gradients.
    omega, phi_p, phi_g : float
        Swarm inertia, cognitive and social weights.
    dedup_distance : float
        Maxima closer than this in box-normalized coordinates are merged.
    """

    enabled: bool = True
    swarm_size: int = 30
    swarm_iterations: int = 60
    polish_starts: int = 8
    pattern_tolerance: float = 1.0e-9
    max_polish_evaluations: int = 4000
    conjugate_gradient: bool = False
    omega: float = 0.5
    phi_p: float = 0.5
    phi_g: float = 0.5
    dedup_distance: float = 1.0e-6


def _finite(value: float) -> float:
    return value if math.isfinite(value) else -math.inf


def _evaluate_many(
    fn: Callable[[FloatArray], float],
    points: FloatArray,
    executor: ThreadPoolExecutor | None,
) -> FloatArray:
    if executor is None:
        values = [fn(p) for p in points]
    else:
        values = list(executor.map(fn, points))
    return np.array([_finite(v) for v in values], dtype=np.float64)


def particle_swarm(
    fn: Callable[[FloatArray], float],
    lower: FloatArray,
    upper: FloatArray,
    budget: SeedBudget,
    rng: np.random.Generator,
    *,
    executor: ThreadPoolExecutor | None = None,
) -> tuple[FloatArray, FloatArray]:
    """
    Maximize ``fn`` over the box with a particle swarm.

    Velocities start uniform in ±|upper - lower| and positions are clipped to
    the box after every move.

    Returns
    -------
    tuple[ndarray, ndarray]
        Personal best positions ``(swarm_size, d)`` and their values.
    """
    n, d = budget.swarm_size, len(lower)
    span = np.abs(upper - lower)
    x = rng.uniform(lower, upper, size=(n, d))
    v = rng.uniform(-span, span, size=(n, d))
    fx = _evaluate_many(fn, x, executor)
    best_x, best_f = x.copy(), fx.copy()
    g = int(np.argmax(best_f))

    for _ in range(budget.swarm_iterations):
        rp = rng.uniform(size=(n, d))
        rg = rng.uniform(size=(n, d))
        v = (
            budget.omega * v
            + budget.phi_p * rp * (best_x - x)
            + budget.phi_g * rg * (best_x[g] - x)
        )
        x = np.clip(x + v, lower, upper)
        fx = _evaluate_many(fn, x, executor)
        improved = fx > best_f
        best_x[improved] = x[improved]
        best_f[improved] = fx[improved]
        g = int(np.argmax(best_f))

    logger.debug("swarm_finished: best=%.6g", best_f[g])
    return best_x, best_f


def hooke_jeeves(
    fn: Callable[[FloatArray], float],
    x0: FloatArray,
    lower: FloatArray,
    upper: FloatArray,
    *,
    tolerance: float = 1.0e-9,
    max_evaluations: int = 4000,
    step: float = _HJ_INITIAL_STEP,
) -> tuple[FloatArray, float]:
    """
    Maximize ``fn`` by Hooke-Jeeves pattern search inside the box.

    The search runs in box-normalized coordinates; the step halves whenever
    no exploratory move improves.

    Returns
    -------
    tuple[ndarray, float]
        Best point and value found.
    """
    width = upper - lower
    evaluations = 0

    def f(y: FloatArray) -> float:
        nonlocal evaluations
        evaluations += 1
        return _finite(fn(lower + np.clip(y, 0.0, 1.0) * width))

    def explore(base: FloatArray, f_base: float) -> tuple[FloatArray, float]:
        y, fy = base.copy(), f_base
        for i in range(len(y)):
            for delta in (step, -step):
                trial = y.copy()
                trial[i] = min(1.0, max(0.0, trial[i] + delta))
                if trial[i] == y[i]:
                    continue
                ft = f(trial)
                if ft > fy:
                    y, fy = trial, ft
                    break
        return y, fy

    base = np.clip((x0 - lower) / width, 0.0, 1.0)
    f_base = f(base)
    while step >= tolerance and evaluations < max_evaluations:
        y, fy = explore(base, f_base)
        if fy > f_base:
            # Pattern moves along the improving direction while they pay off.
            # A move shorter than half a step is rounding noise, not progress.
            while evaluations < max_evaluations:
                pattern = np.clip(y + (y - base), 0.0, 1.0)
                base, f_base = y, fy
                y, fy = explore(pattern, f(pattern))
                if not fy > f_base or np.max(np.abs(y - base)) < 0.5 * step:
                    break
        else:
            step /= 2.0
    return lower + base * width, f_base


def _conjugate_gradient(
    fn: Callable[[FloatArray], float],
    x0: FloatArray,
    lower: FloatArray,
    upper: FloatArray,
    max_evaluations: int,
) -> tuple[FloatArray, float]:
    width = upper - lower

    def objective(y: FloatArray) -> float:
        value = fn(lower + np.clip(y, 0.0, 1.0) * width)
        return -value if math.isfinite(value) else _CG_INVALID

    result = minimize(
        objective,
        np.clip((x0 - lower) / width, 0.0, 1.0),
        method="CG",
        jac="3-point",
        options={"maxiter": max(1, max_evaluations // (2 * len(x0) + 1))},
    )
    y = np.clip(result.x, 0.0, 1.0)
    return lower + y * width, _finite(fn(lower + y * width))


def _top(values: FloatArray, count: int) -> list[int]:
    order = np.argsort(-values, kind="stable")
    return [int(i) for i in order[:count] if math.isfinite(values[i])]


def find_seeds(
    posterior: PosteriorDef,
    budget: SeedBudget,
    rng: np.random.Generator,
    *,
    pool: SeedSet | None = None,
    executor: ThreadPoolExecutor | None = None,
) -> SeedSet:
    """
    Locate distinct posterior maxima and merge them with the live pool.

    Polishing starts from the swarm best, the best personal bests and the
    best pool members. A polished point is kept only if it strictly improves
    on its start.

    Parameters
    ----------
    posterior : PosteriorDef
        Box prior and likelihood.
    budget : SeedBudget
        Search effort.
    rng : numpy.random.Generator
        Swarm stream.
    pool : SeedSet | None, optional
        Live pool to merge with.
    executor : ThreadPoolExecutor | None, optional
        Parallel map for swarm evaluations.

    Returns
    -------
    SeedSet
        Pool members plus maxima (tie-breaker 1.0).
    """
    lower, upper = posterior.lower, posterior.upper
    pool = pool if pool is not None else SeedSet.empty(len(lower))
    if not budget.enabled:
        return pool

    fn = posterior.log_likelihood
    swarm_x, swarm_f = particle_swarm(fn, lower, upper, budget, rng, executor=executor)

    starts: list[tuple[FloatArray, float]] = []
    for i in _top(swarm_f, budget.polish_starts):
        starts.append((swarm_x[i], float(swarm_f[i])))
    if len(pool):
        for i in _top(pool.log_likelihoods, budget.polish_starts):
            starts.append((pool.points[i], float(pool.log_likelihoods[i])))
    starts.sort(key=lambda s: -s[1])
    starts = starts[: budget.polish_starts]

    width = upper - lower
    found_x: list[FloatArray] = []
    found_f: list[float] = []
    dropped = 0
    for x0, f0 in starts:
        x, fx = hooke_jeeves(
            fn,
            x0,
            lower,
            upper,
            tolerance=budget.pattern_tolerance,
            max_evaluations=budget.max_polish_evaluations,
        )
        if budget.conjugate_gradient:
            x_cg, f_cg = _conjugate_gradient(fn, x, lower, upper, budget.max_polish_evaluations)
            if f_cg > fx:
                x, fx = x_cg, f_cg
        if not math.isfinite(fx):
            dropped += 1
            continue
        if not fx > f0:
            continue
        y = (x - lower) / width
        if any(np.linalg.norm(y - (p - lower) / width) < budget.dedup_distance for p in found_x):
            continue
        found_x.append(x)
        found_f.append(fx)

    if dropped:
        logger.warning("non_finite_seeds_dropped: count=%d", dropped)
    logger.info("seeds_found: maxima=%d, starts=%d", len(found_x), len(starts))
    if not found_x:
        return pool
    return pool.merge(SeedSet.from_maxima(np.array(found_x), found_f))
