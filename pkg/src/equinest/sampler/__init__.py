"""Nested sampling with optimal seeding and constrained adaptive MCMC."""

from equinest.sampler.checkpoint import load_checkpoint, save_checkpoint
from equinest.sampler.constrained import (
    AdaptiveScale,
    ConstrainedSampler,
    Constraint,
    Draw,
    SeedSet,
    evict_seeds,
    sample_constrained_prior,
)
from equinest.sampler.nested import (
    AbscissaPool,
    AbscissaSequence,
    EvidenceResult,
    NestedRun,
    QuadraturePoint,
    SimulatedPosterior,
    relative_entropy,
    run_nested,
    simulate_posterior,
)
from equinest.sampler.params import MINIMAL_RUN_PARAMS, RunParams
from equinest.sampler.posterior import BoxPosterior, PosteriorDef
from equinest.sampler.seeding import SeedBudget, find_seeds
from equinest.sampler.streams import RunStreams

__all__ = [
    "MINIMAL_RUN_PARAMS",
    "AbscissaPool",
    "AbscissaSequence",
    "AdaptiveScale",
    "BoxPosterior",
    "ConstrainedSampler",
    "Constraint",
    "Draw",
    "EvidenceResult",
    "NestedRun",
    "PosteriorDef",
    "QuadraturePoint",
    "RunParams",
    "RunStreams",
    "SeedBudget",
    "SeedSet",
    "SimulatedPosterior",
    "evict_seeds",
    "find_seeds",
    "load_checkpoint",
    "relative_entropy",
    "run_nested",
    "sample_constrained_prior",
    "save_checkpoint",
    "simulate_posterior",
]
