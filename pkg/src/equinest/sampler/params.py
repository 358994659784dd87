"""Run parameters of the nested sampler."""

from collections.abc import Mapping
from dataclasses import dataclass, fields
from typing import Any, Self

from equinest.exceptions import ValidationError

__all__ = ["MINIMAL_RUN_PARAMS", "RunParams"]

#: Smallest values that still give usable evidence estimates.
MINIMAL_RUN_PARAMS = {
    "size_sample_pool": 20,
    "num_evidence_samples": 12,
    "num_abi_failures": 0,
    "num_mcmc_jumps": 12,
}

_CAMEL_NAMES = {
    "sizeSamplePool": "size_sample_pool",
    "numEvidenceSamples": "num_evidence_samples",
    "numABIFailures": "num_abi_failures",
    "numMCMCJumps": "num_mcmc_jumps",
    "minAcceptedJumps": "min_accepted_jumps",
    "maxDiscardedChains": "max_discarded_chains",
    "checkpointEvery": "checkpoint_every",
    "entropyFloor": "entropy_floor",
    "targetAcceptance": "target_acceptance",
}


@dataclass(frozen=True, slots=True, kw_only=True)
class RunParams:
    """
    Nested-sampling run parameters.

    Parameters
    ----------
    size_sample_pool : int
        Number m of live prior samples. Default 150.
    num_evidence_samples : int
        Number of abscissa sequences used for the evidence statistics,
        including the main one. Default 36.
    num_abi_failures : int
        Failed ab-initio prior draws tolerated before switching permanently
        to constrained MCMC. Default 1000.
    num_mcmc_jumps : int
        Proposal attempts per MCMC chain. Default 20.
    min_accepted_jumps : int
        Chains with fewer accepted jumps are discarded. Default 3.
    max_discarded_chains : int
        Consecutive discarded chains before giving up. Default 100.
    checkpoint_every : int
        Iterations between checkpoints; 0 disables checkpoints.
    workers : int
        Threads for chain batches, swarm evaluations and replays. Default 1.
    entropy_floor : float
        Lower bound on the entropy in the termination test, in nats.
    target_acceptance : float
        Acceptance rate the proposal scale adapts toward. Default 0.234.

    Raises
    ------
    ValidationError
        If a value is below its minimum. All violations are reported together.
    """

    size_sample_pool: int = 150
    num_evidence_samples: int = 36
    num_abi_failures: int = 1000
    num_mcmc_jumps: int = 20
    min_accepted_jumps: int = 3
    max_discarded_chains: int = 100
    checkpoint_every: int = 0
    workers: int = 1
    entropy_floor: float = 1.0
    target_acceptance: float = 0.234

    def __post_init__(self) -> None:
        errors = [
            f"{name} must be >= {minimum}, got {getattr(self, name)}"
            for name, minimum in MINIMAL_RUN_PARAMS.items()
            if getattr(self, name) < minimum
        ]
        if not 1 <= self.min_accepted_jumps <= self.num_mcmc_jumps:
            errors.append(
                f"min_accepted_jumps must lie in [1, num_mcmc_jumps], got {self.min_accepted_jumps}"
            )
        if self.max_discarded_chains < 1:
            errors.append(f"max_discarded_chains must be >= 1, got {self.max_discarded_chains}")
        if self.checkpoint_every < 0:
            errors.append(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if self.workers < 1:
            errors.append(f"workers must be >= 1, got {self.workers}")
        if not self.entropy_floor > 0:
            errors.append(f"entropy_floor must be > 0, got {self.entropy_floor}")
        if not 0 < self.target_acceptance < 1:
            errors.append(f"target_acceptance must lie in (0, 1), got {self.target_acceptance}")
        if errors:
            error_list = "\n  ".join(errors)
            raise ValidationError(f"{len(errors)} error(s) in run parameters:\n  {error_list}")

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> Self:
        """
        Build from a mapping using either the camelCase or snake_case names.

        Raises
        ------
        ValidationError
            On unknown keys or values below their minimum.
        """
        known = {f.name for f in fields(cls)}
        values: dict[str, Any] = {}
        unknown: list[str] = []
        for key, value in raw.items():
            name = _CAMEL_NAMES.get(key, key)
            if name not in known:
                unknown.append(key)
            else:
                values[name] = value
        if unknown:
            raise ValidationError(f"Unknown run parameter(s): {', '.join(sorted(unknown))}")
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        inverse = {v: k for k, v in _CAMEL_NAMES.items()}
        return {inverse.get(f.name, f.name): getattr(self, f.name) for f in fields(self)}
