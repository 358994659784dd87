"""Named random streams derived from a single run seed."""

from typing import Any

import numpy as np

__all__ = ["STREAM_NAMES", "RunStreams", "child_generators"]

STREAM_NAMES = ("pool", "abscissa", "constrained", "swarm", "replay", "resample")


class RunStreams:
    """
    Independent PCG64 generators for every stochastic part of a run.

    ``SeedSequence(seed).spawn`` gives one child per name, so the streams do
    not depend on how often the others are used. Generator states are plain
    dictionaries and can be stored in checkpoints.

    Parameters
    ----------
    seed : int
        Run seed.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        root = np.random.SeedSequence(self.seed)
        children = root.spawn(len(STREAM_NAMES))
        self._sequences = dict(zip(STREAM_NAMES, children, strict=True))
        self._generators = {
            name: np.random.default_rng(seq) for name, seq in self._sequences.items()
        }

    def __getitem__(self, name: str) -> np.random.Generator:
        return self._generators[name]

    @property
    def pool(self) -> np.random.Generator:
        return self._generators["pool"]

    @property
    def abscissa(self) -> np.random.Generator:
        return self._generators["abscissa"]

    @property
    def constrained(self) -> np.random.Generator:
        return self._generators["constrained"]

    @property
    def swarm(self) -> np.random.Generator:
        return self._generators["swarm"]

    @property
    def resample(self) -> np.random.Generator:
        return self._generators["resample"]

    def replay_generators(self, count: int) -> list[np.random.Generator]:
        """``count`` independent generators for the replayed abscissa sequences."""
        return [
            np.random.default_rng(seq) for seq in self._sequences["replay"].spawn(count)
        ]

    def state(self) -> dict[str, Any]:
        """JSON-serializable bit-generator states."""
        return {name: gen.bit_generator.state for name, gen in self._generators.items()}

    def restore(self, state: dict[str, Any]) -> None:
        """Restore generator states captured by ``state``."""
        for name, gen_state in state.items():
            self._generators[name].bit_generator.state = gen_state


def child_generators(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """
    Derive ``count`` generators from integers drawn on ``rng``.

    Only ``rng``'s own state advances, so a checkpointed state reproduces the
    children exactly.
    """
    seeds = rng.integers(0, 2**63 - 1, size=count, dtype=np.int64)
    return [np.random.default_rng(int(s)) for s in seeds]
