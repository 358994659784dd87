"""The interface the sampler needs from a posterior."""

import threading
from collections.abc import Callable
from typing import Protocol, runtime_checkable

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = ["BoxPosterior", "PosteriorDef"]


@runtime_checkable
class PosteriorDef(Protocol):
    """
    Uniform prior on a box with a log-likelihood.

    ``lower`` and ``upper`` bound the box; ``log_likelihood`` returns -inf
    for rejected points. Implementations must be safe to call from several
    threads.
    """

    lower: NDArray[np.float64]
    upper: NDArray[np.float64]

    @property
    def dim(self) -> int: ...

    @property
    def n_evaluations(self) -> int: ...

    def log_likelihood(self, x: ArrayLike) -> float: ...


class BoxPosterior:
    """
    ``PosteriorDef`` around a plain function of the box coordinates.

    Parameters
    ----------
    lower, upper : array_like
        Box bounds.
    fn : Callable
        Log-likelihood of a coordinate vector.

    Examples
    --------
    >>> post = BoxPosterior([0.0], [1.0], lambda x: 0.0)
    >>> post.log_likelihood([0.5])
    0.0
    """

    def __init__(
        self, lower: ArrayLike, upper: ArrayLike, fn: Callable[[NDArray[np.float64]], float]
    ) -> None:
        self.lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
        if self.lower.shape != self.upper.shape or np.any(self.upper <= self.lower):
            raise ValueError("Box needs lower < upper in every dimension")
        self._fn = fn
        self._lock = threading.Lock()
        self._evaluations = 0

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def n_evaluations(self) -> int:
        with self._lock:
            return self._evaluations

    def log_likelihood(self, x: ArrayLike) -> float:
        with self._lock:
            self._evaluations += 1
        return float(self._fn(np.asarray(x, dtype=np.float64)))
