"""Probability measures the distance routines accept."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidSpec, UnnormalizedMeasure
from .sampling import as_generator

WEIGHT_TOL = 1e-12


class DiscreteMeasure:
    """Finitely supported measure: ``support`` is ``(n, D)``, ``weights`` sum to one."""

    def __init__(self, support, weights=None):
        support = np.asarray(support, dtype=float)
        if support.ndim == 1:
            support = support[:, None]
        self.support = check_array(support, ensure_2d=True, dtype=float)
        n = len(self.support)
        if weights is None:
            self.weights = np.full(n, 1.0 / n)
            self.uniform_weights = True
        else:
            w = np.ravel(np.asarray(weights, dtype=float))
            if w.shape != (n,):
                raise InvalidSpec(f"{n} support points but {w.size} weights")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise UnnormalizedMeasure("weights must be finite and nonnegative")
            if abs(w.sum() - 1.0) > WEIGHT_TOL:
                raise UnnormalizedMeasure(f"weights sum to {w.sum()!r}, not 1")
            self.weights = w
            self.uniform_weights = bool(np.all(w == w[0]))

    @classmethod
    def empirical(cls, points) -> "DiscreteMeasure":
        return cls(points)

    @property
    def size(self) -> int:
        return len(self.support)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.support

    def __repr__(self):
        return f"DiscreteMeasure(n={self.size}, D={self.dim})"


@dataclass(frozen=True)
class UniformInterval:
    """Uniform law on ``[lo, hi]`` in one dimension."""

    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi < self.lo:
            raise InvalidSpec(f"bad interval [{self.lo}, {self.hi}]")

    dim = 1

    def sample(self, n: int, stream) -> np.ndarray:
        rng = as_generator(stream)
        return (self.lo + (self.hi - self.lo) * rng.random(n))[:, None]

    def mean(self) -> np.ndarray:
        return np.array([0.5 * (self.lo + self.hi)])


UNIFORM = UniformInterval(0.0, 1.0)


def as_measure(obj) -> DiscreteMeasure | UniformInterval:
    if isinstance(obj, (DiscreteMeasure, UniformInterval)):
        return obj
    return DiscreteMeasure(obj)
