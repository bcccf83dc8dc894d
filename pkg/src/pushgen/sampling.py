"""Reproducible random streams and the two primitive samplers.

A :class:`Stream` is a plain value (a tuple of entropy words).  Every call that
consumes a stream builds a fresh counter-based generator from it, so passing
the same stream twice gives the same draws, and streams can be shipped to
worker processes without sharing state.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidDimension

__all__ = [
    "SeedPolicy",
    "Stream",
    "as_generator",
    "child_stream",
    "sample_latent",
    "sample_sphere_direction",
]

_MASK64 = (1 << 64) - 1


def _tag_word(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


@dataclass(frozen=True)
class Stream:
    key: tuple[int, ...]

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.key)))

    def child(self, tag: str, index: int = 0) -> "Stream":
        return Stream(self.key + (int(index) & _MASK64, _tag_word(tag)))


@dataclass(frozen=True)
class SeedPolicy:
    """Derives independent streams from ``(master_seed, index, tag)``."""

    master_seed: int

    def stream(self, index: int = 0, tag: str = "") -> Stream:
        return Stream((int(self.master_seed) & _MASK64, int(index) & _MASK64, _tag_word(tag)))


def as_generator(stream) -> np.random.Generator:
    """Accept a :class:`Stream`, a numpy ``Generator`` or an int seed."""
    if isinstance(stream, Stream):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, (int, np.integer)):
        return SeedPolicy(int(stream)).stream().generator()
    raise TypeError(f"cannot build a random generator from {type(stream).__name__}")


def child_stream(stream, tag: str, index: int = 0):
    """Derive a sub-stream; raw generators are split with ``spawn``."""
    if isinstance(stream, Stream):
        return stream.child(tag, index)
    if isinstance(stream, (int, np.integer)):
        return SeedPolicy(int(stream)).stream(index, tag)
    if isinstance(stream, np.random.Generator):
        return stream.spawn(1)[0]
    raise TypeError(f"cannot derive a stream from {type(stream).__name__}")


def sample_latent(n: int, d: int, stream) -> np.ndarray:
    """Draw ``n`` iid points from the uniform law on ``[0, 1]^d``.

    Returns an ``(n, d)`` array.
    """
    if n < 1 or d < 1:
        raise InvalidDimension(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    return as_generator(stream).random((n, d))


def sample_sphere_direction(D: int, stream, size: int | None = None) -> np.ndarray:
    """Uniform direction on the unit sphere of R^D (normalized Gaussian).

    With ``size`` given, returns a ``(size, D)`` array of independent directions.
    """
    if D < 1:
        raise InvalidDimension(f"need D >= 1, got {D}")
    rng = as_generator(stream)
    shape = (1 if size is None else size, D)
    z = rng.standard_normal(shape)
    norms = np.linalg.norm(z, axis=1)
    # zero-norm draws have probability zero; redraw defensively
    while np.any(norms == 0):
        bad = norms == 0
        z[bad] = rng.standard_normal((int(bad.sum()), D))
        norms = np.linalg.norm(z, axis=1)
    v = z / norms[:, None]
    return v[0] if size is None else v
