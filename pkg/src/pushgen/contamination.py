"""Synthetic data under the noisy, adversarially contaminated data model.

Inliers are ``g(U_i) + xi_i`` with ``E|xi_i| <= sigma``; ``floor(eps * n)``
points are outliers placed after all inliers have been drawn.  The Huber
variants (deterministic proportion and i.i.d. mixture) are also provided.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import HypothesisViolation, InvalidDimension, InvalidSpec
from .generators import GeneratorSpec, generator_from_mapping, lower_bound_generator
from .measures import UniformInterval
from .sampling import Stream, as_generator, child_stream, sample_latent, sample_sphere_direction

NOISE_MODELS = ("sphere-fixed", "gaussian-scaled", "uniform-1d")


@dataclass(frozen=True)
class HuberMixture:
    """Outliers drawn i.i.d. from a contaminating law ``Q``.

    ``Q`` is a :class:`GeneratorSpec` (its push-forward law) or a 1-D
    :class:`UniformInterval`.
    """

    Q: object


@dataclass(frozen=True)
class CustomPoints:
    """Outliers supplied by a callable ``(inlier_points, n_out, rng) -> (n_out, D)``.

    This is the hook for adversaries that look at the realized inliers.
    """

    place: Callable


def _check_law(Q, D):
    if isinstance(Q, GeneratorSpec):
        if Q.D != D:
            raise InvalidSpec(f"contaminating generator has D={Q.D}, data has D={D}")
    elif isinstance(Q, UniformInterval):
        if D != 1:
            raise InvalidSpec("an interval law can only contaminate 1-D data")
    else:
        raise InvalidSpec(f"contaminating law must be a GeneratorSpec or UniformInterval, got {type(Q).__name__}")


def _draw_law(Q, n, stream):
    if isinstance(Q, GeneratorSpec):
        return Q.sample(n, stream) if n else np.empty((0, Q.D))
    return Q.sample(n, stream) if n else np.empty((0, 1))


@dataclass(frozen=True)
class DataSpec:
    generator: GeneratorSpec
    sigma: float = 0.0
    epsilon: float = 0.0
    noise_model: str = "sphere-fixed"
    outlier_policy: object = "corner"
    joint_sampler: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.sigma >= 0:
            raise InvalidSpec(f"sigma must be >= 0, got {self.sigma}")
        if not 0 <= self.epsilon <= 1:
            raise InvalidSpec(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.noise_model not in NOISE_MODELS:
            raise InvalidSpec(f"unknown noise model {self.noise_model!r}")
        policy = self.outlier_policy
        if isinstance(policy, HuberMixture):
            _check_law(policy.Q, self.generator.D)
        elif not (policy == "corner" or isinstance(policy, CustomPoints)):
            raise InvalidSpec(f"unknown outlier policy {policy!r}")


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    inlier_mask: np.ndarray
    latents: np.ndarray
    noise: np.ndarray
    sigma: float = 0.0
    epsilon: float = 0.0
    seed: str = ""

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def D(self) -> int:
        return self.points.shape[1]

    @property
    def inliers(self) -> np.ndarray:
        return self.points[self.inlier_mask]

    def to_csv(self) -> str:
        return dataset_to_csv(self)


def outlier_count(epsilon: float, n: int) -> int:
    # guard against eps * n landing just below an integer in floating point
    return min(n, int(math.floor(epsilon * n + 1e-9)))


def _noise(model, sigma, n, D, stream):
    if sigma == 0 or n == 0:
        return np.zeros((n, D))
    rng = as_generator(stream)
    if model == "sphere-fixed":
        return sigma * sample_sphere_direction(D, rng, size=n)
    if model == "gaussian-scaled":
        return sigma * rng.standard_normal((n, D)) / chi_mean(D)
    out = np.zeros((n, D))
    out[:, 0] = sigma * rng.random(n)
    return out


def chi_mean(D: int) -> float:
    """E|Z|_2 for a standard Gaussian vector in R^D."""
    return math.sqrt(2.0) * math.exp(math.lgamma((D + 1) / 2) - math.lgamma(D / 2))


def synthesize(spec: DataSpec, n: int, stream) -> Dataset:
    """Draw n points: inliers first, then ``floor(eps n)`` outliers at the end."""
    if n < 1:
        raise InvalidDimension("n must be >= 1")
    g = spec.generator
    n_out = outlier_count(spec.epsilon, n)
    n_in = n - n_out
    if spec.joint_sampler is not None:
        U, xi = spec.joint_sampler(n_in, child_stream(stream, "joint"))
        U, xi = np.asarray(U, float).reshape(n_in, g.d), np.asarray(xi, float).reshape(n_in, g.D)
    else:
        U = sample_latent(n_in, g.d, child_stream(stream, "latent")) if n_in else np.empty((0, g.d))
        xi = _noise(spec.noise_model, spec.sigma, n_in, g.D, child_stream(stream, "noise"))
    inliers = (g.evaluate(U) if n_in else np.empty((0, g.D))) + xi

    policy = spec.outlier_policy
    if n_out == 0:
        outliers = np.empty((0, g.D))
    elif policy == "corner":
        outliers = np.ones((n_out, g.D))
    elif isinstance(policy, HuberMixture):
        outliers = _draw_law(policy.Q, n_out, child_stream(stream, "outliers"))
    else:
        outliers = np.asarray(policy.place(inliers.copy(), n_out, as_generator(child_stream(stream, "outliers"))),
                              dtype=float).reshape(n_out, g.D)
    if not np.all(np.isfinite(outliers)):
        raise InvalidSpec("outliers must be finite")

    points = np.vstack([inliers, outliers])
    mask = np.zeros(n, dtype=bool)
    mask[:n_in] = True
    return Dataset(points, mask, U, xi, spec.sigma, spec.epsilon, _stream_label(stream))


def synthesize_huber(kind: str, g: GeneratorSpec, Q, epsilon: float, n: int, stream) -> Dataset:
    """Huber contamination: ``HDC`` places exactly floor(eps n) draws from Q at
    random positions, ``HC`` draws each point from Q with probability eps."""
    if kind not in ("HC", "HDC"):
        raise InvalidSpec(f"kind must be 'HC' or 'HDC', got {kind!r}")
    if n < 1:
        raise InvalidDimension("n must be >= 1")
    if not 0 <= epsilon <= 1:
        raise InvalidSpec(f"epsilon must lie in [0, 1], got {epsilon}")
    _check_law(Q, g.D)
    rng = as_generator(child_stream(stream, "huber-mask"))
    if kind == "HDC":
        from_q = np.zeros(n, dtype=bool)
        from_q[rng.permutation(n)[: outlier_count(epsilon, n)]] = True
    else:
        from_q = rng.random(n) < epsilon
    n_in = int((~from_q).sum())
    U = sample_latent(n_in, g.d, child_stream(stream, "latent")) if n_in else np.empty((0, g.d))
    points = np.empty((n, g.D))
    points[~from_q] = g.evaluate(U) if n_in else np.empty((0, g.D))
    points[from_q] = _draw_law(Q, int(from_q.sum()), child_stream(stream, "contamination"))
    return Dataset(points, ~from_q, U, np.zeros((n_in, g.D)), 0.0, epsilon, _stream_label(stream))


def lower_bound_instance(sigma: float, epsilon: float, n: int, stream, d: int = 1) -> Dataset:
    """Inliers (2U + 1)/4 + sigma * V e_1 with V ~ U[0,1]; floor(eps n) points at (1, ..., 1)."""
    if sigma > 0.5:
        raise HypothesisViolation(f"the construction requires sigma <= 1/2, got {sigma}")
    spec = DataSpec(lower_bound_generator(d), sigma, epsilon, "uniform-1d", "corner")
    return synthesize(spec, n, stream)


def _stream_label(stream) -> str:
    if isinstance(stream, Stream):
        return "-".join(str(k) for k in stream.key)
    if isinstance(stream, int):
        return str(stream)
    return ""


# ----------------------------------------------------------------- CSV
def dataset_to_csv(ds: Dataset) -> str:
    """One row per point: ``x_1..x_D,inlier``; ``#`` header lines carry metadata."""
    buf = io.StringIO()
    buf.write(f"# n={ds.n}\n# D={ds.D}\n# sigma={ds.sigma!r}\n# epsilon={ds.epsilon!r}\n# seed={ds.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x_{j + 1}" for j in range(ds.D)] + ["inlier"])
    for row, flag in zip(ds.points, ds.inlier_mask):
        w.writerow([repr(float(v)) for v in row] + [int(flag)])
    return buf.getvalue()


def dataset_from_csv(text: str) -> Dataset:
    meta = {}
    lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            lines.append(line)
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    D = len(header) - 1
    if header[-1] != "inlier" or header[:D] != [f"x_{j + 1}" for j in range(D)]:
        raise InvalidSpec(f"unexpected CSV header {header}")
    data = np.array([[float(v) for v in r[:D]] for r in body]).reshape(-1, D)
    mask = np.array([r[D] == "1" for r in body], dtype=bool)
    if "n" in meta and int(meta["n"]) != len(data):
        raise InvalidSpec(f"header says n={meta['n']} but {len(data)} rows follow")
    return Dataset(data, mask, np.empty((0, 0)), np.empty((0, D)),
                   float(meta.get("sigma", 0)), float(meta.get("epsilon", 0)), meta.get("seed", ""))


def dataspec_from_mapping(gen_section, data_section) -> DataSpec:
    """Build a DataSpec from ``[generator]`` and ``[data]`` config sections."""
    g = generator_from_mapping(gen_section)
    try:
        sigma = float(data_section.get("sigma", "0"))
        eps = float(data_section.get("epsilon", "0"))
    except ValueError as exc:
        raise InvalidSpec(f"data: {exc}") from None
    noise = data_section.get("noise_model", "sphere-fixed")
    policy = data_section.get("outlier_policy", "corner")
    if policy.startswith("huber-uniform"):
        lo, hi = (float(v) for v in policy.split(":")[1:3])
        policy = HuberMixture(UniformInterval(lo, hi))
    return DataSpec(g, sigma, eps, noise, policy)
