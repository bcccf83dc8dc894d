"""Integral probability metrics between measures on R^D.

Exact Wasserstein-1 (CDF integral in 1-D, assignment or transport LP in
general), a cosine/sine dictionary lower bound for smoothness classes, the
first-axis projection class, and a brute-force dual LP used as a test oracle.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from ._assignment import assignment
from .exceptions import CapExceeded, DimensionMismatch, InvalidSpec
from .measures import DiscreteMeasure, UniformInterval, as_measure
from .sampling import as_generator, child_stream, sample_latent

KINDS = (
    "w1-exact-1d",
    "w1-assignment",
    "w1-transport-lp",
    "walpha-dictionary",
    "projection-first-axis",
    "brute-lp-oracle",
)

REPLICATION_CAP = 4096
LP_VARIABLE_CAP = 250_000
MAX_ATOMS = 200_000


@dataclass(frozen=True)
class IpmSpec:
    """Discriminator class descriptor.

    ``alpha``, ``L_F`` and ``K`` are used by the dictionary kind, ``h`` by the
    brute-force oracle.
    """

    kind: str = "w1-assignment"
    D: int | None = None
    alpha: int = 1
    L_F: float = 1.0
    K: int = 4
    h: float = 0.05
    include_projections: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown IPM kind {self.kind!r}; choose from {KINDS}")
        if self.alpha < 1 or self.L_F <= 0 or self.K < 1 or self.h <= 0:
            raise InvalidSpec("alpha >= 1, L_F > 0, K >= 1 and h > 0 are required")

    @property
    def is_w1(self) -> bool:
        return self.kind.startswith("w1")

    @property
    def lipschitz_constant(self) -> float:
        """Lipschitz constant shared by every test function of the class."""
        return 1.0 if self.is_w1 or self.kind == "brute-lp-oracle" else self.L_F


def distance(P, Q, spec: IpmSpec) -> float:
    """Dispatch to the routine named by ``spec.kind``."""
    P, Q = as_measure(P), as_measure(Q)
    if spec.kind == "w1-exact-1d":
        return w1_exact_1d(P, Q)
    if spec.kind == "w1-assignment":
        return w1_empirical(P, Q)
    if spec.kind == "w1-transport-lp":
        return w1_empirical(P, Q, method="lp")
    if spec.kind == "walpha-dictionary":
        return walpha_ipm(P, Q, alpha=spec.alpha, L_F=spec.L_F, K=spec.K,
                          include_projections=spec.include_projections)
    if spec.kind == "projection-first-axis":
        return projection_ipm(P, Q)
    return brute_lp_oracle(P, Q, spec.h)


# ----------------------------------------------------------------- 1-D exact
def _cdf_pieces(M):
    """Breakpoints and a CDF evaluator for a 1-D measure."""
    if isinstance(M, UniformInterval):
        if M.hi == M.lo:
            return np.array([M.lo]), lambda x: (x >= M.lo).astype(float)
        width = M.hi - M.lo
        return np.array([M.lo, M.hi]), lambda x: np.clip((x - M.lo) / width, 0.0, 1.0)
    x = M.support[:, 0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cw = np.cumsum(M.weights[order])
    cw[-1] = 1.0

    def cdf(t):
        idx = np.searchsorted(xs, t, side="right")
        return np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)

    return xs, cdf


def _abs_linear_integral(f0, f1, width):
    # integral of |f| over an interval where f is affine with end values f0, f1
    same = f0 * f1 >= 0
    out = np.where(same, 0.5 * (np.abs(f0) + np.abs(f1)) * width, 0.0)
    cross = ~same
    if np.any(cross):
        a, b, w = f0[cross], f1[cross], width[cross]
        out[cross] = 0.5 * (a * a + b * b) / np.abs(a - b) * w
    return out


def w1_exact_1d(P, Q) -> float:
    """Exact W1 = integral of |F_P - F_Q| for 1-D measures.

    ``P`` and ``Q`` may each be a :class:`DiscreteMeasure` in one dimension or
    a :class:`UniformInterval`.
    """
    P, Q = as_measure(P), as_measure(Q)
    for M in (P, Q):
        if M.dim != 1:
            raise DimensionMismatch(f"w1_exact_1d needs 1-D measures, got D={M.dim}")
    bp, fp = _cdf_pieces(P)
    bq, fq = _cdf_pieces(Q)
    grid = np.unique(np.concatenate([bp, bq]))
    if len(grid) < 2:
        return 0.0
    left, right = grid[:-1], grid[1:]
    width = right - left
    # both CDFs are affine on each open piece; evaluate just inside the ends
    f0 = fp(left) - fq(left)
    f1 = _left_limit(fp, left, right, P) - _left_limit(fq, left, right, Q)
    return float(_abs_linear_integral(f0, f1, width).sum())


def _left_limit(cdf, left, right, M):
    if isinstance(M, UniformInterval) and M.hi > M.lo:
        return cdf(right)  # continuous
    return cdf(left)  # step function: no atoms strictly inside the piece


# ----------------------------------------------------------------- general W1
def w1_empirical(P, Q, method: str = "auto") -> float:
    """Exact optimal-transport cost with Euclidean ground metric.

    Equal-size uniform-weight measures are matched by an assignment solver.
    Other uniform-weight pairs are replicated to a common size and matched
    when that is cheap (always on the line, where matching is a sort; in
    higher dimension only when the transport LP would be too large).
    Everything else goes to the transportation LP.  ``method`` forces one
    route: "lp", "replicate", or an assignment method for equal sizes.
    """
    P, Q = as_measure(P), as_measure(Q)
    if not isinstance(P, DiscreteMeasure) or not isinstance(Q, DiscreteMeasure):
        raise InvalidSpec("w1_empirical needs discrete measures; use w1_exact_1d for intervals")
    if P.dim != Q.dim:
        raise DimensionMismatch(f"dimensions differ: {P.dim} vs {Q.dim}")
    uniform = P.uniform_weights and Q.uniform_weights
    if method == "auto":
        if uniform and P.size == Q.size:
            return assignment(P.support, Q.support)[0]
        lcm = math.lcm(P.size, Q.size)
        small_lp = P.size * Q.size <= LP_VARIABLE_CAP
        if uniform and lcm <= REPLICATION_CAP and (P.dim == 1 or not small_lp):
            method = "replicate"
        else:
            method = "lp"
    if method == "lp":
        return _transport_lp(P, Q)
    if method == "replicate":
        if not uniform:
            raise InvalidSpec("replication needs uniform weights")
        lcm = math.lcm(P.size, Q.size)
        if lcm > REPLICATION_CAP:
            raise CapExceeded(f"common size {lcm} exceeds the replication cap {REPLICATION_CAP}")
        x = np.repeat(P.support, lcm // P.size, axis=0)
        y = np.repeat(Q.support, lcm // Q.size, axis=0)
        return assignment(x, y)[0]
    if method in ("sorted", "dense", "sparse"):
        if P.size != Q.size:
            raise InvalidSpec("assignment needs equal sizes")
        return assignment(P.support, Q.support, method=method)[0]
    raise InvalidSpec(f"unknown method {method!r}")


def _transport_lp(P, Q) -> float:
    n, m = P.size, Q.size
    if n * m > LP_VARIABLE_CAP:
        raise CapExceeded(f"transport LP with {n}x{m} variables exceeds the cap {LP_VARIABLE_CAP}")
    C = cdist(P.support, Q.support).ravel()
    rows = np.concatenate([np.repeat(np.arange(n), m), n + np.tile(np.arange(m), n)])
    cols = np.concatenate([np.arange(n * m), np.arange(n * m)])
    from scipy.sparse import csr_matrix

    A = csr_matrix((np.ones(2 * n * m), (rows, cols)), shape=(n + m, n * m))
    b = np.concatenate([P.weights, Q.weights])
    # the last row is implied by the others; dropping it avoids a singular basis
    res = linprog(C, A_eq=A[:-1], b_eq=b[:-1], bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def w1_vs_uniform(P, d: int, m: int, reps: int, stream) -> tuple[float, float]:
    """Average W1 between ``P`` and fresh m-point uniform samples on [0,1]^d.

    Biased upward as an estimate of W1(P, U_d); the bias vanishes as m grows.
    Returns ``(estimate, standard error)``.
    """
    P = as_measure(P)
    if P.dim != d:
        raise DimensionMismatch(f"P lives in R^{P.dim}, not R^{d}")
    if m < P.size:
        raise InvalidSpec(f"comparison size m={m} is smaller than |P|={P.size}")
    vals = np.array([
        w1_empirical(P, DiscreteMeasure(sample_latent(m, d, child_stream(stream, "w1-vs-uniform", r))))
        for r in range(reps)
    ])
    se = float(vals.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
    return float(vals.mean()), se


# ----------------------------------------------------------------- smoothness dictionary
def dictionary_frequencies(D: int, K: int, max_atoms: int = MAX_ATOMS) -> np.ndarray:
    """Nonzero integer vectors with sup-norm <= K, one per +/- pair."""
    count = ((2 * K + 1) ** D - 1) // 2
    if count > max_atoms:
        raise CapExceeded(f"dictionary with K={K}, D={D} has {count} atoms (cap {max_atoms})")
    grid = np.array(list(itertools.product(range(-K, K + 1), repeat=D)), dtype=float)
    first = np.array([row[np.nonzero(row)[0][0]] if np.any(row) else 0 for row in grid])
    return grid[first > 0]


def walpha_ipm(P, Q, alpha: int = 1, L_F: float = 1.0, K: int = 4,
               include_projections: bool = True, max_atoms: int = MAX_ATOMS) -> float:
    """Lower bound on the W^alpha([0,1]^D, L_F) IPM from a trigonometric dictionary.

    Atoms are cos(pi <k, x>) and sin(pi <k, x>) divided by (pi |k|_1)^alpha / L_F,
    plus (optionally) the coordinate projections x_j scaled by L_F.  Every atom
    lies in the class, so the best single atom is a certified lower bound.
    Points are clamped to [0,1]^D before evaluation.
    """
    P, Q = as_measure(P), as_measure(Q)
    if P.dim != Q.dim:
        raise DimensionMismatch(f"dimensions differ: {P.dim} vs {Q.dim}")
    D = P.dim
    freqs = dictionary_frequencies(D, K, max_atoms)
    weights = L_F / (np.pi * np.abs(freqs).sum(axis=1)) ** alpha

    diff_c = np.zeros(len(freqs))
    diff_s = np.zeros(len(freqs))
    for M, sign in ((P, 1.0), (Q, -1.0)):
        X = np.clip(M.support, 0.0, 1.0)
        for start in range(0, len(X), 4096):
            phase = np.pi * (X[start:start + 4096] @ freqs.T)
            w = M.weights[start:start + 4096]
            diff_c += sign * (w @ np.cos(phase))
            diff_s += sign * (w @ np.sin(phase))
    best = float(np.max(np.maximum(np.abs(diff_c), np.abs(diff_s)) * weights)) if len(freqs) else 0.0
    if include_projections:
        gap = np.clip(P.support, 0, 1).T @ P.weights - np.clip(Q.support, 0, 1).T @ Q.weights
        best = max(best, float(L_F * np.abs(gap).max()))
    return best


def projection_ipm(P, Q) -> float:
    """|E_P x_1 - E_Q x_1|."""
    P, Q = as_measure(P), as_measure(Q)
    return float(abs(P.mean()[0] - Q.mean()[0]))


# ----------------------------------------------------------------- LP oracle
def brute_lp_oracle(P, Q, h: float, max_support: int = 30) -> float:
    """Sup of E_P f - E_Q f over 1-Lipschitz f on a grid of step h (test oracle).

    Support points are clamped to [0,1]^D and snapped to the nearest grid
    node.  Only occupied nodes carry variables: a 1-Lipschitz function on them
    extends to the whole grid, so the other nodes cannot change the value.
    """
    P, Q = as_measure(P), as_measure(Q)
    if P.dim != Q.dim:
        raise DimensionMismatch(f"dimensions differ: {P.dim} vs {Q.dim}")
    if P.dim > 2 or P.size > max_support or Q.size > max_support:
        raise CapExceeded("brute_lp_oracle handles D <= 2 and at most 30 support points per side")
    steps = int(round(1.0 / h))
    if steps < 1 or abs(steps * h - 1.0) > 1e-9:
        raise InvalidSpec(f"grid step h={h} must divide 1")

    def snap(M):
        return np.rint(np.clip(M.support, 0.0, 1.0) * steps).astype(np.int64)

    cells = np.vstack([snap(P), snap(Q)])
    nodes, inverse = np.unique(cells, axis=0, return_inverse=True)
    inverse = np.ravel(inverse)
    mass = np.zeros(len(nodes))
    np.add.at(mass, inverse[: P.size], P.weights)
    np.add.at(mass, inverse[P.size:], -Q.weights)
    k = len(nodes)
    if k == 1:
        return 0.0
    coords = nodes / steps
    dist = cdist(coords, coords)
    i, j = np.nonzero(~np.eye(k, dtype=bool))
    A = np.zeros((len(i), k))
    A[np.arange(len(i)), i] = 1.0
    A[np.arange(len(i)), j] = -1.0
    bounds = [(0.0, 0.0)] + [(None, None)] * (k - 1)
    res = linprog(-mass, A_ub=A, b_ub=dist[i, j], bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"oracle LP failed: {res.message}")
    return float(-res.fun)


def exact_1d_law(g):
    """The law g # U_1 as a :class:`UniformInterval` when g is affine on d = D = 1."""
    if g.family == "affine" and g.d == 1 and g.D == 1:
        a, b = g.params
        return UniformInterval(min(b, a + b), max(b, a + b))
    return None


def reference_measure(g, n: int, stream):
    """Stand-in for g # U_d when comparing an n-point sample against it.

    Affine 1-D maps give the exact interval law.  Other maps with d = 1 use a
    midpoint latent grid of size ``max(10 n, 10^5)`` (deterministic, W1 error
    at most Lip(g) / (4 size)).  For d >= 2 a fresh sample of size n is drawn,
    which keeps W1 on the equal-size assignment path.
    """
    law = exact_1d_law(g)
    if law is not None:
        return law
    if g.d == 1:
        m = max(10 * n, 100_000)
        return DiscreteMeasure(g.evaluate(((np.arange(m) + 0.5) / m)[:, None]))
    return DiscreteMeasure(g.evaluate(sample_latent(n, g.d, stream)))


class DictionaryAtom:
    """One normalized dictionary function, cos or sin of pi <k, x>, scaled into W^alpha(L_F).

    Arguments are clamped to [0,1]^D.
    """

    def __init__(self, k, kind: str = "cos", alpha: int = 1, L_F: float = 1.0):
        self.k = np.asarray(k, dtype=float)
        if kind not in ("cos", "sin") or not np.any(self.k):
            raise InvalidSpec("atom needs kind 'cos' or 'sin' and a nonzero frequency")
        self.kind = kind
        self.alpha = alpha
        self.L_F = L_F
        self.scale = L_F / (np.pi * np.abs(self.k).sum()) ** alpha

    @property
    def D(self) -> int:
        return len(self.k)

    def __call__(self, X) -> np.ndarray:
        X = np.clip(np.atleast_2d(np.asarray(X, dtype=float)), 0.0, 1.0)
        phase = np.pi * (X @ self.k)
        return self.scale * (np.cos(phase) if self.kind == "cos" else np.sin(phase))

    def __repr__(self):
        return f"DictionaryAtom(k={self.k.astype(int).tolist()}, kind={self.kind!r}, alpha={self.alpha})"
