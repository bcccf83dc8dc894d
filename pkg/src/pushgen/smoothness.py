"""Multi-index combinatorics behind the chain rule for h o g.

The derivative of a composition is expanded as

    D^k (h o g) = k! sum_{1 <= |a| <= |k|} (D^a h)(g) / a! * Q_{k,a}(g)
    Q_{k,a}     = sum_{gamma(1) + ... + gamma(D) = k} prod_m P_{gamma(m)}(a_m, g_m)
    P_gamma(a, v) = sum_{rho in R(gamma, a)} a!/rho! prod_j (D^{beta(j)} v / beta(j)!)^{rho_j}

where beta(1..r) are the nonzero multi-indices below gamma in lexicographic
order and R(gamma, a) collects the rho with sum_j rho_j beta(j) = gamma and
|rho| = a.  Bounding every derivative of h by 1 and of g by L >= 1 yields the
constant C(D, d, alpha) computed by :func:`composition_constant`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .exceptions import CapExceeded, InvalidDimension, InvalidSpec, StepUnderflow
from .sampling import as_generator

ENUM_CAP = 200_000
MAX_ORDER = 12


class MultiIndex(tuple):
    """A tuple of nonnegative integers with ``order`` and ``factorial``."""

    def __new__(cls, entries):
        entries = tuple(int(e) for e in entries)
        if any(e < 0 for e in entries):
            raise InvalidSpec(f"multi-index entries must be >= 0: {entries}")
        return super().__new__(cls, entries)

    @property
    def order(self) -> int:
        return sum(self)

    @property
    def factorial(self) -> int:
        if self.order > MAX_ORDER:
            raise CapExceeded(f"factorial of a multi-index of order {self.order} > {MAX_ORDER}")
        return math.prod(math.factorial(e) for e in self)

    def __add__(self, other):
        return MultiIndex(a + b for a, b in zip(self, other))

    def __repr__(self):
        return f"MultiIndex{tuple(self)}"


def enumerate_multiindices(d: int, alpha: int, include_zero: bool = True,
                           cap: int = ENUM_CAP) -> list[MultiIndex]:
    """All k in N^d with |k| <= alpha, lexicographically sorted."""
    if d < 1 or alpha < 0:
        raise InvalidDimension(f"need d >= 1 and alpha >= 0, got d={d}, alpha={alpha}")
    if math.comb(d + alpha, d) > cap:
        raise CapExceeded(f"binom({d + alpha}, {d}) multi-indices exceed the cap {cap}")
    out = []

    def rec(prefix, left, slots):
        if slots == 0:
            out.append(MultiIndex(prefix))
            return
        for e in range(left + 1):
            rec(prefix + [e], left - e, slots - 1)

    rec([], alpha, d)
    return out if include_zero else [k for k in out if k.order > 0]


@lru_cache(maxsize=None)
def sub_indices(gamma: tuple) -> tuple:
    """beta(1..r): the nonzero multi-indices beta <= gamma, lexicographic."""
    grid = itertools.product(*(range(g + 1) for g in gamma))
    return tuple(MultiIndex(b) for b in grid if any(b))


@lru_cache(maxsize=None)
def _r_set(gamma: tuple, a: int) -> tuple:
    betas = sub_indices(gamma)
    r = len(betas)
    out = []

    def rec(j, rem, left, rho):
        if j == r:
            if left == 0 and not any(rem):
                out.append(tuple(rho))
            return
        beta = betas[j]
        cap = left
        for bi, ri in zip(beta, rem):
            if bi:
                cap = min(cap, ri // bi)
        for c in range(cap, -1, -1):
            rho.append(c)
            rec(j + 1, tuple(ri - c * bi for ri, bi in zip(rem, beta)), left - c, rho)
            rho.pop()

    rec(0, tuple(gamma), a, [])
    return tuple(sorted(out, reverse=True))


def r_set(gamma, a: int) -> list[tuple]:
    """The set R(gamma, a), as rho tuples indexed like ``sub_indices(gamma)``.

    Sorted in decreasing lexicographic order.
    """
    if a < 0:
        raise InvalidSpec("a must be >= 0")
    return list(_r_set(tuple(MultiIndex(gamma)), int(a)))


def _compositions(k: tuple, parts: int):
    """All ordered tuples of ``parts`` multi-indices summing to k."""
    per_coord = []
    for ki in k:
        per_coord.append([c for c in itertools.product(range(ki + 1), repeat=parts) if sum(c) == ki])
    for choice in itertools.product(*per_coord):
        yield tuple(MultiIndex(col[m] for col in choice) for m in range(parts))


@lru_cache(maxsize=None)
def _p_weight(gamma: tuple, a: int) -> Fraction:
    # sum over R(gamma, a) of 1/rho! prod_j (1/beta(j)!)^{rho_j}
    if not any(gamma):
        return Fraction(1) if a == 0 else Fraction(0)
    betas = sub_indices(gamma)
    total = Fraction(0)
    for rho in _r_set(gamma, a):
        term = Fraction(1, math.prod(math.factorial(c) for c in rho))
        for c, beta in zip(rho, betas):
            if c:
                term /= beta.factorial ** c
        total += term
    return total


@dataclass(frozen=True)
class CompositionBound:
    D: int
    d: int
    alpha: int
    value: Fraction
    per_index: dict

    def __float__(self):
        return float(self.value)


def composition_term(k, D: int) -> Fraction:
    """Right-hand side of the composition bound for one multi-index k (L factored out)."""
    k = MultiIndex(k)
    if k.order == 0:
        return Fraction(1)
    total = Fraction(0)
    for a in itertools.product(range(k.order + 1), repeat=D):
        if not 1 <= sum(a) <= k.order:
            continue
        for split in _compositions(tuple(k), D):
            term = Fraction(1)
            for gamma, am in zip(split, a):
                term *= _p_weight(tuple(gamma), am)
                if term == 0:
                    break
            total += term
    return k.factorial * total


def composition_constant(D: int, d: int, alpha: int, cap: int = ENUM_CAP) -> CompositionBound:
    """C(D, d, alpha): the max over |k| <= alpha of :func:`composition_term`."""
    if D < 1 or d < 1 or alpha < 0:
        raise InvalidDimension(f"need D, d >= 1 and alpha >= 0, got {D}, {d}, {alpha}")
    if alpha > MAX_ORDER:
        raise CapExceeded(f"alpha={alpha} exceeds {MAX_ORDER}")
    work = math.comb(d + alpha, d) * math.comb(alpha + D, D) * math.comb(alpha + D - 1, D - 1) ** d
    if work > cap * 100:
        raise CapExceeded(f"composition constant for D={D}, d={d}, alpha={alpha} is too large to enumerate")
    per = {k: composition_term(k, D) for k in enumerate_multiindices(d, alpha, cap=cap)}
    return CompositionBound(D, d, alpha, max(per.values()), per)


def composite_derivative(k, h_derivs, g_derivs):
    """D^k (h o g) at a point from the derivatives of h and g there.

    ``h_derivs[a]`` is D^a h evaluated at g(x) for multi-indices a in N^D;
    ``g_derivs[m][beta]`` is D^beta g_m(x).  Values may be floats or symbolic
    expressions; coefficients are exact fractions.
    """
    k = MultiIndex(k)
    D = len(g_derivs)
    total = 0
    for a in itertools.product(range(k.order + 1), repeat=D):
        a = MultiIndex(a)
        if not 1 <= a.order <= k.order:
            continue
        q = 0
        for split in _compositions(tuple(k), D):
            prod = 1
            for m, (gamma, am) in enumerate(zip(split, a)):
                prod = prod * _p_poly(tuple(gamma), am, g_derivs[m])
            q = q + prod
        total = total + Fraction(1, a.factorial) * h_derivs[tuple(a)] * q
    return k.factorial * total


def _p_poly(gamma, a, derivs):
    if not any(gamma):
        return 1 if a == 0 else 0
    betas = sub_indices(gamma)
    out = 0
    for rho in _r_set(gamma, a):
        term = Fraction(math.factorial(a), math.prod(math.factorial(c) for c in rho))
        for c, beta in zip(rho, betas):
            if c:
                term = term * (derivs[tuple(beta)] * Fraction(1, beta.factorial)) ** c
        out = out + term
    return out


# ----------------------------------------------------------------- numerical check
def _stencil(k, step):
    """Offsets (m, d) and weights of the product central-difference stencil."""
    axes = []
    for ki in k:
        offs = np.array([(ki / 2 - j) * step for j in range(ki + 1)])
        wts = np.array([(-1) ** j * math.comb(ki, j) for j in range(ki + 1)], dtype=float) / step ** ki
        axes.append((offs, wts))
    offsets = np.array(list(itertools.product(*(o for o, _ in axes))))
    weights = np.array([math.prod(w) for w in itertools.product(*(w for _, w in axes))])
    return offsets, weights


def finite_difference(f, X, k, step: float) -> np.ndarray:
    """Richardson-extrapolated central difference estimate of D^k f at rows of X."""
    k = tuple(k)
    if sum(k) == 0:
        return f(X)

    def once(hh):
        offsets, weights = _stencil(k, hh)
        vals = np.stack([f(X + off) for off in offsets], axis=0)
        return np.tensordot(weights, vals, axes=1)

    return (4 * once(step / 2) - once(step)) / 3


@dataclass
class CompositionReport:
    ratio: float
    max_abs: float
    bound: float
    constant: float
    per_index: dict


def verify_composition_bound(g, h, alpha: int, probes: int, stream, step: float = 1e-2) -> CompositionReport:
    """Compare finite-difference derivatives of h o g with C(D, d, alpha) L^alpha.

    ``h`` is a test function on [0,1]^D bounded with its derivatives by 1, for
    example a dictionary atom with L_F = 1.  Probes are drawn far enough from
    the boundary for every stencil to stay inside the cube.
    """
    if step / 2 < 1e-4:
        raise StepUnderflow(f"step {step} would use differences below 1e-4")
    if alpha < 1 or alpha > g.alpha:
        raise InvalidSpec(f"alpha must be in 1..{g.alpha} (the declared smoothness of g)")
    C = composition_constant(g.D, g.d, alpha)
    bound = float(C.value) * g.L ** alpha
    margin = alpha * step
    X = margin + (1 - 2 * margin) * as_generator(stream).random((probes, g.d))

    def comp(Y):
        return np.ravel(h(g.evaluate(Y)))

    per = {}
    for k in enumerate_multiindices(g.d, alpha):
        per[k] = float(np.max(np.abs(finite_difference(comp, X, k, step))))
    worst = max(per.values())
    return CompositionReport(worst / bound, worst, bound, float(C.value), per)
