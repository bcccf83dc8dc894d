"""Generator maps g : [0, 1]^d -> [0, 1]^D and their push-forwards.

The built-in families are small, analytically controlled maps.  Each one knows
its own range and an upper bound on all partial derivatives up to the declared
order, so a :class:`GeneratorSpec` refuses to be built with a declared
smoothness constant that its parameters violate.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .exceptions import InvalidDimension, InvalidSpec, OutOfDomain
from .sampling import as_generator, sample_latent

FAMILIES = (
    "affine",
    "coordinate-trig",
    "constant",
    "lowerbound-contam-1",
    "lowerbound-contam-2",
    "lowerbound-noise-1",
    "lowerbound-noise-2",
    "tabulated",
)

_RANGE_TOL = 1e-12


@dataclass(frozen=True)
class GeneratorSpec:
    """Immutable description of a generator map.

    Parameters
    ----------
    family : str
        One of :data:`FAMILIES`.
    params : tuple of float
        Flat parameter vector; the layout depends on the family (see the
        constructor helpers in this module).
    d, D : int
        Latent and ambient dimension.
    alpha : int
        Declared smoothness order.
    L : float
        Declared bound on every partial derivative of order <= alpha.
    strict : bool
        When False the range and smoothness checks are skipped.  ERM candidate
        classes need this because candidates may leave [0, 1]^D.
    """

    family: str
    params: tuple
    d: int
    D: int
    alpha: int = 1
    L: float = 1.0
    strict: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in np.ravel(self.params)))
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown generator family {self.family!r}")
        if self.d < 1 or self.D < 1:
            raise InvalidDimension(f"need d, D >= 1, got d={self.d}, D={self.D}")
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise InvalidSpec(f"alpha must be a positive integer, got {self.alpha}")
        _LAYOUT[self.family](self)  # shape check
        if self.strict:
            if self.L < 1:
                raise InvalidSpec(f"declared L must be >= 1, got {self.L}")
            lo, hi = self.range_bounds()
            if np.any(lo < -_RANGE_TOL) or np.any(hi > 1 + _RANGE_TOL):
                raise InvalidSpec(f"{self.family} parameters leave [0,1]^D: range [{lo.min()}, {hi.max()}]")
            bound = self.derivative_bound()
            if bound > self.L * (1 + 1e-12):
                raise InvalidSpec(f"declared L={self.L} below the derivative bound {bound:.6g} of the parameters")

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.params)

    def evaluate(self, u) -> np.ndarray:
        """Evaluate at one latent point ``(d,)`` or a batch ``(n, d)``."""
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        U = np.atleast_2d(u)
        if U.shape[1] != self.d:
            raise InvalidDimension(f"latent points must have {self.d} coordinates, got {U.shape[1]}")
        if np.any(U < 0) or np.any(U > 1) or not np.all(np.isfinite(U)):
            raise OutOfDomain("latent coordinates must lie in [0, 1]")
        out = _EVAL[self.family](self, U)
        return out[0] if single else out

    def sample(self, n: int, stream) -> np.ndarray:
        return pushforward_sample(self, n, stream)

    def range_bounds(self):
        return _RANGE[self.family](self)

    def derivative_bound(self) -> float:
        """Upper bound on sup-norms of all partials of order <= alpha (incl. order 0)."""
        return float(_DERIV[self.family](self))

    def with_params(self, params, strict: bool | None = None) -> "GeneratorSpec":
        return GeneratorSpec(self.family, tuple(params), self.d, self.D, self.alpha, self.L,
                             self.strict if strict is None else strict)

    def to_text(self) -> str:
        return generator_to_text(self)

    @classmethod
    def from_text(cls, text: str) -> "GeneratorSpec":
        return generator_from_text(text)


# ----------------------------------------------------------------- layouts
def _n_params(g, expected):
    if len(g.params) != expected:
        raise InvalidSpec(f"{g.family} with d={g.d}, D={g.D} needs {expected} params, got {len(g.params)}")


def _affine_parts(g):
    p = np.asarray(g.params)
    return p[: g.D * g.d].reshape(g.D, g.d), p[g.D * g.d:]


def _trig_parts(g):
    p = np.asarray(g.params).reshape(g.D, g.d + 2)
    return p[:, 0], p[:, 1], p[:, 2:]


def _trig_layout(g):
    _n_params(g, g.D * (g.d + 2))
    k = _trig_parts(g)[2]
    if np.any(k < 0) or np.any(k != np.round(k)) or np.any(k.sum(axis=1) == 0):
        raise InvalidSpec("coordinate-trig frequencies must be nonnegative integers, not all zero")


def _tab_resolution(g):
    per = len(g.params) / g.D
    r = int(round(per ** (1.0 / g.d)))
    if r < 2 or r ** g.d * g.D != len(g.params):
        raise InvalidSpec(f"tabulated params must hold r^d * D values with r >= 2, got {len(g.params)}")
    return r


def _tab_layout(g):
    _tab_resolution(g)
    if g.alpha != 1:
        raise InvalidSpec("tabulated generators are only Lipschitz; declare alpha=1")


_LAYOUT = {
    "affine": lambda g: _n_params(g, g.D * g.d + g.D),
    "coordinate-trig": _trig_layout,
    "constant": lambda g: _n_params(g, g.D),
    "lowerbound-contam-1": lambda g: _n_params(g, 1),
    "lowerbound-contam-2": lambda g: _n_params(g, 1),
    "lowerbound-noise-1": lambda g: _n_params(g, 1),
    "lowerbound-noise-2": lambda g: _n_params(g, 1),
    "tabulated": _tab_layout,
}


# ----------------------------------------------------------------- evaluation
def _eval_affine(g, U):
    A, b = _affine_parts(g)
    return U @ A.T + b


def _eval_trig(g, U):
    a, b, k = _trig_parts(g)
    scale = (np.pi * k.sum(axis=1)) ** g.alpha
    return a + b * np.cos(np.pi * (U @ k.T)) / scale


def _eval_constant(g, U):
    return np.broadcast_to(np.asarray(g.params), (U.shape[0], g.D)).copy()


def _first_coord(g, U, values):
    out = np.zeros((U.shape[0], g.D))
    out[:, 0] = values
    return out


def _eval_tab(g, U):
    r = _tab_resolution(g)
    values = np.asarray(g.params).reshape((r,) * g.d + (g.D,))
    axes = [np.linspace(0.0, 1.0, r)] * g.d
    return RegularGridInterpolator(axes, values, method="linear")(U)


_EVAL = {
    "affine": _eval_affine,
    "coordinate-trig": _eval_trig,
    "constant": _eval_constant,
    "lowerbound-contam-1": lambda g, U: _first_coord(g, U, (1 - g.params[0]) * U[:, 0]),
    "lowerbound-contam-2": lambda g, U: _first_coord(g, U, (1 - g.params[0]) * U[:, 0] + g.params[0]),
    "lowerbound-noise-1": lambda g, U: np.zeros((U.shape[0], g.D)),
    "lowerbound-noise-2": lambda g, U: _first_coord(g, U, np.full(U.shape[0], g.params[0])),
    "tabulated": _eval_tab,
}


# ----------------------------------------------------------------- range and derivative bounds
def _range_affine(g):
    A, b = _affine_parts(g)
    return b + np.minimum(A, 0).sum(axis=1), b + np.maximum(A, 0).sum(axis=1)


def _range_trig(g):
    a, b, k = _trig_parts(g)
    amp = np.abs(b) / (np.pi * k.sum(axis=1)) ** g.alpha
    return a - amp, a + amp


def _first_coord_range(g, lo1, hi1):
    lo, hi = np.zeros(g.D), np.zeros(g.D)
    lo[0], hi[0] = lo1, hi1
    return lo, hi


def _range_tab(g):
    v = np.asarray(g.params).reshape(-1, g.D)
    return v.min(axis=0), v.max(axis=0)


_RANGE = {
    "affine": _range_affine,
    "coordinate-trig": _range_trig,
    "constant": lambda g: (np.asarray(g.params), np.asarray(g.params)),
    "lowerbound-contam-1": lambda g: _first_coord_range(g, 0.0, 1 - g.params[0]),
    "lowerbound-contam-2": lambda g: _first_coord_range(g, g.params[0], 1.0),
    "lowerbound-noise-1": lambda g: (np.zeros(g.D), np.zeros(g.D)),
    "lowerbound-noise-2": lambda g: _first_coord_range(g, g.params[0], g.params[0]),
    "tabulated": _range_tab,
}


def _sup_abs(g):
    lo, hi = g.range_bounds()
    return float(np.max(np.maximum(np.abs(lo), np.abs(hi))))


def _deriv_trig(g):
    _, b, k = _trig_parts(g)
    base = np.pi * k.sum(axis=1)
    kmax = k.max(axis=1)
    # |D^m g_j| <= |b_j| (pi kmax)^|m| / (pi |k|_1)^alpha
    orders = np.arange(1, g.alpha + 1)
    per = np.abs(b)[:, None] * (np.pi * kmax[:, None]) ** orders / base[:, None] ** g.alpha
    return max(_sup_abs(g), float(per.max()))


def _deriv_tab(g):
    r = _tab_resolution(g)
    values = np.asarray(g.params).reshape((r,) * g.d + (g.D,))
    slope = 0.0
    for axis in range(g.d):
        slope = max(slope, float(np.abs(np.diff(values, axis=axis)).max()) * (r - 1))
    return max(_sup_abs(g), slope)


_DERIV = {
    "affine": lambda g: max(_sup_abs(g), float(np.abs(_affine_parts(g)[0]).max())),
    "coordinate-trig": _deriv_trig,
    "constant": _sup_abs,
    "lowerbound-contam-1": lambda g: max(_sup_abs(g), 1 - g.params[0]),
    "lowerbound-contam-2": lambda g: max(_sup_abs(g), 1 - g.params[0]),
    "lowerbound-noise-1": lambda g: 0.0,
    "lowerbound-noise-2": _sup_abs,
    "tabulated": _deriv_tab,
}


# ----------------------------------------------------------------- constructors
def affine(A, b, alpha: int = 1, L: float | None = None, strict: bool = True) -> GeneratorSpec:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.ravel(np.asarray(b, dtype=float))
    D, d = A.shape
    if L is None:
        L = max(1.0, float(np.abs(A).max()))
    return GeneratorSpec("affine", tuple(A.ravel()) + tuple(b), d, D, alpha, L, strict)


def identity(d: int, alpha: int = 1) -> GeneratorSpec:
    return affine(np.eye(d), np.zeros(d), alpha=alpha)


def lower_bound_generator(d: int = 1) -> GeneratorSpec:
    """The map x -> (2x + 1)/4 applied coordinatewise (1-Lipschitz, range [1/4, 3/4])."""
    return affine(0.5 * np.eye(d), np.full(d, 0.25))


def constant(c, d: int = 1) -> GeneratorSpec:
    c = np.ravel(np.asarray(c, dtype=float))
    return GeneratorSpec("constant", tuple(c), d, len(c))


def coordinate_trig(d: int, D: int, alpha: int = 1, L: float = 2.0, frequencies=None) -> GeneratorSpec:
    """g_j(u) = 1/2 + b_j cos(pi <k_j, u>) / (pi |k_j|_1)^alpha with |b_j| = L.

    Default frequencies are ``k_j = 1 + e_{j mod d}``, which keeps the range
    inside [0, 1] for every L <= pi (d + 1) / 2.
    """
    if frequencies is None:
        frequencies = np.ones((D, d)) + np.eye(d)[np.arange(D) % d]
    k = np.asarray(frequencies, dtype=float).reshape(D, d)
    signs = np.where(np.arange(D) % 2 == 0, 1.0, -1.0)
    rows = np.column_stack([np.full(D, 0.5), signs * L, k])
    return GeneratorSpec("coordinate-trig", tuple(rows.ravel()), d, D, alpha, L)


def lowerbound_contamination(which: int, epsilon: float, d: int = 1, D: int = 1) -> GeneratorSpec:
    """The two hypotheses (1-eps) u_1 and (1-eps) u_1 + eps."""
    if which not in (1, 2):
        raise InvalidSpec("which must be 1 or 2")
    return GeneratorSpec(f"lowerbound-contam-{which}", (epsilon,), d, D)


def lowerbound_noise(which: int, sigma: float, d: int = 1, D: int = 1) -> GeneratorSpec:
    """The two hypotheses g == 0 and g == sigma (first coordinate)."""
    if which not in (1, 2):
        raise InvalidSpec("which must be 1 or 2")
    return GeneratorSpec(f"lowerbound-noise-{which}", (sigma,), d, D)


def tabulated(values, L: float | None = None) -> GeneratorSpec:
    """Multilinear interpolation of grid values of shape ``(r,)*d + (D,)`` on [0,1]^d."""
    values = np.asarray(values, dtype=float)
    d, D = values.ndim - 1, values.shape[-1]
    g = GeneratorSpec("tabulated", tuple(values.ravel()), d, D, 1, 1.0, strict=False)
    if L is None:
        L = max(1.0, g.derivative_bound())
    return GeneratorSpec("tabulated", g.params, d, D, 1, L)


# ----------------------------------------------------------------- operations
def evaluate(g: GeneratorSpec, u) -> np.ndarray:
    return g.evaluate(u)


def pushforward_sample(g: GeneratorSpec, n: int, stream) -> np.ndarray:
    """Sample of size n from g # U_d (evaluate applied to ``sample_latent``)."""
    return g.evaluate(sample_latent(n, g.d, stream))


def estimate_lipschitz(g: GeneratorSpec, probes: int, stream, near: float = 0.01,
                       max_near_pairs: int = 200_000) -> float:
    """Empirical lower bound on the Lipschitz constant of g.

    Uses ``probes // 2`` disjoint random pairs, every probe pair closer than
    ``near`` (capped), and one jittered partner per probe to catch local
    steepness.  Pairs closer than 1e-4 are skipped so that rounding in the
    differences stays near 1e-12 relative; up to that rounding the result
    never exceeds the true constant.
    """
    if probes < 2:
        raise InvalidSpec("need at least 2 probes")
    rng = as_generator(stream)
    U = rng.random((probes, g.d))
    GU = g.evaluate(U)

    def ratio(Ui, Uj, Gi, Gj):
        du = np.linalg.norm(Ui - Uj, axis=1)
        ok = du > 1e-4
        if not np.any(ok):
            return 0.0
        return float(np.max(np.linalg.norm(Gi - Gj, axis=1)[ok] / du[ok]))

    half = probes // 2
    best = ratio(U[:half], U[half:2 * half], GU[:half], GU[half:2 * half])

    pairs = cKDTree(U).query_pairs(near, output_type="ndarray")
    if len(pairs):
        if len(pairs) > max_near_pairs:
            pairs = pairs[rng.choice(len(pairs), max_near_pairs, replace=False)]
        i, j = pairs[:, 0], pairs[:, 1]
        best = max(best, ratio(U[i], U[j], GU[i], GU[j]))

    V = np.clip(U + rng.uniform(-1e-3, 1e-3, U.shape), 0.0, 1.0)
    best = max(best, ratio(U, V, GU, g.evaluate(V)))
    return best


# ----------------------------------------------------------------- serialization
def generator_to_text(g: GeneratorSpec) -> str:
    """Render as an INI-style ``[generator]`` section."""
    cp = _parser()
    cp["generator"] = {
        "family": g.family,
        "d": str(g.d),
        "D": str(g.D),
        "alpha": str(g.alpha),
        "L": repr(float(g.L)),
        "params": ", ".join(repr(p) for p in g.params),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def generator_from_text(text: str, section: str = "generator") -> GeneratorSpec:
    cp = _parser()
    cp.read_string(text)
    if section not in cp:
        raise InvalidSpec(f"missing [{section}] section")
    return generator_from_mapping(cp[section], where=section)


def generator_from_mapping(sec, where: str = "generator") -> GeneratorSpec:
    try:
        family = sec["family"]
        d, D = int(sec["d"]), int(sec["D"])
        alpha = int(sec.get("alpha", "1"))
        L = float(sec.get("L", "1"))
        raw = sec.get("params", "")
        params = tuple(float(x) for x in raw.replace("\n", ",").split(",") if x.strip())
    except KeyError as exc:
        raise InvalidSpec(f"{where}: missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise InvalidSpec(f"{where}: {exc}") from None
    return GeneratorSpec(family, params, d, D, alpha, L)


def _parser():
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # d and D are different keys
    return cp

