"""Empirical risk minimization over a parametric generator class.

The ERM generator minimizes d(g_theta # U_m, P_n) where U_m is one latent
sample shared by every candidate theta (common random numbers), which turns
the objective into a deterministic function of theta.  The minimization is a
bounded Nelder-Mead search with random restarts.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .contamination import DataSpec, Dataset, synthesize
from .exceptions import InvalidSpec
from .generators import GeneratorSpec
from .ipm import IpmSpec, distance, reference_measure
from .measures import DiscreteMeasure
from .sampling import as_generator, child_stream, sample_latent


@dataclass(frozen=True)
class ParametricFamily:
    """Generators of one family whose whole parameter vector is free in a box."""

    template: GeneratorSpec
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != (len(self.template.params),) or hi.shape != lo.shape:
            raise InvalidSpec(f"box must have {len(self.template.params)} coordinates")
        if np.any(hi < lo):
            raise InvalidSpec("box has upper < lower")
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(hi))
        self.check_box()

    @property
    def dim(self) -> int:
        return len(self.lower)

    def instantiate(self, theta, strict: bool = False) -> GeneratorSpec:
        return self.template.with_params(theta, strict=strict)

    def check_box(self, max_corners: int = 1024):
        """Instantiate strictly at every box corner and the center.

        For families whose range and derivatives are affine in theta (affine,
        constant) this proves every theta in the box is valid.
        """
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if 2 ** self.dim <= max_corners:
            for corner in itertools.product(*zip(lo, hi)):
                self.instantiate(corner, strict=True)
        self.instantiate(0.5 * (lo + hi), strict=True)


def affine_family(d: int = 1, D: int = 1, lower=None, upper=None, L: float = 1.0) -> ParametricFamily:
    """Maps u -> A u + b, theta = (A row-major, b).

    The default box, entries of A in [0, 0.7 / d] and b in [0, 0.3], keeps
    every member inside [0, 1]^D.
    """
    template = GeneratorSpec("affine", np.zeros(D * d + D), d, D, 1, L, strict=False)
    if lower is None:
        lower = [0.0] * (D * d + D)
    if upper is None:
        upper = [0.7 / d] * (D * d) + [0.3] * D
    return ParametricFamily(template, tuple(lower), tuple(upper))


def constant_family(D: int = 1, d: int = 1, lower=None, upper=None) -> ParametricFamily:
    template = GeneratorSpec("constant", np.zeros(D), d, D, 1, 1.0, strict=False)
    return ParametricFamily(template, tuple(lower or [0.0] * D), tuple(upper or [1.0] * D))


@dataclass
class ErmProblem:
    family: ParametricFamily
    data: np.ndarray
    metric: IpmSpec = field(default_factory=lambda: IpmSpec("w1-exact-1d"))
    m: int | None = None
    max_evals: int = 4000
    restarts: int = 8

    def __post_init__(self):
        if isinstance(self.data, Dataset):
            self.data = self.data.points
        self.data = check_array(self.data, dtype=float)
        if self.data.shape[1] != self.family.template.D:
            raise InvalidSpec(f"data has D={self.data.shape[1]}, family maps into R^{self.family.template.D}")
        if self.m is None:
            self.m = len(self.data)

    @property
    def n(self) -> int:
        return len(self.data)


@dataclass
class ErmSolution:
    theta_hat: np.ndarray
    objective: float
    n_evals: int
    restart: int
    warnings: list
    generator: GeneratorSpec
    probes: list = field(default_factory=list, repr=False)
    start_values: list = field(default_factory=list, repr=False)


class _Objective:
    """Deterministic objective with shared latents; records every probe."""

    def __init__(self, problem: ErmProblem, stream):
        self.problem = problem
        self.latents = sample_latent(problem.m, problem.family.template.d, child_stream(stream, "erm-latent"))
        self.target = DiscreteMeasure(problem.data)
        self.probes = []

    def __call__(self, theta) -> float:
        g = self.problem.family.instantiate(theta)
        value = distance(DiscreteMeasure(g.evaluate(self.latents)), self.target, self.problem.metric)
        self.probes.append((np.array(theta, dtype=float), value))
        return value


def empirical_objective(theta, problem: ErmProblem, stream) -> float:
    """d(g_theta # U_m, P_n) with the latent sample fixed by ``stream``."""
    return _Objective(problem, stream)(theta)


def fit(problem: ErmProblem, stream) -> ErmSolution:
    """Bounded Nelder-Mead from ``restarts`` random starts; returns the best probe."""
    fam = problem.family
    lo, hi = np.asarray(fam.lower), np.asarray(fam.upper)
    obj = _Objective(problem, stream)
    notes = []
    if problem.max_evals < fam.dim + 2:
        notes.append(f"budget-exhausted: {problem.max_evals} evaluations < dim(theta) + 2 = {fam.dim + 2}")
    per_restart = max(1, problem.max_evals // max(problem.restarts, 1))
    starts = []
    winner_of = []
    for r in range(problem.restarts):
        left = problem.max_evals - len(obj.probes)
        if left <= 0:
            break
        x0 = lo + (hi - lo) * as_generator(child_stream(stream, "erm-restart", r)).random(fam.dim)
        first = len(obj.probes)
        if left < fam.dim + 2:
            obj(x0)
        else:
            res = minimize(obj, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                           options={"maxfev": min(per_restart, left), "xatol": 1e-10, "fatol": 1e-13,
                                    "initial_simplex": _initial_simplex(x0, lo, hi)})
            if res.status != 0:
                notes.append(f"budget-exhausted: restart {r} stopped after {res.nfev} evaluations")
        starts.append(obj.probes[first][1])
        winner_of.extend([r] * (len(obj.probes) - first))
    values = np.array([v for _, v in obj.probes])
    best = int(np.argmin(values))  # first minimum: lowest restart wins ties
    theta = obj.probes[best][0]
    return ErmSolution(theta, float(values[best]), len(obj.probes), winner_of[best], notes,
                       fam.instantiate(theta), obj.probes, starts)


def _initial_simplex(x0, lo, hi):
    width = np.where(hi > lo, hi - lo, 1.0)
    simplex = [x0]
    for i in range(len(x0)):
        v = x0.copy()
        step = 0.1 * width[i]
        v[i] = x0[i] + step if x0[i] + step <= hi[i] else x0[i] - step
        simplex.append(v)
    return np.array(simplex)


# ----------------------------------------------------------------- oracle inequality audit
def risk(g: GeneratorSpec, g_star: GeneratorSpec, metric: IpmSpec, n: int, stream) -> float:
    """d(g # U_d, g_star # U_d) via the reference measures of both maps."""
    return distance(reference_measure(g, n, child_stream(stream, "risk-g")),
                    reference_measure(g_star, n, child_stream(stream, "risk-star")), metric)


@dataclass
class AuditReport:
    rows: list
    inf_grid: float
    grid_argmin: np.ndarray
    all_hold: bool
    note: str = "inf_grid is the minimum over a finite theta grid: an upper bound on the infimum over the class"

    def summary(self) -> dict:
        return {
            "reps": len(self.rows),
            "violations": sum(not r["holds"] for r in self.rows),
            "inf_grid": self.inf_grid,
            "grid_argmin": list(map(float, self.grid_argmin)),
            "all_hold": self.all_hold,
            "note": self.note,
        }


def audit_oracle_inequality(problem: ErmProblem, g_star: GeneratorSpec, reps: int, stream,
                            grid_size: int = 21, data_spec: DataSpec | None = None) -> AuditReport:
    """Check R(g_hat) <= inf_grid R + 2 d(P_n, P*) + 3 * slack on fresh data sets.

    ``slack`` is the latent-substitution error of the ERM objective: the
    larger of d(g # U_m, g # U_d) at the fitted theta and at the grid
    minimizer.  Each replication draws new data from ``data_spec`` (noiseless
    ``g_star`` by default), refits, and evaluates every term.
    """
    fam = problem.family
    data_spec = data_spec or DataSpec(g_star)
    n, metric = problem.n, problem.metric
    axes = [np.linspace(a, b, grid_size) if b > a else np.array([a]) for a, b in zip(fam.lower, fam.upper)]
    grid = np.array(list(itertools.product(*axes)))
    if len(grid) > 50_000:
        raise InvalidSpec(f"theta grid with {len(grid)} points is too large; lower grid_size")
    grid_stream = child_stream(stream, "audit-grid")
    grid_risk = np.array([risk(fam.instantiate(t), g_star, metric, n, grid_stream) for t in grid])
    j = int(np.argmin(grid_risk))
    inf_grid, theta_grid = float(grid_risk[j]), grid[j]
    star_ref = reference_measure(g_star, n, child_stream(stream, "audit-star"))

    rows = []
    for r in range(reps):
        rs = child_stream(stream, "audit-rep", r)
        data = synthesize(data_spec, n, child_stream(rs, "data"))
        prob = ErmProblem(fam, data.points, metric, problem.m, problem.max_evals, problem.restarts)
        sol = fit(prob, child_stream(rs, "fit"))
        latents = sample_latent(prob.m, fam.template.d, child_stream(child_stream(rs, "fit"), "erm-latent"))
        slack = 0.0
        for theta in (sol.theta_hat, theta_grid):
            g = fam.instantiate(theta)
            slack = max(slack, distance(DiscreteMeasure(g.evaluate(latents)),
                                        reference_measure(g, n, child_stream(rs, "slack")), metric))
        r_hat = risk(sol.generator, g_star, metric, n, child_stream(rs, "risk"))
        stoch = distance(DiscreteMeasure(data.points), star_ref, metric)
        rhs = inf_grid + 2 * stoch + 3 * slack
        rows.append({"rep": r, "risk": r_hat, "inf_grid": inf_grid, "stochastic": stoch, "slack": slack,
                     "objective": sol.objective, "rhs": rhs, "holds": bool(r_hat <= rhs)})
    return AuditReport(rows, inf_grid, theta_grid, all(row["holds"] for row in rows))


# ----------------------------------------------------------------- estimator
class ErmGenerator(BaseEstimator):
    """Fit a push-forward generator to samples by minimizing an IPM.

    Parameters
    ----------
    family : {"affine", "constant"}
    d : int
        Latent dimension.
    lower, upper : array-like or None
        Box for the parameter vector; family defaults when None.
    metric : str
        An :class:`~pushgen.ipm.IpmSpec` kind.
    m : int or None
        Size of the shared latent sample; defaults to the number of samples.
    max_evals, restarts : int
        Optimizer budget.
    random_state : int
        Master seed for latents and restarts.
    """

    def __init__(self, family="affine", d=1, lower=None, upper=None, metric="w1-exact-1d",
                 m=None, max_evals=4000, restarts=8, random_state=0):
        self.family = family
        self.d = d
        self.lower = lower
        self.upper = upper
        self.metric = metric
        self.m = m
        self.max_evals = max_evals
        self.restarts = restarts
        self.random_state = random_state

    def _family(self, D):
        if self.family == "affine":
            return affine_family(self.d, D, self.lower, self.upper)
        if self.family == "constant":
            return constant_family(D, self.d, self.lower, self.upper)
        raise InvalidSpec(f"ErmGenerator supports 'affine' and 'constant', not {self.family!r}")

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        problem = ErmProblem(self._family(X.shape[1]), X, IpmSpec(self.metric, D=X.shape[1]),
                             self.m, self.max_evals, self.restarts)
        sol = fit(problem, _seed_stream(self.random_state))
        for note in sol.warnings:
            warnings.warn(note, RuntimeWarning, stacklevel=2)
        self.theta_ = sol.theta_hat
        self.generator_ = sol.generator
        self.objective_ = sol.objective
        self.n_evals_ = sol.n_evals
        self.warnings_ = sol.warnings
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, n, random_state=None):
        check_is_fitted(self, "generator_")
        seed = self.random_state if random_state is None else random_state
        return self.generator_.sample(n, child_stream(_seed_stream(seed), "sample"))

    def score(self, X, y=None):
        """Negative IPM between a fresh model sample and X (higher is better)."""
        check_is_fitted(self, "generator_")
        X = check_array(X, dtype=float)
        model = self.sample(self.m or len(X))
        return -distance(DiscreteMeasure(model), DiscreteMeasure(X), IpmSpec(self.metric, D=X.shape[1]))


def _seed_stream(seed):
    from .sampling import SeedPolicy

    return SeedPolicy(int(seed)).stream(0, "erm")
