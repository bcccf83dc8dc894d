"""Replicated Monte Carlo studies: n-scaling, noise and contamination sweeps,
the uniform-mean lower bound and the Huber indistinguishability check.

Every replication draws from its own child stream, and reductions sum in
replication order, so a study is a pure function of its inputs and seed.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .contamination import DataSpec, synthesize, synthesize_huber
from .exceptions import InvalidSpec
from .generators import GeneratorSpec, lowerbound_contamination, lower_bound_generator
from .ipm import IpmSpec, distance, projection_ipm, reference_measure, w1_exact_1d
from .measures import DiscreteMeasure, UniformInterval
from .sampling import as_generator, child_stream

CLT_CONSTANT = math.sqrt(2 / math.pi) / math.sqrt(12)  # E|N(0, 1/12)|, about 0.2303
LOWER_BOUND_CONSTANT = 0.105


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    slope_std_error: float
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SweepResult:
    param: str
    rows: list
    slope: float | None = None
    intercept: float | None = None
    r_squared: float | None = None
    slope_std_error: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def fit_power_law(ns, means) -> RateFit:
    """Least-squares line through (log n, log mean)."""
    ns, means = np.asarray(ns, float), np.asarray(means, float)
    if len(ns) < 4:
        raise InvalidSpec("a rate fit needs at least 4 grid points")
    if np.any(ns <= 0) or np.any(means <= 0):
        raise InvalidSpec("log-log fit needs positive n and positive means")
    res = stats.linregress(np.log(ns), np.log(means))
    return RateFit(float(res.slope), float(res.intercept), float(min(1.0, res.rvalue ** 2)), float(res.stderr))


def _linear_fit(x, y):
    res = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return float(res.slope), float(res.intercept), float(min(1.0, res.rvalue ** 2)), float(res.stderr)


def _compare(sample, ref, metric: IpmSpec) -> float:
    # one-dimensional W1 is exact through the CDFs whatever the sizes
    if metric.is_w1 and sample.shape[1] == 1:
        return w1_exact_1d(DiscreteMeasure(sample), ref)
    return distance(DiscreteMeasure(sample), ref, metric)


def _mean_se(values):
    values = np.asarray(values, float)
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else float("nan")
    return float(values.sum() / len(values)), se


def _run(fn, tasks, workers: int):
    """Map ``fn`` over ``tasks`` preserving order; a process pool when workers > 1."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _check_reps(reps, minimum):
    if reps < minimum:
        raise InvalidSpec(f"reps must be >= {minimum}, got {reps}")


# ----------------------------------------------------------------- n-scaling
def _rate_rep(g, metric, n, stream):
    sample = g.sample(n, child_stream(stream, "sample"))
    return _compare(sample, reference_measure(g, n, child_stream(stream, "reference")), metric)


def rate_study(g: GeneratorSpec, metric: IpmSpec, n_grid, reps: int, stream, workers: int = 1) -> RateFit:
    """Mean distance between g # U_n and g # U_d per n, with a log-log fit.

    The population law is replaced by :func:`~pushgen.ipm.reference_measure`:
    exact for affine 1-D maps, a fine latent grid for other 1-D latents, and
    an independent n-point sample otherwise.  The two-sample value lies
    between d(P_n, P*) and twice it, so the fitted exponent is unaffected.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 4:
        raise InvalidSpec("n_grid needs at least 4 points")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InvalidSpec("n_grid must be increasing")
    _check_reps(reps, 30)
    tasks = [(g, metric, n, child_stream(stream, f"rate-n{n}", r)) for n in n_grid for r in range(reps)]
    values = _run(_rate_rep, tasks, workers)
    rows = []
    for i, n in enumerate(n_grid):
        mean, se = _mean_se(values[i * reps:(i + 1) * reps])
        rows.append({"param": "n", "value": n, "mean": mean, "std_error": se, "reps": reps})
    fit = fit_power_law(n_grid, [r["mean"] for r in rows])
    fit.rows = rows
    return fit


# ----------------------------------------------------------------- sigma / epsilon sweeps
def _sweep_rep(spec, metric, n, stream):
    data = synthesize(spec, n, child_stream(stream, "data"))
    return _compare(data.points, reference_measure(spec.generator, n, child_stream(stream, "reference")), metric)


def _sweep(param, specs, grid, metric, n, reps, stream, workers):
    _check_reps(reps, 30)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidSpec(f"{param} grid must be increasing")
    tasks = [(spec, metric, n, child_stream(stream, f"{param}-{i}", r)) for i, spec in enumerate(specs) for r in range(reps)]
    values = _run(_sweep_rep, tasks, workers)
    rows = []
    for i, v in enumerate(grid):
        mean, se = _mean_se(values[i * reps:(i + 1) * reps])
        rows.append({"param": param, "value": float(v), "mean": mean, "std_error": se, "reps": reps})
    slope, intercept, r2, se = _linear_fit(grid, [r["mean"] for r in rows])
    return SweepResult(param, rows, slope, intercept, r2, se)


def noise_sweep(g: GeneratorSpec, metric: IpmSpec, sigma_grid, n: int, reps: int, stream,
                noise_model: str = "uniform-1d", workers: int = 1) -> SweepResult:
    """Mean distance to g # U_d for noisy, uncontaminated data, with a linear fit in sigma."""
    sigma_grid = [float(s) for s in sigma_grid]
    if 0.0 not in sigma_grid:
        raise InvalidSpec("sigma grid must include 0")
    specs = [DataSpec(g, s, 0.0, noise_model) for s in sigma_grid]
    return _sweep("sigma", specs, sigma_grid, metric, n, reps, stream, workers)


def contamination_sweep(g: GeneratorSpec, metric: IpmSpec, epsilon_grid, n: int, reps: int, stream,
                        workers: int = 1) -> SweepResult:
    """Mean distance to g # U_d with floor(eps n) corner outliers, with a linear fit in epsilon."""
    epsilon_grid = [float(e) for e in epsilon_grid]
    specs = [DataSpec(g, 0.0, e, outlier_policy="corner") for e in epsilon_grid]
    return _sweep("epsilon", specs, epsilon_grid, metric, n, reps, stream, workers)


def excess_doubling(result: SweepResult, baseline: float = 0.0, lo: float = 0.1, hi: float = 0.4):
    """Pairs (v, 2v) of the grid inside [lo, hi] with their excesses over ``baseline``.

    The default baseline is the population value 0 at the zero point.  The
    sampled zero point, E|Z| for a centred sampling error Z, is not additive
    once a shift dominates Z, so it is the wrong reference here.
    """
    by_value = {r["value"]: r for r in result.rows}
    out = []
    for v, row in sorted(by_value.items()):
        w = round(2 * v, 12)
        if lo <= v and w <= hi and w in by_value:
            e1, e2 = row["mean"] - baseline, by_value[w]["mean"] - baseline
            tol = 2 * math.hypot(2 * row["std_error"], by_value[w]["std_error"])
            out.append({"value": v, "excess": e1, "double": w, "double_excess": e2,
                        "holds": bool(abs(e2 - 2 * e1) <= tol)})
    return out


# ----------------------------------------------------------------- lower bound
def exact_mean_deviation(n: int) -> Fraction:
    """E|mean(U_1..U_n) - 1/2| exactly, from the Irwin-Hall density."""
    if n < 1:
        raise InvalidSpec("n must be >= 1")
    c = Fraction(n, 2)
    total = Fraction(0)
    for k in range(n + 1):
        a = max(c - k, Fraction(0))
        top = Fraction(n - k)
        if top <= a:
            continue
        # integral of (t + k - c) t^(n-1) over [a, n - k]
        prim = lambda t: t ** (n + 1) / (n + 1) + (k - c) * t ** n / n  # noqa: E731
        total += (-1) ** k * math.comb(n, k) * (prim(top) - prim(a))
    return 2 * total / math.factorial(n - 1) / n


def lower_bound_check(n_grid, reps: int, stream, exact_max_n: int = 100, chunk: int = 2 ** 22) -> dict:
    """Monte Carlo E|mean(U) - 1/2| against 0.105 / sqrt(n).

    Two forms are checked: the estimate itself and half the estimate (the
    form needed when the bound is used for a pair of hypotheses one unit of
    mean shift apart).  The CLT value 0.2303 / sqrt(n) and, for small n, the
    exact value are reported alongside.
    """
    _check_reps(reps, 10_000)
    rows = []
    for n in n_grid:
        n = int(n)
        rng = as_generator(child_stream(stream, "lower-bound", n))
        per = max(1, chunk // n)
        total, total_sq, done = 0.0, 0.0, 0
        while done < reps:
            k = min(per, reps - done)
            dev = np.abs(rng.random((k, n)).mean(axis=1) - 0.5)
            total += float(dev.sum())
            total_sq += float((dev ** 2).sum())
            done += k
        est = total / reps
        se = math.sqrt(max(total_sq / reps - est ** 2, 0.0) / (reps - 1))
        bound = LOWER_BOUND_CONSTANT / math.sqrt(n)
        exact = float(exact_mean_deviation(n)) if n <= exact_max_n else None
        rows.append({"n": n, "reps": reps, "estimate": est, "std_error": se, "bound": bound,
                     "clt": CLT_CONSTANT / math.sqrt(n), "exact": exact,
                     "holds": est >= bound, "holds_half": 0.5 * est >= bound})
    return {"rows": rows, "all_hold": all(r["holds"] and r["holds_half"] for r in rows)}


# ----------------------------------------------------------------- Huber indistinguishability
def huber_indistinguishability_check(epsilon: float, n: int, stream, alpha: float = 0.01) -> dict:
    """Two contaminated models with equal mixtures but clean laws eps apart.

    Hypothesis 1: inliers (1 - eps) U, outliers U[1 - eps, 1].
    Hypothesis 2: inliers (1 - eps) U + eps, outliers U[0, eps].
    Both mixtures are U[0, 1]; their clean parts differ in mean by eps.
    """
    if not 0 < epsilon < 1:
        raise InvalidSpec(f"epsilon must lie in (0, 1), got {epsilon}")
    g1, g2 = lowerbound_contamination(1, epsilon), lowerbound_contamination(2, epsilon)
    x1 = synthesize_huber("HC", g1, UniformInterval(1 - epsilon, 1), epsilon, n, child_stream(stream, "h1")).points[:, 0]
    x2 = synthesize_huber("HC", g2, UniformInterval(0, epsilon), epsilon, n, child_stream(stream, "h2")).points[:, 0]
    two = stats.ks_2samp(x1, x2)
    one1, one2 = stats.kstest(x1, "uniform"), stats.kstest(x2, "uniform")
    c1 = g1.sample(n, child_stream(stream, "clean1"))
    c2 = g2.sample(n, child_stream(stream, "clean2"))
    gap = projection_ipm(c1, c2)
    mc_error = math.sqrt((c1[:, 0].var(ddof=1) + c2[:, 0].var(ddof=1)) / n)
    ks_ok = min(two.pvalue, one1.pvalue, one2.pvalue) > alpha
    return {
        "epsilon": epsilon, "n": n,
        "ks_two_sample": {"statistic": float(two.statistic), "pvalue": float(two.pvalue)},
        "ks_uniform_1": {"statistic": float(one1.statistic), "pvalue": float(one1.pvalue)},
        "ks_uniform_2": {"statistic": float(one2.statistic), "pvalue": float(one2.pvalue)},
        "clean_gap": gap, "clean_gap_exact": epsilon, "mc_error": mc_error,
        "ks_non_rejecting": bool(ks_ok), "gap_holds": bool(gap >= epsilon - 3 * mc_error),
        "all_hold": bool(ks_ok and gap >= epsilon - 3 * mc_error),
    }


# ----------------------------------------------------------------- output
CSV_COLUMNS = ("param", "value", "mean", "std_error", "reps")


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in CSV_COLUMNS})
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def lower_bound_setup(d: int = 1):
    """The generator (2u + 1) / 4 and the first-coordinate projection metric."""
    return lower_bound_generator(d), IpmSpec("projection-first-axis", D=d)
