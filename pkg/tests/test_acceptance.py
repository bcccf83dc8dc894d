"""End-to-end acceptance checks at their full tolerances.

Each test records a PASS/FAIL line shown in the terminal summary.  The Monte
Carlo studies take about 15 minutes on one core.
"""
import itertools
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from pushgen.cli import run
from pushgen.contamination import DataSpec, synthesize
from pushgen.erm import ErmProblem, affine_family, audit_oracle_inequality, fit
from pushgen.experiments import (contamination_sweep, exact_mean_deviation, huber_indistinguishability_check,
                                 lower_bound_check, lower_bound_setup, noise_sweep, rate_study)
from pushgen.generators import coordinate_trig, identity, lower_bound_generator
from pushgen.ipm import DictionaryAtom, IpmSpec, brute_lp_oracle, w1_empirical, w1_exact_1d
from pushgen.sampling import SeedPolicy
from pushgen.smoothness import composition_constant, enumerate_multiindices, r_set, sub_indices, \
    verify_composition_bound

pytestmark = pytest.mark.slow

N_GRID = [128 * 2 ** i for i in range(7)]
W1 = IpmSpec("w1-assignment")
RATE_BANDS = {1: (-0.55, -0.45), 2: (-0.58, -0.42), 3: (-1 / 3 - 0.05, -1 / 3 + 0.05), 5: (-0.25, -0.15)}


def seed(tag):
    return SeedPolicy(7).stream(0, tag)


@pytest.fixture(scope="module")
def rate_fits():
    fits, seconds = {}, {}
    for d in RATE_BANDS:
        t = time.perf_counter()
        fits[d] = rate_study(identity(d), W1, N_GRID, 50, seed(f"rate-d{d}"))
        seconds[d] = time.perf_counter() - t
    return fits, seconds


def test_w1_rate_exponents(rate_fits, verdict):
    fits, seconds = rate_fits
    inside = {d: RATE_BANDS[d][0] <= fits[d].slope <= RATE_BANDS[d][1] for d in RATE_BANDS}
    total = sum(seconds.values())
    detail = ", ".join(f"d={d} slope {fits[d].slope:.4f}" for d in RATE_BANDS) + f"; {total:.0f} s"
    assert verdict(1, all(inside.values()) and total <= 900, detail)


@pytest.mark.xfail(reason="the trig pushforward converges measurably faster than the identity over n <= 8192; "
                          "see the decision log", strict=False)
def test_rate_is_generator_independent(rate_fits, verdict):
    ident = rate_fits[0][3]
    trig = rate_study(coordinate_trig(3, 3, alpha=1, L=2.0), W1, N_GRID, 50, seed("rate-trig3"))
    combined = math.hypot(ident.slope_std_error, trig.slope_std_error)
    gap = abs(trig.slope - ident.slope)
    assert verdict(2, gap <= 2 * combined, f"trig {trig.slope:.4f} vs identity {ident.slope:.4f}, "
                                           f"gap {gap:.4f}, 2x combined SE {2 * combined:.4f}")


def test_noise_linearity(verdict):
    g, metric = lower_bound_setup()
    res = noise_sweep(g, metric, [0.0, 0.1, 0.2, 0.3, 0.4], 2000, 200, seed("noise"))
    ok = abs(res.slope - 0.5) <= 0.05 and res.r_squared >= 0.99
    assert verdict(3, ok, f"slope {res.slope:.4f}, r2 {res.r_squared:.5f}")


def test_contamination_linearity(verdict):
    g, metric = lower_bound_setup()
    res = contamination_sweep(g, metric, [0.0, 0.05, 0.1, 0.2], 2000, 200, seed("contamination"))
    ok = abs(res.slope - 0.5) <= 0.05 and res.r_squared >= 0.99
    assert verdict(4, ok, f"slope {res.slope:.4f}, r2 {res.r_squared:.5f}")


def test_lower_bound_constant(verdict):
    grid = lower_bound_check([1, 10, 100, 1000, 10_000], 10_000, seed("lower-bound"))
    # the n = 1 value needs ~4e6 draws before its third decimal is stable
    single = lower_bound_check([1], 4_000_000, seed("lower-bound-n1"))["rows"][0]
    exact = exact_mean_deviation(1)
    ok = grid["all_hold"] and exact == Fraction(1, 4) and round(single["estimate"], 3) == 0.25
    ratios = ", ".join(f"n={r['n']}: {r['estimate'] * math.sqrt(r['n']):.4f}" for r in grid["rows"])
    assert verdict(5, ok, f"sqrt(n) E|mean - 1/2| = {ratios}; n=1 MC {single['estimate']:.5f}, exact {exact}")


def test_huber_indistinguishability(verdict):
    rep = huber_indistinguishability_check(0.25, 100_000, seed("huber"))
    p = min(rep[k]["pvalue"] for k in ("ks_two_sample", "ks_uniform_1", "ks_uniform_2"))
    assert verdict(6, rep["all_hold"], f"min KS p-value {p:.3f}, clean gap {rep['clean_gap']:.4f} "
                                       f"(MC error {rep['mc_error']:.5f})")


def _permutation_w1(x, y):
    C = cdist(x, y)
    perms = np.array(list(itertools.permutations(range(len(y)))))
    return float(C[np.arange(len(x)), perms].mean(axis=1).min())


def test_transport_solver_exactness(verdict):
    rng = np.random.default_rng(11)
    worst_1d = 0.0
    for _ in range(200):
        x, y = rng.random((rng.integers(1, 51), 1)), rng.random((rng.integers(1, 51), 1))
        worst_1d = max(worst_1d, abs(w1_empirical(x, y) - w1_exact_1d(x, y)))
    h = 0.01
    worst_perm, worst_oracle = 0.0, 0.0
    for _ in range(50):
        n = int(rng.integers(1, 9))
        x, y = rng.random((n, 2)), rng.random((n, 2))
        value = w1_empirical(x, y)
        worst_perm = max(worst_perm, abs(value - _permutation_w1(x, y)))
        worst_oracle = max(worst_oracle, abs(value - brute_lp_oracle(x, y, h)))
    ok = worst_1d <= 1e-10 and worst_perm <= 1e-10 and worst_oracle <= h
    assert verdict(7, ok, f"1-D {worst_1d:.1e}, permutations {worst_perm:.1e}, oracle {worst_oracle:.4f} (h={h})")


def test_composition_bound(verdict):
    stream = seed("composition")
    worst, where = 0.0, None
    for alpha, d, D in itertools.product((1, 2, 3), (1, 2, 3), (1, 2, 3, 4)):
        g = coordinate_trig(d, D, alpha=alpha, L=2.0)
        for atom in (DictionaryAtom(np.ones(D), "cos", alpha), DictionaryAtom(np.ones(D), "sin", alpha),
                     DictionaryAtom(np.eye(D)[0], "cos", alpha)):
            rep = verify_composition_bound(g, atom, alpha, 100, stream.child(f"a{alpha}d{d}D{D}", int(atom.k.sum())))
            if rep.ratio > worst:
                worst, where = rep.ratio, (alpha, d, D, atom)
    first_order = all(composition_constant(D, d, 1).value == D for d in (1, 2, 3) for D in (1, 2, 3, 4))
    assert verdict(8, worst <= 1.05 and first_order, f"max ratio {worst:.4f} at (alpha, d, D) = {where[:3]}; "
                                                     f"C(D, d, 1) = D: {first_order}")


def _brute_r_set(gamma, a):
    """Every rho with entries <= |gamma|, |rho| = a and sum rho_j beta(j) = gamma.

    The scan prunes branches whose partial sum already exceeds gamma or a;
    no pruned branch can be completed, so the search stays exhaustive.
    """
    betas = sub_indices(gamma)
    top = sum(gamma)
    found = []

    def scan(j, rem, left, rho):
        if j == len(betas):
            if left == 0 and not any(rem):
                found.append(tuple(rho))
            return
        for c in range(min(top, left) + 1):
            nxt = tuple(r - c * b for r, b in zip(rem, betas[j]))
            if min(nxt) < 0:
                break
            scan(j + 1, nxt, left - c, rho + [c])

    scan(0, tuple(gamma), a, [])
    return found


def test_r_set_combinatorics(verdict):
    checked, mismatches = 0, 0
    for d in (1, 2, 3):
        for gamma in enumerate_multiindices(d, 6):
            for a in range(sum(gamma) + 1):
                checked += 1
                mismatches += sorted(r_set(gamma, a)) != sorted(_brute_r_set(tuple(gamma), a))
    counts = all(len(enumerate_multiindices(d, a)) == math.comb(d + a, d) for d in (1, 2, 3) for a in range(7))
    assert verdict(9, mismatches == 0 and counts, f"{checked} (gamma, a) cases, {mismatches} mismatches; "
                                                  f"counts match binomials: {counts}")


def test_oracle_inequality(verdict):
    problem = ErmProblem(affine_family(), np.zeros((1000, 1)))
    rep = audit_oracle_inequality(problem, lower_bound_generator(), 100, seed("audit"))
    worst = max(r["risk"] - r["rhs"] for r in rep.rows)
    assert verdict(10, rep.all_hold, f"{sum(not r['holds'] for r in rep.rows)} of 100 violations, "
                                     f"max risk - rhs {worst:.4f}")


def test_erm_recovery(verdict):
    data = synthesize(DataSpec(lower_bound_generator()), 2000, seed("recovery-data"))
    sol = fit(ErmProblem(affine_family(), data, IpmSpec("w1-exact-1d"), m=2000), seed("recovery-fit"))
    err = np.abs(sol.theta_hat - [0.5, 0.25])
    assert verdict(11, bool(np.all(err <= 0.02)), f"theta_hat {np.round(sol.theta_hat, 4).tolist()}, "
                                                  f"max error {err.max():.4f}")


STUDIES = [
    ["rate", "--d", "2", "--n", "64:512:x2", "--reps", "30"],
    ["sweep-noise", "--n", "500", "--reps", "30"],
    ["sweep-contamination", "--n", "500", "--reps", "30"],
    ["lower-bound", "--n", "1,10,100", "--reps", "10000"],
    ["huber-check", "--n", "10000"],
    ["smoothness-constant", "--D", "3", "--d", "2", "--alpha", "2"],
    ["synth", "--n", "100", "--sigma", "0.1", "--epsilon", "0.1"],
]


def test_manifest_reruns_are_byte_identical(tmp_path, verdict):
    differing = []
    data = tmp_path / "data"
    run(["synth", "--n", "300", "--seed", "4", "--out", str(data)])
    studies = STUDIES + [["erm-fit", "--data", str(data / "dataset.csv"), "--max-evals", "400", "--restarts", "2"],
                         ["ipm", "--p", str(data / "dataset.csv"), "--q", str(data / "dataset.csv")]]
    for i, argv in enumerate(studies):
        first, second = tmp_path / f"{i}a", tmp_path / f"{i}b"
        run(argv + ["--seed", "3", "--out", str(first)])
        manifest = json.loads((first / "manifest.json").read_text())
        run([argv[0], "--manifest", str(first / "manifest.json"), "--out", str(second)])
        for name in manifest["artifacts"]:
            if (first / name).read_bytes() != (second / name).read_bytes():
                differing.append(f"{argv[0]}/{name}")
    assert verdict(12, not differing, f"{len(studies)} subcommands rerun; differing artifacts: {differing or 'none'}")
