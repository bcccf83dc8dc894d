import warnings

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pushgen.contamination import DataSpec, synthesize
from pushgen.erm import (ErmGenerator, ErmProblem, ParametricFamily, affine_family, audit_oracle_inequality,
                         constant_family, empirical_objective, fit)
from pushgen.exceptions import InvalidSpec
from pushgen.generators import GeneratorSpec, affine, lower_bound_generator
from pushgen.ipm import IpmSpec
from pushgen.sampling import child_stream


@pytest.fixture
def affine_data(stream):
    return synthesize(DataSpec(lower_bound_generator()), 400, child_stream(stream, "data"))


def test_family_box_validation():
    with pytest.raises(InvalidSpec):
        affine_family(1, 1, [0.0, 0.0], [1.0, 0.5])  # corner (1, 0.5) leaves [0, 1]
    with pytest.raises(InvalidSpec):
        affine_family(1, 1, [0.5, 0.0], [0.2, 0.3])
    with pytest.raises(InvalidSpec):
        ParametricFamily(lower_bound_generator(), (0.0,), (1.0,))


def test_problem_validation(affine_data):
    with pytest.raises(InvalidSpec):
        ErmProblem(affine_family(1, 2), affine_data.points)


def test_objective_zero_at_truth(stream):
    # data built from the same latents the objective uses
    fam = affine_family()
    prob = ErmProblem(fam, np.zeros((300, 1)), IpmSpec("w1-exact-1d"))
    from pushgen.sampling import sample_latent
    U = sample_latent(300, 1, child_stream(stream, "erm-latent"))
    prob.data = lower_bound_generator().evaluate(U)
    assert empirical_objective([0.5, 0.25], prob, stream) == 0.0


def test_objective_constant_family_projection(stream):
    prob = ErmProblem(constant_family(1), np.full((20, 1), 0.5), IpmSpec("projection-first-axis"))
    for c in (0.0, 0.3, 0.9):
        assert empirical_objective([c], prob, stream) == pytest.approx(abs(c - 0.5), abs=1e-15)


def test_objective_deterministic(stream, affine_data):
    prob = ErmProblem(affine_family(), affine_data.points)
    assert empirical_objective([0.4, 0.2], prob, stream) == empirical_objective([0.4, 0.2], prob, stream)


def test_fit_constant_family(stream):
    prob = ErmProblem(constant_family(1), np.full((50, 1), 0.5), IpmSpec("w1-exact-1d"))
    sol = fit(prob, stream)
    assert abs(sol.theta_hat[0] - 0.5) <= 1e-6
    assert sol.warnings == []


def test_fit_recovers_affine(stream):
    data = synthesize(DataSpec(lower_bound_generator()), 2000, child_stream(stream, "data"))
    prob = ErmProblem(affine_family(), data.points, IpmSpec("w1-exact-1d"))
    sol = fit(prob, child_stream(stream, "fit"))
    assert np.all(np.abs(sol.theta_hat - [0.5, 0.25]) <= 0.02)
    assert sol.generator.family == "affine"


def test_fit_is_best_probe_and_deterministic(stream, affine_data):
    prob = ErmProblem(affine_family(), affine_data.points, max_evals=600, restarts=4)
    sol = fit(prob, stream)
    values = [v for _, v in sol.probes]
    assert sol.n_evals == len(values) <= 600
    assert sol.objective <= min(values) + 1e-9
    assert all(sol.objective <= v for v in sol.start_values)
    again = fit(prob, stream)
    assert np.array_equal(again.theta_hat, sol.theta_hat) and again.restart == sol.restart


def test_budget_warning(stream):
    fam = affine_family(4, 1)
    assert fam.dim == 5
    prob = ErmProblem(fam, np.full((30, 1), 0.5), IpmSpec("w1-exact-1d"), max_evals=3, restarts=2)
    sol = fit(prob, stream)
    assert any("budget-exhausted" in w for w in sol.warnings)
    assert sol.n_evals <= 3


def test_argmin_invariant_to_metric_scale(stream, affine_data):
    # the dictionary IPM is linear in L_F
    base = ErmProblem(affine_family(), affine_data.points, IpmSpec("walpha-dictionary", alpha=1, L_F=1.0, K=3),
                      max_evals=800, restarts=4)
    scaled = ErmProblem(affine_family(), affine_data.points, IpmSpec("walpha-dictionary", alpha=1, L_F=3.0, K=3),
                        max_evals=800, restarts=4)
    a, b = fit(base, stream), fit(scaled, stream)
    assert np.allclose(a.theta_hat, b.theta_hat, atol=1e-6)
    assert b.objective == pytest.approx(3 * a.objective, rel=1e-9, abs=1e-12)


def test_audit_well_specified(stream):
    prob = ErmProblem(affine_family(), np.zeros((300, 1)), IpmSpec("w1-exact-1d"), max_evals=400, restarts=4)
    rep = audit_oracle_inequality(prob, lower_bound_generator(), 5, stream, grid_size=15)
    assert rep.all_hold
    assert rep.inf_grid <= 0.01
    assert "upper bound" in rep.note
    assert rep.summary()["violations"] == 0


def test_audit_misspecified_constant_family(stream):
    prob = ErmProblem(constant_family(1), np.zeros((300, 1)), IpmSpec("w1-exact-1d"), max_evals=200, restarts=2)
    rep = audit_oracle_inequality(prob, lower_bound_generator(), 5, stream, grid_size=41)
    assert rep.all_hold
    # best constant for U[1/4, 3/4] under W1 is the median, risk 1/8
    assert rep.inf_grid == pytest.approx(0.125, abs=1e-12)


def test_audit_projection_metric(stream):
    prob = ErmProblem(constant_family(1), np.zeros((300, 1)), IpmSpec("projection-first-axis"),
                      max_evals=200, restarts=2)
    rep = audit_oracle_inequality(prob, lower_bound_generator(), 5, stream, grid_size=41)
    assert rep.all_hold
    assert rep.inf_grid == pytest.approx(0.0, abs=1e-12)
    for row in rep.rows:
        # the constant family reproduces the sample mean exactly, so the risk is the mean gap
        assert row["risk"] == pytest.approx(row["stochastic"], abs=1e-6)


def test_estimator_api(affine_data):
    est = ErmGenerator(max_evals=600, restarts=4, random_state=3)
    assert est.get_params()["restarts"] == 4
    with pytest.raises(NotFittedError):
        est.sample(5)
    est.fit(affine_data.points)
    assert est.theta_.shape == (2,)
    assert np.allclose(est.theta_, [0.5, 0.25], atol=0.05)
    X = est.sample(10)
    assert X.shape == (10, 1)
    assert np.array_equal(X, est.sample(10))
    assert est.score(affine_data.points) <= 0
    twin = clone(est).set_params(restarts=2)
    assert twin.restarts == 2 and not hasattr(twin, "theta_")


def test_estimator_warns_on_tiny_budget():
    est = ErmGenerator(max_evals=2, restarts=1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est.fit(np.full((10, 1), 0.5))
    assert any("budget" in str(w.message) for w in caught)


def test_estimator_rejects_unknown_family():
    with pytest.raises(InvalidSpec):
        ErmGenerator(family="spline").fit(np.zeros((5, 1)))
