import numpy as np
import pytest
from scipy import stats

from pushgen.contamination import (CustomPoints, DataSpec, HuberMixture, chi_mean, dataset_from_csv,
                                   dataspec_from_mapping, outlier_count, synthesize, synthesize_huber,
                                   lower_bound_instance)
from pushgen.exceptions import HypothesisViolation, InvalidDimension, InvalidSpec
from pushgen.generators import identity, lowerbound_contamination, lower_bound_generator
from pushgen.ipm import projection_ipm
from pushgen.measures import UniformInterval
from pushgen.sampling import child_stream


def test_noiseless_points_are_latents(stream):
    ds = synthesize(DataSpec(identity(1)), 4, stream)
    assert np.array_equal(ds.points, ds.latents)
    assert ds.inlier_mask.all()


def test_sphere_noise_norm(stream):
    ds = synthesize(DataSpec(identity(2), sigma=0.3), 10 ** 4, stream)
    norms = np.linalg.norm(ds.points - ds.latents, axis=1)
    assert abs(norms.mean() - 0.3) < 0.005
    assert np.allclose(norms, 0.3)


def test_gaussian_noise_mean_norm(stream):
    ds = synthesize(DataSpec(identity(3), sigma=0.2, noise_model="gaussian-scaled"), 10 ** 5, stream)
    assert abs(np.linalg.norm(ds.noise, axis=1).mean() - 0.2) < 0.003


def test_chi_mean_values():
    assert chi_mean(1) == pytest.approx(np.sqrt(2 / np.pi))
    assert chi_mean(2) == pytest.approx(np.sqrt(np.pi / 2))


def test_corner_outliers(stream):
    ds = synthesize(DataSpec(identity(2), epsilon=0.1), 100, stream)
    corner = np.all(ds.points == 1.0, axis=1)
    assert corner.sum() == 10
    assert np.array_equal(~ds.inlier_mask, corner)
    assert not ds.inlier_mask[-10:].any()


@pytest.mark.parametrize("eps,n", [(0.1, 30), (0.3, 10), (0.07, 100), (0.5, 7), (1 / 3, 9)])
def test_inlier_count(stream, eps, n):
    ds = synthesize(DataSpec(identity(1), epsilon=eps), n, stream)
    assert (~ds.inlier_mask).sum() == outlier_count(eps, n)
    assert ds.inlier_mask.sum() >= np.ceil((1 - eps) * n - 1e-9)


def test_outlier_count_floor_fuzz():
    assert outlier_count(0.1, 30) == 3  # 0.1 * 30 is 3.0000000000000004
    assert outlier_count(0.3, 10) == 3  # 0.3 * 10 is 3.0000000000000004, floors to 3 either way
    assert outlier_count(0.7, 10) == 7  # 0.7 * 10 is 7.000000000000001
    assert outlier_count(0.29, 100) == 29  # 0.29 * 100 is 28.999999999999996


def test_custom_outliers_see_inliers(stream):
    seen = {}

    def place(inliers, n_out, rng):
        seen["n"] = len(inliers)
        return np.repeat(inliers.max(axis=0, keepdims=True), n_out, axis=0)

    ds = synthesize(DataSpec(identity(1), epsilon=0.2, outlier_policy=CustomPoints(place)), 50, stream)
    assert seen["n"] == 40
    assert np.all(ds.points[40:] == ds.points[:40].max())


def test_huber_mixture_policy(stream):
    spec = DataSpec(identity(1), epsilon=0.5, outlier_policy=HuberMixture(UniformInterval(2, 3)))
    ds = synthesize(spec, 100, stream)
    assert np.all((ds.points[50:] >= 2) & (ds.points[50:] <= 3))


def test_joint_sampler_hook(stream):
    def joint(n, s):
        U = np.linspace(0, 1, n)[:, None]
        return U, 0.1 * U  # noise correlated with the latent
    ds = synthesize(DataSpec(identity(1), joint_sampler=joint), 11, stream)
    assert np.allclose(ds.points[:, 0], 1.1 * np.linspace(0, 1, 11))


def test_spec_validation():
    with pytest.raises(InvalidSpec):
        DataSpec(identity(1), sigma=-0.1)
    with pytest.raises(InvalidSpec):
        DataSpec(identity(1), epsilon=1.2)
    with pytest.raises(InvalidSpec):
        DataSpec(identity(1), noise_model="laplace")
    with pytest.raises(InvalidSpec):
        DataSpec(identity(2), outlier_policy=HuberMixture(UniformInterval(0, 1)))
    with pytest.raises(InvalidSpec):
        DataSpec(identity(1), outlier_policy="median")


def test_n_zero_rejected(stream):
    with pytest.raises(InvalidDimension):
        synthesize(DataSpec(identity(1)), 0, stream)


def test_huber_ks_against_uniform(stream):
    eps, n = 0.25, 10 ** 5
    crit = 1.63 / np.sqrt(n)
    x1 = synthesize_huber("HC", lowerbound_contamination(1, eps), UniformInterval(1 - eps, 1), eps, n,
                          child_stream(stream, "1")).points[:, 0]
    x2 = synthesize_huber("HC", lowerbound_contamination(2, eps), UniformInterval(0, eps), eps, n,
                          child_stream(stream, "2")).points[:, 0]
    assert stats.kstest(x1, "uniform").statistic < crit
    assert stats.kstest(x2, "uniform").statistic < crit
    assert stats.ks_2samp(x1, x2).pvalue > 0.01


def test_hdc_exact_count_and_zero_eps(stream):
    g = identity(1)
    ds = synthesize_huber("HDC", g, UniformInterval(5, 6), 0.1, 1000, stream)
    assert (~ds.inlier_mask).sum() == 100
    assert np.all(ds.points[~ds.inlier_mask] >= 5)
    clean = synthesize_huber("HDC", g, UniformInterval(5, 6), 0.0, 1000, stream)
    assert clean.inlier_mask.all() and clean.points.max() <= 1
    with pytest.raises(InvalidSpec):
        synthesize_huber("XX", g, UniformInterval(0, 1), 0.1, 10, stream)


def test_lower_bound_ranges(stream):
    ds = lower_bound_instance(0.0, 0.0, 10, stream)
    assert ds.points.min() >= 0.25 and ds.points.max() <= 0.75
    ds = lower_bound_instance(0.5, 0.0, 1000, stream)
    assert ds.points.min() >= 0.25 and ds.points.max() <= 1.25
    ds = lower_bound_instance(0.1, 1.0, 20, stream)
    assert np.all(ds.points == 1.0)
    with pytest.raises(HypothesisViolation):
        lower_bound_instance(0.6, 0.0, 10, stream)


def test_lower_bound_projection_gap(stream):
    sigma, eps = 0.2, 0.1
    gaps = [projection_ipm(lower_bound_instance(sigma, eps, 1000, child_stream(stream, "r", r)).points,
                           np.array([[0.5]])) for r in range(200)]
    # mean shift: (1 - eps) * 0.5 sigma + eps * 0.5
    expected = (1 - eps) * 0.5 * sigma + 0.5 * eps
    assert abs(np.mean(gaps) - expected) < 4 * np.std(gaps) / np.sqrt(200) + 1e-9


def test_decomposition_bound(stream):
    # E d(P_n, P*) <= sigma + 2 eps + E d(clean P_n, P*) under the projection class (L_F = M_F = 1)
    g = lower_bound_generator()
    sigma, eps, n, reps = 0.2, 0.1, 500, 200
    dirty, clean = [], []
    for r in range(reps):
        s = child_stream(stream, "rep", r)
        ds = synthesize(DataSpec(g, sigma, eps, "sphere-fixed"), n, s)
        dirty.append(projection_ipm(ds.points, np.array([[0.5]])))
        U = ds.latents
        clean.append(projection_ipm(g.evaluate(U), np.array([[0.5]])))
    se = np.hypot(np.std(dirty), np.std(clean)) / np.sqrt(reps)
    assert np.mean(dirty) <= sigma + 2 * eps + np.mean(clean) + 3 * se


def test_csv_round_trip(stream):
    ds = synthesize(DataSpec(identity(2), sigma=0.1, epsilon=0.2), 20, stream)
    back = dataset_from_csv(ds.to_csv())
    assert np.array_equal(back.points, ds.points)
    assert np.array_equal(back.inlier_mask, ds.inlier_mask)
    assert back.sigma == 0.1 and back.epsilon == 0.2 and back.seed == ds.seed
    text = ds.to_csv()
    assert text.splitlines()[:2] == ["# n=20", "# D=2"]
    assert "x_1,x_2,inlier" in text


def test_csv_rejects_bad_header():
    with pytest.raises(InvalidSpec):
        dataset_from_csv("a,b\n1,2\n")
    with pytest.raises(InvalidSpec):
        dataset_from_csv("# n=3\nx_1,inlier\n0.5,1\n")


def test_dataspec_from_mapping():
    gen = {"family": "affine", "d": "1", "D": "1", "params": "0.5, 0.25"}
    spec = dataspec_from_mapping(gen, {"sigma": "0.1", "epsilon": "0.2", "noise_model": "uniform-1d",
                                       "outlier_policy": "huber-uniform:0.9:1.0"})
    assert spec.generator == lower_bound_generator()
    assert spec.outlier_policy == HuberMixture(UniformInterval(0.9, 1.0))
    with pytest.raises(InvalidSpec, match="data"):
        dataspec_from_mapping(gen, {"sigma": "lots"})
