"""Target density oracles: closed-form log densities recomputed with
independent numpy formulas, score checks via finite differences, sampler
checks via moment matching."""

import numpy as np
import pytest

from propopt.targets import (
    AffinePushforward,
    AugmentedTarget,
    GaussianMixtureCross,
    IsoCauchy,
    IsoGaussian,
    IsoLaplace,
    LogisticDataset,
    LogisticRegressionPosterior,
    StabilizedUniform,
    make_target,
)

LOG_2PI = np.log(2.0 * np.pi)


def fd_score(target, x, eps=1e-6):
    d = x.shape[-1]
    grad = np.zeros(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = eps
        grad[j] = (target.log_density(x + e) - target.log_density(x - e)) / (2 * eps)
    return grad


@pytest.mark.parametrize("dim", [1, 3, 10])
def test_gaussian_log_density_closed_form(dim):
    rng = np.random.default_rng(0)
    t = IsoGaussian(dim)
    x = rng.standard_normal((5, dim))
    want = -0.5 * dim * LOG_2PI - 0.5 * (x ** 2).sum(axis=1)
    assert np.allclose(t.log_density(x), want, atol=1e-12)


def test_laplace_log_density_closed_form():
    rng = np.random.default_rng(1)
    t = IsoLaplace(4)
    x = rng.standard_normal((5, 4))
    want = -4 * np.log(2.0) - np.abs(x).sum(axis=1)
    assert np.allclose(t.log_density(x), want, atol=1e-12)


def test_cauchy_log_density_closed_form():
    rng = np.random.default_rng(2)
    t = IsoCauchy(3)
    x = rng.standard_normal((5, 3))
    want = (-np.log(np.pi) - np.log1p(x ** 2)).sum(axis=1)
    assert np.allclose(t.log_density(x), want, atol=1e-12)


def test_uniform_mixture_density_inside_and_outside():
    t = StabilizedUniform(2)
    inside = t.log_density(np.array([0.5, 0.5]))
    # Inside: uniform weight ~1, density ~1.
    assert abs(inside - 0.0) < 1e-10
    outside = t.log_density(np.array([2.0, 0.5]))
    gauss = -LOG_2PI - 0.5 * (4.0 + 0.25)
    assert np.isclose(outside, -100.0 - np.log1p(np.exp(-100.0)) + gauss)


def test_cross_mixture_density_against_manual_mixture():
    t = GaussianMixtureCross()
    centers = np.array([[4.0, 0.0], [-4.0, 0.0], [0.0, 4.0], [0.0, -4.0]])
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 2)) * 3.0
    comps = np.stack([
        -LOG_2PI - 0.5 * ((x - c) ** 2).sum(axis=1) for c in centers])
    want = np.log(np.exp(comps).mean(axis=0))
    assert np.allclose(t.log_density(x), want, atol=1e-10)


@pytest.mark.parametrize("make", [
    lambda: IsoGaussian(4),
    lambda: IsoLaplace(4),
    lambda: IsoCauchy(4),
    lambda: GaussianMixtureCross(),
    lambda: StabilizedUniform(4),
])
def test_score_matches_finite_difference(make):
    t = make()
    rng = np.random.default_rng(4)
    for _ in range(3):
        x = rng.standard_normal(t.dim) * 0.4 + 0.3  # keep laplace off kinks
        got = t.grad_log_density(x[None])[0]
        want = fd_score(t, x)
        assert np.allclose(got, want, atol=1e-5), (got, want)


def test_gaussian_sampler_moments():
    t = IsoGaussian(5)
    x = t.sample(np.random.default_rng(5), 60000)
    assert np.abs(x.mean(axis=0)).max() < 0.02
    assert np.abs(x.var(axis=0) - 1.0).max() < 0.03


def test_laplace_sampler_variance_is_two():
    t = IsoLaplace(3)
    x = t.sample(np.random.default_rng(6), 80000)
    assert np.abs(x.var(axis=0) - 2.0).max() < 0.06


def test_cauchy_sampler_quartiles():
    # Cauchy has no moments; quartiles of the standard cauchy are at +-1.
    t = IsoCauchy(2)
    x = t.sample(np.random.default_rng(7), 80000)
    q1, q3 = np.quantile(x[:, 0], [0.25, 0.75])
    assert abs(q1 + 1.0) < 0.05 and abs(q3 - 1.0) < 0.05  # quartile SE ~ 0.01


def test_uniform_sampler_stays_in_cube():
    t = StabilizedUniform(3)
    x = t.sample(np.random.default_rng(8), 50000)
    outside = np.any((x < 0) | (x > 1), axis=1).mean()
    assert outside < 1e-3  # gaussian component has weight ~e^-100


def test_cross_sampler_covariance():
    t = GaussianMixtureCross()
    x = t.sample(np.random.default_rng(9), 100000)
    cov = np.cov(x.T)
    assert np.allclose(np.diag(cov), [9.0, 9.0], atol=0.2)
    assert abs(cov[0, 1]) < 0.15


def test_gaussian_hessian_vector_product():
    t = IsoGaussian(4)
    x = np.random.default_rng(10).standard_normal((3, 4))
    v = np.random.default_rng(11).standard_normal((3, 4))
    # Hessian of the iso gaussian log density is -I.
    assert np.allclose(t.hessian_vector(x, v), -v, atol=1e-12)


def test_logistic_posterior_score_finite_diff():
    ds = LogisticDataset.synthetic(40, 4, seed=0)
    t = LogisticRegressionPosterior(ds)
    rng = np.random.default_rng(12)
    w = rng.standard_normal(t.dim) * 0.3
    got = t.grad_log_density(w[None])[0]
    want = fd_score(t, w)
    assert np.allclose(got, want, atol=1e-5)


def test_logistic_posterior_hvp_finite_diff():
    ds = LogisticDataset.synthetic(30, 3, seed=1)
    t = LogisticRegressionPosterior(ds)
    rng = np.random.default_rng(13)
    w = rng.standard_normal(t.dim) * 0.2
    v = rng.standard_normal(t.dim)
    eps = 1e-6
    want = (t.grad_log_density((w + eps * v)[None])[0]
            - t.grad_log_density((w - eps * v)[None])[0]) / (2 * eps)
    got = t.hessian_vector(w[None], v[None])[0]
    assert np.allclose(got, want, atol=1e-4)


def test_logistic_from_csv_standardizes_and_appends_intercept(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("a,b,label\n1,10,0\n2,20,1\n3,30,1\n4,40,0\n")
    ds = LogisticDataset.from_csv(str(path))
    assert ds.design.shape == (4, 3)
    assert np.allclose(ds.design[:, -1], 1.0)  # intercept column
    assert np.allclose(ds.design[:, 0].mean(), 0.0, atol=1e-12)
    assert np.allclose(ds.design[:, 0].std(), 1.0, atol=1e-12)
    assert np.array_equal(ds.labels, [0, 1, 1, 0])


def test_affine_pushforward_change_of_variables():
    base = IsoGaussian(2)
    A = np.array([[2.0, 0.3], [0.0, 0.5]])
    b = np.array([1.0, -2.0])
    t = AffinePushforward(base, A, b)
    rng = np.random.default_rng(14)
    y = rng.standard_normal((5, 2))
    x = np.linalg.solve(A, (y - b).T).T
    want = base.log_density(x) - np.log(abs(np.linalg.det(A)))
    assert np.allclose(t.log_density(y), want, atol=1e-10)
    got = t.grad_log_density(y[0][None])[0]
    assert np.allclose(got, fd_score(t, y[0]), atol=1e-5)


def test_augmented_target_is_product_density():
    base = GaussianMixtureCross()
    t = AugmentedTarget(base, 3)
    assert t.dim == 5
    rng = np.random.default_rng(15)
    x = rng.standard_normal((4, 5))
    want = base.log_density(x[:, :2]) + (
        -1.5 * LOG_2PI - 0.5 * (x[:, 2:] ** 2).sum(axis=1))
    assert np.allclose(t.log_density(x), want, atol=1e-12)
    draws = t.sample(rng, 40000)
    assert np.abs(draws[:, 2:].var(axis=0) - 1.0).max() < 0.03


def test_make_target_factory_kinds():
    assert isinstance(make_target("gaussian", 7), IsoGaussian)
    assert isinstance(make_target("uniform", 3), StabilizedUniform)
    assert make_target("mixture_cross", 2).dim == 2
    with pytest.raises(ValueError):
        make_target("banana", 2)
