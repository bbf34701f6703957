import math

import numpy as np
import pytest

from hamlearn.estimator import (
    fit,
    gp_posterior,
    gp_posterior_mean,
    gp_posterior_var,
    normal_equation_residual,
    predict_field,
    predict_field_batch,
    predict_grad,
    predict_grad_batch,
    predict_h,
    predict_h_batch,
    regularized_risk,
    rkhs_norm_sq,
)
from hamlearn.gram import FactorizationError, SymplecticBlocks, assemble_gram
from hamlearn.kernel import GaussianKernel

from conftest import make_dataset, random_dataset, rel_err


@pytest.fixture
def hand_model():
    # N=1, d=1, eta=1, z=(0,0), observation (1,0), lam=0.5
    ds = make_dataset([[0.0, 0.0]], [[1.0, 0.0]])
    return fit(ds, GaussianKernel(1.0), 0.5), ds


def test_fit_zero_observations(rng):
    pts = rng.uniform(-1, 1, (6, 4))
    ds = make_dataset(pts, np.zeros((6, 4)))
    model = fit(ds, GaussianKernel(1.0), 0.3)
    np.testing.assert_array_equal(model.coeffs, np.zeros(24))
    assert predict_h(model, np.zeros(4)) == 0.0


def test_fit_hand_example(hand_model):
    model, ds = hand_model
    np.testing.assert_allclose(model.coeffs, [0.0, 0.4], atol=1e-14)
    # independent dense oracle: build J explicitly, solve with LU
    G = assemble_gram(model.kernel, ds.points)
    J = SymplecticBlocks(1, 1).dense()
    oracle = np.linalg.solve(G + 0.5 * np.eye(2), J.T @ ds.observations.reshape(-1))
    np.testing.assert_allclose(model.coeffs, oracle, atol=1e-14)
    assert normal_equation_residual(model, ds) <= 1e-8


def test_fit_shape_mismatch():
    ds = make_dataset([[0.0, 0.0]], [[1.0, 0.0]])
    object.__setattr__(ds, "observations", np.zeros((2, 2)))
    with pytest.raises(ValueError):
        fit(ds, GaussianKernel(1.0), 0.5)


def test_duplicated_points_match_single_point_fit(rng):
    # duplicating one observation leaves the minimizer unchanged: the mean
    # data term is identical, so the single-point fit at the same lam agrees
    z = np.array([0.2, -0.4, 0.1, 0.3])
    x = np.array([0.5, 1.0, -0.2, 0.7])
    lam = 0.05
    dup = fit(make_dataset([z, z], [x, x]), GaussianKernel(1.0), lam)
    single = fit(make_dataset([z], [x]), GaussianKernel(1.0), lam)
    for _ in range(10):
        q = rng.uniform(-1, 1, 4)
        assert predict_h(dup, q) == pytest.approx(predict_h(single, q), rel=1e-9, abs=1e-12)
    # each duplicated coefficient block is half the single-point block
    np.testing.assert_allclose(dup.coeffs[:4], 0.5 * single.coeffs, rtol=1e-9)
    np.testing.assert_allclose(dup.coeffs[4:], 0.5 * single.coeffs, rtol=1e-9)


def test_predict_h_hand_values(hand_model):
    model, _ = hand_model
    assert predict_h(model, [0.0, 0.0]) == 0.0
    assert predict_h(model, [0.0, 1.0]) == pytest.approx(0.4 * 2 * math.exp(-1), rel=1e-12)


def test_predict_grad_hand_value(hand_model):
    model, _ = hand_model
    np.testing.assert_allclose(predict_grad(model, [0.0, 0.0]), [0.0, 0.8], atol=1e-14)


def test_predict_field_hand_value(hand_model):
    model, _ = hand_model
    np.testing.assert_allclose(predict_field(model, [0.0, 0.0]), [0.8, 0.0], atol=1e-14)


def test_predict_dimension_mismatch(hand_model):
    model, _ = hand_model
    with pytest.raises(ValueError):
        predict_h(model, [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        predict_field_batch(model, np.zeros((3, 4)))


def test_predict_grad_matches_fd(rng):
    ds = random_dataset(rng, 8)
    model = fit(ds, GaussianKernel(1.2), 0.01)
    step = 1e-5
    for _ in range(10):
        z = rng.uniform(-1, 1, 4)
        fd = np.empty(4)
        for i in range(4):
            e = np.zeros(4)
            e[i] = step
            fd[i] = (predict_h(model, z + e) - predict_h(model, z - e)) / (2 * step)
        assert rel_err(predict_grad(model, z), fd) <= 1e-6


def test_predict_field_is_j_of_grad(rng):
    ds = random_dataset(rng, 6)
    model = fit(ds, GaussianKernel(0.9), 0.1)
    for _ in range(10):
        z = rng.uniform(-1, 1, 4)
        g = predict_grad(model, z)
        np.testing.assert_array_equal(predict_field(model, z), np.r_[g[2:], -g[:2]])


def test_batch_prediction_matches_scalar(rng):
    ds = random_dataset(rng, 7)
    model = fit(ds, GaussianKernel(1.0), 0.05)
    Z = rng.uniform(-1, 1, (9, 4))
    h = predict_h_batch(model, Z)
    g = predict_grad_batch(model, Z)
    f = predict_field_batch(model, Z)
    for i, z in enumerate(Z):
        assert h[i] == pytest.approx(predict_h(model, z), rel=1e-13, abs=1e-15)
        np.testing.assert_allclose(g[i], predict_grad(model, z), rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(f[i], predict_field(model, z), rtol=1e-13, atol=1e-15)


def test_fit_linear_in_observations(rng):
    pts = rng.uniform(-1, 1, (8, 4))
    x1 = rng.standard_normal((8, 4))
    x2 = rng.standard_normal((8, 4))
    k = GaussianKernel(1.0)
    c1 = fit(make_dataset(pts, x1), k, 0.2).coeffs
    c2 = fit(make_dataset(pts, x2), k, 0.2).coeffs
    c12 = fit(make_dataset(pts, x1 + x2), k, 0.2).coeffs
    assert np.linalg.norm(c12 - (c1 + c2)) <= 1e-10 * max(np.linalg.norm(c1 + c2), 1.0)


def test_learned_field_is_hamiltonian(rng):
    # Jacobian of the predicted field, premultiplied by J^{-1}, must be
    # symmetric: the field is the symplectic gradient of an actual function
    ds = random_dataset(rng, 10)
    model = fit(ds, GaussianKernel(1.1), 0.02)
    Jinv = SymplecticBlocks(2, 1).dense().T  # J^{-1} = J^T
    step = 1e-5
    for _ in range(20):
        z = rng.uniform(-1, 1, 4)
        D = np.empty((4, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = step
            D[:, j] = (predict_field(model, z + e) - predict_field(model, z - e)) / (2 * step)
        S = Jinv @ D
        defect = np.linalg.norm(S - S.T)
        assert defect <= 1e-4 * (1.0 + np.linalg.norm(D))


def test_fitted_coeffs_minimize_regularized_risk(rng):
    # convexity: any perturbation within the span must not lower the objective
    ds = random_dataset(rng, 8)
    model = fit(ds, GaussianKernel(1.0), 0.05)
    G = assemble_gram(model.kernel, model.train_points)
    base = regularized_risk(model, ds, gram=G)
    for _ in range(10):
        delta = rng.standard_normal(model.coeffs.size) * rng.choice([1e-3, 1e-1, 1.0])
        perturbed = type(model)(
            train_points=model.train_points,
            coeffs=model.coeffs + delta,
            kernel=model.kernel,
            lam=model.lam,
            d=model.d,
            n=model.n,
        )
        assert regularized_risk(perturbed, ds, gram=G) >= base - 1e-12


def test_rkhs_norm_positive(rng):
    ds = random_dataset(rng, 5)
    model = fit(ds, GaussianKernel(1.0), 0.1)
    assert rkhs_norm_sq(model) > 0


# -- GP posterior -----------------------------------------------------------


def test_gp_mean_zero_observations(rng):
    pts = rng.uniform(-1, 1, (5, 4))
    gp = gp_posterior(make_dataset(pts, np.zeros((5, 4))), GaussianKernel(1.0), 0.3)
    assert gp_posterior_mean(gp, np.zeros(4)) == 0.0


def test_gp_mean_equals_ridge_hand_example():
    ds = make_dataset([[0.0, 0.0]], [[1.0, 0.0]])
    gp = gp_posterior(ds, GaussianKernel(1.0), 0.5)  # sigma^2 = 0.5, N = 1 -> lam = 0.5
    assert gp_posterior_mean(gp, [0.0, 1.0]) == pytest.approx(0.4 * 2 * math.exp(-1), rel=1e-10)


def test_gp_mean_equals_ridge_random(rng):
    # lam = sigma^2 / N makes the two estimators coincide
    for _ in range(10):
        n = int(rng.integers(2, 10))
        ds = random_dataset(rng, n)
        sigma2 = float(rng.uniform(0.05, 1.0))
        k = GaussianKernel(float(rng.uniform(0.6, 2.0)))
        model = fit(ds, k, sigma2 / n)
        gp = gp_posterior(ds, k, sigma2)
        queries = rng.uniform(-1, 1, (20, 4))
        ridge = predict_h_batch(model, queries)
        scale = max(np.max(np.abs(ridge)), 1e-12)
        for z, r in zip(queries, ridge):
            m = gp_posterior_mean(gp, z)
            assert abs(m - r) <= 1e-8 * max(abs(m), abs(r), 1e-6 * scale)


def test_gp_mean_matches_direct_formula(rng):
    # oracle: explicit block-J conjugation of the covariance, generic solve
    n = 6
    ds = random_dataset(rng, n)
    sigma2 = 0.4
    k = GaussianKernel(1.0)
    gp = gp_posterior(ds, k, sigma2)
    G = assemble_gram(k, ds.points)
    Jbig = SymplecticBlocks(2, n).dense()
    cov = Jbig @ G @ Jbig.T + sigma2 * np.eye(4 * n)
    x = ds.observations.reshape(-1)
    for _ in range(5):
        z = rng.uniform(-1, 1, 4)
        r = (Jbig @ k.grad1_pairwise(ds.points, z[None, :]).reshape(-1))
        mean_direct = r @ np.linalg.solve(cov, x)
        var_direct = k.eval(z, z) - r @ np.linalg.solve(cov, r)
        assert gp_posterior_mean(gp, z) == pytest.approx(mean_direct, rel=1e-9, abs=1e-12)
        assert gp_posterior_var(gp, z) == pytest.approx(var_direct, rel=1e-9, abs=1e-12)


def test_gp_var_far_query_reaches_prior(rng):
    ds = random_dataset(rng, 5)
    gp = gp_posterior(ds, GaussianKernel(1.0), 0.1)
    z_far = np.full(4, 50.0)
    assert abs(gp_posterior_var(gp, z_far) - 1.0) <= 1e-6


def test_gp_var_below_prior_at_training_point(rng):
    # with several distinct points, nearby gradient sections carry
    # information about the value at a training point
    ds = random_dataset(rng, 8)
    gp = gp_posterior(ds, GaussianKernel(1.0), 1e-4)
    assert gp_posterior_var(gp, ds.points[0]) < 1.0


def test_gp_var_bounds(rng):
    for _ in range(5):
        ds = random_dataset(rng, int(rng.integers(2, 12)))
        gp = gp_posterior(ds, GaussianKernel(float(rng.uniform(0.5, 2.0))), 0.2)
        for _ in range(10):
            z = rng.uniform(-2, 2, 4)
            v = gp_posterior_var(gp, z)
            assert -1e-8 <= v <= gp.kernel.eval(z, z) + 1e-8


def test_gp_var_independent_of_observations(rng):
    pts = rng.uniform(-1, 1, (6, 4))
    k = GaussianKernel(1.0)
    gp1 = gp_posterior(make_dataset(pts, rng.standard_normal((6, 4))), k, 0.3)
    gp2 = gp_posterior(make_dataset(pts, rng.standard_normal((6, 4))), k, 0.3)
    for _ in range(5):
        z = rng.uniform(-1, 1, 4)
        assert gp_posterior_var(gp1, z) == gp_posterior_var(gp2, z)


def test_gp_zero_noise_singular_covariance_errors():
    # duplicated points make the covariance singular; with sigma = 0 the
    # construction must refuse rather than silently jitter
    z = np.array([0.1, 0.2, 0.3, 0.4])
    ds = make_dataset([z, z], [[1.0, 0, 0, 0], [1.0, 0, 0, 0]])
    with pytest.raises(FactorizationError):
        gp_posterior(ds, GaussianKernel(1.0), 0.0)


def test_gp_rejects_negative_noise(rng):
    ds = random_dataset(rng, 3)
    with pytest.raises(ValueError):
        gp_posterior(ds, GaussianKernel(1.0), -0.1)
