import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from facedetail.model_core import AffineCamera, ProxyParams, synthesize_vertices
from facedetail.proxy_fit import (CoplanarPoints, FitConfig, LandmarkSet, TooFewPoints, _shape_system,
                                  fit_affine_camera, fit_proxy, reprojection_rms, solve_shape)

from conftest import random_camera


def landmarks_for(model, alpha, beta, camera):
    p = ProxyParams(alpha, beta, np.zeros(model.n_albedo))
    verts = synthesize_vertices(model, p).reshape(-1, 3)[model.landmark_vertices]
    return LandmarkSet.with_default_weights(camera.project(verts))


def test_orthographic_identity_recovered():
    rng = np.random.default_rng(0)
    X = rng.normal(0, 50, (30, 3))
    cam = fit_affine_camera(X, X[:, :2])
    expected = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
    assert np.max(np.abs(cam.matrix - expected)) < 1e-10


def test_random_camera_recovered():
    rng = np.random.default_rng(1)
    truth = random_camera(rng)
    X = rng.normal(0, 40, (100, 3))
    cam = fit_affine_camera(X, truth.project(X))
    assert np.max(np.abs(cam.matrix - truth.matrix)) < 1e-8


def test_weighted_camera_ignores_zero_weight_outliers():
    rng = np.random.default_rng(2)
    truth = random_camera(rng)
    X = rng.normal(0, 40, (20, 3))
    x = truth.project(X)
    x[:3] += 500.0
    w = np.ones(20)
    w[:3] = 0.0
    cam = fit_affine_camera(X, x, w)
    assert np.max(np.abs(cam.matrix - truth.matrix)) < 1e-8


def test_coplanar_points_rejected():
    rng = np.random.default_rng(3)
    X = rng.normal(0, 10, (20, 3))
    X[:, 2] = 0.3 * X[:, 0] - 0.2 * X[:, 1] + 4.0
    with pytest.raises(CoplanarPoints):
        fit_affine_camera(X, X[:, :2])


def test_too_few_points():
    X = np.eye(3)
    with pytest.raises(TooFewPoints):
        fit_affine_camera(X, X[:, :2])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 16), tx=st.floats(-1e3, 1e3), ty=st.floats(-1e3, 1e3))
def test_camera_translation_equivariance(seed, tx, ty):
    rng = np.random.default_rng(seed)
    X = rng.normal(0, 40, (15, 3))
    x = rng.normal(250, 60, (15, 2))
    w = rng.uniform(0.2, 1.0, 15)
    a = fit_affine_camera(X, x, w).matrix
    b = fit_affine_camera(X, x + [tx, ty], w).matrix
    expected = a.copy()
    expected[:, 3] += [tx, ty]
    assert np.max(np.abs(b - expected)) < 1e-8 * (1 + np.max(np.abs(expected)))


def test_solve_shape_zero_truth(model):
    rng = np.random.default_rng(4)
    cam = random_camera(rng)
    beta = rng.normal(0, 1, model.n_expression)
    lm = landmarks_for(model, np.zeros(model.n_shape), beta, cam)
    for lam in (0.0, 1.0, 30.0, 1e6):
        alpha = solve_shape(model, cam, lm, beta, FitConfig(lambda_s=lam))
        assert np.max(np.abs(alpha)) < 1e-10


def test_solve_shape_exact_without_regularizer(model):
    rng = np.random.default_rng(5)
    cam = random_camera(rng)
    alpha = rng.normal(0, 1, model.n_shape)
    beta = rng.normal(0, 1, model.n_expression)
    assert 2 * 68 >= model.n_shape
    lm = landmarks_for(model, alpha, beta, cam)
    est = solve_shape(model, cam, lm, beta, FitConfig(lambda_s=0.0))
    assert np.linalg.norm(est - alpha) / np.linalg.norm(alpha) < 1e-6


def test_huge_regularizer_shrinks_alpha(model):
    rng = np.random.default_rng(6)
    cam = random_camera(rng)
    lm = landmarks_for(model, rng.normal(0, 2, model.n_shape), np.zeros(model.n_expression), cam)
    est = solve_shape(model, cam, lm, np.zeros(model.n_expression), FitConfig(lambda_s=1e12))
    assert np.linalg.norm(est) < 1e-3


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 16), lam=st.sampled_from([0.0, 0.5, 30.0, 1e4]))
def test_solve_shape_satisfies_normal_equations(model, seed, lam):
    rng = np.random.default_rng(seed)
    cam = random_camera(rng)
    beta = rng.normal(0, 1, model.n_expression)
    lm = landmarks_for(model, rng.normal(0, 1, model.n_shape), beta, cam)
    lm.points += rng.normal(0, 2.0, lm.points.shape)
    lm.weights[:] = rng.uniform(0.1, 1.0, lm.count)
    alpha = solve_shape(model, cam, lm, beta, FitConfig(lambda_s=lam))
    A, b, w = _shape_system(model, cam, lm, beta)
    rhs = A.T @ (w * b)
    res = (A.T * w) @ A @ alpha + lam * alpha - rhs
    assert np.max(np.abs(res)) < 1e-8 * np.max(np.abs(rhs))


def test_fit_proxy_recovers_alpha_within_ten_iterations(model):
    rng = np.random.default_rng(7)
    cam = random_camera(rng)
    alpha = 0.3 * rng.standard_normal(model.n_shape)
    beta = 0.3 * rng.standard_normal(model.n_expression)
    lm = landmarks_for(model, alpha, beta, cam)
    params, est_cam, res = fit_proxy(model, lm, beta, FitConfig(lambda_s=0.0, max_iterations=10,
                                                                convergence_tol=1e-12))
    assert len(res) <= 10
    assert np.linalg.norm(params.alpha - alpha) / np.linalg.norm(alpha) < 1e-4
    assert np.array_equal(params.beta, beta)
    assert np.all(params.gamma == 0)


def test_fit_proxy_mean_face(model):
    rng = np.random.default_rng(8)
    cam = random_camera(rng)
    zeros = np.zeros(model.n_shape)
    lm = landmarks_for(model, zeros, np.zeros(model.n_expression), cam)
    params, est_cam, res = fit_proxy(model, lm, np.zeros(model.n_expression))
    assert np.max(np.abs(params.alpha)) < 1e-10
    assert np.max(np.abs(est_cam.matrix - cam.matrix)) < 1e-8
    assert reprojection_rms(model, est_cam, lm, params) < 1e-8


@pytest.mark.parametrize("seed", range(8))
def test_fit_proxy_objective_non_increasing(model, seed):
    rng = np.random.default_rng(100 + seed)
    cam = random_camera(rng)
    lm = landmarks_for(model, rng.normal(0, 1, model.n_shape), rng.normal(0, 1, model.n_expression), cam)
    lm.points += rng.normal(0, 3.0, lm.points.shape)
    prior = rng.normal(0, 1, model.n_expression)  # deliberately not the generating expression
    _, _, res = fit_proxy(model, lm, prior, FitConfig(lambda_s=30.0, max_iterations=12, convergence_tol=1e-9))
    assert all(b <= a + 1e-9 for a, b in zip(res, res[1:]))


def test_landmark_set_defaults_and_validation():
    pts = np.zeros((68, 2))
    lm = LandmarkSet.with_default_weights(pts)
    assert np.all(lm.weights[:17] == 0.5) and np.all(lm.weights[17:] == 1.0)
    with pytest.raises(ValueError):
        LandmarkSet(pts, -np.ones(68))
    with pytest.raises(ValueError):
        LandmarkSet(pts, np.ones(3))


def test_landmark_count_must_match_model(model):
    cam = AffineCamera(np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]]))
    lm = LandmarkSet.with_default_weights(np.zeros((10, 2)))
    with pytest.raises(ValueError):
        solve_shape(model, cam, lm, np.zeros(model.n_expression), FitConfig())
    with pytest.raises(ValueError):
        fit_proxy(model, lm, np.zeros(model.n_expression + 1))


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(lambda_s=-1)
    with pytest.raises(ValueError):
        FitConfig(max_iterations=0)
    with pytest.raises(ValueError):
        FitConfig(convergence_tol=0)
    assert (FitConfig().lambda_s, FitConfig().max_iterations, FitConfig().convergence_tol) == (30.0, 5, 1e-6)
