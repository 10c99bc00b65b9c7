import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from facedetail.model_core import (AffineCamera, DimensionError, MorphableModel, ProxyParams,
                                   generate_synthetic_model, load_model, save_model, synthesize_albedo,
                                   synthesize_vertices)


def naive_product(mean, basis, coeffs):
    out = np.array(mean, dtype=float)
    for i in range(basis.shape[0]):
        s = 0.0
        for k in range(basis.shape[1]):
            s += basis[i, k] * coeffs[k]
        out[i] += s
    return out


def random_params(model, rng, scale=1.0):
    return ProxyParams(scale * rng.standard_normal(model.n_shape), scale * rng.standard_normal(model.n_expression),
                       scale * rng.standard_normal(model.n_albedo))


def test_zero_coefficients_give_mean_shape(small_model):
    v = synthesize_vertices(small_model, small_model.zero_params())
    assert np.array_equal(v, small_model.mean_shape)


def test_one_hot_alpha_adds_first_column(small_model):
    p = small_model.zero_params()
    p.alpha[0] = 1.0
    v = synthesize_vertices(small_model, p)
    np.testing.assert_allclose(v, small_model.mean_shape + small_model.basis_shape[:, 0], rtol=0, atol=1e-12)


def test_vertices_match_loop_oracle(small_model):
    rng = np.random.default_rng(0)
    p = random_params(small_model, rng)
    expected = naive_product(small_model.mean_shape, small_model.basis_shape, p.alpha)
    expected = naive_product(expected, small_model.basis_expression, p.beta)
    v = synthesize_vertices(small_model, p)
    assert np.max(np.abs(v - expected)) <= 1e-12 * np.max(np.abs(expected))


def test_zero_gamma_gives_mean_albedo(small_model):
    assert np.array_equal(synthesize_albedo(small_model, small_model.zero_params()), small_model.mean_albedo)


def test_scaled_one_hot_gamma(small_model):
    i = 3
    p = small_model.zero_params()
    p.gamma[i] = small_model.sigma_albedo[i]
    a = synthesize_albedo(small_model, p)
    expected = small_model.mean_albedo + small_model.sigma_albedo[i] * small_model.basis_albedo[:, i]
    np.testing.assert_allclose(a, expected, rtol=0, atol=1e-14)


def test_albedo_matches_loop_oracle(small_model):
    p = random_params(small_model, np.random.default_rng(1))
    expected = naive_product(small_model.mean_albedo, small_model.basis_albedo, p.gamma)
    a = synthesize_albedo(small_model, p)
    assert np.max(np.abs(a - expected)) <= 1e-12 * np.max(np.abs(expected))


def test_generation_is_deterministic():
    a = generate_synthetic_model(11, n_vertices=200, Ks=8, Ke=4, Ka=4)
    b = generate_synthetic_model(11, n_vertices=200, Ks=8, Ke=4, Ka=4)
    for name in ("mean_shape", "basis_shape", "basis_expression", "basis_albedo", "faces", "uv_coords",
                 "landmark_map", "sigma_shape"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_basis_columns_orthogonal(model):
    for basis in (model.basis_shape, model.basis_expression, model.basis_albedo):
        u = basis / np.linalg.norm(basis, axis=0)
        gram = u.T @ u
        assert np.max(np.abs(gram - np.eye(gram.shape[0]))) < 1e-10


def test_reference_dimensions_accepted():
    m = generate_synthetic_model(0, n_vertices=1024, Ks=199, Ke=100, Ka=199)
    assert (m.n_shape, m.n_expression, m.n_albedo) == (199, 100, 199)


def test_unit_coefficient_moves_vertices_by_sigma_rms(model):
    for k in (0, 5, 20):
        col = model.basis_shape[:, k].reshape(-1, 3)
        rms = np.sqrt(np.mean(np.sum(col ** 2, axis=1)))
        assert rms == pytest.approx(model.sigma_shape[k], rel=1e-12)


def test_model_invariants(model):
    n = model.n_vertices
    assert np.all(model.landmark_map[:, 1] < n)
    assert model.faces.max() < n and model.faces.min() >= 0
    assert np.all((model.uv_coords >= 0) & (model.uv_coords <= 1))
    assert len(model.landmark_map) == 68
    assert len(set(model.landmark_vertices.tolist())) == 68


def test_mean_face_normals_point_toward_viewer(model):
    from facedetail.texture_geom import vertex_normals
    n = vertex_normals(model.mean_shape.reshape(-1, 3), model.faces)
    assert np.mean(n[:, 2] > 0) > 0.99


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2 ** 16))
def test_vertices_affine_in_coefficients(small_model, a, b, seed):
    rng = np.random.default_rng(seed)
    p1, p2 = random_params(small_model, rng), random_params(small_model, rng)
    mix = ProxyParams(a * p1.alpha + b * p2.alpha, a * p1.beta + b * p2.beta, p1.gamma)
    f = lambda p: synthesize_vertices(small_model, p)
    lhs = f(mix)
    rhs = a * f(p1) + b * f(p2) - (a + b - 1) * f(small_model.zero_params())
    assert np.max(np.abs(lhs - rhs)) < 1e-9 * (1 + np.max(np.abs(lhs)))


def test_synthesis_does_not_mutate_and_repeats(small_model):
    before = small_model.basis_shape.copy()
    p = random_params(small_model, np.random.default_rng(2))
    v1 = synthesize_vertices(small_model, p)
    v2 = synthesize_vertices(small_model, p)
    assert v1.tobytes() == v2.tobytes()
    assert np.array_equal(before, small_model.basis_shape)
    with pytest.raises(ValueError):
        small_model.basis_shape[0, 0] = 1.0


def test_dimension_mismatch(small_model):
    bad = ProxyParams(np.zeros(small_model.n_shape + 1), np.zeros(small_model.n_expression),
                      np.zeros(small_model.n_albedo))
    with pytest.raises(DimensionError):
        synthesize_vertices(small_model, bad)
    with pytest.raises(DimensionError):
        bad.check(small_model)
    with pytest.raises(DimensionError):
        synthesize_albedo(small_model, ProxyParams(bad.alpha, bad.beta, np.zeros(2)))


def _fields(model, **override):
    names = ("mean_shape", "mean_expression", "mean_albedo", "basis_shape", "basis_expression",
             "basis_albedo", "sigma_shape", "sigma_expression", "sigma_albedo", "faces", "uv_coords",
             "landmark_map")
    f = {k: np.array(getattr(model, k)) for k in names}
    f.update(override)
    return f


def test_invalid_models_rejected(small_model):
    n = small_model.n_vertices
    with pytest.raises(DimensionError):
        MorphableModel(**_fields(small_model, faces=np.array([[0, 1, n]])))
    with pytest.raises(DimensionError):
        MorphableModel(**_fields(small_model, uv_coords=np.full((n, 2), 1.5)))
    with pytest.raises(DimensionError):
        MorphableModel(**_fields(small_model, landmark_map=np.array([[0, n]])))
    with pytest.raises(DimensionError):
        MorphableModel(**_fields(small_model, basis_shape=np.zeros((3 * n, 0)), sigma_shape=np.zeros(0)))
    with pytest.raises(DimensionError):
        generate_synthetic_model(0, n_vertices=50)


def test_camera_rank_checked():
    with pytest.raises(ValueError):
        AffineCamera(np.array([[1.0, 2, 3, 0], [2, 4, 6, 0]]))
    with pytest.raises(DimensionError):
        AffineCamera(np.eye(3))
    cam = AffineCamera(np.array([[1.0, 0, 0, 5], [0, 1, 0, -2]]))
    np.testing.assert_array_equal(cam.project(np.array([[1.0, 2, 3]])), [[6.0, 0.0]])


def test_save_load_round_trip_folds_expression_mean(small_model, tmp_path):
    rng = np.random.default_rng(4)
    offset = rng.normal(0, 1, small_model.mean_shape.shape)
    m = MorphableModel(**_fields(small_model, mean_expression=offset))
    path = tmp_path / "m.fdm"
    save_model(m, path)
    loaded = load_model(path)
    assert np.all(loaded.mean_expression == 0)
    np.testing.assert_allclose(loaded.mean_shape, (small_model.mean_shape + offset).astype(np.float32),
                               rtol=1e-6, atol=1e-5)
    np.testing.assert_array_equal(loaded.faces, small_model.faces)
    np.testing.assert_allclose(loaded.basis_shape, small_model.basis_shape, rtol=1e-6, atol=1e-6)
    # Folding happens in float64, so a second save rounds the mean once more and nothing else.
    save_model(loaded, tmp_path / "again.fdm")
    again = load_model(tmp_path / "again.fdm")
    assert again.mean_shape.tobytes() == loaded.mean_shape.astype(np.float32).astype(float).tobytes()
    assert again.basis_expression.tobytes() == loaded.basis_expression.tobytes()
