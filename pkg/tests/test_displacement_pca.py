import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from facedetail.displacement_pca import (DisplacementPCA, LossConfig, SfSConfig, build_pca, fit_displacement_sfs,
                                         fit_patch_sfs, geometry_loss, load_pca, pca_combine, pca_project, save_pca,
                                         total_loss)
from facedetail.illumination import AlbedoMap, SHLighting, appearance_loss, render
from facedetail.synthetic import DEMO_LIGHTING, cosine_corpus, cosine_modes, plane_maps
from facedetail.texture_geom import DisplacementMap, PatchGrid, apply_displacement, compute_normals


@pytest.fixture(scope="module")
def random_pca():
    rng = np.random.default_rng(0)
    return build_pca(rng.normal(size=(40, 16, 16)), rank=12)


@pytest.fixture(scope="module")
def cosine_pca():
    return build_pca(cosine_corpus(1, 32, count=60, modes=12), rank=12)


def rendered(maps, g, albedo, light):
    n, valid = compute_normals(apply_displacement(maps, DisplacementMap(g, maps.mask)), maps.mask)
    return render(albedo, n, light, valid)


# -- build / project / combine ------------------------------------------------------

def test_identical_patches():
    p = np.random.default_rng(1).normal(size=(8, 8))
    m = build_pca(np.repeat(p[None], 10, axis=0), rank=4)
    np.testing.assert_allclose(m.mean_patch, p, atol=1e-15)
    assert np.all(m.singular_values < 1e-12)


def test_low_rank_data():
    rng = np.random.default_rng(2)
    span = rng.normal(size=(5, 16 * 16))
    X = (rng.normal(size=(100, 5)) @ span).reshape(100, 16, 16) + 3.0
    m = build_pca(X, rank=64)
    assert np.all(m.singular_values[5:] < 1e-8)
    assert m.singular_values[4] > 1.0


def test_training_reconstruction_bounded_by_tail_energy():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(80, 12, 12))
    m = build_pca(X, rank=20)
    s_all = np.linalg.svd(X.reshape(80, -1) - X.reshape(80, -1).mean(0), compute_uv=False)
    tail = np.sum(s_all[20:] ** 2)
    for x in X:
        r = pca_combine(m, pca_project(m, x)) - x
        assert np.sum(r ** 2) <= tail + 1e-9


def test_basis_orthonormal_sorted_and_signed(random_pca):
    B = random_pca.matrix
    assert np.max(np.abs(B.T @ B - np.eye(random_pca.rank))) < 1e-8
    assert np.all(np.diff(random_pca.singular_values) <= 0)
    peak = np.argmax(np.abs(B), axis=0)
    assert np.all(B[peak, np.arange(random_pca.rank)] > 0)


def test_build_validation():
    with pytest.raises(ValueError):
        build_pca(np.zeros((10, 8, 8)), rank=10)
    with pytest.raises(ValueError):
        build_pca(np.zeros((10, 8, 6)), rank=2)


def test_project_examples(random_pca):
    m = random_pca
    assert np.all(pca_project(m, m.mean_patch) == 0)
    c = pca_project(m, m.mean_patch + 3 * m.basis[4])
    expected = np.zeros(m.rank)
    expected[4] = 3
    assert np.max(np.abs(c - expected)) < 1e-12
    with pytest.raises(ValueError):
        pca_project(m, np.zeros((4, 4)))


def test_projection_residual_orthogonal(random_pca):
    p = np.random.default_rng(4).normal(size=(16, 16))
    r = p - pca_combine(random_pca, pca_project(random_pca, p))
    assert np.max(np.abs(random_pca.matrix.T @ r.ravel())) < 1e-8


def test_combine_examples(random_pca):
    m = random_pca
    assert np.array_equal(pca_combine(m, np.zeros(m.rank)), m.mean_patch)
    e = np.zeros(m.rank)
    e[2] = 1
    np.testing.assert_allclose(pca_combine(m, e), m.mean_patch + m.basis[2], atol=1e-15)
    with pytest.raises(ValueError):
        pca_combine(m, np.zeros(m.rank + 1))
    with pytest.raises(ValueError):
        pca_combine(m, np.full(m.rank, np.nan))


def test_combine_matches_loop_oracle(random_pca):
    m = random_pca
    c = np.random.default_rng(5).normal(size=m.rank)
    out = pca_combine(m, c)
    for i in range(16):
        for j in range(16):
            acc = m.mean_patch[i, j]
            for k in range(m.rank):
                acc += c[k] * m.basis[k, i, j]
            assert abs(out[i, j] - acc) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 16))
def test_projection_idempotent(random_pca, seed):
    p = np.random.default_rng(seed).normal(0, 5, (16, 16))
    once = pca_combine(random_pca, pca_project(random_pca, p))
    twice = pca_combine(random_pca, pca_project(random_pca, once))
    assert np.max(np.abs(once - twice)) < 1e-10


# -- losses -----------------------------------------------------------------------------

def test_geometry_loss_examples(random_pca):
    m = random_pca
    c = np.random.default_rng(6).normal(size=m.rank)
    truth = pca_combine(m, c)
    assert geometry_loss(c, truth, truth, m) == 0.0
    shifted = truth - 0.3
    assert geometry_loss(c, shifted, shifted, m) == pytest.approx(0.3, abs=1e-12)
    with pytest.raises(ValueError):
        geometry_loss(c, truth[:8], truth, m)


def test_geometry_loss_brute_force(random_pca):
    m = random_pca
    rng = np.random.default_rng(7)
    c = rng.normal(size=m.rank)
    refined, truth = rng.normal(size=(2, 16, 16))
    coarse = m.mean_patch.copy()
    for k in range(m.rank):
        coarse = coarse + c[k] * m.basis[k]
    a = sum(abs(coarse[i, j] - truth[i, j]) for i in range(16) for j in range(16)) / 256
    b = sum(abs(refined[i, j] - truth[i, j]) for i in range(16) for j in range(16)) / 256
    assert abs(geometry_loss(c, refined, truth, m) - (a + b)) < 1e-10


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 16))
def test_geometry_loss_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(6, 6, 6))
    m = build_pca(X, rank=3)
    c = rng.normal(size=3)
    refined, truth = rng.normal(size=(2, 6, 6))
    perm = rng.permutation(36)
    mp = DisplacementPCA(m.mean_patch.ravel()[perm].reshape(6, 6),
                         m.basis.reshape(3, -1)[:, perm].reshape(3, 6, 6), m.singular_values.copy())
    a = geometry_loss(c, refined, truth, m)
    b = geometry_loss(c, refined.ravel()[perm].reshape(6, 6), truth.ravel()[perm].reshape(6, 6), mp)
    assert abs(a - b) < 1e-12


def test_total_loss_examples():
    assert total_loss(1.0, 1.0) == 150.0
    assert total_loss(0.7, 0.0) == pytest.approx(70.0)
    assert total_loss(0.7, 5.0, LossConfig(eta=0.0)) == pytest.approx(70.0)
    with pytest.raises(ValueError):
        total_loss(-1.0, 0.0)
    with pytest.raises(ValueError):
        LossConfig(eta=-0.1)


# -- shape from shading ---------------------------------------------------------

def sfs_scene(pca, coeffs, size=32):
    maps = plane_maps(size)
    albedo = np.full((size, size, 3), 0.6)
    light = SHLighting(DEMO_LIGHTING)
    truth = pca_combine(pca, coeffs)
    image = rendered(maps, truth, albedo, light)
    return maps, AlbedoMap(albedo, maps.mask), light, truth, image


def test_sfs_stays_at_zero_for_flat_input(cosine_pca):
    maps, albedo, light, truth, image = sfs_scene(cosine_pca, np.zeros(cosine_pca.rank))
    fit = fit_patch_sfs(image, albedo, light, maps, cosine_pca)
    assert np.all(fit.coeffs == 0)
    assert fit.losses[0] == 0.0


def test_sfs_recovers_small_detail(cosine_pca):
    rng = np.random.default_rng(8)
    c_true = rng.normal(0, 0.01, cosine_pca.rank)
    maps, albedo, light, truth, image = sfs_scene(cosine_pca, c_true)
    image = image + rng.normal(0, 1e-3, image.shape)
    fit = fit_patch_sfs(image, albedo, light, maps, cosine_pca, SfSConfig(max_iterations=200))
    est = pca_combine(cosine_pca, fit.coeffs)
    true_loss = appearance_loss(image, albedo, light, maps, DisplacementMap(truth, maps.mask))
    assert fit.losses[-1] <= 2 * true_loss + 1e-6
    assert np.mean(np.abs(est - truth)) < 0.05 * np.max(np.abs(truth))


@pytest.mark.parametrize("pre", ["slope", "none"])
def test_sfs_loss_non_increasing(cosine_pca, pre):
    rng = np.random.default_rng(9)
    maps, albedo, light, truth, image = sfs_scene(cosine_pca, rng.normal(0, 0.02, cosine_pca.rank))
    image = image + rng.normal(0, 0.01, image.shape)
    fit = fit_patch_sfs(image, albedo, light, maps, cosine_pca, SfSConfig(max_iterations=40, precondition=pre))
    assert len(fit.losses) > 1
    assert all(b <= a for a, b in zip(fit.losses, fit.losses[1:]))


def test_zero_rank_model_gives_zero_map():
    maps = plane_maps(64)
    light = SHLighting(DEMO_LIGHTING)
    image = np.random.default_rng(10).uniform(size=(64, 64, 3))
    out = fit_displacement_sfs(image, AlbedoMap(np.full((64, 64, 3), 0.5), maps.mask), light, maps,
                               DisplacementPCA.zero(32), PatchGrid(32, 16))
    assert np.all(out.values == 0)


def test_full_map_fit_and_region_routing(cosine_pca):
    maps = plane_maps(64)
    light = SHLighting(DEMO_LIGHTING)
    albedo = AlbedoMap(np.full((64, 64, 3), 0.6), maps.mask)
    image = rendered(maps, np.zeros((64, 64)), albedo.values, light)
    labels = np.zeros((64, 64), int)
    labels[:, 32:] = 1
    fits = []
    out = fit_displacement_sfs(image, albedo, light, maps, {0: cosine_pca, 1: DisplacementPCA.zero(32)},
                               PatchGrid(32, 16), SfSConfig(max_iterations=5), region_labels=labels, fits=fits)
    assert len(fits) == 9
    ranks = {origin: fit.coeffs.size for origin, fit in fits}
    assert ranks[(0, 0)] == cosine_pca.rank and ranks[(0, 32)] == 0
    # columns 48.. are covered only by patches routed to the rank-0 model
    assert np.all(out.values[:, 48:] == 0)
    assert np.any(out.values[:, :16] != 0)
    with pytest.raises(ValueError):
        fit_displacement_sfs(image, albedo, light, maps, cosine_pca, PatchGrid(16, 8))
    with pytest.raises(KeyError):
        fit_displacement_sfs(image, albedo, light, maps, {1: cosine_pca}, PatchGrid(32, 16),
                             region_labels=np.zeros((64, 64), int))


def test_pca_file_round_trip(tmp_path, random_pca):
    save_pca(random_pca, tmp_path / "p.fdm")
    m = load_pca(tmp_path / "p.fdm")
    assert m.rank == random_pca.rank
    np.testing.assert_allclose(m.basis, random_pca.basis, rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(m.singular_values, random_pca.singular_values, rtol=1e-6)
    save_pca(DisplacementPCA.zero(8), tmp_path / "z.fdm")
    z = load_pca(tmp_path / "z.fdm")
    assert z.rank == 0 and z.basis.shape == (0, 8, 8)


def test_cosine_modes_orthogonal():
    m = cosine_modes(16, 10).reshape(10, -1)
    gram = m @ m.T
    assert np.max(np.abs(gram - np.diag(np.diag(gram)))) < 1e-12
