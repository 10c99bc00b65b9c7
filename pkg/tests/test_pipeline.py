import numpy as np

from facedetail.model_core import AffineCamera
from facedetail.pipeline import displace_vertices, render_image, unfold_image, view_direction
from facedetail.synthetic import plane_maps
from facedetail.texture_geom import DisplacementMap

IDENTITY = AffineCamera(np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]]))


def test_view_direction():
    np.testing.assert_array_equal(view_direction(IDENTITY), [0, 0, 1])
    flipped = AffineCamera(np.array([[2.0, 0, 0, 0], [0, -2.0, 0, 0]]))
    np.testing.assert_array_equal(view_direction(flipped), [0, 0, -1])


def test_unfold_samples_pixel_centres():
    rng = np.random.default_rng(0)
    image = rng.uniform(size=(12, 12, 3))
    maps = plane_maps(8, spacing=1.0)
    maps.position[..., :2] += 0.5 + 2  # texel (i, j) lands on pixel centre (i + 2, j + 2)
    tex, vis = unfold_image(image, maps, IDENTITY)
    assert vis.all()
    np.testing.assert_allclose(tex, image[2:10, 2:10], atol=1e-12)


def test_unfold_hides_back_facing_and_outside():
    image = np.ones((6, 6, 3))
    maps = plane_maps(8, spacing=1.0)  # texel (i, j) projects to pixel coordinate (j - 0.5, i - 0.5)
    maps.normal[:4] *= -1
    tex, vis = unfold_image(image, maps, IDENTITY)
    assert not vis[:4].any()
    assert vis[4, 1] and vis[5, 5]
    assert not vis[4, 0] and not vis[4, 7] and not vis[7, 4]
    assert np.all(tex[~vis] == 0)


def test_render_image_z_buffer():
    quad = np.array([[0.0, 0, 0], [10, 0, 0], [10, 10, 0], [0, 10, 0]])
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    verts = np.vstack([quad, quad + [2, 2, 1]])
    all_faces = np.vstack([faces, faces + 4])
    uvs = np.vstack([np.full((4, 2), 0.25), np.full((4, 2), 0.75)])
    tex = np.zeros((2, 2, 3))
    tex[:, 0] = [1, 0, 0]
    tex[:, 1] = [0, 1, 0]
    img, covered = render_image(verts, all_faces, uvs, IDENTITY, tex, (16, 16))
    assert covered[5, 5] and covered[1, 1] and not covered[14, 1]
    np.testing.assert_allclose(img[5, 5], [0, 1, 0])   # the raised quad is nearer
    np.testing.assert_allclose(img[1, 1], [1, 0, 0])
    assert np.all(img[~covered] == 0)


def test_zero_displacement_keeps_vertices(small_model):
    p = small_model.zero_params()
    from facedetail.model_core import synthesize_vertices
    d = DisplacementMap(np.zeros((32, 32)), np.ones((32, 32), bool))
    v = displace_vertices(small_model, p, d)
    assert np.array_equal(v, synthesize_vertices(small_model, p).reshape(-1, 3))
