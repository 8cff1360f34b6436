import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmvir.cost import azimuth_distance
from pmvir.geometry import icosphere, projected_azimuth, vertex_normals
from pmvir.shading import Illumination
from pmvir.synth import (
    SyntheticScene,
    check_coverage,
    corrupt_aop,
    corrupt_views,
    default_scene,
    perturb_mesh,
    render_views,
    ring_cameras,
)


def test_ambient_only_white_sphere():
    mesh = icosphere(2)
    mesh.albedo = np.ones((mesh.n_vertices, 3))
    cams = ring_cameras(4, 64)
    illum = [Illumination([0.6, 0, 0, 0, 0, 0, 0, 0, 0], [1.0, 0.5, 2.0])] * len(cams)
    for v in render_views(SyntheticScene(mesh, cams, illum)):
        np.testing.assert_allclose(v.rgb[v.mask], np.tile([0.6, 0.3, 1.2], (v.mask.sum(), 1)))
        assert np.all(v.rgb[~v.mask] == 0)


def test_rendered_aop_matches_true_azimuth(small_scene):
    # at each vertex's own pixel the rendered AoP equals the azimuth of the interpolated normal;
    # on a sphere that normal is radial, so compare with the analytic surface normal there
    scene, views = small_scene
    for cam, v in zip(scene.cameras, views):
        ys, xs = np.nonzero(v.aop_valid)
        rays = np.linalg.inv(cam.K) @ np.stack([xs, ys, np.ones_like(xs)]).astype(float)
        d = cam.rotation.T @ rays
        d /= np.linalg.norm(d, axis=0)
        o = cam.center
        # first hit with the circumscribed unit sphere; polyhedral facets make this approximate
        b = d.T @ o
        t = -b - np.sqrt(np.maximum(b * b - (o @ o - 1), 0))
        n = (o[:, None] + t * d).T
        alpha = projected_azimuth(cam, n)
        eta = azimuth_distance(alpha, v.aop[ys, xs])
        assert np.median(np.rad2deg(eta)) < 3.0


def test_rendered_aop_is_exact_at_model_normals(small_scene):
    scene, views = small_scene
    N = vertex_normals(scene.gt_mesh)
    cam, v = scene.cameras[0], views[0]
    uv, _ = cam.project(scene.gt_mesh.vertices)
    px = np.rint(uv).astype(int)
    inside = (px[:, 0] >= 0) & (px[:, 0] < cam.width) & (px[:, 1] >= 0) & (px[:, 1] < cam.height)
    hit = np.flatnonzero(inside)
    hit = hit[v.aop_valid[px[hit, 1], px[hit, 0]] & (np.abs((N[hit] @ cam.rotation.T)[:, 2]) < 0.9)]
    alpha = projected_azimuth(cam, N[hit])
    eta = azimuth_distance(alpha, v.aop[px[hit, 1], px[hit, 0]])
    # pixel centres sit within half a pixel of the vertex, so only interpolation error remains
    assert np.median(np.rad2deg(eta)) < 5.0


@pytest.mark.parametrize("fraction", [0.0, 1.0])
def test_corrupt_aop_invertible_without_noise(fraction):
    rng = np.random.default_rng(0)
    aop = rng.uniform(0, np.pi, (20, 20))
    aop[0, :5] = np.nan
    out = corrupt_aop(aop, fraction, 0.0, seed=1)
    back = np.mod(out - fraction * np.pi / 2, np.pi)
    ok = np.isfinite(aop)
    diff = np.abs(back[ok] - aop[ok])
    np.testing.assert_allclose(np.minimum(diff, np.pi - diff), 0, atol=1e-12)
    assert np.all(np.isnan(out[~ok]))


@given(st.floats(0, 1), st.floats(0, 40), st.integers(0, 2 ** 16))
def test_corrupt_aop_range(fraction, sigma, seed):
    aop = np.linspace(0, np.pi, 50, endpoint=False)
    out = corrupt_aop(aop, fraction, sigma, seed)
    assert np.all((out >= 0) & (out < np.pi))


def test_flip_frequency_matches_fraction():
    aop = np.full((200, 200), 0.3)
    out = corrupt_aop(aop, 0.5, 0.0, seed=7)
    flipped = np.isclose(out, 0.3 + np.pi / 2)
    # binomial(40000, 0.5): four standard deviations is 1%
    assert abs(flipped.mean() - 0.5) < 0.01


def test_noise_standard_deviation():
    aop = np.full((300, 300), np.pi / 2)
    out = corrupt_aop(aop, 0.0, 12.0, seed=3)
    assert np.rad2deg(np.std(out - np.pi / 2)) == pytest.approx(12.0, rel=0.02)


def test_same_seed_gives_paired_noise_fields():
    # one seed shares the flip pattern and the noise draws across sigma levels
    aop = np.full((50, 50), 1.0)
    a = corrupt_aop(aop, 0.5, 12.0, seed=5)
    b = corrupt_aop(aop, 0.5, 24.0, seed=5)
    za = (a - 1.0 + np.pi / 4) % (np.pi / 2) - np.pi / 4
    zb = (b - 1.0 + np.pi / 4) % (np.pi / 2) - np.pi / 4
    # where neither draw wraps, the sigma = 24 deviation is exactly twice the sigma = 12 one
    small = np.abs(za) < np.deg2rad(20)
    np.testing.assert_allclose(zb[small], 2 * za[small], atol=1e-9)


def test_corrupt_views_deterministic(small_scene):
    _, views = small_scene
    a = corrupt_views(views, 0.5, 24.0, seed=2)
    b = corrupt_views(views, 0.5, 24.0, seed=2)
    for va, vb in zip(a, b):
        np.testing.assert_array_equal(va.aop, vb.aop)
    c = corrupt_views(views, 0.5, 24.0, seed=3)
    assert not np.array_equal(a[0].aop, c[0].aop, equal_nan=True)


def test_render_is_deterministic():
    s = default_scene(n_views=4, size=48, subdivisions=1)
    a, b = render_views(s), render_views(s)
    for va, vb in zip(a, b):
        np.testing.assert_array_equal(va.rgb, vb.rgb)
        np.testing.assert_array_equal(va.aop, vb.aop)


def test_coverage():
    scene = default_scene(n_views=14, size=48, subdivisions=1)
    vis = check_coverage(scene)
    assert vis.sum(axis=1).min() >= 2
    sparse = SyntheticScene(scene.gt_mesh, scene.cameras[:1], scene.illumination[:1])
    with pytest.raises(ValueError, match="fewer than"):
        check_coverage(sparse)


def test_perturbation_rms_and_gauge(sphere):
    out = perturb_mesh(sphere, 0.02, seed=0)
    N = vertex_normals(sphere)
    d = np.einsum("ij,ij->i", out.vertices - sphere.vertices, N)
    np.testing.assert_allclose(out.vertices - sphere.vertices, d[:, None] * N, atol=1e-12)
    assert np.sqrt(np.mean(d * d)) == pytest.approx(0.02 * sphere.diagonal, rel=1e-12)
    # no component along a translation or a uniform scaling about the centroid
    c = sphere.vertices.mean(axis=0)
    np.testing.assert_allclose(d @ N, 0, atol=1e-9)
    assert abs(d @ np.einsum("ij,ij->i", sphere.vertices - c, N)) < 1e-9


def test_perturbation_zero_and_negative(sphere):
    np.testing.assert_array_equal(perturb_mesh(sphere, 0.0).vertices, sphere.vertices)
    with pytest.raises(ValueError):
        perturb_mesh(sphere, -0.1)


def test_ring_cameras_look_at_center():
    cams = ring_cameras(14, 256)
    assert len(cams) == 14
    for cam in cams:
        uv, z = cam.project(np.zeros((1, 3)))
        np.testing.assert_allclose(uv[0], [cam.cx, cam.cy], atol=1e-9)
        assert z[0] > 0
