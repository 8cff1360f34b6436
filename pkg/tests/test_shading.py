import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from pmvir.shading import Illumination, fit_directional_light, render_vertex, sh_basis, sh_shading, sh_shading_grad

unit = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: np.asarray(v) / np.linalg.norm(v))
coeffs = st.lists(st.floats(-2, 2), min_size=9, max_size=9).map(np.asarray)


def test_render_identity_ambient():
    illum = Illumination([1, 0, 0, 0, 0, 0, 0, 0, 0], [1, 1, 1])
    np.testing.assert_allclose(render_vertex([1, 1, 1], [0, 0, 1], illum), [1, 1, 1])


def test_render_direct_substitution():
    illum = Illumination([0.8, 0, 0, 0, 0, 0, 0, 0, 0], [2, 1, 1])
    np.testing.assert_allclose(render_vertex([0.5, 0, 0], [0.6, 0, 0.8], illum), [0.8, 0, 0])


def test_zero_albedo_renders_black():
    illum = Illumination(np.arange(9.0), [3, 2, 1])
    np.testing.assert_array_equal(render_vertex([0, 0, 0], [0, 1, 0], illum), [0, 0, 0])


def test_basis_order():
    # [1, Ny, Nz, Nx, NxNy, NyNz, Nz^2-1/3, NxNz, Nx^2-Ny^2]
    n = np.array([0.48, 0.6, 0.64])
    x, y, z = n
    expected = [1, y, z, x, x * y, y * z, z * z - 1 / 3, x * z, x * x - y * y]
    np.testing.assert_allclose(sh_basis(n), expected)


@given(unit, coeffs, st.lists(st.floats(0, 1), min_size=3, max_size=3),
       st.lists(st.floats(0, 3), min_size=3, max_size=3), st.floats(-3, 3))
def test_bilinear_in_albedo_and_color(n, sh, albedo, color, s):
    base = render_vertex(albedo, n, Illumination(sh, color))
    np.testing.assert_allclose(render_vertex(np.multiply(albedo, s), n, Illumination(sh, color)), s * base,
                               atol=1e-12)
    np.testing.assert_allclose(render_vertex(albedo, n, Illumination(sh, np.multiply(color, s))), s * base,
                               atol=1e-12)


@given(unit, coeffs)
def test_shading_gradient_matches_central_differences(n, sh):
    h = 1e-6
    fd = [(sh_shading(n + h * e, sh) - sh_shading(n - h * e, sh)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(sh_shading_grad(n, sh), fd, atol=1e-7)


def test_illumination_array_roundtrip():
    a = np.arange(12.0)
    np.testing.assert_array_equal(Illumination.from_array(a).as_array(), a)


def test_directional_fit_approximates_clamped_cosine():
    # second-order SH capture a clamped cosine lobe to within a few percent of its peak
    d = np.array([0.0, 0.0, 1.0])
    sh = fit_directional_light(d, intensity=1.0, ambient=0.0)
    rng = np.random.default_rng(0)
    N = rng.standard_normal((500, 3))
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    target = np.maximum(0.0, N @ d)
    assert np.sqrt(np.mean((sh_basis(N) @ sh - target) ** 2)) < 0.05
    # brightest where the normal faces the light
    assert sh_shading(d, sh) > sh_shading(-d, sh)
