import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acns.domain import (GeometryError, build_geometry, differentiation_matrix, gll_nodes,
                         normal_tangent)


def test_area_8x8():
    g = build_geometry(8, 8)
    assert g.area == pytest.approx(2 * np.pi)
    assert g.weights.sum() == pytest.approx(2 * np.pi, rel=1e-13)


def test_minimal_grid():
    g = build_geometry(4, 4)
    assert g.shape == (4, 4)


@pytest.mark.parametrize("nx,ny", [(7, 8), (2, 8), (8, 3)])
def test_invalid_grid(nx, ny):
    with pytest.raises(GeometryError):
        build_geometry(nx, ny)


def test_boundary_integral_constant():
    g = build_geometry(16, 8)
    assert g.boundary_integral(np.ones((2, 16))) == pytest.approx(4 * np.pi, rel=1e-14)


@pytest.mark.parametrize("fn", [np.sin, lambda x: np.cos(2 * x)])
def test_boundary_integral_zero_mean(fn):
    g = build_geometry(16, 8)
    data = np.stack([fn(g.x), fn(g.x)])
    assert abs(g.boundary_integral(data)) < 1e-13


def test_boundary_integral_shape_error():
    g = build_geometry(8, 8)
    with pytest.raises(GeometryError):
        g.boundary_integral(np.ones(8))


def test_normals_and_tangents():
    n, t = normal_tangent("bottom")
    np.testing.assert_array_equal(n, [0, -1])
    np.testing.assert_array_equal(t, [1, 0])
    n, t = normal_tangent("top")
    np.testing.assert_array_equal(n, [0, 1])
    np.testing.assert_array_equal(t, [-1, 0])
    for w in ("bottom", "top"):
        n, t = normal_tangent(w)
        assert n @ t == 0 and np.linalg.norm(n) == 1 and np.linalg.norm(t) == 1
    with pytest.raises(GeometryError):
        normal_tangent("side")


def test_gll_matches_legendre_roots():
    # interior GLL nodes are the roots of P'_{n-1}
    x, w = gll_nodes(9)
    P = np.polynomial.legendre.Legendre.basis(8).deriv()
    np.testing.assert_allclose(np.sort(x[1:-1]), np.sort(P.roots().real), atol=1e-13)
    assert w.sum() == pytest.approx(2.0)


@given(st.integers(0, 12))
def test_quadrature_exact_for_polynomials(deg):
    g = build_geometry(8, 8)
    # exact up to degree 2*Ny-3 in y
    vals = np.repeat((g.y ** deg)[:, None], g.Nx, axis=1)
    assert g.integrate(vals) == pytest.approx(2 * np.pi / (deg + 1), rel=1e-12)


@given(st.integers(1, 3), st.floats(-2, 2))
def test_spectral_derivatives(k, c):
    g = build_geometry(16, 12)
    Xg, Yg = np.meshgrid(g.x, g.y)
    f = c * np.sin(k * Xg) * Yg**3
    np.testing.assert_allclose(g.dx(f), c * k * np.cos(k * Xg) * Yg**3, atol=1e-11)
    np.testing.assert_allclose(g.dy(f), 3 * c * np.sin(k * Xg) * Yg**2, atol=1e-10)


def test_differentiation_matrix_kills_constants():
    D = differentiation_matrix(np.linspace(0, 1, 7))
    np.testing.assert_allclose(D @ np.ones(7), 0, atol=1e-12)


def test_interpolation_reproduces_resolved_field():
    g = build_geometry(16, 10)
    Xg, Yg = np.meshgrid(g.x, g.y)
    f = np.cos(2 * Xg) * Yg**4
    xs, ys = np.array([0.3, 1.7]), np.array([0.1, 0.55, 0.9])
    ref = np.cos(2 * xs)[None, :] * (ys**4)[:, None]
    np.testing.assert_allclose(g.interpolate(f, xs, ys), ref, atol=1e-12)
