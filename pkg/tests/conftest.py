import numpy as np
import pytest
import sympy as sp
from hypothesis import settings

from acns.domain import build_geometry
from acns.spaces import galerkin_basis

settings.register_profile("acns", deadline=None, max_examples=25)
settings.load_profile("acns")

X, Y = sp.symbols("x y", real=True)


@pytest.fixture(scope="session")
def geom():
    return build_geometry(16, 16)


@pytest.fixture(scope="session")
def basis(geom):
    return galerkin_basis(geom, 16)


class DenseQuad:
    """Independent quadrature: Gauss-Legendre in y, uniform rule in x."""

    def __init__(self, nx=96, ny=40):
        t, w = np.polynomial.legendre.leggauss(ny)
        self.y = 0.5 * (t + 1.0)
        self.wy = 0.5 * w
        self.x = 2 * np.pi * np.arange(nx) / nx
        self.wx = np.full(nx, 2 * np.pi / nx)
        self.Xg, self.Yg = np.meshgrid(self.x, self.y)

    def ev(self, expr):
        fn = sp.lambdify((X, Y), expr, "numpy")
        return np.broadcast_to(np.asarray(fn(self.Xg, self.Yg), dtype=float), self.Xg.shape)

    def integrate(self, expr):
        return float(self.wy @ self.ev(expr) @ self.wx)

    def wall_integral(self, expr_bottom, expr_top):
        fb = sp.lambdify(X, expr_bottom, "numpy")
        ft = sp.lambdify(X, expr_top, "numpy")
        vb = np.broadcast_to(np.asarray(fb(self.x), dtype=float), self.x.shape)
        vt = np.broadcast_to(np.asarray(ft(self.x), dtype=float), self.x.shape)
        return float((vb + vt) @ self.wx)


@pytest.fixture(scope="session")
def dense():
    return DenseQuad()


def on_grid(geom, expr):
    fn = sp.lambdify((X, Y), expr, "numpy")
    Xg, Yg = np.meshgrid(geom.x, geom.y)
    return np.broadcast_to(np.asarray(fn(Xg, Yg), dtype=float), geom.shape).copy()


def stream_velocity(psi):
    """Divergence-free (d_y psi, -d_x psi)."""
    return sp.diff(psi, Y), -sp.diff(psi, X)
