"""Periodic channel geometry: nodes, quadrature, spectral differentiation.

The domain is the strip [0, 2*pi) x [0, 1], periodic in x.  The boundary
consists of the two walls y = 0 (bottom) and y = 1 (top).  The x direction
uses an equispaced Fourier grid; the wall-normal direction uses
Gauss-Lobatto-Legendre (GLL) nodes, which include both walls and cluster
towards them.

Grid arrays are laid out as ``(Ny, Nx)``: row 0 is the bottom wall and row
``Ny - 1`` the top wall.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as leg

LX = 2.0 * np.pi
HEIGHT = 1.0
WALLS = ("bottom", "top")


class GeometryError(ValueError):
    pass


def gll_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """GLL nodes and weights on [-1, 1] (n points, exact to degree 2n-3)."""
    c = np.zeros(n)
    c[-1] = 1.0
    interior = np.sort(leg.legroots(leg.legder(c)))
    xi = np.concatenate([[-1.0], interior, [1.0]])
    pn = leg.legval(xi, c)
    w = 2.0 / (n * (n - 1) * pn**2)
    return xi, w


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def differentiation_matrix(nodes: np.ndarray) -> np.ndarray:
    """Polynomial collocation derivative matrix on arbitrary distinct nodes."""
    bw = barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    d = (bw[None, :] / bw[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def lagrange_matrix(nodes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Matrix L with L @ f(nodes) = interpolant evaluated at targets."""
    targets = np.asarray(targets, dtype=float)
    bw = barycentric_weights(nodes)
    diff = targets[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-14, rtol=0.0)
    diff[exact] = 1.0
    terms = bw[None, :] / diff
    mat = terms / terms.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    mat[rows] = exact[rows].astype(float)
    return mat


def fourier_matrix(nx: int, targets: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation matrix from the nx-point periodic grid.

    The Nyquist mode is interpolated as a pure cosine so the interpolant
    stays real.
    """
    targets = np.asarray(targets, dtype=float)
    nodes = LX * np.arange(nx) / nx
    k = np.arange(nx // 2 + 1)
    theta = targets[:, None, None] - nodes[None, None, :]
    ck = np.full(k.size, 2.0)
    ck[0] = 1.0
    if nx % 2 == 0:
        ck[-1] = 1.0
    mat = (ck[None, :, None] * np.cos(k[None, :, None] * theta)).sum(axis=1) / nx
    return mat


@dataclass(frozen=True)
class ChannelGeometry:
    """Tensor grid on the periodic channel.

    Attributes
    ----------
    Nx, Ny : int
        Fourier points in x and GLL points in y.
    x, y : ndarray
        Node coordinates.
    weights : ndarray, shape (Ny, Nx)
        Interior quadrature weights (sum = 2*pi).
    wall_weights : ndarray, shape (Nx,)
        Quadrature weights along one wall (sum = 2*pi).
    Dy : ndarray
        Wall-normal collocation derivative matrix.
    degree : int
        Polynomial degree integrated exactly by the wall-normal rule.
    """

    Nx: int
    Ny: int
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    wy: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    wall_weights: np.ndarray = field(repr=False)
    Dy: np.ndarray = field(repr=False)
    degree: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Ny, self.Nx)

    @property
    def area(self) -> float:
        return LX * HEIGHT

    @property
    def kx(self) -> np.ndarray:
        k = np.fft.rfftfreq(self.Nx, d=1.0 / self.Nx)
        return k

    def dx(self, f: np.ndarray) -> np.ndarray:
        """Spectral x-derivative along the last axis (Nyquist mode dropped)."""
        fh = np.fft.rfft(f, axis=-1)
        k = self.kx.copy()
        if self.Nx % 2 == 0:
            k[-1] = 0.0
        return np.fft.irfft(1j * k * fh, n=self.Nx, axis=-1)

    def dy(self, f: np.ndarray) -> np.ndarray:
        """Collocation y-derivative along axis -2."""
        return np.einsum("ij,...jk->...ik", self.Dy, f)

    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Quadrature of grid samples over D (trailing two axes)."""
        return np.einsum("...ij,ij->...", f, self.weights)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.sum(f * g * self.weights))

    def boundary_integral(self, g) -> float:
        """Integral over both walls of boundary samples shaped (2, Nx)."""
        g = np.asarray(g, dtype=float)
        if g.shape != (2, self.Nx):
            raise GeometryError(f"boundary samples must have shape (2, {self.Nx}), got {g.shape}")
        return float(np.sum(g * self.wall_weights[None, :]))

    def trace(self, f: np.ndarray) -> np.ndarray:
        """Wall values (bottom, top) of grid samples; shape (..., 2, Nx)."""
        return np.stack([f[..., 0, :], f[..., -1, :]], axis=-2)

    def interpolate(self, f: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Evaluate the grid interpolant on the tensor grid ys x xs."""
        ly = lagrange_matrix(self.y, ys)
        lx = fourier_matrix(self.Nx, xs)
        return ly @ f @ lx.T

    def dense_values(self, f: np.ndarray, factor: int = 3) -> np.ndarray:
        """Interpolant on the grid refined by ``factor`` (cached operators)."""
        ly, lx = _dense_ops(self.Nx, self.Ny, factor)
        return ly @ f @ lx.T

    def refined(self, factor: int = 2) -> "ChannelGeometry":
        return build_geometry(self.Nx * factor, self.Ny * factor)


@functools.lru_cache(maxsize=32)
def _dense_ops(Nx: int, Ny: int, factor: int):
    coarse, fine = build_geometry(Nx, Ny), build_geometry(factor * Nx, factor * Ny)
    return lagrange_matrix(coarse.y, fine.y), fourier_matrix(Nx, fine.x)


@functools.lru_cache(maxsize=32)
def build_geometry(Nx: int, Ny: int) -> ChannelGeometry:
    """Build the channel grid.

    ``Nx`` must be even and at least 4; ``Ny`` at least 4.
    """
    if int(Nx) != Nx or int(Ny) != Ny:
        raise GeometryError("Nx and Ny must be integers")
    Nx, Ny = int(Nx), int(Ny)
    if Nx < 4 or Nx % 2:
        raise GeometryError(f"Nx must be even and >= 4, got {Nx}")
    if Ny < 4:
        raise GeometryError(f"Ny must be >= 4, got {Ny}")
    xi, w = gll_nodes(Ny)
    y = 0.5 * (xi + 1.0) * HEIGHT
    wy = 0.5 * HEIGHT * w
    x = LX * np.arange(Nx) / Nx
    wx = np.full(Nx, LX / Nx)
    dy = differentiation_matrix(y)
    for arr in (x, y, wy, wx, dy):
        arr.setflags(write=False)
    weights = np.outer(wy, wx)
    weights.setflags(write=False)
    return ChannelGeometry(
        Nx=Nx, Ny=Ny, x=x, y=y, wy=wy, weights=weights,
        wall_weights=wx, Dy=dy, degree=2 * Ny - 3,
    )


def normal_tangent(wall: str) -> tuple[np.ndarray, np.ndarray]:
    """Outward unit normal and tangent (n rotated by +90 degrees)."""
    if wall == "bottom":
        n = np.array([0.0, -1.0])
    elif wall == "top":
        n = np.array([0.0, 1.0])
    else:
        raise GeometryError(f"unknown wall {wall!r}")
    tau = np.array([-n[1], n[0]])
    return n, tau


# tangential unit x-component per wall: bottom tau=(1,0), top tau=(-1,0)
TAU_X = np.array([1.0, -1.0])
NORMAL_Y = np.array([-1.0, 1.0])
