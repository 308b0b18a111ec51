"""Stationary Stokes lifting of the boundary data (a, b).

For each x-wavenumber k >= 1 the streamfunction of a Stokes flow in the
strip is ``psi_k(y) = (c1 + c2 y) e^{-k y} + (c3 + c4 (1-y)) e^{-k (1-y)}``;
the four coefficients are fixed by the normal data (``psi`` on the walls)
and the Navier-slip data.  The x-mean part is a linear shear profile plus a
uniform wall-normal velocity.  All values and gradients are evaluated in
closed form at the grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import NORMAL_Y, TAU_X, ChannelGeometry
from .spaces import fourier_coefficients, hp_gamma_norm, strain

COMPAT_TOL = 1e-9


class LiftingError(ValueError):
    pass


@dataclass(frozen=True)
class LiftSolution:
    """Lifting field on the grid: ``values`` (2, Ny, Nx), ``grad`` (2, 2, Ny, Nx), ``pressure`` (Ny, Nx)."""

    geom: ChannelGeometry = field(repr=False)
    values: np.ndarray
    grad: np.ndarray
    pressure: np.ndarray

    def __add__(self, other):
        return LiftSolution(self.geom, self.values + other.values, self.grad + other.grad,
                            self.pressure + other.pressure)

    def __mul__(self, c):
        return LiftSolution(self.geom, c * self.values, c * self.grad, c * self.pressure)

    __rmul__ = __mul__


def _exp_profile(k, y, c, d, s_sign):
    """Derivatives 0..3 of (c + d s) e^{-k s} with s = y (s_sign=+1) or 1-y (-1)."""
    s = y if s_sign > 0 else 1.0 - y
    e = np.exp(-k * s)
    lin = c + d * s
    h0 = lin * e
    h1 = (d - k * lin) * e
    h2 = (-2.0 * d * k + k * k * lin) * e
    h3 = (3.0 * d * k * k - k**3 * lin) * e
    return h0, s_sign * h1, h2, s_sign * h3


def _mode_profiles(k, y):
    """The four homogeneous solutions and their y-derivatives, shape (4, 4, len(y))."""
    out = np.empty((4, 4, y.size))
    for i, (c, d, sg) in enumerate([(1, 0, 1), (0, 1, 1), (1, 0, -1), (0, 1, -1)]):
        out[i] = np.array(_exp_profile(k, y, c, d, sg))
    return out


def _solve_mode(k, alpha, ab, at, bb, bt):
    """Complex streamfunction coefficients for wavenumber k >= 1."""
    ends = _mode_profiles(k, np.array([0.0, 1.0]))  # (basis, deriv, wall)
    m = np.zeros((4, 4))
    for i in range(4):
        p0, p1, p2 = ends[i, 0], ends[i, 1], ends[i, 2]
        m[0, i] = p0[0]
        m[1, i] = p0[1]
        m[2, i] = -(p2[0] + k * k * p0[0]) + alpha * p1[0]
        m[3, i] = -(p2[1] + k * k * p0[1]) - alpha * p1[1]
    rhs = np.array([ab / (1j * k), -at / (1j * k), bb, bt], dtype=complex)
    if abs(np.linalg.det(m)) < 1e-14 * np.abs(m).max() ** 4:
        raise LiftingError(f"singular lifting system at k={k}")
    return np.linalg.solve(m.astype(complex), rhs)


def solve_stokes_lift(geom: ChannelGeometry, a, b, alpha: float = 1.0) -> LiftSolution:
    """Lifting field and zero-mean pressure for wall data a (normal) and b (tangential slip).

    ``a`` and ``b`` are boundary samples shaped (2, Nx) ordered (bottom, top).
    The Nyquist mode of the data is ignored.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (2, geom.Nx) or b.shape != (2, geom.Nx):
        raise LiftingError(f"boundary data must have shape (2, {geom.Nx})")
    if alpha <= 0:
        raise LiftingError("alpha must be positive")
    flux = geom.boundary_integral(a)
    scale = np.abs(a).max() * 4.0 * np.pi
    if abs(flux) > COMPAT_TOL * max(scale, 1e-300) and abs(flux) > 1e-300:
        raise LiftingError(f"compatibility violated: int_Gamma a = {flux:.3e}")

    ah, bh = fourier_coefficients(a), fourier_coefficients(b)
    y, x = geom.y, geom.x
    ny, nx = geom.shape
    ux = np.zeros((ny, nx))
    uy = np.zeros((ny, nx))
    g = np.zeros((2, 2, ny, nx))
    p = np.zeros((ny, nx))

    # x-mean: U(y) = A + B y, V uniform
    det = -alpha * (2.0 + alpha)
    b0b, b0t = bh[0, 0].real, bh[1, 0].real
    A = (-(1.0 + alpha) * b0b + b0t) / det
    B = alpha * (b0b + b0t) / det
    V = ah[1, 0].real
    ux += (A + B * y)[:, None]
    uy += V
    g[0, 1] += B

    kmax = nx // 2 - 1
    for k in range(1, kmax + 1):
        if not (ah[:, k].any() or bh[:, k].any()):
            continue
        c = _solve_mode(k, alpha, ah[0, k], ah[1, k], bh[0, k], bh[1, k])
        prof = np.einsum("i,idy->dy", c, _mode_profiles(k, y))  # psi, psi', psi'', psi'''
        ph = np.exp(1j * k * x)[None, :]
        ik = 1j * k

        def re(f):
            return 2.0 * np.real(f[:, None] * ph)

        ux += re(prof[1])
        uy += re(-ik * prof[0])
        g[0, 0] += re(ik * prof[1])
        g[0, 1] += re(prof[2])
        g[1, 0] += re(k * k * prof[0])
        g[1, 1] += re(-ik * prof[1])
        p += re((prof[3] - k * k * prof[1]) / ik)
    return LiftSolution(geom, np.stack([ux, uy]), g, p)


def stokes_residuals(geom: ChannelGeometry, sol: LiftSolution, a, b, alpha: float = 1.0) -> dict:
    """Relative residuals of the four Stokes/slip relations via grid differentiation."""
    v, p = sol.values, sol.pressure
    gv = np.stack([np.stack([geom.dx(c), geom.dy(c)]) for c in v])
    lap = np.stack([geom.dx(gv[i, 0]) + geom.dy(gv[i, 1]) for i in range(2)])
    gp = np.stack([geom.dx(p), geom.dy(p)])
    data = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    fscale = max(np.abs(v).max(), data)
    mom = np.abs(-lap + gp).max() / max(np.abs(lap).max() + np.abs(gp).max(), fscale)
    div = np.abs(gv[0, 0] + gv[1, 1]).max() / max(np.abs(gv).max(), fscale)
    normal = np.abs(geom.trace(v[1]) * NORMAL_Y[:, None] - a).max() / fscale
    d = strain(gv)
    # [2 D n + alpha v] . tau at each wall
    dn_tau = np.stack([
        2.0 * (d[0, 1][0] * NORMAL_Y[0]) * TAU_X[0],
        2.0 * (d[0, 1][-1] * NORMAL_Y[1]) * TAU_X[1],
    ])
    tang = dn_tau + alpha * geom.trace(v[0]) * TAU_X[:, None]
    tangential = np.abs(tang - b).max() / fscale
    return {"momentum": float(mom), "divergence": float(div),
            "normal": float(normal), "tangential": float(tangential)}


# ---------------------------------------------------------------------------
# Control-driven lifting


def boundary_mode_samples(geom: ChannelGeometry, kc: int) -> tuple[np.ndarray, np.ndarray]:
    """Trigonometric samples for the a-modes (cos1, sin1, ..., sin kc) and b-modes (1, cos1, ...)."""
    x = geom.x
    amodes = []
    for k in range(1, kc + 1):
        amodes += [np.cos(k * x), np.sin(k * x)]
    bmodes = [np.ones_like(x)] + amodes
    return np.array(amodes).reshape(2 * kc, geom.Nx), np.array(bmodes)


@dataclass
class LiftSample:
    t: float
    values: np.ndarray
    grad: np.ndarray
    dt_values: np.ndarray
    pressure: np.ndarray
    a: np.ndarray
    b: np.ndarray
    dta: np.ndarray
    dtb: np.ndarray


class LiftingField:
    """Lifting of a time-dependent boundary control.

    The Stokes map is linear, so unit responses for every control mode are
    computed once and combined with the control's coefficients (and their
    analytic time derivatives) at any requested time.
    """

    def __init__(self, geom: ChannelGeometry, control, alpha: float = 1.0):
        self.geom = geom
        self.control = control
        self.alpha = float(alpha)
        kc = control.kc
        self.amodes, self.bmodes = boundary_mode_samples(geom, kc)
        zero = np.zeros(geom.Nx)
        units = []
        for kind, modes in (("a", self.amodes), ("b", self.bmodes)):
            for wall in range(2):
                for mvals in modes:
                    data = np.stack([zero, zero])
                    data[wall] = mvals
                    if kind == "a":
                        units.append(solve_stokes_lift(geom, data, np.stack([zero, zero]), alpha))
                    else:
                        units.append(solve_stokes_lift(geom, np.stack([zero, zero]), data, alpha))
        self.unit_values = np.array([u.values for u in units])
        self.unit_grad = np.array([u.grad for u in units])
        self.unit_pressure = np.array([u.pressure for u in units])

    def _flat(self, ca, cb):
        return np.concatenate([np.asarray(ca).ravel(), np.asarray(cb).ravel()])

    def boundary(self, t):
        ca, cb = self.control.coeffs(t)
        return ca @ self.amodes, cb @ self.bmodes

    def dt_boundary(self, t):
        ca, cb = self.control.dcoeffs(t)
        return ca @ self.amodes, cb @ self.bmodes

    def at(self, t: float) -> LiftSample:
        ca, cb = self.control.coeffs(t)
        da, db = self.control.dcoeffs(t)
        c, dc = self._flat(ca, cb), self._flat(da, db)
        return LiftSample(
            t=float(t),
            values=np.tensordot(c, self.unit_values, 1),
            grad=np.tensordot(c, self.unit_grad, 1),
            dt_values=np.tensordot(dc, self.unit_values, 1),
            pressure=np.tensordot(c, self.unit_pressure, 1),
            a=ca @ self.amodes, b=cb @ self.bmodes,
            dta=da @ self.amodes, dtb=db @ self.bmodes,
        )

    def hp_norm(self, t: float, p: float = 3.0) -> float:
        s = self.at(t)
        return hp_gamma_norm(s.a, s.b, s.dta, s.dtb, p)

    def export_csv(self, path, t: float) -> None:
        """Grid dump of the lifting field at time t: columns x, y, ax, ay, dtax, dtay, p."""
        s = self.at(t)
        X, Y = np.meshgrid(self.geom.x, self.geom.y)
        cols = [X, Y, s.values[0], s.values[1], s.dt_values[0], s.dt_values[1], s.pressure]
        with open(path, "w") as fh:
            fh.write("x,y,ax,ay,dtax,dtay,p\n")
            for row in zip(*[c.ravel() for c in cols]):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def lift_norms(geom: ChannelGeometry, s: LiftSample) -> dict:
    l2sq = float(geom.integrate((s.values**2).sum(axis=0)))
    gsq = float(geom.integrate((s.grad**2).sum(axis=(0, 1))))
    dtsq = float(geom.integrate((s.dt_values**2).sum(axis=0)))
    return {"l2": np.sqrt(l2sq), "h1": np.sqrt(l2sq + gsq), "dt_l2": np.sqrt(dtsq)}


def lift_estimate_ratio(lift: LiftingField, times, p: float = 3.0) -> dict:
    """(||a||_{H1} + ||d_t a||_{L2}) / ||(a, b)||_{H_p(Gamma)} per time sample and its sup.

    The W^{1,p} norm of the lifting is replaced by its Hilbert H^1 version.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    ratios = []
    for t in times:
        s = lift.at(t)
        den = hp_gamma_norm(s.a, s.b, s.dta, s.dtb, p)
        if den <= 0:
            raise LiftingError(f"zero control at t={t}: ratio undefined")
        n = lift_norms(lift.geom, s)
        ratios.append((n["h1"] + n["dt_l2"]) / den)
    ratios = np.array(ratios)
    return {"times": times, "ratio": ratios, "sup": float(ratios.max())}
