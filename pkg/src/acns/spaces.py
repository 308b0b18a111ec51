"""Discrete function spaces on the channel.

Velocity fields in the homogeneous space are built from a streamfunction,
``u = (d_y psi, -d_x psi)`` with ``psi`` vanishing on both walls for every
nonzero x-wavenumber; the x-mean part is a free shear profile ``(U(y), 0)``.
This makes ``div u = 0`` and ``u.n = 0`` hold exactly.

Phase fields live in the span of polynomials in y with ``d_y phi = 0`` at
both walls times trigonometric modes in x, so the Neumann condition holds
pointwise and the collocation operator ``A_theta`` integrates by parts
exactly under the grid quadrature.

Polynomial degrees are capped by the grid so that all bilinear forms (and
the cubic convection integrand) are integrated exactly.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import Legendre, Polynomial
from scipy import linalg

from .domain import NORMAL_Y, TAU_X, ChannelGeometry, build_geometry

NEUMANN_TOL = 1e-10
DIV_TOL = 1e-10


class SpaceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Fields


@dataclass
class ScalarField:
    values: np.ndarray
    geom: ChannelGeometry = field(repr=False)
    neumann: bool | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.geom.shape:
            raise SpaceError(f"scalar field shape {self.values.shape} != grid {self.geom.shape}")
        if self.neumann is None:
            self.neumann = self.neumann_residual() <= NEUMANN_TOL

    def grad(self) -> np.ndarray:
        return np.stack([self.geom.dx(self.values), self.geom.dy(self.values)])

    def neumann_residual(self) -> float:
        dny = self.geom.dy(self.values)
        wall = np.abs(np.concatenate([dny[0], dny[-1]])).max()
        scale = max(np.abs(self.values).max(), np.abs(dny).max(), 1e-300)
        return float(wall / scale)

    def __add__(self, other):
        return ScalarField(self.values + other.values, self.geom)

    def __sub__(self, other):
        return ScalarField(self.values - other.values, self.geom)

    def __mul__(self, c: float):
        return ScalarField(self.values * c, self.geom, self.neumann)

    __rmul__ = __mul__


@dataclass
class VectorField:
    """Two-component field sampled on the grid; ``values`` has shape (2, Ny, Nx)."""

    values: np.ndarray
    geom: ChannelGeometry = field(repr=False)
    divergence_free: bool | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (2,) + self.geom.shape:
            raise SpaceError(f"vector field shape {self.values.shape} != (2,) + {self.geom.shape}")
        if self.divergence_free is None:
            self.divergence_free = self.divergence_residual() <= DIV_TOL

    def grad(self) -> np.ndarray:
        """Gradient tensor G[a, b] = d_b v_a, shape (2, 2, Ny, Nx)."""
        g = self.geom
        return np.stack([np.stack([g.dx(c), g.dy(c)]) for c in self.values])

    def divergence(self) -> np.ndarray:
        return self.geom.dx(self.values[0]) + self.geom.dy(self.values[1])

    def divergence_residual(self) -> float:
        div = np.sqrt(self.geom.integrate(self.divergence() ** 2))
        nrm = np.sqrt(self.geom.integrate((self.grad() ** 2).sum(axis=(0, 1)))) + np.sqrt(
            self.geom.integrate((self.values**2).sum(axis=0)))
        return float(div / nrm) if nrm > 0 else 0.0

    def normal_trace(self) -> np.ndarray:
        """v.n on (bottom, top), shape (2, Nx)."""
        vy = self.geom.trace(self.values[1])
        return vy * NORMAL_Y[:, None]

    def tangential_trace(self) -> np.ndarray:
        vx = self.geom.trace(self.values[0])
        return vx * TAU_X[:, None]

    def __add__(self, other):
        return VectorField(self.values + other.values, self.geom)

    def __sub__(self, other):
        return VectorField(self.values - other.values, self.geom)

    def __mul__(self, c: float):
        return VectorField(self.values * c, self.geom, self.divergence_free)

    __rmul__ = __mul__


def _same_geometry(*fields):
    g0 = fields[0].geom
    for f in fields[1:]:
        if f.geom is not g0 and (f.geom.Nx, f.geom.Ny) != (g0.Nx, g0.Ny):
            raise SpaceError("fields live on different geometries")
    return g0


def strain(grad: np.ndarray) -> np.ndarray:
    return 0.5 * (grad + np.swapaxes(grad, 0, 1))


def slip_form(geom: ChannelGeometry, vals_v, grad_v, vals_z, grad_z, alpha: float) -> float:
    """((v, z)) = 2 (Dv, Dz) + alpha * int_Gamma v.z from raw arrays."""
    dv, dz = strain(grad_v), strain(grad_z)
    bulk = geom.integrate((dv * dz).sum(axis=(0, 1)))
    tv, tz = geom.trace(vals_v), geom.trace(vals_z)
    wall = geom.boundary_integral((tv * tz).sum(axis=0))
    return float(2.0 * bulk + alpha * wall)


def slip_inner(v: VectorField, z: VectorField, alpha: float = 1.0) -> float:
    """Navier-slip inner product ((v, z))."""
    g = _same_geometry(v, z)
    return slip_form(g, v.values, v.grad(), z.values, z.grad(), alpha)


def l2_inner(f, g) -> float:
    geom = _same_geometry(f, g)
    prod = f.values * g.values
    if prod.ndim == 3:
        prod = prod.sum(axis=0)
    return float(geom.integrate(prod))


def _dense_linf(f) -> float:
    vals = f.geom.dense_values(f.values, 3)
    if vals.ndim == 3:
        vals = np.sqrt((vals**2).sum(axis=0))
    return float(np.abs(vals).max())


def norms(f, alpha: float = 1.0) -> dict[str, float]:
    """L2, H1, H2, L4, Linf and boundary-L2 norms of a scalar or vector field.

    For vector fields the slip norm ``||v|| = ((v, v))^(1/2)`` is included
    under the key ``"slip"``.
    """
    geom = f.geom
    vals = f.values
    comps = vals[None] if vals.ndim == 2 else vals
    grads = np.stack([np.stack([geom.dx(c), geom.dy(c)]) for c in comps])
    hess = np.stack([np.stack([geom.dx(gc), geom.dy(gc)]) for gc in grads.reshape(-1, *geom.shape)])
    l2sq = geom.integrate((comps**2).sum(axis=0))
    gradsq = geom.integrate((grads**2).sum(axis=(0, 1)))
    hesssq = geom.integrate((hess**2).sum(axis=(0, 1)))
    pw = (comps**2).sum(axis=0)
    trace = geom.trace(pw)
    out = {
        "l2": float(np.sqrt(l2sq)),
        "grad": float(np.sqrt(gradsq)),
        "h1": float(np.sqrt(l2sq + gradsq)),
        "h2": float(np.sqrt(l2sq + gradsq + hesssq)),
        "l4": float(geom.integrate(pw**2) ** 0.25),
        "linf": _dense_linf(f),
        "boundary_l2": float(np.sqrt(geom.boundary_integral(trace))),
    }
    if vals.ndim == 3:
        out["slip"] = float(np.sqrt(max(slip_form(geom, vals, grads, vals, grads, alpha), 0.0)))
    return out


def y_norm_sq(u: VectorField, phi: ScalarField) -> float:
    """||(u, phi)||_Y^2 = |u|^2 + |grad phi|^2."""
    return l2_inner(u, u) + float(phi.geom.integrate((phi.grad() ** 2).sum(axis=0)))


def v_norm_sq(u: VectorField, phi: ScalarField, theta: float = 1.0, alpha: float = 1.0) -> float:
    """||(u, phi)||_V^2 = ||u||^2 + |A_theta phi|^2."""
    aphi = a_theta_apply(phi, theta)
    return slip_inner(u, u, alpha) + l2_inner(aphi, aphi)


def a_theta_apply(phi: ScalarField, theta: float) -> ScalarField:
    """A_theta phi = -Laplace(phi) + theta * phi (requires Neumann data)."""
    if not phi.neumann:
        raise SpaceError("A_theta is defined on Neumann fields only")
    if theta <= 0:
        raise SpaceError("theta must be positive")
    g = phi.geom
    lap = g.dx(g.dx(phi.values)) + g.dy(g.dy(phi.values))
    return ScalarField(-lap + theta * phi.values, g, neumann=False)


# ---------------------------------------------------------------------------
# Polynomial building blocks


def resolved_limits(geom: ChannelGeometry) -> dict[str, int]:
    """Largest wavenumber and y-degrees integrated exactly on ``geom``.

    Velocity: cubic products need 3*K < Nx and 3*P - 1 <= 2*Ny - 3.
    Phase: quadratic forms need 2*P <= 2*Ny - 3.
    """
    kmax = (geom.Nx - 1) // 3
    pu = min((2 * geom.Ny - 2) // 3, geom.Ny - 1)
    pphi = geom.Ny - 2
    return {"kmax": kmax, "pu": pu, "pphi": pphi}


def _leg(j: int) -> Legendre:
    return Legendre.basis(j, domain=[0.0, 1.0])


def _bubble() -> Legendre:
    return Polynomial([0.0, 1.0, -1.0]).convert(kind=Legendre, domain=[0.0, 1.0])


def streamfunction_profiles(pu: int) -> list[Legendre]:
    """psi(y) = y(1-y) L_j(2y-1), vanishing on both walls; degree <= pu."""
    b = _bubble()
    return [b * _leg(j) for j in range(pu - 1)]


def neumann_profiles(pphi: int) -> list[Legendre]:
    """Constant plus antiderivatives of y(1-y) L_j: zero slope at both walls."""
    b = _bubble()
    out = [_leg(0)]
    for j in range(pphi - 2):
        q = (b * _leg(j)).integ(lbnd=0.0)
        out.append(q)
    return out


def _trig(kind: str, k: int, x: np.ndarray) -> np.ndarray:
    if kind == "c":
        return np.cos(k * x)
    return np.sin(k * x)


def _trig_matrix(geom: ChannelGeometry, kmax: int, k0: int) -> np.ndarray:
    rows = []
    for k in range(k0, kmax + 1):
        rows += [np.cos(k * geom.x)] if k == 0 else [np.cos(k * geom.x), np.sin(k * geom.x)]
    return np.array(rows)


def _trig_wavenumbers(kmax: int, k0: int) -> np.ndarray:
    return np.array([k for k in range(k0, kmax + 1) for _ in ((0,) if k == 0 else (0, 1))])


def neumann_random_field(geom: ChannelGeometry, rng: np.random.Generator, decay: float = 2.0,
                         kmax: int | None = None, pmax: int | None = None) -> ScalarField:
    """Random smooth Neumann field with Gaussian coefficients ~ (1+k+j)^-decay."""
    lim = resolved_limits(geom)
    kmax = lim["kmax"] if kmax is None else kmax
    pmax = lim["pphi"] if pmax is None else pmax
    py = np.array([p(geom.y) for p in neumann_profiles(pmax)])
    py /= np.maximum(np.abs(py).max(axis=1, keepdims=True), 1e-300)
    trig = _trig_matrix(geom, kmax, 0)
    kk = _trig_wavenumbers(kmax, 0)
    j = np.arange(len(py))[:, None]
    coef = rng.standard_normal((len(py), len(kk))) * (1.0 + kk[None, :] + j) ** (-decay)
    return ScalarField(py.T @ coef @ trig, geom)


def streamfunction_field(geom: ChannelGeometry, psi: np.ndarray) -> VectorField:
    """u = (d_y psi, -d_x psi) from nodal streamfunction samples."""
    return VectorField(np.stack([geom.dy(psi), -geom.dx(psi)]), geom)


def random_div_free_field(geom: ChannelGeometry, rng: np.random.Generator, decay: float = 2.0,
                          kmax: int | None = None, pmax: int | None = None) -> VectorField:
    """Random member of the discrete V_div with spectral decay."""
    lim = resolved_limits(geom)
    kmax = lim["kmax"] if kmax is None else kmax
    pmax = lim["pu"] if pmax is None else pmax
    py = np.array([p(geom.y) for p in streamfunction_profiles(pmax)])
    trig = _trig_matrix(geom, kmax, 1)
    kk = _trig_wavenumbers(kmax, 1)
    j = np.arange(len(py))[:, None]
    coef = rng.standard_normal((len(py), len(kk))) * (1.0 + kk[None, :] + j) ** (-decay)
    psi = py.T @ coef @ trig if len(kk) else np.zeros(geom.shape)
    u = streamfunction_field(geom, psi).values
    shear = rng.standard_normal(pmax) * (1.0 + np.arange(pmax)) ** (-decay)
    u[0] += (shear @ np.array([_leg(i)(geom.y) for i in range(pmax)]))[:, None]
    return VectorField(u, geom)


# ---------------------------------------------------------------------------
# Eigenbasis


@dataclass(frozen=True)
class ModeInfo:
    kind: str  # "u" or "phi"
    k: int
    trig: str  # "c" or "s"
    index: int  # position within its (kind, k, trig) block


@dataclass
class ModeSet:
    """All eigenmodes of the discrete coupled space, sorted by eigenvalue."""

    geom: ChannelGeometry
    theta: float
    alpha: float
    eigenvalues: np.ndarray
    info: list[ModeInfo]
    vel: np.ndarray  # (nu_total, 2, Ny, Nx)
    vel_grad: np.ndarray  # (nu_total, 2, 2, Ny, Nx)
    phi: np.ndarray  # (nphi_total, Ny, Nx)
    phi_grad: np.ndarray  # (nphi_total, 2, Ny, Nx)
    phi_a: np.ndarray  # A_theta applied, (nphi_total, Ny, Nx)
    slot: np.ndarray  # position of each sorted mode inside vel / phi arrays

    @property
    def dim(self) -> int:
        return len(self.info)


def _block_eig(stiff: np.ndarray, mass: np.ndarray):
    lam, vec = linalg.eigh(stiff, mass)
    # sign convention: largest-magnitude entry positive
    idx = np.argmax(np.abs(vec), axis=0)
    signs = np.sign(vec[idx, np.arange(vec.shape[1])])
    signs[signs == 0] = 1.0
    return lam, vec * signs


@functools.lru_cache(maxsize=16)
def _mode_set(Nx: int, Ny: int, theta: float, alpha: float) -> ModeSet:
    geom = build_geometry(Nx, Ny)
    lim = resolved_limits(geom)
    kmax, pu, pphi = lim["kmax"], lim["pu"], lim["pphi"]
    w = geom.weights

    entries = []  # (lam, kind_order, k, trig_order, index, payload)
    vel_fields, vel_grads = [], []
    phi_fields, phi_grads, phi_as = [], [], []

    def vel_block(k, trig, raw):
        vals = np.stack([r[0] for r in raw])
        grads = np.stack([r[1] for r in raw])
        mass = np.einsum("iaxy,jaxy,xy->ij", vals, vals, w)
        stiff = np.array([[slip_form(geom, vals[i], grads[i], vals[j], grads[j], alpha)
                           for j in range(len(raw))] for i in range(len(raw))])
        stiff = 0.5 * (stiff + stiff.T)
        lam, vec = _block_eig(stiff, mass)
        for m in range(len(lam)):
            vel_fields.append(np.einsum("i,i...->...", vec[:, m], vals))
            vel_grads.append(np.einsum("i,i...->...", vec[:, m], grads))
            entries.append((lam[m], 0, k, trig, m, len(vel_fields) - 1))

    # x-mean shear profiles
    raw = []
    for j in range(pu):
        ux = np.repeat(_leg(j)(geom.y)[:, None], Nx, axis=1)
        vals = np.stack([ux, np.zeros_like(ux)])
        raw.append((vals, VectorField(vals, geom, True).grad()))
    vel_block(0, "c", raw)
    profiles = streamfunction_profiles(pu)
    for k in range(1, kmax + 1):
        for trig in ("c", "s"):
            raw = []
            for prof in profiles:
                psi = np.outer(prof(geom.y), _trig(trig, k, geom.x))
                vf = streamfunction_field(geom, psi)
                raw.append((vf.values, vf.grad()))
            vel_block(k, trig, raw)

    nprof = neumann_profiles(pphi)
    for k in range(kmax + 1):
        for trig in ("c", "s") if k else ("c",):
            vals = np.stack([np.outer(p(geom.y), _trig(trig, k, geom.x)) for p in nprof])
            sf = [ScalarField(v, geom, neumann=True) for v in vals]
            grads = np.stack([s.grad() for s in sf])
            avals = np.stack([a_theta_apply(s, theta).values for s in sf])
            yform = (np.einsum("iaxy,jaxy,xy->ij", grads, grads, w)
                     + theta * np.einsum("ixy,jxy,xy->ij", vals, vals, w))
            vform = np.einsum("ixy,jxy,xy->ij", avals, avals, w)
            lam, vec = _block_eig(0.5 * (vform + vform.T), 0.5 * (yform + yform.T))
            for m in range(len(lam)):
                phi_fields.append(np.einsum("i,i...->...", vec[:, m], vals))
                phi_grads.append(np.einsum("i,i...->...", vec[:, m], grads))
                phi_as.append(np.einsum("i,i...->...", vec[:, m], avals))
                entries.append((lam[m], 1, k, trig, m, len(phi_fields) - 1))

    # degenerate eigenvalues: velocity before phase, then k, trig, index
    lam_all = np.array([e[0] for e in entries])
    key_lam = np.round(lam_all, 9 - int(np.floor(np.log10(max(lam_all.max(), 1.0)))))
    order = np.lexsort((
        [e[4] for e in entries],
        [0 if e[3] == "c" else 1 for e in entries],
        [e[2] for e in entries],
        [e[1] for e in entries],
        key_lam,
    ))
    info, slots = [], []
    for i in order:
        lam, kind, k, trig, m, slot = entries[i]
        info.append(ModeInfo("u" if kind == 0 else "phi", k, trig, m))
        slots.append(slot)
    arrs = [np.array(a) for a in (vel_fields, vel_grads, phi_fields, phi_grads, phi_as)]
    for a in arrs:
        a.setflags(write=False)
    return ModeSet(geom, theta, alpha, lam_all[order], info, *arrs, np.array(slots))


def mode_set(geom: ChannelGeometry, theta: float = 1.0, alpha: float = 1.0) -> ModeSet:
    if theta <= 0 or alpha <= 0:
        raise SpaceError("theta and alpha must be positive")
    return _mode_set(geom.Nx, geom.Ny, float(theta), float(alpha))


@dataclass
class GalerkinBasis:
    """First ``n`` coupled eigenpairs e_i = (w_i, psi_i).

    Each mode is either pure velocity (psi_i = 0) or pure phase (w_i = 0).
    ``vel`` / ``phi`` hold the nonzero components in mode order;
    ``vel_modes`` / ``phi_modes`` give their positions among the n modes.
    """

    geom: ChannelGeometry
    n: int
    theta: float
    alpha: float
    eigenvalues: np.ndarray
    info: list[ModeInfo]
    vel_modes: np.ndarray
    phi_modes: np.ndarray
    vel: np.ndarray
    vel_grad: np.ndarray
    phi: np.ndarray
    phi_grad: np.ndarray
    phi_a: np.ndarray
    phi_mass: np.ndarray = field(repr=False)

    @property
    def nu(self) -> int:
        return len(self.vel_modes)

    @property
    def nphi(self) -> int:
        return len(self.phi_modes)

    @property
    def lam_u(self) -> np.ndarray:
        return self.eigenvalues[self.vel_modes]

    @property
    def lam_phi(self) -> np.ndarray:
        return self.eigenvalues[self.phi_modes]

    def mode(self, i: int) -> tuple[VectorField, ScalarField]:
        g = self.geom
        u = np.zeros((2,) + g.shape)
        p = np.zeros(g.shape)
        if self.info[i].kind == "u":
            u = self.vel[np.searchsorted(self.vel_modes, i)]
        else:
            p = self.phi[np.searchsorted(self.phi_modes, i)]
        return VectorField(u, g, True), ScalarField(p, g, neumann=True)

    def y_inner(self, i: int, j: int) -> float:
        ui, pi = self.mode(i)
        uj, pj = self.mode(j)
        g = self.geom
        return (l2_inner(ui, uj) + g.inner((pi.grad() * pj.grad()).sum(axis=0), 1.0)
                + self.theta * l2_inner(pi, pj))

    def v_inner(self, i: int, j: int) -> float:
        ui, pi = self.mode(i)
        uj, pj = self.mode(j)
        ai, aj = a_theta_apply(pi, self.theta), a_theta_apply(pj, self.theta)
        return slip_inner(ui, uj, self.alpha) + l2_inner(ai, aj)

    def gram(self, which: str = "y") -> np.ndarray:
        f = self.y_inner if which == "y" else self.v_inner
        return np.array([[f(i, j) for j in range(self.n)] for i in range(self.n)])

    def velocity(self, beta: np.ndarray) -> VectorField:
        return VectorField(np.einsum("i,i...->...", beta, self.vel), self.geom, True)

    def phase(self, chi: np.ndarray) -> ScalarField:
        return ScalarField(np.einsum("i,i...->...", chi, self.phi), self.geom, neumann=True)

    def project(self, u: VectorField, phi: ScalarField) -> tuple[np.ndarray, np.ndarray]:
        """Y-orthogonal projection of (u, phi) onto span{e_1..e_n}."""
        w = self.geom.weights
        beta = np.einsum("iaxy,axy,xy->i", self.vel, u.values, w)
        gp = phi.grad()
        rhs = (np.einsum("iaxy,axy,xy->i", self.phi_grad, gp, w)
               + self.theta * np.einsum("ixy,xy,xy->i", self.phi, phi.values, w))
        return beta, rhs

    def export_csv(self, path, which: str = "y") -> Path:
        """Write a Gram matrix row-major with a header carrying n and the eigenvalues."""
        path = Path(path)
        mat = self.gram(which)
        with path.open("w", newline="") as fh:
            fh.write(f"# n={self.n}\n")
            fh.write("# lambda=" + " ".join(repr(float(v)) for v in self.eigenvalues) + "\n")
            wr = csv.writer(fh)
            for row in mat:
                wr.writerow([repr(float(v)) for v in row])
        return path


def galerkin_basis(geom: ChannelGeometry, n: int, theta: float = 1.0, alpha: float = 1.0) -> GalerkinBasis:
    """First n eigenpairs of ((y, e)) = lambda (y, e)_Y on V = V_div x V_2."""
    ms = mode_set(geom, theta, alpha)
    if n < 1 or n > ms.dim:
        raise SpaceError(f"n must be in [1, {ms.dim}] for this grid, got {n}")
    info = ms.info[:n]
    vm = np.array([i for i in range(n) if info[i].kind == "u"], dtype=int)
    pm = np.array([i for i in range(n) if info[i].kind == "phi"], dtype=int)
    vs, ps = ms.slot[vm], ms.slot[pm]
    phi = ms.phi[ps] if len(ps) else np.zeros((0,) + geom.shape)
    mass = np.einsum("ixy,jxy,xy->ij", phi, phi, geom.weights) if len(ps) else np.zeros((0, 0))
    return GalerkinBasis(
        geom=ms.geom, n=n, theta=ms.theta, alpha=ms.alpha,
        eigenvalues=ms.eigenvalues[:n].copy(), info=info,
        vel_modes=vm, phi_modes=pm,
        vel=ms.vel[vs] if len(vs) else np.zeros((0, 2) + geom.shape),
        vel_grad=ms.vel_grad[vs] if len(vs) else np.zeros((0, 2, 2) + geom.shape),
        phi=phi,
        phi_grad=ms.phi_grad[ps] if len(ps) else np.zeros((0, 2) + geom.shape),
        phi_a=ms.phi_a[ps] if len(ps) else np.zeros((0,) + geom.shape),
        phi_mass=mass,
    )


def project_div_free(w: VectorField, alpha: float = 1.0) -> VectorField:
    """L2-orthogonal projection onto the discrete H_div."""
    ms = mode_set(w.geom, 1.0, alpha)
    coef = np.einsum("iaxy,axy,xy->i", ms.vel, w.values, w.geom.weights)
    return VectorField(np.einsum("i,i...->...", coef, ms.vel), w.geom, True)


def div_free_raw_basis(geom: ChannelGeometry) -> np.ndarray:
    """Non-orthogonal spanning set of the discrete H_div (for oracles)."""
    lim = resolved_limits(geom)
    out = []
    for j in range(lim["pu"]):
        ux = np.repeat(_leg(j)(geom.y)[:, None], geom.Nx, axis=1)
        out.append(np.stack([ux, np.zeros_like(ux)]))
    for k in range(1, lim["kmax"] + 1):
        for trig in ("c", "s"):
            for prof in streamfunction_profiles(lim["pu"]):
                psi = np.outer(prof(geom.y), _trig(trig, k, geom.x))
                out.append(streamfunction_field(geom, psi).values)
    return np.array(out)


# ---------------------------------------------------------------------------
# Boundary norms


def fourier_coefficients(g: np.ndarray) -> np.ndarray:
    """Mean-normalised one-sided Fourier coefficients per wall, shape (2, Nx//2+1)."""
    g = np.asarray(g, dtype=float)
    return np.fft.rfft(g, axis=-1) / g.shape[-1]


def hs_norm_sq(g: np.ndarray, s: float) -> float:
    """sum over walls of sum_{k in Z} (1 + k^2)^s |g_k|^2."""
    g = np.asarray(g, dtype=float)
    nx = g.shape[-1]
    ghat = fourier_coefficients(g)
    k = np.arange(ghat.shape[-1])
    mult = np.full(k.size, 2.0)
    mult[0] = 1.0
    if nx % 2 == 0:
        mult[-1] = 1.0
    return float(np.sum(mult * (1.0 + k**2) ** s * np.abs(ghat) ** 2))


def hp_gamma_terms(a, b, dta, dtb, p: float) -> dict[str, float]:
    if p <= 2:
        raise SpaceError(f"p must exceed 2, got {p}")
    return {
        "a": np.sqrt(hs_norm_sq(a, 1.0 - 1.0 / p)),
        "dta": np.sqrt(hs_norm_sq(dta, 0.5)),
        "b_neg": np.sqrt(hs_norm_sq(b, -1.0 / p)),
        "b": np.sqrt(hs_norm_sq(b, 0.0)),
        "dtb": np.sqrt(hs_norm_sq(dtb, -0.5)),
    }


def hp_gamma_norm(a, b, dta, dtb, p: float = 3.0) -> float:
    """Boundary-data norm ||(a, b)||_{H_p(Gamma)} via Hilbert-scale multipliers."""
    return float(sum(hp_gamma_terms(a, b, dta, dtb, p).values()))
