"""Galerkin SDE system for the stochastic Allen-Cahn / Navier-Stokes model.

Unknowns are the velocity coefficients ``beta`` (homogeneous part
``u = sum beta_i w_i``) and phase coefficients ``chi`` (``phi = sum chi_i psi_i``);
the physical velocity is ``v = u + a`` with ``a`` the Stokes lifting of the
boundary control.  Time stepping is semi-implicit Euler-Maruyama: the slip
Stokes and A_theta parts are implicit, everything else (convection,
capillary force, potential, lifting terms, boundary forcing and the Ito
noise increment) is explicit.

Paths are integrated in batches: state arrays carry a leading path axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .domain import TAU_X
from .energy import weight_G
from .lifting import LiftingField
from .noise import NoiseModel, path_generator, wiener_path
from .phasefield import F as potential_F
from .phasefield import PotentialSpec, f_theta
from .spaces import (GalerkinBasis, ScalarField, VectorField, hp_gamma_norm, strain)


class StepFailure(RuntimeError):
    """Non-finite coefficients; carries the failure time and last finite state."""

    def __init__(self, t, beta, chi, path=None):
        self.t = float(t)
        self.beta = beta
        self.chi = chi
        self.path = path
        where = "" if path is None else f" on path {path}"
        super().__init__(f"non-finite state at t={self.t:.6g}{where}")


@dataclass(frozen=True)
class Gains:
    """Multipliers on the nonlinear terms (1 = full model, 0 = dropped)."""

    convection: float = 1.0
    capillary: float = 1.0
    phase_convection: float = 1.0
    potential: float = 1.0

    @classmethod
    def linear(cls):
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass
class GalerkinState:
    t: float
    beta: np.ndarray
    chi: np.ndarray

    def check(self, basis: GalerkinBasis):
        if self.beta.shape[-1] != basis.nu or self.chi.shape[-1] != basis.nphi:
            raise ValueError("coefficient count does not match the basis")


# ---------------------------------------------------------------------------
# Trilinear / coupling forms on fields


def convect(v: VectorField, w: VectorField, z: VectorField) -> float:
    """b(v, w, z) = int (v . grad) w . z."""
    g = v.geom
    gw = w.grad()
    adv = np.einsum("bxy,abxy->axy", v.values, gw)
    return float(g.integrate((adv * z.values).sum(axis=0)))


def capillary(mu: ScalarField, phi: ScalarField, w: VectorField) -> float:
    """(mu grad phi, w)."""
    g = phi.geom
    return float(g.integrate(mu.values * (phi.grad() * w.values).sum(axis=0)))


def boundary_forcing(b, basis: GalerkinBasis) -> np.ndarray:
    """int_Gamma b (w_i . tau) for every velocity mode of the basis."""
    g = basis.geom
    b = np.asarray(b, dtype=float)
    if b.shape != (2, g.Nx):
        raise ValueError(f"b must have shape (2, {g.Nx})")
    tr = g.trace(basis.vel[:, 0]) * TAU_X[None, :, None]  # (nu, 2, Nx)
    return np.einsum("iwx,wx,x->i", tr, b, g.wall_weights)


# ---------------------------------------------------------------------------
# System


@dataclass
class EnergyTrace:
    """Per-step energy diagnostics; arrays shaped (M, nt) for M paths."""

    t: np.ndarray
    E: np.ndarray
    E_tilde: np.ndarray
    Y: np.ndarray
    V: np.ndarray
    mu_sq: np.ndarray
    Lambda: np.ndarray
    B: np.ndarray
    f_tilde: np.ndarray
    G: np.ndarray
    residual: np.ndarray
    u_sq: np.ndarray
    u_slip: np.ndarray
    grad_phi_sq: np.ndarray
    a_phi_sq: np.ndarray
    grad_phi_l4_4: np.ndarray
    control_sq: np.ndarray

    COLUMNS = ("t", "E", "E_tilde", "Y", "V", "mu_sq", "Lambda", "B", "f_tilde", "G",
               "residual", "u_sq", "u_slip", "grad_phi_sq", "a_phi_sq", "grad_phi_l4_4",
               "control_sq")

    def path(self, i: int) -> "EnergyTrace":
        kw = {}
        for c in self.COLUMNS:
            arr = getattr(self, c)
            kw[c] = arr if c == "t" else arr[i]
        return EnergyTrace(**kw)


@dataclass
class Trajectory:
    """One sample path: time grid, coefficient blocks, chemical potential and energy trace."""

    basis: GalerkinBasis = field(repr=False)
    t: np.ndarray
    beta: np.ndarray
    chi: np.ndarray
    mu: np.ndarray
    trace: EnergyTrace
    lift: LiftingField | None = field(default=None, repr=False)

    def state(self, j: int) -> GalerkinState:
        return GalerkinState(float(self.t[j]), self.beta[j], self.chi[j])

    def velocity(self, j: int, include_lift: bool = True) -> VectorField:
        vals = np.einsum("i,i...->...", self.beta[j], self.basis.vel)
        if include_lift and self.lift is not None:
            vals = vals + self.lift.at(self.t[j]).values
        return VectorField(vals, self.basis.geom)

    def phase(self, j: int) -> ScalarField:
        return self.basis.phase(self.chi[j])


@dataclass
class Ensemble:
    """M paths on a shared time grid; failed paths are kept and reported."""

    basis: GalerkinBasis = field(repr=False)
    t: np.ndarray
    beta: np.ndarray  # (M, nt, nu)
    chi: np.ndarray  # (M, nt, nphi)
    mu: np.ndarray  # (M, nt, nphi)
    trace: EnergyTrace
    failures: dict = field(default_factory=dict)
    lift: LiftingField | None = field(default=None, repr=False)
    seeds: tuple = ()

    @property
    def M(self) -> int:
        return self.beta.shape[0]

    def ok_paths(self) -> np.ndarray:
        return np.array([i for i in range(self.M) if i not in self.failures], dtype=int)

    def path(self, i: int) -> Trajectory:
        return Trajectory(self.basis, self.t, self.beta[i], self.chi[i], self.mu[i],
                          self.trace.path(i), self.lift)

    def __len__(self):
        return self.M


class GalerkinSystem:
    """Precomputed operators of the n-mode Galerkin system.

    Parameters
    ----------
    basis : GalerkinBasis
    spec : PotentialSpec
    noise : NoiseModel or None
    gains : Gains
        Multipliers for dropping nonlinear terms.
    C0 : float
        Constant in the energy weight G.
    p : float
        Integrability index of the boundary-data norm.
    """

    def __init__(self, basis: GalerkinBasis, spec: PotentialSpec = PotentialSpec(),
                 noise: NoiseModel | None = None, gains: Gains = Gains(), C0: float = 1.0,
                 p: float = 3.0):
        if abs(basis.theta - spec.theta) > 1e-14:
            raise ValueError("basis and potential use different theta")
        self.basis, self.spec, self.noise, self.gains = basis, spec, noise, gains
        self.C0, self.p = float(C0), float(p)
        g = basis.geom
        self.geom = g
        nq = g.Nx * g.Ny
        self.w = g.weights.ravel()
        self.Wv = basis.vel.reshape(basis.nu, 2, nq)
        self.Wg = basis.vel_grad.reshape(basis.nu, 2, 2, nq)
        self.Ws = strain(np.moveaxis(self.Wg, 0, -1))  # (2, 2, nq, nu)
        self.P = basis.phi.reshape(basis.nphi, nq)
        self.Pg = basis.phi_grad.reshape(basis.nphi, 2, nq)
        self.lam_u = basis.lam_u
        self.lam_phi = basis.lam_phi
        self.Mphi = basis.phi_mass
        self.M_fac = linalg.cho_factor(self.Mphi) if basis.nphi else None
        self.vel_tau = g.trace(basis.vel[:, 0]) * TAU_X[None, :, None]  # (nu, 2, Nx)
        self.vel_wall = g.trace(basis.vel)  # (nu, 2comp, 2wall, Nx)
        self._phase_ops = {}
        if noise is not None and noise.m:
            if (noise.geom.Nx, noise.geom.Ny) != (g.Nx, g.Ny):
                raise ValueError("noise model lives on a different grid")
            e = noise.modes.reshape(len(noise.modes), 2, nq)
            self.E = np.einsum("jaq,iaq,q->ji", e, self.Wv, self.w)
            self.Ew = e * self.w
            self.H = np.einsum("kaq,iaq,q->ki", noise.h.reshape(noise.m, 2, nq), self.Wv, self.w)
        else:
            self.E = self.Ew = self.H = None

    # -- helpers ------------------------------------------------------------

    def phase_ops(self, dt: float):
        key = float(dt)
        if key not in self._phase_ops:
            n = self.basis.nphi
            inv = linalg.inv(self.Mphi + dt * np.eye(n)) if n else np.zeros((0, 0))
            self._phase_ops[key] = (inv @ self.Mphi, inv)
        return self._phase_ops[key]

    def lift_terms(self, lift: LiftingField | None, t: float) -> dict:
        """Deterministic lifting data at time t projected on the basis."""
        g, nu = self.geom, self.basis.nu
        nq = g.Nx * g.Ny
        if lift is None:
            z = np.zeros(nu)
            return {"a": None, "ga": None, "drive": z, "ae": None, "Lambda": 1.0,
                    "a_l2sq": 0.0, "a_slipsq": 0.0, "control_sq": 0.0}
        s = lift.at(t)
        a = s.values.reshape(2, nq)
        ga = s.grad.reshape(2, 2, nq)
        da = strain(ga)
        slip_a = 2.0 * np.einsum("abq,abqi,q->i", da, self.Ws, self.w)
        wall_a = g.trace(s.values)  # (2comp, 2wall, Nx)
        slip_a += self.basis.alpha * np.einsum("cwx,icwx,x->i", wall_a, self.vel_wall, g.wall_weights)
        dta = np.einsum("aq,iaq,q->i", s.dt_values.reshape(2, nq), self.Wv, self.w)
        bf = np.einsum("iwx,wx,x->i", self.vel_tau, s.b, g.wall_weights)
        hp = hp_gamma_norm(s.a, s.b, s.dta, s.dtb, self.p)
        a_l2sq = float(np.sum(a * a * self.w))
        a_slipsq = float(2.0 * np.einsum("abq,abq,q->", da, da, self.w)
                         + self.basis.alpha * g.boundary_integral((wall_a**2).sum(axis=0)))
        ae = self.Ew.reshape(len(self.Ew), -1) @ a.ravel() if self.E is not None else None
        return {"a": a, "ga": ga, "drive": -slip_a - dta + bf, "ae": ae,
                "Lambda": hp * hp + 1.0, "a_l2sq": a_l2sq, "a_slipsq": a_slipsq,
                "control_sq": hp * hp}

    def explicit(self, beta, chi, lt: dict) -> dict:
        """Explicit right-hand sides and energy pieces for a batch of states."""
        gn, w = self.gains, self.w
        u = np.einsum("mi,iaq->maq", beta, self.Wv)
        gu = np.einsum("mi,iabq->mabq", beta, self.Wg)
        phi = chi @ self.P
        gphi = np.einsum("mi,iaq->maq", chi, self.Pg)
        if lt["a"] is not None:
            v, gv = u + lt["a"], gu + lt["ga"]
        else:
            v, gv = u, gu
        conv = np.einsum("mbq,mabq->maq", v, gv)
        fth = f_theta(phi, self.spec) * gn.potential
        Fi = (fth * w) @ self.P.T
        rhs_mu = chi + Fi
        m = linalg.cho_solve(self.M_fac, rhs_mu.T, check_finite=False).T if self.M_fac is not None else rhs_mu
        mu = m @ self.P
        cap = mu[:, None, :] * gphi
        C = (np.einsum("maq,maq->mq", v, gphi) * w) @ self.P.T
        proj = np.einsum("maq,iaq,q->mi", -gn.convection * conv + gn.capillary * cap, self.Wv, w)
        vel_rhs = proj + lt["drive"][None, :]
        phase_rhs = -Fi - gn.phase_convection * C
        out = {"vel_rhs": vel_rhs, "phase_rhs": phase_rhs, "m": m, "phi": phi,
               "gphi": gphi, "C": C, "rhs_mu": rhs_mu}
        if self.E is not None:
            ve = beta @ self.E.T
            if lt["ae"] is not None:
                ve = ve + lt["ae"][None, :]
            G = np.empty((beta.shape[0], self.noise.m, self.basis.nu))
            for k in range(self.noise.m):
                mk = self.noise.cutoff[k]
                G[:, k] = self.noise.sigma[k] * (ve[:, :mk] @ self.E[:mk]) + self.H[k][None, :]
            out["G"] = G
        return out

    def diagnostics(self, beta, chi, ex: dict, lt: dict) -> dict:
        w = self.w
        u_sq = (beta**2).sum(axis=1)
        u_slip = (self.lam_u * beta**2).sum(axis=1)
        chi_sq = (chi**2).sum(axis=1)
        mchi = chi @ self.Mphi
        phi_l2 = (mchi * chi).sum(axis=1)
        grad_sq = chi_sq - self.basis.theta * phi_l2
        intF = (potential_F(ex["phi"]) * w).sum(axis=1)
        a_phi_sq = (self.lam_phi * chi**2).sum(axis=1)
        mu_sq = (ex["m"] * ex["rhs_mu"]).sum(axis=1)
        gl4 = (((ex["gphi"] ** 2).sum(axis=1)) ** 2 * w).sum(axis=1)
        # closing form of the energy: reduces to |u|^2 + |grad phi|^2 + 2 int F
        # when theta equals the potential shift
        e_tilde = u_sq + chi_sq - self.spec.shift * phi_l2 + 2.0 * intF
        source = 2.0 * (beta * ex["vel_rhs"]).sum(axis=1) - 2.0 * (ex["C"] * ex["m"]).sum(axis=1) \
            * self.gains.phase_convection
        if "G" in ex:
            source = source + (ex["G"] ** 2).sum(axis=(1, 2))
        return {"u_sq": u_sq, "u_slip": u_slip, "grad_phi_sq": grad_sq, "a_phi_sq": a_phi_sq,
                "mu_sq": mu_sq, "E": u_sq + grad_sq + intF, "E_tilde": e_tilde,
                "Y": u_sq + grad_sq, "V": u_slip + a_phi_sq, "grad_phi_l4_4": gl4,
                "dissipation": 2.0 * (u_slip + mu_sq), "source": source}

    # -- integration ----------------------------------------------------------

    def step(self, beta, chi, dt: float, dw, lt: dict, ex: dict | None = None):
        """One semi-implicit Euler-Maruyama step for a batch; returns (beta, chi)."""
        if ex is None:
            ex = self.explicit(beta, chi, lt)
        num = beta + dt * ex["vel_rhs"]
        if "G" in ex and dw is not None and dw.shape[-1]:
            num = num + np.einsum("mk,mki->mi", dw, ex["G"])
        beta1 = num / (1.0 + dt * self.lam_u)[None, :]
        kmat, kinv = self.phase_ops(dt)
        chi1 = chi @ kmat.T + dt * ex["phase_rhs"] @ kinv.T
        return beta1, chi1

    def run(self, beta0, chi0, T: float, dt: float, lift: LiftingField | None = None,
            dW: np.ndarray | None = None, raise_on_failure: bool = False) -> Ensemble:
        """Integrate a batch of paths on [0, T].

        ``dW`` holds Wiener increments shaped (M, nsteps, m); it may be None
        when there is no noise.
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        if T < 0:
            raise ValueError("T must be nonnegative")
        nsteps = int(round(T / dt))
        if abs(nsteps * dt - T) > 1e-9 * max(T, dt):
            raise ValueError("T must be an integer multiple of dt")
        beta = np.atleast_2d(np.asarray(beta0, dtype=float)).copy()
        chi = np.atleast_2d(np.asarray(chi0, dtype=float)).copy()
        M = beta.shape[0]
        m = self.noise.m if self.noise is not None else 0
        if m and dW is None:
            raise ValueError("noise model needs Wiener increments")
        if dW is not None and m:
            if dW.shape != (M, nsteps, m):
                raise ValueError(f"increments must have shape {(M, nsteps, m)}, got {dW.shape}")
        t = np.arange(nsteps + 1) * dt
        nu, nphi = self.basis.nu, self.basis.nphi
        B_ = np.full((M, nsteps + 1, nu), np.nan)
        X_ = np.full((M, nsteps + 1, nphi), np.nan)
        MU = np.full((M, nsteps + 1, nphi), np.nan)
        diag_keys = ("u_sq", "u_slip", "grad_phi_sq", "a_phi_sq", "mu_sq", "E", "E_tilde", "Y",
                     "V", "grad_phi_l4_4", "dissipation", "source")
        D = {k: np.full((M, nsteps + 1), np.nan) for k in diag_keys}
        mart = np.zeros((M, nsteps + 1))
        lam = np.zeros(nsteps + 1)
        asq = np.zeros(nsteps + 1)
        aslip = np.zeros(nsteps + 1)
        csq = np.zeros(nsteps + 1)
        failures = {}
        alive = np.ones(M, dtype=bool)
        for n in range(nsteps + 1):
            lt = self.lift_terms(lift, t[n])
            lam[n], asq[n], aslip[n], csq[n] = lt["Lambda"], lt["a_l2sq"], lt["a_slipsq"], lt["control_sq"]
            with np.errstate(all="ignore"):
                ex = self.explicit(beta, chi, lt)
                dg = self.diagnostics(beta, chi, ex, lt)
            finite = np.isfinite(beta).all(axis=1) & np.isfinite(chi).all(axis=1) \
                & np.isfinite(dg["E_tilde"])
            newly = alive & ~finite
            for i in np.flatnonzero(newly):
                failures[int(i)] = float(t[n])
                if raise_on_failure:
                    raise StepFailure(t[n], B_[i, n - 1] if n else beta[i], X_[i, n - 1] if n else chi[i], int(i))
            alive &= finite
            B_[alive, n] = beta[alive]
            X_[alive, n] = chi[alive]
            MU[alive, n] = ex["m"][alive]
            for k in diag_keys:
                D[k][alive, n] = dg[k][alive]
            if n == nsteps:
                break
            dw = dW[:, n, :] if (dW is not None and m) else None
            if dw is not None and "G" in ex:
                mart[:, n] = 2.0 * np.einsum("mk,mki,mi->m", dw, ex["G"], beta)
            with np.errstate(all="ignore"):
                beta, chi = self.step(beta, chi, dt, dw, lt, ex)
            beta[~alive] = 0.0
            chi[~alive] = 0.0
        # Ito balance: E~(t) - E~(0) + int dissipation - int source - martingale
        diss = D["dissipation"]
        diss_int = np.concatenate([np.zeros((M, 1)), np.cumsum(0.5 * dt * (diss[:, 1:] + diss[:, :-1]), axis=1)], axis=1)
        src_int = np.concatenate([np.zeros((M, 1)), np.cumsum(dt * D["source"][:, :-1], axis=1)], axis=1)
        mart_int = np.concatenate([np.zeros((M, 1)), np.cumsum(mart[:, :-1], axis=1)], axis=1)
        resid = D["E_tilde"] - D["E_tilde"][:, :1] + diss_int - src_int - mart_int
        ftil = asq * aslip + lam
        G = weight_G(t, ftil, self.C0)
        ones = np.ones((M, 1))
        trace = EnergyTrace(
            t=t, E=D["E"], E_tilde=D["E_tilde"], Y=D["Y"], V=D["V"], mu_sq=D["mu_sq"],
            Lambda=ones * lam, B=ones * (csq**2 + 1.0), f_tilde=ones * ftil, G=ones * G,
            residual=resid, u_sq=D["u_sq"], u_slip=D["u_slip"], grad_phi_sq=D["grad_phi_sq"],
            a_phi_sq=D["a_phi_sq"], grad_phi_l4_4=D["grad_phi_l4_4"], control_sq=ones * csq,
        )
        return Ensemble(self.basis, t, B_, X_, MU, trace, failures, lift)


# ---------------------------------------------------------------------------
# Convenience drivers


def stripe_initial(basis: GalerkinBasis, amplitude: float = 0.9, width: float = 0.5,
                   u0: VectorField | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of u0 (default 0) and a tanh stripe phase profile projected on the basis."""
    g = basis.geom
    prof = amplitude * np.tanh(np.cos(g.x) / width)
    phi0 = ScalarField(np.repeat(prof[None, :], g.Ny, axis=0), g, neumann=True)
    u0 = VectorField(np.zeros((2,) + g.shape), g, True) if u0 is None else u0
    return basis.project(u0, phi0)


def ensemble_increments(master_seed: int, M: int, nsteps: int, dt: float, m: int,
                        first_path: int = 0) -> np.ndarray:
    """Per-path Wiener increments from counter-based generators keyed by (seed, path)."""
    out = np.zeros((M, nsteps, m))
    for i in range(M):
        if m:
            out[i] = wiener_path(path_generator(master_seed, first_path + i), nsteps, dt, m)
    return out


def simulate_ensemble(system: GalerkinSystem, T: float, dt: float, M: int, seed: int,
                      initial=None, lift: LiftingField | None = None, dW=None) -> Ensemble:
    beta0, chi0 = stripe_initial(system.basis) if initial is None else initial
    nsteps = int(round(T / dt))
    m = system.noise.m if system.noise is not None else 0
    if dW is None and m:
        dW = ensemble_increments(seed, M, nsteps, dt, m)
    beta0 = np.broadcast_to(beta0, (M, system.basis.nu))
    chi0 = np.broadcast_to(chi0, (M, system.basis.nphi))
    ens = system.run(beta0, chi0, T, dt, lift, dW)
    ens.seeds = (int(seed),)
    return ens


def simulate_path(system: GalerkinSystem, T: float, dt: float, seed: int, initial=None,
                  lift: LiftingField | None = None, path_index: int = 0) -> Trajectory:
    """Single path; raises StepFailure on blow-up."""
    beta0, chi0 = stripe_initial(system.basis) if initial is None else initial
    nsteps = int(round(T / dt))
    m = system.noise.m if system.noise is not None else 0
    dW = ensemble_increments(seed, 1, nsteps, dt, m, first_path=path_index) if m else None
    ens = system.run(np.atleast_2d(beta0), np.atleast_2d(chi0), T, dt, lift, dW,
                     raise_on_failure=True)
    return ens.path(0)


def em_step(state: GalerkinState, system: GalerkinSystem, dt: float, increment=None,
            lift: LiftingField | None = None) -> GalerkinState:
    """Advance one state by one step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    state.check(system.basis)
    lt = system.lift_terms(lift, state.t)
    dw = None if increment is None else np.atleast_2d(increment.dw)
    with np.errstate(all="ignore"):
        b1, c1 = system.step(np.atleast_2d(state.beta), np.atleast_2d(state.chi), dt, dw, lt)
    if not (np.isfinite(b1).all() and np.isfinite(c1).all()):
        raise StepFailure(state.t + dt, state.beta, state.chi)
    return GalerkinState(state.t + dt, b1[0], c1[0])
