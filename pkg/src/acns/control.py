"""Boundary controls, the admissible family, the cost functional and its optimizer.

A control is a pair of wall data (a, b) given by Fourier coefficients per
wall whose time dependence is a cubic spline through a few knots.  The
normal data ``a`` carries no k = 0 mode, so the net boundary flux vanishes
at every time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import qmc

from .domain import ChannelGeometry, build_geometry
from .energy import mean_ci, trapz_cum
from .lifting import boundary_mode_samples
from .spaces import hp_gamma_norm, strain


class ControlError(ValueError):
    pass


class BoundaryControl:
    """Spline-in-time wall data.

    Parameters
    ----------
    knots : array (nk,)
        Knot times in [0, T].
    a_knots : array (nk, 2, 2*kc)
        Coefficients of a per knot and wall, ordered cos1, sin1, ..., sin kc.
    b_knots : array (nk, 2, 2*kc + 1)
        Coefficients of b, led by the constant mode.
    T : float
    """

    def __init__(self, knots, a_knots, b_knots, T: float):
        self.knots = np.asarray(knots, dtype=float)
        self.a_knots = np.asarray(a_knots, dtype=float)
        self.b_knots = np.asarray(b_knots, dtype=float)
        self.T = float(T)
        nk = self.knots.size
        if self.a_knots.shape[:2] != (nk, 2) or self.b_knots.shape[:2] != (nk, 2):
            raise ControlError("knot arrays must be shaped (n_knots, 2, modes)")
        self.kc = self.a_knots.shape[2] // 2
        if self.a_knots.shape[2] != 2 * self.kc or self.b_knots.shape[2] != 2 * self.kc + 1:
            raise ControlError("a needs 2*kc and b needs 2*kc + 1 coefficients per wall")
        flat = np.concatenate([self.a_knots.reshape(nk, -1), self.b_knots.reshape(nk, -1)], axis=1)
        self._na = self.a_knots[0].size
        if nk == 1:
            self._spline = None
            self._const = flat[0]
        else:
            self._spline = CubicSpline(self.knots, flat, axis=0, bc_type="natural")
            self._dspline = self._spline.derivative()

    @classmethod
    def zero(cls, T: float, kc: int = 0) -> "BoundaryControl":
        return cls([0.0], np.zeros((1, 2, 2 * kc)), np.zeros((1, 2, 2 * kc + 1)), T)

    @classmethod
    def constant(cls, T: float, a_coef, b_coef) -> "BoundaryControl":
        a_coef, b_coef = np.asarray(a_coef, dtype=float), np.asarray(b_coef, dtype=float)
        return cls([0.0], a_coef[None], b_coef[None], T)

    def _split(self, flat):
        return flat[: self._na].reshape(2, -1), flat[self._na:].reshape(2, -1)

    def coeffs(self, t: float):
        t = min(max(float(t), self.knots[0]), self.knots[-1]) if self._spline is not None else t
        flat = self._const if self._spline is None else self._spline(t)
        return self._split(np.asarray(flat))

    def dcoeffs(self, t: float):
        if self._spline is None:
            return self._split(np.zeros_like(self._const))
        t = min(max(float(t), self.knots[0]), self.knots[-1])
        return self._split(np.asarray(self._dspline(t)))

    def samples(self, geom: ChannelGeometry, t: float):
        """(a, b, d_t a, d_t b) as wall samples shaped (2, Nx)."""
        am, bm = boundary_mode_samples(geom, self.kc)
        ca, cb = self.coeffs(t)
        da, db = self.dcoeffs(t)
        return ca @ am, cb @ bm, da @ am, db @ bm

    def is_zero(self) -> bool:
        return not (np.any(self.a_knots) or np.any(self.b_knots))

    def norm_geometry(self) -> ChannelGeometry:
        nx = max(16, 4 * self.kc + 4)
        return build_geometry(nx + nx % 2, 4)

    def hp_norm(self, t: float, p: float = 3.0) -> float:
        return hp_gamma_norm(*self.samples(self.norm_geometry(), t), p)

    def params(self) -> np.ndarray:
        return np.concatenate([self.a_knots.reshape(len(self.knots), -1),
                               self.b_knots.reshape(len(self.knots), -1)], axis=1).ravel()

    def to_dict(self) -> dict:
        return {"knots": self.knots.tolist(), "a": self.a_knots.tolist(),
                "b": self.b_knots.tolist(), "T": self.T}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundaryControl":
        return cls(d["knots"], d["a"], d["b"], d["T"])


def _quad_grid(T: float, nk: int, per_interval: int = 64) -> np.ndarray:
    return np.linspace(0.0, T, max(nk - 1, 1) * per_interval + 1)


def admissibility_value(ctrl: BoundaryControl, C0: float = 1.0, p: float = 3.0) -> float:
    """Exponent 4 C0 int_0^T ||(a, b)||^2 ds (Simpson quadrature)."""
    from scipy.integrate import simpson

    if ctrl.T == 0:
        return 0.0
    ts = _quad_grid(ctrl.T, len(ctrl.knots))
    geom = ctrl.norm_geometry()
    vals = np.array([hp_gamma_norm(*ctrl.samples(geom, t), p) ** 2 for t in ts])
    return float(4.0 * C0 * simpson(vals, x=ts))


def admissibility_check(ctrl: BoundaryControl, C0: float = 1.0, delta: float = 10.0,
                        p: float = 3.0) -> dict:
    """exp(4 C0 int ||(a, b)||^2) < delta for a deterministic control."""
    expo = admissibility_value(ctrl, C0, p)
    value = float(np.exp(expo))
    return {"value": value, "exponent": expo, "delta": delta, "pass": bool(value < delta),
            "margin": float(np.log(delta) - expo)}


@dataclass
class AdmissibleFamily:
    """Coefficient box of spline controls.

    ``lower``/``upper`` have the parameter layout of ``BoundaryControl.params``:
    per knot, the a-coefficients (2 walls x 2 kc) then the b-coefficients
    (2 walls x (2 kc + 1)).
    """

    kc: int
    n_knots: int
    T: float
    lower: np.ndarray
    upper: np.ndarray
    C0: float = 1.0
    delta: float = 10.0
    p: float = 3.0

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise ControlError(f"box bounds must have length {self.dim}")
        if np.any(self.lower > self.upper):
            raise ControlError("lower bound exceeds upper bound")
        if self.n_knots < 1 or self.kc < 0 or self.T < 0:
            raise ControlError("invalid family size")

    @property
    def per_knot(self) -> int:
        return 2 * 2 * self.kc + 2 * (2 * self.kc + 1)

    @property
    def dim(self) -> int:
        return self.n_knots * self.per_knot

    @classmethod
    def symmetric(cls, kc: int, n_knots: int, T: float, bound_a: float, bound_b: float, **kw):
        na, nb = 4 * kc, 2 * (2 * kc + 1)
        one = np.concatenate([np.full(na, bound_a), np.full(nb, bound_b)])
        up = np.tile(one, n_knots)
        return cls(kc, n_knots, T, -up, up, **kw)

    def knots(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_knots) if self.n_knots > 1 else np.zeros(1)

    def contains(self, params, tol: float = 1e-12) -> bool:
        x = np.asarray(params, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def to_unit(self, params):
        span = np.where(self.upper > self.lower, self.upper - self.lower, 1.0)
        return (np.asarray(params) - self.lower) / span

    def from_unit(self, z):
        return self.lower + np.clip(z, 0.0, 1.0) * (self.upper - self.lower)

    def worst_case_exponent(self) -> float:
        """Upper bound of the admissibility exponent over the whole box.

        Each seminorm in ||(a, b)|| is bounded by the triangle inequality over
        modes, with the spline coefficient bounded through the absolute
        cardinal functions of the knot interpolation.
        """
        from scipy.integrate import simpson

        if self.T == 0:
            return 0.0
        R = np.maximum(np.abs(self.lower), np.abs(self.upper)).reshape(self.n_knots, self.per_knot)
        ts = _quad_grid(self.T, self.n_knots)
        nk = self.n_knots
        if nk == 1:
            card, dcard = np.ones((ts.size, 1)), np.zeros((ts.size, 1))
        else:
            sp = CubicSpline(self.knots(), np.eye(nk), axis=0, bc_type="natural")
            card, dcard = np.abs(sp(ts)), np.abs(sp.derivative()(ts))
        cbound = card @ R  # (nt, per_knot)
        dbound = dcard @ R
        geom = build_geometry(max(16, 4 * self.kc + 4), 4)
        am, bm = boundary_mode_samples(geom, self.kc)
        z = np.zeros((2, geom.Nx))
        na = 4 * self.kc
        # seminorm of each unit mode in each of the five terms
        unit = []
        for j in range(self.per_knot):
            wall_data = z.copy()
            if j < na:
                wall, mode = divmod(j, 2 * self.kc)
                wall_data[wall] = am[mode]
                terms_val = _terms(wall_data, z, z, z, self.p)
                terms_dt = _terms(z, z, wall_data, z, self.p)
            else:
                wall, mode = divmod(j - na, 2 * self.kc + 1)
                wall_data[wall] = bm[mode]
                terms_val = _terms(z, wall_data, z, z, self.p)
                terms_dt = _terms(z, z, z, wall_data, self.p)
            unit.append((terms_val, terms_dt))
        uv = np.array([u[0] for u in unit])  # (per_knot, 5)
        ud = np.array([u[1] for u in unit])
        bound = (cbound @ uv + dbound @ ud).sum(axis=1)
        return float(4.0 * self.C0 * simpson(bound**2, x=ts))

    def certify(self) -> dict:
        expo = self.worst_case_exponent()
        return {"exponent_bound": expo, "value_bound": float(np.exp(expo)),
                "certified": bool(np.exp(expo) < self.delta)}

    def to_dict(self) -> dict:
        return {"kc": self.kc, "n_knots": self.n_knots, "T": self.T,
                "lower": self.lower.tolist(), "upper": self.upper.tolist(),
                "C0": self.C0, "delta": self.delta, "p": self.p}


def _terms(a, b, dta, dtb, p):
    from .spaces import hp_gamma_terms

    t = hp_gamma_terms(a, b, dta, dtb, p)
    return np.array([t["a"], t["dta"], t["b_neg"], t["b"], t["dtb"]])


def synthesize_control(params, family: AdmissibleFamily) -> BoundaryControl:
    """Control from a flat parameter vector or a {"a": ..., "b": ...} table.

    In table form ``a`` may include a leading k = 0 entry per wall; it must
    be zero because the normal data has to carry no net flux.
    """
    nk, kc = family.n_knots, family.kc
    if isinstance(params, dict):
        a = np.asarray(params.get("a", np.zeros((nk, 2, 2 * kc))), dtype=float).reshape(nk, 2, -1)
        b = np.asarray(params.get("b", np.zeros((nk, 2, 2 * kc + 1))), dtype=float).reshape(nk, 2, -1)
        if a.shape[2] == 2 * kc + 1:
            if np.any(a[:, :, 0] != 0):
                raise ControlError("nonzero mean requested for the normal data a")
            a = a[:, :, 1:]
        flat = np.concatenate([a.reshape(nk, -1), b.reshape(nk, -1)], axis=1).ravel()
    else:
        flat = np.asarray(params, dtype=float).ravel()
    if flat.size != family.dim:
        raise ControlError(f"expected {family.dim} parameters, got {flat.size}")
    if not family.contains(flat):
        raise ControlError("parameters outside the admissible box")
    rows = flat.reshape(nk, family.per_knot)
    na = 4 * kc
    return BoundaryControl(family.knots(), rows[:, :na].reshape(nk, 2, 2 * kc),
                           rows[:, na:].reshape(nk, 2, 2 * kc + 1), family.T)


# ---------------------------------------------------------------------------
# Cost functional


@dataclass
class Targets:
    """Desired velocity and phase fields on a time grid."""

    t: np.ndarray
    v: np.ndarray  # (nt, 2, Ny, Nx)
    phi: np.ndarray  # (nt, Ny, Nx)
    v_grad: np.ndarray | None = None  # (nt, 2, 2, Ny, Nx)

    @classmethod
    def zero(cls, t, geom):
        nt = len(t)
        return cls(np.asarray(t), np.zeros((nt, 2) + geom.shape), np.zeros((nt,) + geom.shape),
                   np.zeros((nt, 2, 2) + geom.shape))


def ensemble_fields(ens):
    """Velocity v = u + a (values and gradients) and phase on the grid, (M, nt, ...)."""
    b = ens.basis
    beta = np.nan_to_num(ens.beta)
    v = np.einsum("mti,i...->mt...", beta, b.vel)
    gv = np.einsum("mti,i...->mt...", beta, b.vel_grad)
    if ens.lift is not None:
        for j, t in enumerate(ens.t):
            s = ens.lift.at(t)
            v[:, j] += s.values
            gv[:, j] += s.grad
    phi = np.einsum("mti,i...->mt...", np.nan_to_num(ens.chi), b.phi)
    gphi = np.einsum("mti,i...->mt...", np.nan_to_num(ens.chi), b.phi_grad)
    return v, gv, phi, gphi


def targets_from_ensemble(ens) -> Targets:
    """Ensemble-mean fields as tracking targets."""
    v, gv, phi, _ = ensemble_fields(ens)
    ok = ens.ok_paths()
    return Targets(ens.t.copy(), v[ok].mean(axis=0), phi[ok].mean(axis=0), gv[ok].mean(axis=0))


def targets_from_csv(paths, basis, lift=None) -> Targets:
    """Mean fields of trajectory CSV files written by the simulate command."""
    from .io import read_trajectory_csv

    vs, gvs, ps = [], [], []
    t = None
    for pth in paths:
        tt, beta, chi = read_trajectory_csv(pth, basis)
        if t is not None and not np.array_equal(t, tt):
            raise ControlError("target CSV files use different time grids")
        t = tt
        v = np.einsum("ti,i...->t...", beta, basis.vel)
        gv = np.einsum("ti,i...->t...", beta, basis.vel_grad)
        if lift is not None:
            for j, tj in enumerate(t):
                s = lift.at(tj)
                v[j] += s.values
                gv[j] += s.grad
        vs.append(v)
        gvs.append(gv)
        ps.append(np.einsum("ti,i...->t...", chi, basis.phi))
    return Targets(t, np.mean(vs, axis=0), np.mean(ps, axis=0), np.mean(gvs, axis=0))


@dataclass
class CostReport:
    J: float
    tracking: float
    penalty: float
    samples: np.ndarray = field(repr=False)
    se: float = 0.0
    ci: tuple = (0.0, 0.0)
    variant: str = "graded"

    def to_dict(self) -> dict:
        return {"J": self.J, "tracking": self.tracking, "penalty": self.penalty, "se": self.se,
                "ci": list(self.ci), "variant": self.variant, "paths": int(len(self.samples))}


def control_penalty(ctrl: BoundaryControl | None, t, geom, lam1: float, lam2: float) -> float:
    """int_0^T int_Gamma (1/2)(lam1 |a|^2 + lam2 |b|^2), trapezoid in time."""
    if ctrl is None or len(t) < 2:
        return 0.0
    vals = []
    for tj in t:
        a, b, _, _ = ctrl.samples(geom, tj)
        vals.append(0.5 * (lam1 * geom.boundary_integral(a * a) + lam2 * geom.boundary_integral(b * b)))
    return float(trapz_cum(np.array(vals), np.asarray(t))[-1])


def cost_J(ens, targets: Targets, ctrl: BoundaryControl | None, lam1: float = 0.0,
           lam2: float = 0.0, variant: str = "graded") -> CostReport:
    """Monte-Carlo estimate of the tracking-plus-penalty cost.

    ``variant="graded"`` tracks ||v - v_d||^2 (slip norm) + ||phi - phi_d||_1^2;
    ``variant="l2"`` tracks |v - v_d|^2 + |phi - phi_d|^2.
    """
    if lam1 < 0 or lam2 < 0:
        raise ControlError("penalty weights must be nonnegative")
    if variant not in ("graded", "l2"):
        raise ControlError(f"unknown variant {variant!r}")
    if len(targets.t) != len(ens.t) or not np.allclose(targets.t, ens.t, rtol=0, atol=1e-12):
        raise ControlError("targets are not defined on the trajectory time grid")
    b = ens.basis
    g = b.geom
    if targets.v.shape[-2:] != g.shape:
        raise ControlError("targets live on a different spatial grid")
    v, gv, phi, gphi = ensemble_fields(ens)
    dv = v - targets.v[None]
    dphi = phi - targets.phi[None]
    w = g.weights
    if variant == "l2":
        dens = np.einsum("mtaxy,xy->mt", dv**2, w) + np.einsum("mtxy,xy->mt", dphi**2, w)
    else:
        tg = targets.v_grad if targets.v_grad is not None else np.stack(
            [np.stack([np.stack([g.dx(c), g.dy(c)]) for c in vt]) for vt in targets.v])
        dgv = gv - tg[None]
        ds = strain(np.moveaxis(dgv, (2, 3), (0, 1)))
        bulk = 2.0 * np.einsum("abmtxy,xy->mt", ds**2, w)
        tr = np.stack([dv[..., 0, :], dv[..., -1, :]], axis=-2)  # (M, nt, 2, 2, Nx)
        wall = np.einsum("mtcwx,x->mt", tr**2, g.wall_weights)
        gdphi = np.stack([g.dx(dphi), g.dy(dphi)], axis=2)
        ph1 = np.einsum("mtaxy,xy->mt", gdphi**2, w) + b.theta * np.einsum("mtxy,xy->mt", dphi**2, w)
        dens = bulk + b.alpha * wall + ph1
    per_path = 0.5 * trapz_cum(dens, ens.t)[:, -1] if len(ens.t) > 1 else np.zeros(ens.M)
    per_path = per_path[ens.ok_paths()]
    pen = control_penalty(ctrl, ens.t, g, lam1, lam2)
    samples = per_path + pen
    st = mean_ci(samples)
    return CostReport(J=st["mean"], tracking=float(per_path.mean()), penalty=pen,
                      samples=samples, se=st["se"], ci=st["ci"], variant=variant)


# ---------------------------------------------------------------------------
# Optimizer


@dataclass
class SimSetup:
    """Everything needed to evaluate J for a candidate control under common random numbers."""

    system: object
    T: float
    dt: float
    M: int
    seed: int
    initial: tuple | None = None
    lam1: float = 0.0
    lam2: float = 0.0
    variant: str = "graded"
    dW: np.ndarray | None = field(default=None, repr=False)

    def increments(self):
        if self.dW is None:
            from .dynamics import ensemble_increments

            m = self.system.noise.m if self.system.noise is not None else 0
            self.dW = ensemble_increments(self.seed, self.M, int(round(self.T / self.dt)), self.dt, m) if m else None
        return self.dW


def evaluate_J(params, family: AdmissibleFamily, targets: Targets, setup: SimSetup):
    """Simulate the ensemble under a candidate control and return (CostReport, control)."""
    from .dynamics import simulate_ensemble
    from .lifting import LiftingField

    ctrl = synthesize_control(params, family)
    lift = None if ctrl.is_zero() else LiftingField(setup.system.geom, ctrl, setup.system.basis.alpha)
    ens = simulate_ensemble(setup.system, setup.T, setup.dt, setup.M, setup.seed, setup.initial,
                            lift, setup.increments())
    return cost_J(ens, targets, ctrl, setup.lam1, setup.lam2, setup.variant), ctrl


@dataclass
class SearchState:
    x: list | None = None
    fx: float = float("inf")
    step: float = 0.25
    coord: int = 0
    direction: int = 1
    improved: bool = False
    seed_index: int = 0


def _save_checkpoint(path, record, state: SearchState, best, meta):
    data = {"record": record, "state": state.__dict__, "best": best, "meta": meta}
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(data, indent=1))
    tmp.replace(path)


def optimize(family: AdmissibleFamily, targets: Targets, setup: SimSetup, budget: int,
             n_restarts: int = 8, seed: int = 0, step0: float = 0.25, step_min: float = 1e-3,
             checkpoint=None, resume=None, evaluator=None) -> dict:
    """Coordinate pattern search over the coefficient box with Latin-hypercube restarts.

    Every candidate is evaluated with the same Brownian increments. The
    record lists all evaluations with the running best; a JSON checkpoint
    is written after each evaluation when ``checkpoint`` is given, and a
    run can continue from one via ``resume``.
    """
    if budget < 1:
        raise ControlError("budget must be at least 1")
    evaluator = evaluator or (lambda p: evaluate_J(p, family, targets, setup)[0].J)
    dim = family.dim
    free = np.flatnonzero(family.upper > family.lower)
    lhs = qmc.LatinHypercube(d=max(dim, 1), seed=seed).random(n_restarts)
    seeds = np.vstack([np.full((1, dim), 0.5), lhs[:, :dim]])
    record: list[dict] = []
    state = SearchState(step=step0)
    best = {"params": None, "J": float("inf"), "index": -1}
    if resume is not None:
        data = json.loads(Path(resume).read_text())
        record = data["record"]
        state = SearchState(**data["state"])
        best = data["best"]
    meta = {"family": family.to_dict(), "seed": seed, "n_restarts": n_restarts, "step0": step0}
    seen = {tuple(np.round(family.to_unit(np.asarray(r["params"])), 12)): r["J"] for r in record}

    def evaluate(z):
        key = tuple(np.round(np.asarray(z, dtype=float), 12))
        if key in seen:  # revisits are free
            return seen[key]
        params = family.from_unit(np.asarray(z))
        ctrl = synthesize_control(params, family)
        adm = admissibility_check(ctrl, family.C0, family.delta, family.p)
        J = float(evaluator(params)) if adm["pass"] else float("inf")
        k = len(record)
        if J < best["J"]:  # ties keep the earlier index
            best.update(params=params.tolist(), J=J, index=k)
        seen[key] = J
        record.append({"k": k, "params": params.tolist(), "J": J, "best_J": best["J"],
                       "admissible": adm["pass"], "margin": adm["margin"]})
        if checkpoint is not None:
            _save_checkpoint(checkpoint, record, state, best, meta)
        return J

    def remaining():
        return budget - len(record)

    while remaining() > 0:
        if state.x is None:
            if state.seed_index >= len(seeds):
                break
            z = seeds[state.seed_index]
            state.seed_index += 1
            state.fx = evaluate(z)
            state.x, state.step, state.coord, state.direction, state.improved = list(z), step0, 0, 1, False
            continue
        if free.size == 0 or state.step < step_min:
            state.x = None
            continue
        i = free[state.coord]
        z = np.array(state.x)
        trial = z.copy()
        trial[i] = np.clip(z[i] + state.direction * state.step, 0.0, 1.0)
        if trial[i] != z[i]:
            ft = evaluate(trial)
            if ft < state.fx:
                state.x, state.fx, state.improved = trial.tolist(), ft, True
        # advance the pattern: +dir, -dir, next coordinate
        if state.direction == 1:
            state.direction = -1
        else:
            state.direction = 1
            state.coord += 1
            if state.coord >= free.size:
                state.coord = 0
                if not state.improved:
                    state.step *= 0.5
                state.improved = False
    if not np.isfinite(best["J"]):
        raise ControlError("no admissible candidate found within the budget")
    if checkpoint is not None:
        _save_checkpoint(checkpoint, record, state, best, meta)
    return {"best_params": np.array(best["params"]), "best_J": best["J"], "best_index": best["index"],
            "record": record}
