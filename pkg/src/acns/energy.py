"""Energy weights, Monte-Carlo estimators and checks of the a priori bounds."""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid

Z95 = 1.959963984540054


class MonitorError(ValueError):
    pass


def weight_G(t, f_tilde, C0: float = 1.0) -> np.ndarray:
    """G(t) = exp(-C0 t - C0 int_0^t f_tilde ds), trapezoid quadrature."""
    if C0 <= 0:
        raise MonitorError("C0 must be positive")
    t = np.asarray(t, dtype=float)
    f_tilde = np.broadcast_to(np.asarray(f_tilde, dtype=float), t.shape)
    if t.size == 1:
        return np.ones(1)
    integral = cumulative_trapezoid(f_tilde, t, initial=0.0)
    return np.exp(-C0 * t - C0 * integral)


def trapz_cum(y, t) -> np.ndarray:
    return cumulative_trapezoid(y, t, axis=-1, initial=0.0)


def mean_ci(samples) -> dict:
    """Monte-Carlo mean with a 95% normal confidence interval."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise MonitorError("no finite samples")
    mean = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return {"mean": mean, "se": se, "ci": (mean - Z95 * se, mean + Z95 * se), "n": int(x.size)}


def _ratio(lhs: float, rhs: float):
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else float("inf")


def _ok_rows(trace):
    ok = np.isfinite(trace.E_tilde).all(axis=1)
    return ok


def estimate_check_L41(trace, E0=None, C0: float | None = None) -> dict:
    """Second-moment a priori bound.

    LHS = E sup G^2 ||(u, phi)||_Y^2 + E int G^2 ||(u, phi)||_V^2,
    RHS = E E(u0, phi0) + E int G^2 Lambda; fitted constant C = LHS / RHS.
    ``trace`` is an ensemble EnergyTrace (arrays shaped (M, nt)).
    """
    if trace is None or np.asarray(trace.E).ndim != 2 or trace.E.shape[0] == 0:
        raise MonitorError("empty ensemble")
    ok = _ok_rows(trace)
    if ok.sum() < 1:
        raise MonitorError("no finite paths")
    t = trace.t
    G = trace.G if C0 is None else np.broadcast_to(weight_G(t, trace.f_tilde[0], C0), trace.E.shape)
    sup_term = (G**2 * trace.Y).max(axis=1)
    int_term = trapz_cum(G**2 * trace.V, t)[:, -1]
    lhs_s = (sup_term + int_term)[ok]
    e0 = trace.E[:, 0] if E0 is None else np.broadcast_to(np.asarray(E0, dtype=float), trace.E[:, 0].shape)
    rhs_s = (e0 + trapz_cum(G**2 * trace.Lambda, t)[:, -1])[ok]
    lhs, rhs = mean_ci(lhs_s), mean_ci(rhs_s)
    c_hat = _ratio(lhs["mean"], rhs["mean"])
    return {"check": "L41", "lhs": lhs, "rhs": rhs, "C_hat": c_hat,
            "sup_term": mean_ci(sup_term[ok])["mean"], "int_term": mean_ci(int_term[ok])["mean"],
            "paths": int(ok.sum()), "failed_paths": int((~ok).sum()),
            "finite": bool(np.isfinite(c_hat))}


def estimate_check_L42(trace, E0=None, C0: float | None = None) -> dict:
    """Fourth-moment bound with B = ||(a, b)||^4 + 1, plus a Jensen cross-check."""
    if trace is None or np.asarray(trace.E).ndim != 2 or trace.E.shape[0] == 0:
        raise MonitorError("empty ensemble")
    ok = _ok_rows(trace)
    t = trace.t
    G = trace.G if C0 is None else np.broadcast_to(weight_G(t, trace.f_tilde[0], C0), trace.E.shape)
    sup2 = (G**2 * trace.Y).max(axis=1)
    int2 = trapz_cum(G**2 * trace.V, t)[:, -1]
    sup4 = (G**4 * trace.Y**2).max(axis=1)
    lhs_s = (sup4 + int2**2)[ok]
    e0 = trace.E[:, 0] if E0 is None else np.broadcast_to(np.asarray(E0, dtype=float), trace.E[:, 0].shape)
    rhs_s = (e0**2 + trapz_cum(G**4 * trace.B, t)[:, -1])[ok]
    lhs, rhs = mean_ci(lhs_s), mean_ci(rhs_s)
    c_hat = _ratio(lhs["mean"], rhs["mean"])
    # Jensen: E X^2 >= (E X)^2 for each part, hence LHS4 >= LHS2^2 / 2
    lhs2 = float(np.mean(sup2[ok] + int2[ok]))
    tol = 1e-12 * max(1.0, lhs2**2)
    jensen = {
        "sup": bool(np.mean(sup4[ok]) + tol >= np.mean(sup2[ok]) ** 2),
        "int": bool(np.mean(int2[ok] ** 2) + tol >= np.mean(int2[ok]) ** 2),
        "aggregate": bool(lhs["mean"] + tol >= 0.5 * lhs2**2),
    }
    return {"check": "L42", "lhs": lhs, "rhs": rhs, "C_hat": c_hat, "jensen": jensen,
            "jensen_ok": all(jensen.values()), "paths": int(ok.sum()),
            "failed_paths": int((~ok).sum()), "finite": bool(np.isfinite(c_hat))}


def stability_check(c_values, factor: float = 2.0) -> dict:
    """PASS iff all fitted constants are finite and within ``factor`` of each other."""
    c = np.asarray(c_values, dtype=float)
    finite = bool(np.all(np.isfinite(c)))
    pos = c[c > 0]
    spread = float(pos.max() / pos.min()) if pos.size else 1.0
    return {"values": c.tolist(), "spread": spread, "finite": finite,
            "pass": finite and spread < factor}


# ---------------------------------------------------------------------------
# Stability / uniqueness


def _run_fields(ens):
    """Grid quantities needed by the stability ledger, shaped (M, nt, ...)."""
    b = ens.basis
    g = b.geom
    w = g.weights.ravel()
    nq = w.size
    u = np.einsum("mti,iaq->mtaq", np.nan_to_num(ens.beta), b.vel.reshape(b.nu, 2, nq))
    gphi = np.einsum("mti,iaq->mtaq", np.nan_to_num(ens.chi), b.phi_grad.reshape(b.nphi, 2, nq))
    mu = np.einsum("mti,iq->mtq", np.nan_to_num(ens.mu), b.phi.reshape(b.nphi, nq))
    return u, gphi, mu, w


def ledger_terms(ensA, ensB, c: float = 1.0) -> dict:
    """Term-by-term rate h(t) of the difference weight H = exp(-int h)."""
    trA, trB = ensA.trace, ensB.trace
    ups = np.maximum(trA.control_sq, trB.control_sq)
    gl4_4 = trA.grad_phi_l4_4
    gl4_2 = np.sqrt(np.maximum(gl4_4, 0.0))
    phi1_h2 = trA.a_phi_sq
    terms = {
        "one": np.ones_like(ups),
        "grad_phi1_l4^4": gl4_4,
        "mu2^4": trB.mu_sq**2,
        "mu2^2": trB.mu_sq,
        "u2^4": trB.u_slip**2,
        "ups^2": ups**2,
        "grad_phi1^2*phi1_h2": trA.grad_phi_sq * phi1_h2,
        "ups^2*grad_phi1_l4^2": ups**2 * gl4_2,
        "u1^2*ups": trA.u_slip * ups,
        "u1^2": trA.u_slip,
        "ups": ups,
        "ups^2(b)": ups**2,
        "u2^2*ups": trB.u_slip * ups,
    }
    total = c * sum(terms.values())
    return {"terms": terms, "h": total}


def stability_distance(ensA, ensB, c_ledger: float = 1.0) -> dict:
    """Weighted distance between two runs driven by the same Brownian paths.

    LHS = E sup H^2 Z1 + 2 E int H^2 Z2 with Z1 = |u|^2 + |grad phi|^2 and
    Z2 = ||u||^2 + |A phi|^2 + |mu|^2 for the difference of the two runs;
    RHS = E ||(u, phi)(0)||_Y^2 + E int H^2 ||(a, b)_A - (a, b)_B||^2.
    """
    if ensA.beta.shape != ensB.beta.shape or not np.array_equal(ensA.t, ensB.t):
        raise MonitorError("runs live on different grids")
    if ensA.basis.geom.shape != ensB.basis.geom.shape:
        raise MonitorError("runs live on different grids")
    b = ensA.basis
    t = ensA.t
    db = ensA.beta - ensB.beta
    dc = ensA.chi - ensB.chi
    dm = ensA.mu - ensB.mu
    z1 = (db**2).sum(-1) + (dc**2).sum(-1) - b.theta * np.einsum("mti,ij,mtj->mt", dc, b.phi_mass, dc)
    z2 = (b.lam_u * db**2).sum(-1) + (b.lam_phi * dc**2).sum(-1) \
        + np.einsum("mti,ij,mtj->mt", dm, b.phi_mass, dm)
    led = ledger_terms(ensA, ensB, c_ledger)
    H = np.exp(-trapz_cum(led["h"], t))
    lhs_s = (H**2 * z1).max(axis=1) + 2.0 * trapz_cum(H**2 * z2, t)[:, -1]
    # control difference norm
    dctrl = np.zeros_like(t)
    if ensA.lift is not None or ensB.lift is not None:
        from .spaces import hp_gamma_norm

        for j, tj in enumerate(t):
            sa = _boundary_at(ensA.lift, tj, b.geom)
            sb = _boundary_at(ensB.lift, tj, b.geom)
            dctrl[j] = hp_gamma_norm(*(x - y for x, y in zip(sa, sb))) ** 2
    y0 = z1[:, 0]
    rhs_s = y0 + trapz_cum(H**2 * dctrl[None, :], t)[:, -1]
    ok = np.isfinite(lhs_s) & np.isfinite(rhs_s)
    lhs = float(np.mean(lhs_s[ok]))
    rhs = float(np.mean(rhs_s[ok]))
    return {"lhs": lhs, "rhs": rhs, "ratio": (lhs / rhs) if rhs > 0 else None,
            "lhs_ci": mean_ci(lhs_s[ok]) if ok.sum() > 1 else None,
            "H_final_mean": float(np.mean(H[:, -1])),
            "ledger_means": {k: float(np.nanmean(v)) for k, v in led["terms"].items()}}


def _boundary_at(lift, t, geom):
    if lift is None:
        z = np.zeros((2, geom.Nx))
        return z, z, z, z
    s = lift.at(t)
    return s.a, s.b, s.dta, s.dtb


# ---------------------------------------------------------------------------
# Stopping time


def h_function(trace) -> np.ndarray:
    """h(t) = G^2 E + int_0^t G^2 ||(u, phi)||_V^2."""
    return trace.G**2 * trace.E + trapz_cum(trace.G**2 * trace.V, trace.t)


def stopping_time_diag(t, h, N: float) -> float:
    """First grid time with h >= N, else the final time."""
    if N <= 0:
        raise MonitorError("threshold N must be positive")
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    hit = np.flatnonzero(h >= N)
    return float(t[hit[0]]) if hit.size else float(t[-1])


def sigma_weight(t, h_rate) -> np.ndarray:
    """exp(-int_0^t h) for a dominating rate h."""
    return np.exp(-trapz_cum(np.asarray(h_rate, dtype=float), np.asarray(t, dtype=float)))


def dissipation_report(trace, tol_rel: float = 1e-3) -> dict:
    """Deterministic energy-balance residual relative to the initial energy."""
    r = np.abs(trace.residual)
    e0 = np.abs(trace.E_tilde[..., 0])
    rel = float(np.nanmax(r.max(axis=-1) / np.maximum(e0, 1e-300)))
    return {"max_residual": float(np.nanmax(r)), "relative": rel, "pass": rel < tol_rel}
