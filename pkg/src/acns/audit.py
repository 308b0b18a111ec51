"""Empirical audit of the functional inequalities on random resolved fields."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .domain import ChannelGeometry, build_geometry
from .spaces import (ScalarField, VectorField, neumann_random_field, norms,
                     random_div_free_field)

INEQUALITIES = ("ladyzhenskaya", "gn_mean_free", "trace_interp", "korn", "agmon")
GROWTH_FACTOR = 1.5


@dataclass
class RatioReport:
    name: str
    samples: int
    max_ratio: float
    argmax: dict
    trend: str
    fine_max_ratio: float
    min_ratio: float
    skipped: int

    def to_dict(self) -> dict:
        return asdict(self)


def mean_value(f: ScalarField) -> float:
    """v_D = (1/|D|) int_D v."""
    return float(f.geom.integrate(f.values) / f.geom.area)


def _l2(g: ChannelGeometry, v) -> float:
    v = v if v.ndim == 2 else (v**2).sum(axis=0) ** 0.5
    return float(np.sqrt(g.integrate(v**2)))


def _grad_l2(g: ChannelGeometry, vals) -> float:
    comps = vals[None] if vals.ndim == 2 else vals
    tot = sum(g.integrate(g.dx(c) ** 2 + g.dy(c) ** 2) for c in comps)
    return float(np.sqrt(tot))


def ladyzhenskaya_ratio(u: VectorField, alpha: float = 1.0, norm: str = "slip") -> float | None:
    """||u||_L4 / (N(u)^(1/2) |u|^(1/2)) with N the slip norm or |grad u|."""
    nr = norms(u, alpha)
    n = nr["slip"] if norm == "slip" else nr["grad"]
    rhs = np.sqrt(n) * np.sqrt(nr["l2"])
    return None if rhs == 0 else nr["l4"] / rhs


def _is_constant(f: ScalarField, w) -> bool:
    """Mean-free part at roundoff level: the ratio is 0/0."""
    return float(np.abs(w).max()) <= 1e-12 * max(float(np.abs(f.values).max()), 1e-300)


def gn_mean_free_ratio(f: ScalarField, q: float = 4.0) -> float | None:
    g = f.geom
    w = f.values - mean_value(f)
    if _is_constant(f, w):
        return None
    lhs = float(g.integrate(np.abs(w) ** q) ** (1.0 / q))
    rhs = _l2(g, f.values) ** (2.0 / q) * _grad_l2(g, f.values) ** (1.0 - 2.0 / q)
    if rhs == 0:
        return None
    return lhs / rhs


def trace_interp_ratio(f: ScalarField, q: float = 4.0) -> float | None:
    g = f.geom
    if _is_constant(f, f.values - mean_value(f)):
        return None
    w = g.trace(f.values - mean_value(f))
    lhs = float(np.sum(np.abs(w) ** q * g.wall_weights[None, :]) ** (1.0 / q))
    rhs = _l2(g, f.values) ** (2.0 / q) * _grad_l2(g, f.values) ** (1.0 - 2.0 / q)
    if rhs == 0:
        return None
    return lhs / rhs


def korn_ratio(u: VectorField, alpha: float = 1.0) -> float | None:
    nr = norms(u, alpha)
    return None if nr["slip"] == 0 else nr["h1"] / nr["slip"]


def agmon_ratio(f: ScalarField) -> float | None:
    """||v||_inf / (||v||_H1^(1/2) ||v||_H2^(1/2)) with a dense max."""
    nr = norms(f)
    rhs = np.sqrt(nr["h1"] * nr["h2"])
    return None if rhs == 0 else nr["linf"] / rhs


def _sample_field(name: str, geom: ChannelGeometry, rng, decay: float):
    if name in ("ladyzhenskaya", "korn"):
        return random_div_free_field(geom, rng, decay)
    return neumann_random_field(geom, rng, decay)


def _ratio(name: str, f, alpha: float, q: float):
    if name == "ladyzhenskaya":
        return ladyzhenskaya_ratio(f, alpha)
    if name == "gn_mean_free":
        return gn_mean_free_ratio(f, q)
    if name == "trace_interp":
        return trace_interp_ratio(f, q)
    if name == "korn":
        return korn_ratio(f, alpha)
    if name == "agmon":
        return agmon_ratio(f)
    raise ValueError(f"unknown inequality {name!r}")


def _scan(name, geom, samples, seed, decay, alpha, q):
    rng = np.random.default_rng(seed)
    ratios, skipped = [], 0
    for _ in range(samples):
        r = _ratio(name, _sample_field(name, geom, rng, decay), alpha, q)
        if r is None:
            skipped += 1
            ratios.append(np.nan)
        else:
            ratios.append(r)
    return np.array(ratios), skipped


def audit(inequality: str, samples: int = 200, seed: int = 0, Nx: int = 16, Ny: int = 16,
          decay: float = 2.0, alpha: float = 1.0, q: float = 4.0) -> RatioReport:
    """Max LHS/RHS ratio over random fields, rerun on the doubled grid for the trend."""
    if inequality not in INEQUALITIES:
        raise ValueError(f"unknown inequality {inequality!r}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    coarse = build_geometry(Nx, Ny)
    r0, skipped = _scan(inequality, coarse, samples, seed, decay, alpha, q)
    r1, _ = _scan(inequality, coarse.refined(2), samples, seed, decay, alpha, q)
    if np.all(np.isnan(r0)):
        return RatioReport(inequality, samples, float("nan"), {}, "stable", float("nan"),
                           float("nan"), skipped)
    i = int(np.nanargmax(r0))
    m0, m1 = float(np.nanmax(r0)), float(np.nanmax(r1)) if not np.all(np.isnan(r1)) else 0.0
    trend = "growing" if (not np.isfinite(m1) or m1 > GROWTH_FACTOR * m0) else "stable"
    return RatioReport(
        name=inequality, samples=samples, max_ratio=m0,
        argmax={"sample": i, "seed": seed, "decay": decay, "grid": [Nx, Ny]},
        trend=trend, fine_max_ratio=m1, min_ratio=float(np.nanmin(r0)), skipped=skipped,
    )


def audit_all(samples: int = 200, seed: int = 0, **kw) -> list[RatioReport]:
    return [audit(name, samples, seed, **kw) for name in INEQUALITIES]
