"""Wiener increments and the affine multiplicative noise g(t, v).

Channel k acts as ``g^k(t, v) = sigma_k * P_k v + h_k`` where ``P_k`` is the
L2 projection onto the first ``m_k`` divergence-free eigenmodes and ``h_k``
is a fixed divergence-free field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import ChannelGeometry
from .spaces import VectorField, mode_set


@dataclass(frozen=True)
class WienerIncrement:
    dt: float
    dw: np.ndarray

    @property
    def m(self) -> int:
        return self.dw.size


def path_generator(master_seed: int, path_index: int) -> np.random.Generator:
    """Counter-based generator keyed by (master seed, path index)."""
    ss = np.random.SeedSequence([int(master_seed), int(path_index)])
    return np.random.Generator(np.random.Philox(ss))


def sample_wiener(dt: float, m: int, seed=0) -> WienerIncrement:
    if dt <= 0:
        raise ValueError("dt must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return WienerIncrement(dt, rng.standard_normal(m) * np.sqrt(dt))


def wiener_path(rng: np.random.Generator, nsteps: int, dt: float, m: int) -> np.ndarray:
    """Increments for a whole path, shape (nsteps, m)."""
    return rng.standard_normal((nsteps, m)) * np.sqrt(dt)


def coarsen_increments(dw: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of fine increments (shared Brownian path)."""
    n, m = dw.shape[-2:]
    if n % factor:
        raise ValueError("fine step count must be divisible by factor")
    return dw.reshape(*dw.shape[:-2], n // factor, factor, m).sum(axis=-2)


@dataclass(frozen=True)
class NoiseModel:
    """Multiplicative noise with m channels.

    Attributes
    ----------
    sigma : ndarray (m,)
        Gains on the projected state.
    cutoff : ndarray (m,)
        Number of leading divergence-free modes each projection keeps.
    h : ndarray (m, 2, Ny, Nx)
        Additive divergence-free fields.
    modes : ndarray (max cutoff, 2, Ny, Nx)
        L2-orthonormal projection modes shared by all channels.
    K : float
        Declared Lipschitz / growth constant.
    """

    geom: ChannelGeometry = field(repr=False)
    sigma: np.ndarray
    cutoff: np.ndarray
    h: np.ndarray = field(repr=False)
    modes: np.ndarray = field(repr=False)
    K: float = 0.0

    @property
    def m(self) -> int:
        return len(self.sigma)

    def h_norms(self) -> np.ndarray:
        w = self.geom.weights
        return np.sqrt(np.einsum("kaxy,kaxy,xy->k", self.h, self.h, w))

    def bound_constant(self) -> float:
        """Smallest K the affine form guarantees for both norm conventions."""
        if self.m == 0:
            return 0.0
        s = np.abs(self.sigma).sum()
        hs = self.h_norms().sum()
        return float(2.0 * max(s * s, hs * hs))


def build_noise(geom: ChannelGeometry, sigma, cutoff, h_amp=None, h_mode=None,
                alpha: float = 1.0, K: float | None = None) -> NoiseModel:
    """Reference noise model: h_k = h_amp[k] * (velocity eigenmode h_mode[k])."""
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    m = sigma.size
    cutoff = np.atleast_1d(np.asarray(cutoff, dtype=int)) if m else np.zeros(0, dtype=int)
    if cutoff.size != m:
        raise ValueError("cutoff must have one entry per channel")
    h_amp = np.zeros(m) if h_amp is None else np.atleast_1d(np.asarray(h_amp, dtype=float))
    h_mode = np.zeros(m, dtype=int) if h_mode is None else np.atleast_1d(np.asarray(h_mode, dtype=int))
    ms = mode_set(geom, 1.0, alpha)
    nvel = ms.vel.shape[0]
    if m and (cutoff.min() < 0 or cutoff.max() > nvel or h_mode.max() >= nvel):
        raise ValueError(f"noise mode indices must be < {nvel}")
    # velocity modes in eigenvalue order
    vel_order = [ms.slot[i] for i in range(ms.dim) if ms.info[i].kind == "u"]
    vel_sorted = ms.vel[vel_order]
    mmax = int(cutoff.max()) if m else 0
    modes = vel_sorted[:mmax].copy()
    h = np.stack([h_amp[k] * vel_sorted[h_mode[k]] for k in range(m)]) if m else np.zeros((0, 2) + geom.shape)
    model = NoiseModel(geom, sigma, cutoff, h, modes, 0.0)
    kb = model.bound_constant()
    K = kb if K is None else float(K)
    if m and K < np.max(sigma**2):
        raise ValueError("declared K must dominate max sigma_k^2")
    return NoiseModel(geom, sigma, cutoff, h, modes, K)


def noise_apply(t: float, v: VectorField, model: NoiseModel) -> list[VectorField]:
    """The m noise fields g^k(t, v)."""
    if (v.geom.Nx, v.geom.Ny) != (model.geom.Nx, model.geom.Ny):
        raise ValueError("noise model and field live on different grids")
    w = model.geom.weights
    coef = np.einsum("jaxy,axy,xy->j", model.modes, v.values, w)
    out = []
    for k in range(model.m):
        mk = model.cutoff[k]
        proj = np.einsum("j,j...->...", coef[:mk], model.modes[:mk])
        out.append(VectorField(model.sigma[k] * proj + model.h[k], v.geom, True))
    return out


def noise_norm_sq(fields: list[VectorField], convention: str = "hs") -> float:
    """|g|^2 as sum_k |g^k|^2 ("hs") or (sum_k |g^k|)^2 ("sum")."""
    if not fields:
        return 0.0
    g = fields[0].geom
    nrm = np.array([np.sqrt(g.integrate((f.values**2).sum(axis=0))) for f in fields])
    if convention == "hs":
        return float((nrm**2).sum())
    return float(nrm.sum() ** 2)


def h1_audit(model: NoiseModel, pairs: int = 1000, seed: int = 0, scale: float = 1.0) -> dict:
    """Check the Lipschitz and linear-growth bounds on random pairs, in both norm conventions."""
    from .spaces import random_div_free_field

    rng = np.random.default_rng(seed)
    geom = model.geom
    worst_lip, worst_growth, violations = 0.0, 0.0, 0
    for _ in range(pairs):
        v = random_div_free_field(geom, rng) * (scale * rng.exponential())
        w = random_div_free_field(geom, rng) * (scale * rng.exponential())
        gv, gw = noise_apply(0.0, v, model), noise_apply(0.0, w, model)
        diff = [a - b for a, b in zip(gv, gw)]
        dvw = v - w
        dn = geom.integrate((dvw.values**2).sum(axis=0))
        vn = geom.integrate((v.values**2).sum(axis=0))
        for conv in ("hs", "sum"):
            lip = noise_norm_sq(diff, conv)
            gr = noise_norm_sq(gv, conv)
            if dn > 0:
                worst_lip = max(worst_lip, lip / dn)
            worst_growth = max(worst_growth, gr / (1.0 + vn))
            if lip > model.K * dn * (1 + 1e-12) + 1e-14 or gr > model.K * (1.0 + vn) * (1 + 1e-12):
                violations += 1
    return {"pairs": pairs, "K": model.K, "max_lipschitz_ratio": worst_lip,
            "max_growth_ratio": worst_growth, "violations": violations}
