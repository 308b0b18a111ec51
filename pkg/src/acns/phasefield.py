"""Double-well potential, chemical potential and energy functionals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spaces import ScalarField, SpaceError, VectorField, a_theta_apply, l2_inner


@dataclass(frozen=True)
class PotentialSpec:
    """Quartic double well F(r) = (r^2 - 1)^2 and its shifted split.

    ``theta`` is the A_theta shift; the default ``theta = delta / xi``
    makes ``A_theta + f_theta`` reproduce ``-delta*Laplace + xi*f``.
    """

    c_f: float = 12.0
    theta: float = 1.0
    delta: float = 1.0
    xi: float = 1.0

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.delta <= 0 or self.xi <= 0:
            raise ValueError("delta and xi must be positive")
        if self.delta > self.xi:
            raise ValueError("interface parameters require delta <= xi")

    @property
    def shift(self) -> float:
        return self.delta / self.xi


def F(r):
    return (r * r - 1.0) ** 2


def f(r):
    return 4.0 * r * (r * r - 1.0)


def f_prime(r):
    return 12.0 * r * r - 4.0


def f_theta(r, spec: PotentialSpec = PotentialSpec()):
    return f(r) - spec.shift * r


def F_theta(r, spec: PotentialSpec = PotentialSpec()):
    """Primitive of f_theta vanishing at 0."""
    return F(r) - 1.0 - 0.5 * spec.shift * r * r


def potential_eval(r, spec: PotentialSpec = PotentialSpec()):
    """Return (F, f, F_theta, f_theta) at r."""
    return F(r), f(r), F_theta(r, spec), f_theta(r, spec)


def growth_bound_ok(spec: PotentialSpec, r=None) -> bool:
    """Check |f^(i)(r)| <= c_f (1 + |r|^(4-i)) for i = 0, 1 on sample points."""
    r = np.linspace(-10.0, 10.0, 4001) if r is None else np.asarray(r)
    ok0 = np.abs(f(r)) <= spec.c_f * (1.0 + np.abs(r) ** 4) + 1e-12
    ok1 = np.abs(f_prime(r)) <= spec.c_f * (1.0 + np.abs(r) ** 3) + 1e-12
    return bool(ok0.all() and ok1.all())


def chemical_potential(phi: ScalarField, spec: PotentialSpec = PotentialSpec()) -> ScalarField:
    """mu = A_theta phi + f_theta(phi), evaluated pointwise on the grid."""
    if not phi.neumann:
        raise SpaceError("chemical potential needs a Neumann phase field")
    aphi = a_theta_apply(phi, spec.theta)
    return ScalarField(aphi.values + f_theta(phi.values, spec), phi.geom, neumann=False)


def free_energy_density_integral(phi: ScalarField) -> float:
    return float(phi.geom.integrate(F(phi.values)))


def energy_E(u: VectorField, phi: ScalarField, spec: PotentialSpec = PotentialSpec()) -> float:
    """E(u, phi) = |u|^2 + |grad phi|^2 + int F(phi)."""
    g = phi.geom
    grad_sq = float(g.integrate((phi.grad() ** 2).sum(axis=0)))
    return l2_inner(u, u) + grad_sq + free_energy_density_integral(phi)


def energy_tilde(u: VectorField, phi: ScalarField) -> float:
    """|u|^2 + |grad phi|^2 + 2 int F(phi): the quantity with a closed balance."""
    g = phi.geom
    grad_sq = float(g.integrate((phi.grad() ** 2).sum(axis=0)))
    return l2_inner(u, u) + grad_sq + 2.0 * free_energy_density_integral(phi)


def e_lower_offset() -> float:
    """F >= 0, so E >= ||(u, phi)||_Y^2 with zero offset for the quartic."""
    return 0.0
