import numpy as np
import pytest
import sympy as sp
from conftest import X, Y, DenseQuad, on_grid, stream_velocity
from hypothesis import given
from hypothesis import strategies as st

from acns.control import BoundaryControl
from acns.domain import TAU_X, build_geometry
from acns.dynamics import (GalerkinState, GalerkinSystem, Gains, StepFailure, boundary_forcing,
                           capillary, convect, em_step, simulate_ensemble, simulate_path,
                           stripe_initial)
from acns.energy import dissipation_report
from acns.lifting import LiftingField
from acns.noise import WienerIncrement, build_noise
from acns.spaces import ScalarField, VectorField, galerkin_basis, random_div_free_field


def vec(g, ex):
    return VectorField(np.stack([on_grid(g, ex[0]), on_grid(g, ex[1])]), g)


def test_convect_skew_no_inflow(geom):
    rng = np.random.default_rng(0)
    v, w = random_div_free_field(geom, rng), random_div_free_field(geom, rng)
    assert abs(convect(v, w, w)) < 1e-12
    z = VectorField(np.zeros((2,) + geom.shape), geom)
    assert convect(z, z, z) == 0


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_convect_oracle(c):
    g = build_geometry(24, 16)
    dq = DenseQuad()
    v = stream_velocity((Y * (1 - Y)) ** 2 * (c[0] * sp.cos(X) + sp.sin(X)))
    w = (c[1] * Y**2 + sp.sin(X) * Y, sp.cos(2 * X) * Y * (1 - Y))
    z = (sp.cos(X) + c[2] * Y, Y**3)
    adv = [sum(v[b] * sp.diff(w[a], s) for b, s in enumerate((X, Y))) for a in range(2)]
    ref = dq.integrate(adv[0] * z[0] + adv[1] * z[1])
    got = convect(vec(g, v), vec(g, w), vec(g, z))
    assert got == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_capillary_constant_phase_and_potential(geom):
    rng = np.random.default_rng(1)
    w = random_div_free_field(geom, rng)
    mu = ScalarField(on_grid(geom, sp.cos(X) * Y), geom)
    assert abs(capillary(mu, ScalarField(np.full(geom.shape, 0.4), geom), w)) < 1e-15
    phi = ScalarField(on_grid(geom, sp.cos(X) + Y**2 * (1 - Y) ** 2), geom)
    assert abs(capillary(ScalarField(np.full(geom.shape, 2.0), geom), phi, w)) < 1e-11


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_capillary_oracle(c1, c2):
    g = build_geometry(24, 16)
    dq = DenseQuad()
    mu = c1 * sp.cos(X) + Y**2
    phi = sp.sin(X) * Y**2 + c2 * Y
    w = (sp.cos(X) * Y, c2 + Y * sp.sin(X))
    ref = dq.integrate(mu * (sp.diff(phi, X) * w[0] + sp.diff(phi, Y) * w[1]))
    got = capillary(ScalarField(on_grid(g, mu), g), ScalarField(on_grid(g, phi), g), vec(g, w))
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_boundary_forcing(basis):
    g = basis.geom
    assert np.all(boundary_forcing(np.zeros((2, g.Nx)), basis) == 0)
    const = boundary_forcing(np.full((2, g.Nx), 1.3), basis)
    for i, w in enumerate(basis.vel):
        tr = g.trace(w[0])
        if np.abs(tr.mean(axis=1)).max() < 1e-12:
            assert abs(const[i]) < 1e-12
    b = np.random.default_rng(5).standard_normal((2, g.Nx))
    ref = [g.boundary_integral(g.trace(w[0]) * TAU_X[:, None] * b) for w in basis.vel]
    np.testing.assert_allclose(boundary_forcing(b, basis), ref, atol=1e-13)


def test_zero_fixed_point(basis):
    sys_ = GalerkinSystem(basis)
    s = em_step(GalerkinState(0.0, np.zeros(basis.nu), np.zeros(basis.nphi)), sys_, 1e-2)
    assert np.all(s.beta == 0) and np.all(s.chi == 0)


def test_pure_phase_equilibrium(basis):
    g = basis.geom
    zero = VectorField(np.zeros((2,) + g.shape), g, True)
    beta, chi = basis.project(zero, ScalarField(np.ones(g.shape), g, neumann=True))
    s = em_step(GalerkinState(0.0, beta, chi), GalerkinSystem(basis), 1e-2)
    np.testing.assert_allclose(s.beta, beta, atol=1e-12)
    np.testing.assert_allclose(s.chi, chi, atol=1e-12)


def test_linear_mode_matches_scalar_decay(basis):
    sys_ = GalerkinSystem(basis, gains=Gains.linear())
    lam = basis.lam_u[0]
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        beta = np.zeros(basis.nu)
        beta[0] = 1.0
        s = em_step(GalerkinState(0.0, beta, np.zeros(basis.nphi)), sys_, dt)
        errs.append(abs(s.beta[0] - np.exp(-lam * dt)))
        assert np.abs(s.beta[1:]).max() < 1e-14
    # one-step error is O(dt^2)
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.1)


def test_linear_additive_noise_step(basis):
    g = basis.geom
    nz = build_noise(g, [0.0], [1], [0.3], [0])
    sys_ = GalerkinSystem(basis, noise=nz, gains=Gains.linear())
    dt, dw = 1e-3, 0.02
    s = em_step(GalerkinState(0.0, np.zeros(basis.nu), np.zeros(basis.nphi)), sys_, dt,
                WienerIncrement(dt, np.array([dw])))
    np.testing.assert_allclose(s.beta, sys_.H[0] * dw / (1 + dt * basis.lam_u), atol=1e-15)


def test_em_step_rejects_bad_dt(basis):
    with pytest.raises(ValueError):
        em_step(GalerkinState(0.0, np.zeros(basis.nu), np.zeros(basis.nphi)), GalerkinSystem(basis), 0.0)


def test_run_T_zero_and_zero_everything(basis):
    sys_ = GalerkinSystem(basis)
    z = (np.zeros(basis.nu), np.zeros(basis.nphi))
    ens = simulate_ensemble(sys_, 0.0, 1e-2, 2, 0, z)
    assert ens.beta.shape[1] == 1
    ens = simulate_ensemble(sys_, 0.1, 1e-2, 2, 0, z)
    assert np.all(ens.beta == 0) and np.all(ens.chi == 0)


def test_run_requires_multiple_of_dt(basis):
    with pytest.raises(ValueError):
        simulate_ensemble(GalerkinSystem(basis), 0.25, 4e-3, 1, 0)


def test_bitwise_reproducible_path(geom, basis):
    nz = build_noise(geom, [0.5, 0.3], [basis.nu, 3], [0.2, 0.0], [0, 1])
    sys_ = GalerkinSystem(basis, noise=nz)
    ctrl = BoundaryControl.constant(0.25, [[0.05, 0.0], [0.0, 0.05]], [[0.2, 0.05, 0.0], [0.1, 0.0, 0.05]])
    lift = LiftingField(geom, ctrl)
    p1 = simulate_path(sys_, 0.25, 1e-3, 42, lift=lift)
    p2 = simulate_path(sys_, 0.25, 1e-3, 42, lift=lift)
    assert p1.beta.tobytes() == p2.beta.tobytes() and p1.chi.tobytes() == p2.chi.tobytes()


def test_deterministic_balance_first_order(basis):
    sys_ = GalerkinSystem(basis)
    res = []
    for dt in (4e-3, 2e-3):
        ens = simulate_ensemble(sys_, 0.08, dt, 1, 0)
        res.append(dissipation_report(ens.trace)["max_residual"])
    assert 1.6 < res[0] / res[1] < 2.4


def test_blow_up_raises(basis):
    sys_ = GalerkinSystem(basis)
    b0, c0 = stripe_initial(basis, amplitude=1e3)
    with pytest.raises(StepFailure):
        simulate_path(sys_, 0.5, 0.1, 0, initial=(b0, c0))
