import numpy as np
import pytest
import sympy as sp
from conftest import X, Y, on_grid, stream_velocity
from hypothesis import given
from hypothesis import strategies as st

from acns.domain import build_geometry
from acns.spaces import (ScalarField, SpaceError, VectorField, a_theta_apply, div_free_raw_basis,
                         galerkin_basis, hp_gamma_norm, hs_norm_sq, neumann_random_field, norms,
                         project_div_free, random_div_free_field, slip_inner)


def vec(geom, ex, ey):
    return VectorField(np.stack([on_grid(geom, ex), on_grid(geom, ey)]), geom)


def slip_oracle(dense, v, z, alpha):
    """2 (Dv, Dz) + alpha int_Gamma v.z from symbolic derivatives."""
    def D(w):
        g = [[sp.diff(w[a], s) for s in (X, Y)] for a in range(2)]
        return [[(g[a][b] + g[b][a]) / 2 for b in range(2)] for a in range(2)]
    dv, dz = D(v), D(z)
    bulk = dense.integrate(sum(dv[a][b] * dz[a][b] for a in range(2) for b in range(2)))
    dot = v[0] * z[0] + v[1] * z[1]
    wall = dense.wall_integral(dot.subs(Y, 0), dot.subs(Y, 1))
    return 2 * bulk + alpha * wall


@pytest.mark.parametrize("c", [0.0, 1.0, -2.5])
def test_slip_form_constant_field(geom, c):
    v = VectorField(np.stack([np.full(geom.shape, c), np.zeros(geom.shape)]), geom)
    assert slip_inner(v, v, 1.0) == pytest.approx(4 * np.pi * c * c, abs=1e-12)


def test_slip_form_sin_cos(geom, dense):
    v, z = (sp.sin(Y), sp.Integer(0)), (sp.cos(Y), sp.Integer(0))
    ref = slip_oracle(dense, v, z, 1.0)
    got = slip_inner(vec(geom, *v), vec(geom, *z), 1.0)
    assert got == pytest.approx(ref, rel=1e-10)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 3.0))
def test_slip_form_streamfunction_oracle(c1, c2, alpha):
    from conftest import DenseQuad

    g = build_geometry(16, 12)
    psi = (Y * (1 - Y)) ** 2 * (c1 * sp.cos(X) + c2 * sp.sin(2 * X))
    v = stream_velocity(psi)
    z = stream_velocity(Y**2 * (1 - Y) ** 2 * sp.sin(X))
    ref = slip_oracle(DenseQuad(), v, z, alpha)
    got = slip_inner(vec(g, *v), vec(g, *z), alpha)
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_norms_sin_x(geom):
    f = ScalarField(on_grid(geom, sp.sin(X)), geom)
    n = norms(f)
    assert n["l2"] ** 2 == pytest.approx(np.pi, rel=1e-13)
    assert n["grad"] ** 2 == pytest.approx(np.pi, rel=1e-12)
    assert n["linf"] == pytest.approx(1.0, abs=1e-3)


def test_norms_zero_and_constant(geom):
    assert all(v == 0 for v in norms(ScalarField(np.zeros(geom.shape), geom)).values())
    n = norms(ScalarField(np.ones(geom.shape), geom))
    assert n["l2"] ** 2 == pytest.approx(2 * np.pi)
    assert n["grad"] == pytest.approx(0, abs=1e-12)


def test_a_theta_constant_and_eigenfunction(geom):
    c = ScalarField(np.full(geom.shape, 3.0), geom)
    np.testing.assert_allclose(a_theta_apply(c, 0.5).values, 1.5, atol=1e-10)
    cx = on_grid(geom, sp.cos(X))
    out = a_theta_apply(ScalarField(cx, geom), 1.0)
    np.testing.assert_allclose(out.values, 2 * cx, atol=1e-11)


def test_a_theta_requires_neumann(geom):
    f = ScalarField(on_grid(geom, Y), geom)
    with pytest.raises(SpaceError):
        a_theta_apply(f, 1.0)


@given(st.integers(0, 2**32 - 1), st.floats(0.2, 3.0))
def test_a_theta_energy_identity(seed, theta):
    g = build_geometry(16, 12)
    phi = neumann_random_field(g, np.random.default_rng(seed))
    lhs = g.inner(a_theta_apply(phi, theta).values, phi.values)
    gp = phi.grad()
    rhs = g.integrate((gp**2).sum(axis=0)) + theta * g.integrate(phi.values**2)
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_projection_idempotent(geom):
    w = random_div_free_field(geom, np.random.default_rng(1))
    np.testing.assert_allclose(project_div_free(w).values, w.values, atol=1e-10)


def test_projection_kills_gradients(geom):
    q = sp.cos(X) * Y**2 + Y**3
    w = vec(geom, sp.diff(q, X), sp.diff(q, Y))
    pw = project_div_free(w)
    assert np.abs(pw.values).max() <= 1e-8 * np.abs(w.values).max()


def test_projection_residual_orthogonal_lstsq(geom):
    rng = np.random.default_rng(3)
    w = VectorField(rng.standard_normal((2,) + geom.shape), geom)
    pw = project_div_free(w)
    raw = div_free_raw_basis(geom)
    wts = geom.weights
    r = w.values - pw.values
    inner = np.einsum("iaxy,axy,xy->i", raw, r, wts)
    assert np.abs(inner).max() < 1e-10 * np.abs(w.values).max()
    # least-squares oracle: weighted L2 fit by the raw spanning set
    sq = np.sqrt(wts).ravel()
    A = (raw.reshape(len(raw), 2, -1) * sq).reshape(len(raw), -1).T
    b = (w.values.reshape(2, -1) * sq).ravel()
    coef = np.linalg.lstsq(A, b, rcond=None)[0]
    fit = np.einsum("i,i...->...", coef, raw)
    np.testing.assert_allclose(pw.values, fit, atol=1e-8)


def test_basis_first_eigenvalue_positive(geom):
    b = galerkin_basis(geom, 1)
    assert b.eigenvalues[0] > 0


def test_basis_orthonormal_and_rayleigh(basis):
    Gy = basis.gram("y")
    np.testing.assert_allclose(Gy, np.eye(basis.n), atol=1e-10)
    Gv = basis.gram("v")
    np.testing.assert_allclose(np.diag(Gv) / np.diag(Gy), basis.eigenvalues, rtol=1e-8)
    assert np.all(np.diff(basis.eigenvalues) >= -1e-12)


def test_basis_size_error(geom):
    with pytest.raises(SpaceError):
        galerkin_basis(geom, 0)
    with pytest.raises(SpaceError):
        galerkin_basis(geom, 10**6)


def test_modes_satisfy_constraints(basis):
    for w in basis.vel:
        v = VectorField(w, basis.geom)
        assert v.divergence_residual() < 1e-10
        assert np.abs(v.normal_trace()).max() < 1e-10
    for p in basis.phi:
        assert ScalarField(p, basis.geom).neumann_residual() < 1e-10


def test_hs_norm_examples(geom):
    z = np.zeros((2, geom.Nx))
    assert hp_gamma_norm(z, z, z, z) == 0
    a = np.stack([np.sin(geom.x), np.zeros(geom.Nx)])
    assert hs_norm_sq(a, 0.5) == pytest.approx(2**0.5 / 2, rel=1e-13)


@given(st.floats(0.1, 5.0), st.floats(2.1, 6.0), st.integers(0, 2**31))
def test_hp_norm_homogeneous(s, p, seed):
    rng = np.random.default_rng(seed)
    args = [rng.standard_normal((2, 16)) for _ in range(4)]
    assert hp_gamma_norm(*[s * a for a in args], p) == pytest.approx(s * hp_gamma_norm(*args, p), rel=1e-12)


def test_hp_norm_p_bound():
    z = np.zeros((2, 8))
    with pytest.raises(SpaceError):
        hp_gamma_norm(z, z, z, z, 2.0)
