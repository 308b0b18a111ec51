import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acns.control import BoundaryControl
from acns.dynamics import GalerkinSystem, simulate_ensemble, stripe_initial
from acns.energy import (MonitorError, estimate_check_L41, estimate_check_L42, h_function,
                         mean_ci, stability_check, stability_distance, stopping_time_diag,
                         weight_G)
from acns.lifting import LiftingField
from acns.noise import build_noise

T, DT, M = 0.05, 5e-3, 4


@pytest.fixture(scope="module")
def noisy(geom, basis):
    nz = build_noise(geom, [0.5, 0.3], [basis.nu, 3], [0.2, 0.0], [0, 1])
    return GalerkinSystem(basis, noise=nz)


def test_weight_closed_forms():
    t = np.linspace(0, 0.5, 51)
    np.testing.assert_allclose(weight_G(t, np.zeros_like(t), 2.0), np.exp(-2.0 * t), rtol=1e-14)
    G = weight_G(t, np.full_like(t, 3.0), 1.0)
    assert G[0] == 1.0
    assert G[-1] == pytest.approx(np.exp(-2.0), rel=1e-12)


@given(st.floats(0.1, 5.0))
def test_weight_monotone(C0):
    t = np.linspace(0, 1, 21)
    G = weight_G(t, 1 + np.sin(t) ** 2, C0)
    assert np.all(np.diff(G) < 0) and G[0] == 1


def test_zero_data_gives_zero_lhs(basis):
    ens = simulate_ensemble(GalerkinSystem(basis), T, DT, 2, 0,
                            (np.zeros(basis.nu), np.zeros(basis.nphi)))
    r41, r42 = estimate_check_L41(ens.trace), estimate_check_L42(ens.trace)
    assert r41["lhs"]["mean"] == 0 and r41["C_hat"] == 0
    assert r42["lhs"]["mean"] == 0 and r42["jensen_ok"]


def test_deterministic_sup_term_bounded_by_initial_energy(basis):
    ens = simulate_ensemble(GalerkinSystem(basis), 0.1, 2e-3, 1, 0)
    r = estimate_check_L41(ens.trace)
    # Y <= E~ and E~ is nonincreasing up to the O(dt) balance residual
    e0 = ens.trace.E_tilde[0, 0]
    assert r["sup_term"] <= e0 * (1 + 1e-3)
    assert np.isfinite(r["C_hat"]) and 0 < r["C_hat"] < 10


def test_stochastic_constants_reproducible(noisy):
    c = [estimate_check_L41(simulate_ensemble(noisy, T, DT, M, 11).trace)["C_hat"] for _ in range(2)]
    assert c[0] == c[1]
    r = estimate_check_L42(simulate_ensemble(noisy, T, DT, M, 11).trace)
    assert r["jensen_ok"] and r["lhs"]["ci"][0] <= r["lhs"]["mean"] <= r["lhs"]["ci"][1]


def test_empty_ensemble_rejected(noisy):
    ens = simulate_ensemble(noisy, T, DT, 1, 0)
    tr = ens.trace
    tr.E = tr.E[:0]
    with pytest.raises(MonitorError):
        estimate_check_L41(tr)
    with pytest.raises(MonitorError):
        estimate_check_L42(tr)


def test_stability_check():
    assert stability_check([1.0, 1.5])["pass"]
    assert not stability_check([1.0, 2.5])["pass"]
    assert not stability_check([1.0, np.inf])["pass"]


def test_identical_runs_zero_distance(noisy):
    a = simulate_ensemble(noisy, T, DT, M, 3)
    b = simulate_ensemble(noisy, T, DT, M, 3)
    assert stability_distance(a, b)["lhs"] == 0.0


def test_initial_perturbation_quadratic(noisy, basis):
    b0, c0 = stripe_initial(basis)
    d = np.random.default_rng(0).standard_normal(c0.shape)
    d /= np.linalg.norm(d)
    a = simulate_ensemble(noisy, T, DT, M, 3, (b0, c0))
    eps = np.array([1e-1, 1e-2, 1e-3])
    lhs = [stability_distance(a, simulate_ensemble(noisy, T, DT, M, 3, (b0, c0 + e * d)))["lhs"]
           for e in eps]
    slope = np.polyfit(np.log(eps), np.log(lhs), 1)[0]
    assert abs(slope - 2.0) < 0.2


def test_control_perturbation_ratio_bounded(geom, noisy):
    base = BoundaryControl.constant(T, [[0.05, 0.0], [0.0, 0.05]], [[0.2, 0.0, 0.0], [0.1, 0.0, 0.0]])
    a = simulate_ensemble(noisy, T, DT, M, 3, lift=LiftingField(geom, base))
    ratios = []
    for e in (1e-1, 1e-2, 1e-3):
        pert = BoundaryControl.constant(T, base.a_knots[0], base.b_knots[0] + e)
        b = simulate_ensemble(noisy, T, DT, M, 3, lift=LiftingField(geom, pert))
        ratios.append(stability_distance(a, b)["ratio"])
    assert all(np.isfinite(ratios)) and max(ratios) / min(ratios) < 2


def test_stopping_time():
    t = np.linspace(0, 1, 1001)
    assert stopping_time_diag(t, t, 1e12) == 1.0
    assert stopping_time_diag(t, t + 5, 1.0) == 0.0
    assert stopping_time_diag(t, t, 0.3) == pytest.approx(0.3, abs=1e-3)
    with pytest.raises(MonitorError):
        stopping_time_diag(t, t, 0.0)


def test_h_function_nondecreasing_integral(noisy):
    tr = simulate_ensemble(noisy, T, DT, 2, 0).trace
    h = h_function(tr)
    assert h.shape == tr.E.shape and np.all(np.isfinite(h))


def test_mean_ci_contains_mean():
    r = mean_ci(np.arange(10.0))
    assert r["mean"] == 4.5 and r["ci"][0] < 4.5 < r["ci"][1]
