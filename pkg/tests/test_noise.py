import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acns.noise import (build_noise, coarsen_increments, h1_audit, noise_apply, noise_norm_sq,
                        path_generator, sample_wiener, wiener_path)
from acns.spaces import VectorField, random_div_free_field


def test_additive_only(geom):
    nz = build_noise(geom, [0.0, 0.0], [3, 3], [0.5, 0.2], [0, 1])
    v = random_div_free_field(geom, np.random.default_rng(0))
    w = random_div_free_field(geom, np.random.default_rng(1))
    for gv, gw, h in zip(noise_apply(0.0, v, nz), noise_apply(0.0, w, nz), nz.h):
        np.testing.assert_array_equal(gv.values, h)
        np.testing.assert_array_equal(gw.values, h)


def test_zero_input_zero_output(geom):
    nz = build_noise(geom, [0.4, 0.1], [4, 2])
    zero = VectorField(np.zeros((2,) + geom.shape), geom)
    assert all(np.all(g.values == 0) for g in noise_apply(0.0, zero, nz))


def test_lipschitz_audit_single_channel(geom):
    nz = build_noise(geom, [0.7], [5], [0.3], [2])
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        v, w = random_div_free_field(geom, rng), random_div_free_field(geom, rng)
        d = [a - b for a, b in zip(noise_apply(0, v, nz), noise_apply(0, w, nz))]
        dv = v - w
        worst = max(worst, noise_norm_sq(d) / geom.integrate((dv.values**2).sum(axis=0)))
    assert worst <= 0.7**2 * (1 + 1e-10)


def test_h1_audit_zero_violations(geom):
    nz = build_noise(geom, [0.5, 0.3], [4, 3], [0.2, 0.0], [0, 1])
    rep = h1_audit(nz, pairs=100, seed=2)
    assert rep["violations"] == 0
    assert rep["max_lipschitz_ratio"] <= nz.K


def test_declared_K_too_small(geom):
    with pytest.raises(ValueError):
        build_noise(geom, [0.5], [3], K=0.1)


def test_wiener_variance():
    inc = sample_wiener(0.01, 100000, seed=123)
    var = inc.dw.var()
    assert 0.95 * 0.01 <= var <= 1.05 * 0.01


def test_wiener_determinism_and_empty():
    a, b = sample_wiener(0.1, 5, seed=9), sample_wiener(0.1, 5, seed=9)
    np.testing.assert_array_equal(a.dw, b.dw)
    assert sample_wiener(0.1, 0, seed=1).dw.size == 0
    with pytest.raises(ValueError):
        sample_wiener(0.0, 2)


@given(st.integers(0, 2**63), st.integers(0, 1000))
def test_path_streams_reproducible(master, idx):
    a = path_generator(master, idx).standard_normal(4)
    b = path_generator(master, idx).standard_normal(4)
    np.testing.assert_array_equal(a, b)


@given(st.integers(1, 4))
def test_coarsening_preserves_sums(factor):
    dw = wiener_path(np.random.default_rng(0), 8 * factor, 0.01, 2)
    c = coarsen_increments(dw, factor)
    assert c.shape == (8, 2)
    np.testing.assert_allclose(c.sum(axis=0), dw.sum(axis=0), atol=1e-14)
