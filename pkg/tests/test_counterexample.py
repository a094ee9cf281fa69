import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vbmo.counterexample import (HalfSpaceField, ce_growth_demo, growth_fit, halfspace_bnu, is_strictly_increasing,
                                 mollified_sign, normal_multiplier, poisson_normal_derivative,
                                 single_layer_multiplier, tangential_derivative, tangential_multiplier, wavenumbers)

N = 1024
X = 2 * np.pi * np.arange(N) / N


@pytest.fixture(scope="module")
def growth():
    t0 = time.perf_counter()
    rows = ce_growth_demo(8)
    return rows, time.perf_counter() - t0


def test_constant_data():
    for h in (0.01, 1.0, 10.0):
        np.testing.assert_allclose(poisson_normal_derivative(np.ones(N), h), 0.5, atol=1e-14)


def test_single_mode():
    np.testing.assert_allclose(poisson_normal_derivative(np.cos(X), 1.0), 0.5 * np.exp(-1) * np.cos(X), atol=1e-14)
    for k in (1, 5):
        out = tangential_derivative(np.cos(k * X), 0.3)
        np.testing.assert_allclose(out, -0.5 * np.exp(-0.3 * k) * np.sin(k * X), atol=1e-14)


@given(seed=st.integers(0, 10**6), scale=st.floats(0.01, 100))
def test_poisson_bound(seed, scale):
    g = np.random.default_rng(seed).uniform(-scale, scale, N)
    for k in range(11):
        assert np.abs(poisson_normal_derivative(g, 2.0 ** -k)).max() <= 0.5 * np.abs(g).max() + 1e-10


@given(seed=st.integers(0, 10**6))
def test_even_data_give_odd_tangential(seed):
    g = np.random.default_rng(seed).standard_normal(N)
    g = 0.5 * (g + np.roll(g[::-1], 1))  # g(-x) = g(x) on the torus
    out = tangential_derivative(g, 0.05)
    np.testing.assert_allclose(out, -np.roll(out[::-1], 1), atol=1e-12)


def test_multiplier_consistency():
    xi = wavenumbers(N)[1:]
    for h in (0.01, 0.5):
        s = single_layer_multiplier(xi, h)
        # -d_n and d' of (1/2) Lambda^-1 exp(-x_n Lambda)
        np.testing.assert_allclose(np.abs(xi) * s, normal_multiplier(xi, h), rtol=1e-12)
        np.testing.assert_allclose(1j * xi * s, tangential_multiplier(xi, h), rtol=1e-12)
    assert single_layer_multiplier(np.array([0.0]), 1.0)[0] == 0.0


def test_tangential_sup_grows():
    sups = [np.abs(tangential_derivative(mollified_sign(1 << 15, ell), 2.0 ** -ell)).max() for ell in range(2, 9)]
    assert is_strictly_increasing(sups)
    slope = np.polyfit(np.arange(2, 9), sups, 1)[0]
    assert slope > 0


def test_halfspace_bnu_constant():
    # |u| = 1/2 everywhere: r^-2 * (pi r^2 / 2) / 2
    val, wit = halfspace_bnu(np.ones(N), "normal", [0.5, 1.0], rows=64)
    assert val == pytest.approx(np.pi / 4, rel=2e-3)
    assert wit[1] in (0.5, 1.0)


def test_growth_table(growth):
    rows, secs = growth
    bt = [r.bnu_tangential for r in rows]
    assert is_strictly_increasing(bt)
    assert bt[-1] / bt[0] >= 3
    # |normal part| <= 1/2 bounds the half-ball average by pi/4, up to the row quadrature
    assert all(r.bnu_normal <= np.pi / 4 * (1 + 2e-3) and r.sup_normal <= 0.5 + 1e-10 for r in rows)
    fit = growth_fit(rows)
    assert fit["slope"] > 0 and fit["r2"] > 0.9
    assert secs < 30


def test_input_errors():
    with pytest.raises(ValueError):
        ce_growth_demo(0)
    with pytest.raises(ValueError):
        ce_growth_demo(8, N=1024)
    with pytest.raises(ValueError):
        poisson_normal_derivative(np.ones(8), 0.0)
    with pytest.raises(ValueError):
        HalfSpaceField(np.ones(8), heights=[-1.0])
    f = HalfSpaceField(np.ones(8))
    assert f.N == 8 and f.x[1] == pytest.approx(np.pi / 4)
