import numpy as np
import pytest
from hypothesis import given, strategies as st

from vbmo.errors import DegenerateGrid, GridMismatch
from vbmo.fields import (ScalarField, VectorField, bmo_seminorm, bnu_average, bnu_seminorm, divergence,
                         gradient, holder_norm, load_field, multiply, save_field, vbmo_norm)
from vbmo.geometry import PartitionOfUnity
from vbmo.grid import Grid

from oracles import all_radii, brute_bmo, brute_bnu, disk_inside, half_disk_ratio, linear_mean_oscillation

UNIT = Grid((0.0, 1.0, 0.0, 1.0), 64)


def test_containers_validate():
    with pytest.raises(ValueError):
        ScalarField(UNIT, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ScalarField(UNIT, np.full((64, 64), np.nan))
    with pytest.raises(ValueError):
        VectorField(UNIT, np.zeros((64, 64)))


def test_operators_on_polynomials():
    g = Grid((-1.0, 1.0, -1.0, 1.0), 32)
    q = ScalarField.from_function(g, lambda x, y: x)
    np.testing.assert_allclose(gradient(q).values[0], 1.0, atol=1e-12)
    np.testing.assert_allclose(gradient(q).values[1], 0.0, atol=1e-12)
    np.testing.assert_allclose(divergence(VectorField.from_function(g, lambda x, y: (x, y))).values, 2.0, atol=1e-12)
    np.testing.assert_allclose(divergence(VectorField.from_function(g, lambda x, y: (-y, x))).values, 0.0, atol=1e-12)


def test_div_grad_second_order():
    errs = []
    for N in (32, 64):
        g = Grid((-1.0, 1.0, -1.0, 1.0), N)
        q = ScalarField.from_function(g, lambda x, y: np.sin(x) * np.cos(2 * y))
        lap = divergence(gradient(q)).values
        X, Y = g.mesh
        exact = -5 * np.sin(X) * np.cos(2 * Y)
        errs.append(np.max(np.abs(lap - exact)[(np.abs(X) < 0.7) & (np.abs(Y) < 0.7)]))
    assert errs[0] / errs[1] > 3.5


def test_bmo_constant_is_zero():
    f = ScalarField(UNIT, np.full((64, 64), 3.7))
    assert bmo_seminorm(f, 0.5).value == pytest.approx(0.0, abs=1e-13)


def test_bmo_sign_function():
    g = Grid((-1.0, 1.0, -1.0, 1.0), 64)
    f = ScalarField.from_function(g, lambda x, y: np.sign(y))
    assert bmo_seminorm(f, np.inf).value == pytest.approx(1.0, abs=0.05)


def test_bmo_linear_matches_closed_form():
    f = ScalarField.from_function(UNIT, lambda x, y: x)
    part = bmo_seminorm(f, 0.5)
    r = part.witness.radius
    assert part.value == pytest.approx(linear_mean_oscillation(r), rel=0.02)
    assert part.value == pytest.approx(brute_bmo(f.values, UNIT.x, UNIT.y, np.ones((64, 64), bool),
                                                 2 * UNIT.h * 2.0 ** np.arange(5)), rel=1e-12)


def test_bmo_degenerate():
    f = ScalarField(UNIT, np.zeros((64, 64)))
    with pytest.raises(DegenerateGrid):
        bmo_seminorm(f, 2 * UNIT.h)
    with pytest.raises(ValueError):
        bmo_seminorm(f, 0.5, ball_budget=0)


def test_bmo_witness_admissible(disk64):
    v = ScalarField.from_function(disk64.grid, lambda x, y: np.sin(3 * x) * y)
    part = bmo_seminorm(v, 0.5, mask=disk64.inside)
    c, r = np.array(part.witness.center), part.witness.radius
    assert disk64.signed_distance(c) >= r - 1e-12
    assert r <= 0.5


@given(a=st.floats(-50, 50, allow_nan=False), b=st.floats(-1e3, 1e3, allow_nan=False), seed=st.integers(0, 10**6))
def test_bmo_scale_and_shift(a, b, seed):
    rng = np.random.default_rng(seed)
    g = Grid((0.0, 1.0, 0.0, 1.0), 16)
    vals = rng.standard_normal((16, 16))
    base = bmo_seminorm(ScalarField(g, vals), 0.4).value
    assert bmo_seminorm(ScalarField(g, a * vals), 0.4).value == pytest.approx(abs(a) * base, rel=1e-12, abs=1e-12)
    assert bmo_seminorm(ScalarField(g, vals + b), 0.4).value == pytest.approx(base, rel=1e-9, abs=1e-9)


@given(seed=st.integers(0, 10**6), k=st.integers(2, 4))
def test_bmo_monotone_in_mu(seed, k):
    rng = np.random.default_rng(seed)
    g = Grid((0.0, 1.0, 0.0, 1.0), 32)
    f = ScalarField(g, rng.standard_normal((32, 32)).cumsum(0))
    mus = [g.h * 2.0**j + 1e-9 for j in range(k, k + 3)]
    vals = [bmo_seminorm(f, m).value for m in mus]
    assert vals == sorted(vals)


def test_bnu_zero_and_half_ball(disk):
    zero = ScalarField(disk.grid, np.zeros((disk.grid.N,) * 2))
    assert bnu_seminorm(zero, disk, 0.25).value == 0.0
    one = ScalarField(disk.grid, np.ones((disk.grid.N,) * 2))
    r = 4 * disk.grid.h
    vals = bnu_average(one.values, disk, disk.boundary_point(np.linspace(0, disk.length, 16, endpoint=False)), r)
    assert np.all(np.abs(vals - np.pi / 2) < 0.03 * np.pi / 2)
    np.testing.assert_allclose(vals, half_disk_ratio(r), rtol=5e-3)


def test_bnu_degenerate(disk64):
    f = ScalarField(disk64.grid, np.ones((64, 64)))
    with pytest.raises(DegenerateGrid):
        bnu_seminorm(f, disk64, disk64.grid.h)


@given(seed=st.integers(0, 1000))
def test_bnu_monotone_in_nu(disk64, seed):
    rng = np.random.default_rng(seed)
    f = ScalarField(disk64.grid, rng.standard_normal((64, 64)))
    h = disk64.grid.h
    a = bnu_seminorm(f, disk64, 4.01 * h).value
    b = bnu_seminorm(f, disk64, 8.01 * h).value
    assert b >= a


def test_bnu_odd_function_controlled_by_bmo(disk):
    rho = disk.rho
    d = disk.d
    f = ScalarField(disk.grid, d * np.clip(1 - np.abs(d) / rho, 0, None))
    nu = 0.25
    assert bnu_seminorm(f, disk, nu).value <= bmo_seminorm(f, nu).value + 0.05


def test_vbmo_examples(disk):
    g = disk.grid
    zero = VectorField(g, np.zeros((2, g.N, g.N)))
    assert vbmo_norm(zero, disk, 0.25, 0.25).vbmo_value == 0.0
    e1 = VectorField.from_function(g, lambda x, y: (np.ones_like(x), np.zeros_like(x)))
    rep = vbmo_norm(e1, disk, 0.25, 0.25)
    assert rep.bmo_value == 0.0 and rep.bnu_value > 0.5
    assert rep.vbmo_value == rep.bmo_value + rep.bnu_value
    rot = VectorField.from_function(g, lambda x, y: (-y, x))
    assert vbmo_norm(rot, disk, 0.25, 0.25).bnu_value <= 0.05


def test_vbmo_grid_mismatch(disk, disk64):
    v = VectorField(disk64.grid, np.zeros((2, 64, 64)))
    with pytest.raises(GridMismatch):
        vbmo_norm(v, disk, 0.25, 0.25)


def test_multiply(disk128):
    g = disk128.grid
    v = VectorField.from_function(g, lambda x, y: (-y, x))
    one = ScalarField(g, np.ones((g.N, g.N)))
    np.testing.assert_array_equal(multiply(one, v).values, v.values)
    assert not multiply(one.scaled(0.0), v).values.any()
    phi0 = ScalarField(g, PartitionOfUnity(disk128).member(0))
    w = multiply(phi0, v)
    assert np.all(disk128.d[np.any(w.values != 0, axis=0)] > disk128.rho / 2)
    with pytest.raises(GridMismatch):
        multiply(ScalarField(UNIT, np.ones((64, 64))), v)


def test_multiplication_ratio_bounded(disk128):
    g = disk128.grid
    mu = nu = 0.25
    v = VectorField.from_function(g, lambda x, y: (np.sin(3 * x) + y, np.cos(2 * y) - x * y))
    base = vbmo_norm(v, disk128, mu, nu).vbmo_value
    pu = PartitionOfUnity(disk128)
    ratios = []
    for j in (0, 1, 10):
        phi = ScalarField(g, pu.member(j))
        ratios.append(vbmo_norm(multiply(phi, v), disk128, mu, nu).vbmo_value
                      / (holder_norm(phi, mask=disk128.inside) * base))
    assert max(ratios) < 10


def test_holder_norm_of_linear():
    f = ScalarField.from_function(UNIT, lambda x, y: x)
    # sup 1 plus sup |dx|^(1/2) over dyadic separations up to half the box
    assert holder_norm(f) == pytest.approx(1 - UNIT.h / 2 + np.sqrt(32 * UNIT.h), rel=1e-12)


def test_field_file_roundtrip(tmp_path, disk64):
    rng = np.random.default_rng(1)
    v = VectorField(disk64.grid, rng.standard_normal((2, 64, 64)))
    save_field(tmp_path / "v.field", v)
    back = load_field(tmp_path / "v.field")
    assert isinstance(back, VectorField) and back.grid.same_as(v.grid)
    np.testing.assert_array_equal(back.values, v.values)
    raw = (tmp_path / "v.field").read_bytes()
    header, payload = raw.split(b"\n", 1)
    assert len(payload) == 2 * 64 * 64 * 8
    np.testing.assert_array_equal(np.frombuffer(payload, "<f8")[:64], v.values[0, 0])
    q = ScalarField(disk64.grid, v.values[1])
    save_field(tmp_path / "q.field", q)
    assert isinstance(load_field(tmp_path / "q.field"), ScalarField)
    (tmp_path / "bad.field").write_bytes(header + b"\n" + payload[:-8])
    with pytest.raises(ValueError):
        load_field(tmp_path / "bad.field")


@pytest.mark.parametrize("seed", range(3))
def test_scans_match_brute_force(disk64, seed):
    from vbmo.samples import random_smooth
    g = disk64.grid
    f = random_smooth(g, seed).values[0]
    # the scan uses dyadic radii, so the cap sits on one
    mu = 8 * g.h
    scanned = bmo_seminorm(ScalarField(g, f), mu, mask=disk64.inside).value
    exact = brute_bmo(f, g.x, g.y, disk64.inside, all_radii(g.h, mu, g.width / 2))
    assert abs(scanned - exact) <= 0.02 * exact
    scanned = bnu_seminorm(ScalarField(g, f), disk64, mu).value
    cen = disk64.boundary_point(np.linspace(0, disk64.length, 4 * g.N, endpoint=False))
    exact = brute_bnu(f, g.x, g.y, disk_inside, cen, all_radii(g.h, mu, g.width / 2))
    assert abs(scanned - exact) <= 0.02 * exact
