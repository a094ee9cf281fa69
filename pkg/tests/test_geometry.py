import json

import numpy as np
import pytest

from vbmo.errors import ConfigError, CoverageGap, OutOfChart, OutOfReach
from vbmo.geometry import Domain, PartitionOfUnity, metric_at, metric_coefficients, normal_coordinates, partition_of_unity


def test_signed_distance_disk(disk):
    assert disk.signed_distance(np.array([0.5, 0.0])) == pytest.approx(0.5, abs=1e-12)
    assert disk.signed_distance(np.array([0.0, 0.0])) == pytest.approx(1.0, abs=1e-12)
    assert disk.signed_distance(np.array([2.0, 0.0])) == pytest.approx(-1.0, abs=1e-12)


def test_projection_disk(disk):
    np.testing.assert_allclose(disk.project_to_boundary(np.array([0.5, 0.0])), [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(disk.project_to_boundary(np.array([0.0, -0.25])), [0.0, -1.0], atol=1e-12)


def test_projection_out_of_reach(disk):
    with pytest.raises(OutOfReach) as e:
        disk.project_to_boundary(np.array([0.0, 0.0]))
    assert e.value.where() == "geometry:project_to_boundary"


def test_ellipse_nearest_matches_dense_search(ellipse):
    x = np.array([0.2, 0.1])
    t, d = ellipse.nearest(x)
    tt = np.linspace(0, 2 * np.pi, 400_000, endpoint=False)
    pts = ellipse.curve.point(tt)
    k = np.argmin(np.sum((pts - x) ** 2, axis=1))
    assert np.linalg.norm(ellipse.curve.point(t) - pts[k]) < 1e-4
    assert d == pytest.approx(np.linalg.norm(pts[k] - x), abs=1e-6)


def test_ellipse_projection_near_boundary(ellipse):
    rng = np.random.default_rng(3)
    s = rng.uniform(0, ellipse.length, 20)
    X, _, Nin, _, _ = ellipse.frame_at_param(ellipse.param_of_arclength(s))
    depth = rng.uniform(-0.3, 0.3, 20) * ellipse.reach
    x = X + depth[:, None] * Nin
    np.testing.assert_allclose(ellipse.project_to_boundary(x), X, atol=1e-9)
    np.testing.assert_allclose(ellipse.signed_distance(x), depth, atol=1e-9)


def test_reach_values(disk, ellipse):
    assert disk.reach == pytest.approx(1.0)
    # ellipse: minimal radius of curvature b^2/a
    assert ellipse.reach == pytest.approx(1.0 / 1.5, rel=1e-3)


@pytest.mark.parametrize("name", ["disk", "ellipse", "star"])
def test_eikonal(name, request):
    dom = request.getfixturevalue(name)
    assert dom.eikonal_defect(dom.reach / 2) < 5e-3


def test_chart_center_and_radial_line(disk):
    j = 0
    ch = disk.chart(j)
    np.testing.assert_allclose(normal_coordinates(ch, np.zeros(2)), ch.frame.center, atol=1e-12)
    z = ch.frame.center
    n = -z / np.linalg.norm(z)
    for t in (0.01, 0.1):
        np.testing.assert_allclose(ch.forward(np.array([0.0, t])), z + t * n, atol=1e-12)


def test_chart_distance_roundtrip(shapes):
    rng = np.random.default_rng(0)
    for dom in shapes:
        ch = dom.chart(3)
        eta = rng.uniform(-0.5, 0.5, (50, 2)) * dom.rho
        x = ch.forward(eta)
        np.testing.assert_allclose(dom.signed_distance(x), eta[:, 1], atol=1e-6)
        np.testing.assert_allclose(ch.inverse(x), eta, atol=1e-9)
        np.testing.assert_allclose(dom.signed_distance(ch.forward(np.c_[eta[:, 0], 0 * eta[:, 0]])), 0, atol=1e-9)


def test_chart_jacobian_identity_at_origin(shapes):
    for dom in shapes:
        ch = dom.chart(1)
        np.testing.assert_allclose(ch.jacobian(np.zeros(2), 1e-5), np.eye(2), atol=1e-8)


def test_out_of_chart(disk):
    ch = disk.chart(0)
    with pytest.raises(OutOfChart):
        ch.forward(np.array([0.0, 5 * disk.rho]))
    with pytest.raises(OutOfChart):
        disk.chart(disk.n_charts)


def test_metric_disk_closed_form():
    dom = Domain.disk(N=64)
    mc = metric_coefficients(dom.chart(0), 64)
    # b11 = 1/J^2 - 1, J = 1 - kappa eta_n; the cylinder Jacobian is a centred difference
    np.testing.assert_allclose(mc.b11_raw, 1.0 / mc.J**2 - 1.0, atol=1e-4)
    np.testing.assert_allclose(mc.b11, mc.b11[:, ::-1])


def test_metric_exterior_point():
    chart = Domain.disk(N=64, rho=0.05).chart(0, 0.2)
    g = metric_at(chart, np.array([0.0, -0.1]))
    assert g[0, 0] - 1.0 == pytest.approx(-0.173553, abs=1e-6)
    assert g[1, 1] == pytest.approx(1.0, abs=1e-8)
    assert g[0, 1] == pytest.approx(0.0, abs=1e-8)


def test_metric_b_conditions(shapes):
    for dom in shapes:
        mc = metric_coefficients(dom.chart(2), 64)
        np.testing.assert_array_equal(mc.b11, mc.b11[:, ::-1])  # even in eta_n
        c = 32
        assert abs(mc.b11[c - 1:c + 1, c - 1:c + 1]).max() < 4 * dom.rho * 8 / 64 * 2  # ~0 at the centre
        assert np.isfinite(mc.lipschitz)


def test_flat_limit():
    dom = Domain.disk(100.0, N=64)
    mc = metric_coefficients(dom.chart(0, 0.1 + 1e-9 if 4 * dom.rho < 0.1 else min(0.1, 4 * dom.rho)), 32)
    assert np.max(np.abs(mc.b11_raw)) <= 2.1e-3


def test_partition_of_unity(disk):
    pu = PartitionOfUnity(disk)
    total = pu.member(0) + sum(pu.member(j) for j in range(1, pu.m + 1))
    closed = disk.d >= 0
    assert np.max(np.abs(total[closed] - 1.0)) < 1e-12
    for j in (0, 5, 17):
        m = pu.member(j)
        assert m.min() >= 0 and m.max() <= 1 + 1e-15
    deep = disk.d >= disk.rho
    assert np.all(pu.member(0)[deep] == 1.0)
    assert np.all(pu.member(0)[disk.d < disk.rho / 2] == 0.0)
    # chart members live within the chart
    gg = disk.grid_geometry
    for j in (1, 7):
        sup = pu.member(j) > 0
        s0 = disk.chart_centers[j - 1]
        assert np.all(np.abs(disk.wrap(gg.s[sup] - s0)) < disk.rho)
        assert np.all(gg.d[sup] < disk.rho)


def test_partition_fields_list(disk64):
    fl = partition_of_unity(disk64)
    assert len(fl) == disk64.n_charts + 1


def test_boundary_cells_covered(shapes):
    for dom in shapes:
        pu = PartitionOfUnity(dom)
        band = (dom.d >= 0) & (dom.d < dom.grid.h)
        assert pu.coverage_counts()[band].min() >= 1


def test_coverage_gap():
    with pytest.raises(CoverageGap):
        PartitionOfUnity(Domain.disk(N=64, n_charts=3))


def test_domain_json_roundtrip(tmp_path):
    dom = Domain.star(N=64)
    p = tmp_path / "d.json"
    p.write_text(json.dumps(dom.to_dict()))
    back = Domain.from_json(p)
    assert back.to_dict() == dom.to_dict()
    np.testing.assert_array_equal(back.d, dom.d)


def test_config_errors():
    with pytest.raises(ConfigError):
        Domain("square")
    with pytest.raises(ConfigError):
        Domain.disk(rho=5.0)
    with pytest.raises(ConfigError):
        Domain.star(modes=((2, 1.5, 0.0),))
