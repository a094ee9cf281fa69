"""Helmholtz decomposition ``v = v0 + grad q`` through localised potentials.

Sign convention: every potential ``q`` built here satisfies
``Laplace q = div(...)`` so that ``grad q`` is the gradient part of ``v``.

Pipeline
--------
1. Interior part: ``q11 = -E * div(phi_0 v)``.
2. For each boundary chart ``j`` the field ``u_j = phi_j v`` is pulled back
   to the chart cylinder and split into its tangential component ``G``
   (extended evenly in ``eta_n``) and normal component ``F`` (extended
   oddly). With ``-Laplace_x = L0 + M`` in chart coordinates:

   * tangential: ``L0 p = d_1 (G / J)`` and the remainder
     ``r = (J_s / J^2) G - M p``;
   * normal: ``L0 p = d_n F`` and ``r = (Laplace d) F - M p``.

   The chart potential is ``theta_j p + E * (theta_j r 1_Omega + p Laplace theta_j
   + 2 grad theta_j . grad p)`` (sign flipped), with ``theta_j = 1`` on the
   chart and supported in the doubled chart.
3. ``q1`` is the sum; ``w = v - grad q1``.
4. ``q2`` solves the discrete Neumann problem with ``q1`` as lift, so
   ``q = q1 + q2`` is the discrete projection of ``v``: ``div_h(v - grad_h q)``
   vanishes at every interior row and the closure matches ``v . n``.
5. ``v0 = v - grad_h q``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .cutoffs import bump
from .errors import CompatibilityViolation, ConvergenceFailure, GridMismatch
from .extension import fill_exterior, lagrange_sample
from .fields import ScalarField, VectorField, divergence, gradient, vbmo_norm
from .freezing import FrozenOperator, SeriesConfig, solve_even, solve_odd
from .geometry import Domain, PartitionOfUnity, metric_coefficients
from .neumann import BoundaryFunction, normal_trace, solve_neumann
from .singular import E_conv_div, newtonian_potential

log = logging.getLogger(__name__)


@dataclass
class DecomposeConfig:
    """Knobs of ``helmholtz_decompose``.

    ``mu`` / ``nu`` default to a quarter of the reach; ``seminorms=False``
    skips the (comparatively slow) vBMO diagnostics.
    """

    chart_M: int = 64
    series: SeriesConfig = field(default_factory=SeriesConfig)
    mu: float | None = None
    nu: float | None = None
    ball_budget: int = 1024
    seminorms: bool = True
    keep_charts: bool = True
    residual_margin: float = 3.0  # grid spacings excluded next to the boundary
    compat_tol: float = 1e-6


@dataclass
class ChartPotential:
    """Local parts ``theta_j p`` of one chart on the grid cells ``idx`` plus series statistics."""

    j: int
    idx: np.ndarray
    tangential: np.ndarray
    normal: np.ndarray
    terms: tuple[int, int]
    max_ratio: float
    series_residual: float


@dataclass
class DecompositionResult:
    v0: VectorField
    grad_q: VectorField
    q: ScalarField
    q1: ScalarField
    q2: ScalarField
    q11: ScalarField
    q12: ScalarField  # tangential chart potentials
    q13: ScalarField  # normal chart potentials
    charts: list
    diagnostics: dict


# ----------------------------------------------------------------- helpers
def _interior_mask(domain: Domain, margin: float) -> np.ndarray:
    return domain.d > margin * domain.grid.h


def _test_functions(domain: Domain):
    """Polynomial bumps ``(1 - |x - c|^2 / R^2)^4`` inside the domain: a boundary ring and an interior lattice.

    Yields ``(grad_x, grad_y, laplacian)`` in closed form.
    """
    g = domain.grid
    h = g.h
    X, Y = g.mesh
    specs = []
    R = max(4.0 * domain.rho, 8.0 * h)
    ss = np.arange(0.0, domain.length, R)
    X0, _, Nin, _, _ = domain.frame_at_param(domain.param_of_arclength(ss))
    specs += [(c, R) for c in X0 + (R + 2.0 * h) * Nin]
    Ri = max(domain.reach / 4.0, R)
    gi = domain.d > Ri + 2.0 * h
    if gi.any():
        step = max(1, int(Ri / h))
        pts = g.points.reshape(g.N, g.N, 2)[::step, ::step][gi[::step, ::step]]
        specs += [(c, Ri) for c in pts]
    k = 4
    for c, r in specs:
        S = ((X - c[0]) ** 2 + (Y - c[1]) ** 2) / r**2
        m = S < 1
        if not m.any():
            continue
        a = np.where(m, 1.0 - S, 0.0)
        f1 = -k * a ** (k - 1)
        f2 = k * (k - 1) * a ** (k - 2)
        yield (f1 * 2 * (X - c[0]) / r**2 * m, f1 * 2 * (Y - c[1]) / r**2 * m, (f2 * 4 * S + f1 * 4) / r**2 * m)


def weak_residual(q: ScalarField, v: VectorField, domain: Domain) -> float:
    """``max |int q Laplace psi + int v . grad psi| / (|v|_2 |grad psi|_2)`` over bumps ``psi`` in the domain.

    The weak form of ``Laplace q = div v``; unlike a finite-difference
    residual it stays meaningful when the partition cut-offs span only a few
    cells.
    """
    h2 = domain.grid.h ** 2
    vin = np.where(domain.inside[None], v.values, 0.0)
    nv = float(np.sqrt(np.sum(vin**2) * h2))
    worst = 0.0
    for gx, gy, lap in _test_functions(domain):
        a = np.sum(q.values * lap) * h2
        b = -np.sum(vin[0] * gx + vin[1] * gy) * h2
        ng = float(np.sqrt(np.sum(gx**2 + gy**2) * h2))
        if nv > 0 and ng > 0:
            worst = max(worst, abs(a - b) / (nv * ng))
    return worst


def div_norm(v: VectorField, domain: Domain, margin: float = 2.0) -> float:
    """``|| div_h v ||_2`` over cells more than ``margin`` spacings inside."""
    return divergence(v).l2(_interior_mask(domain, margin))


def l2_inside(v, domain: Domain) -> float:
    return v.l2(domain.inside)


def build_q1_interior(v: VectorField, domain: Domain, pu: PartitionOfUnity | None = None) -> ScalarField:
    """``q11 = -E * div(phi_0 v)``, so ``Laplace q11 = div(phi_0 v)``."""
    pu = pu or PartitionOfUnity(domain)
    F = VectorField(v.grid, pu.phi0[None] * np.where(domain.inside[None], v.values, 0.0))
    return E_conv_div(F).scaled(-1.0)


class _ChartStage:
    """Shared state for the per-chart solves of one field."""

    def __init__(self, v: VectorField, domain: Domain, cfg: DecomposeConfig, pu: PartitionOfUnity | None = None):
        self.v = v
        self.domain = domain
        self.cfg = cfg
        self.pu = pu or PartitionOfUnity(domain)
        self.vfill = fill_exterior(v.values, domain)
        self.chi = domain.cell_fraction
        self.gg = domain.grid_geometry

    def solve(self, j: int, parts=("tangential", "normal")):
        """Return local potentials and volume sources (full-grid arrays) for chart ``j`` (0-based)."""
        dom, cfg = self.domain, self.cfg
        rho = dom.rho
        chart = dom.chart(j, 4.0 * rho)
        mc = metric_coefficients(chart, cfg.chart_M)
        op = FrozenOperator(mc.b11, rho, cfg.series, chart)
        a = op.axis
        E1, En = np.meshgrid(a, a, indexing="ij")
        fold = np.abs(En)
        sgn = np.sign(En)
        pts = chart.forward(np.stack([E1, fold], axis=-1), check=False)
        vv = lagrange_sample(self.vfill, dom.grid, pts)
        phi = self.pu.weights_at(j + 1, E1, fold)
        u = phi[None] * vv
        t = dom.param_of_arclength(chart.s0 + a)
        _, T, Nin, kappa, dkds = dom.frame_at_param(t)
        kap = kappa[:, None]
        J = 1.0 - kap * fold
        Js = -dkds[:, None] * fold
        G = T[:, 0, None] * u[0] + T[:, 1, None] * u[1]
        F = Nin[:, 0, None] * u[0] + Nin[:, 1, None] * u[1]
        F_o = sgn * F
        out = {}
        for part in parts:
            try:
                if part == "tangential":
                    res = solve_even(op, G / J)
                else:
                    res = solve_odd(op, F_o)
            except ConvergenceFailure as exc:
                raise ConvergenceFailure(f"chart {j}: {exc}", stage=f"chart {j} {part}") from exc
            P = res.padded
            d1 = op.crop(op.derivative(P, 0))
            dn = op.crop(op.derivative(P, 1))
            Mp = mc.c[0] * d1 + mc.c[1] * dn
            if part == "tangential":
                r = (Js / J**2) * G - Mp
            else:
                r = dom.laplacian_distance(kap, fold) * F_o * sgn - Mp
            out[part] = (res, self._to_grid(op, chart, res.q, r))
        return out

    def _to_grid(self, op: FrozenOperator, chart, p: np.ndarray, r: np.ndarray):
        dom = self.domain
        g = dom.grid
        h = g.h
        rho = dom.rho
        e1 = dom.wrap(self.gg.s - chart.s0)
        en = self.gg.d
        reach = 2 * rho + 3 * h
        region = (np.abs(e1) < reach) & (np.abs(en) < reach)
        idx = np.flatnonzero(region)
        hh = op.spacing
        ci = (e1.ravel()[idx] + 4 * rho) / hh - 0.5
        cj = (en.ravel()[idx] + 4 * rho) / hh - 0.5
        P = np.zeros(g.N * g.N)
        R = np.zeros(g.N * g.N)
        P[idx] = ndimage.map_coordinates(p, [ci, cj], order=3, mode="nearest")
        R[idx] = ndimage.map_coordinates(r, [ci, cj], order=3, mode="nearest")
        P = P.reshape(g.N, g.N)
        R = R.reshape(g.N, g.N)
        theta = bump(np.abs(e1) / rho) * bump(np.abs(en) / rho)
        theta = np.where(region, theta, 0.0)
        tx, ty = np.gradient(theta, h, edge_order=2)
        px, py = np.gradient(P, h, edge_order=2)
        lap_t = np.gradient(tx, h, axis=0, edge_order=2) + np.gradient(ty, h, axis=1, edge_order=2)
        src = theta * R * self.chi + P * lap_t + 2 * (tx * px + ty * py)
        local = theta * P
        return local, src, np.flatnonzero(theta > 0)


def _chart_potential(stage: _ChartStage, j: int, part: str) -> ScalarField:
    out = stage.solve(j, (part,))
    _, (local, src, _) = out[part]
    pot = newtonian_potential(ScalarField(stage.domain.grid, src), gauge="free").values
    return ScalarField(stage.domain.grid, -(local + pot))


def build_q1_tangential(v: VectorField, domain: Domain, j: int, cfg: DecomposeConfig | None = None) -> ScalarField:
    """Tangential chart potential of chart ``j``: ``Laplace q = div w_j^tan`` in the domain."""
    return _chart_potential(_ChartStage(v, domain, cfg or DecomposeConfig()), j, "tangential")


def build_q1_normal(v: VectorField, domain: Domain, j: int, cfg: DecomposeConfig | None = None) -> ScalarField:
    """Normal chart potential of chart ``j``: ``Laplace q = div w_j^nor`` in the domain."""
    return _chart_potential(_ChartStage(v, domain, cfg or DecomposeConfig()), j, "normal")


def chart_fields(v: VectorField, domain: Domain, j: int, pu: PartitionOfUnity | None = None):
    """Grid fields ``w_j^tan = (t . phi_j v) t`` and ``w_j^nor = (n . phi_j v) n`` on the domain."""
    pu = pu or PartitionOfUnity(domain)
    phi = pu.member(j + 1)
    gg = domain.grid_geometry
    u = phi[None] * np.where(domain.inside[None], v.values, 0.0)
    G = np.sum(gg.tangent * u, axis=0)
    F = np.sum(gg.normal * u, axis=0)
    return VectorField(v.grid, G[None] * gg.tangent), VectorField(v.grid, F[None] * gg.normal)


# ---------------------------------------------------------------- pipeline
def build_q1(v: VectorField, domain: Domain, cfg: DecomposeConfig, pu: PartitionOfUnity | None = None):
    """``q1 = q11 + q12 + q13`` and the per-chart records."""
    pu = pu or PartitionOfUnity(domain)
    g = domain.grid
    q11 = build_q1_interior(v, domain, pu)
    stage = _ChartStage(v, domain, cfg, pu)
    loc = {"tangential": np.zeros((g.N, g.N)), "normal": np.zeros((g.N, g.N))}
    src = {"tangential": np.zeros((g.N, g.N)), "normal": np.zeros((g.N, g.N))}
    charts = []
    for j in range(domain.n_charts):
        out = stage.solve(j)
        rec = {}
        for part, (res, (local, s, idx)) in out.items():
            loc[part] += local
            src[part] += s
            rec[part] = (res, local, idx)
        rt, lt, it = rec["tangential"]
        rn, ln, iN = rec["normal"]
        idx = np.union1d(it, iN)
        charts.append(ChartPotential(
            j, idx if cfg.keep_charts else np.empty(0, int),
            lt.ravel()[idx] if cfg.keep_charts else np.empty(0),
            ln.ravel()[idx] if cfg.keep_charts else np.empty(0),
            (rt.n_terms, rn.n_terms), max(rt.max_ratio, rn.max_ratio), max(rt.residual, rn.residual)))
    q1x = {}
    for part in ("tangential", "normal"):
        pot = newtonian_potential(ScalarField(g, src[part]), gauge="free").values
        q1x[part] = ScalarField(g, -(loc[part] + pot))
    return q11, q1x["tangential"], q1x["normal"], charts


def _forced_trace(trace: BoundaryFunction, natural: BoundaryFunction, tol: float) -> BoundaryFunction:
    """Check prescribed normal data against the flux of ``v``; ``int (g - v.n)`` must vanish."""
    g = trace.resampled(natural.n) if trace.n != natural.n else trace
    scale = max(g.sup(), natural.sup())
    defect = abs(g.integral() - natural.integral()) / (g.length * scale) if scale > 0 else 0.0
    if defect > tol:
        raise CompatibilityViolation(f"prescribed trace violates the flux balance (defect {defect:.3g} > {tol:.3g})",
                                     stage="helmholtz_decompose", module="neumann")
    return g


def helmholtz_decompose(v: VectorField, domain: Domain, config: DecomposeConfig | None = None,
                        trace: BoundaryFunction | None = None) -> DecompositionResult:
    """Split ``v`` into ``v0 + grad q`` with ``v0`` discretely solenoidal and tangential.

    ``trace`` replaces the sampled ``v . n`` as Neumann data; it must carry
    the same total flux (``CompatibilityViolation`` otherwise).

    Errors from any stage propagate with the failing chart or stage named in
    ``VbmoError.where()``.
    """
    cfg = config or DecomposeConfig()
    if not v.grid.same_as(domain.grid):
        raise GridMismatch("field and domain grids differ", stage="helmholtz_decompose", module="decompose")
    t0 = time.perf_counter()
    g = domain.grid
    inside = domain.inside
    vin = VectorField(g, np.where(inside[None], v.values, 0.0))
    pu = PartitionOfUnity(domain)
    q11, q12, q13, charts = build_q1(v, domain, cfg, pu)
    q1 = q11 + q12 + q13
    gq1 = gradient(q1)
    w = v - gq1
    trace_v = normal_trace(v, domain)
    if trace is not None:
        trace_v = _forced_trace(trace, trace_v, cfg.compat_tol)
    rhs = divergence(w)
    q2 = solve_neumann(trace_v, domain, rhs=rhs, lift=q1)
    q = q1 + q2
    grad_q = gradient(q)
    v0 = v - grad_q
    t1 = time.perf_counter()

    margin = cfg.residual_margin
    deep = _interior_mask(domain, margin)
    div_v = divergence(v)
    lap_q1 = divergence(gq1)
    v_norm = l2_inside(v, domain)
    dv = div_v.l2(deep)
    diag = {
        "v_l2": v_norm,
        "div_v_l2": dv,
        "q1_weak_residual": weak_residual(q1, v, domain),
        "q1_fd_residual": (lap_q1 - div_v).l2(deep),
        "div_v0_l2": div_norm(v0, domain),
        "div_v0_rel": div_norm(v0, domain) / v_norm if v_norm > 0 else 0.0,
        "trace_v0_sup": normal_trace(v0, domain).sup(),
        "trace_v_sup": trace_v.sup(),
        "v0_l2": l2_inside(v0, domain),
        "grad_q_l2": l2_inside(grad_q, domain),
        "grad_q1_l2": l2_inside(gq1, domain),
        "grad_q2_l2": l2_inside(gradient(q2), domain),
        "n_charts": len(charts),
        "series_max_ratio": max((c.max_ratio for c in charts), default=0.0),
        "series_max_residual": max((c.series_residual for c in charts), default=0.0),
        "series_max_terms": max((max(c.terms) for c in charts), default=0),
        "additivity": float(np.max(np.abs(v0.values + grad_q.values - v.values))),
        "seconds_pipeline": t1 - t0,
    }
    # collar sup of grad q11 (bounded away from the support of phi_0 v)
    collar = (domain.d > 0) & (domain.d < domain.rho / 4)
    gq11 = gradient(q11)
    diag["grad_q11_collar_sup"] = float(np.max(np.hypot(*gq11.values)[collar])) if collar.any() else 0.0
    if cfg.seminorms:
        mu = cfg.mu or domain.reach / 4
        nu = cfg.nu or domain.reach / 4
        rv = vbmo_norm(vin, domain, mu, nu, cfg.ball_budget)
        rq = vbmo_norm(VectorField(g, np.where(inside[None], grad_q.values, 0.0)), domain, mu, nu, cfg.ball_budget)
        rq1 = vbmo_norm(VectorField(g, np.where(inside[None], gq1.values, 0.0)), domain, mu, nu, cfg.ball_budget)
        rv0 = vbmo_norm(VectorField(g, np.where(inside[None], v0.values, 0.0)), domain, mu, nu, cfg.ball_budget)
        vb = rv.vbmo_value
        diag.update({
            "vbmo_v": vb, "vbmo_v0": rv0.vbmo_value, "vbmo_grad_q": rq.vbmo_value, "vbmo_grad_q1": rq1.vbmo_value,
            "ratio_grad_q": rq.vbmo_value / vb if vb > 0 else 0.0,
            "ratio_grad_q1": rq1.vbmo_value / vb if vb > 0 else 0.0,
            "trace_v0_rel_vbmo": diag["trace_v0_sup"] / vb if vb > 0 else 0.0,
            "mu": mu, "nu": nu,
        })
    diag["seconds_total"] = time.perf_counter() - t0
    log.info("decomposition finished in %.2fs", diag["seconds_total"])
    return DecompositionResult(v0, grad_q, q, q1, q2, q11, q12, q13, charts, diag)


def idempotence_check(result: DecompositionResult, domain: Domain, config: DecomposeConfig | None = None) -> dict:
    """Re-decompose ``v0`` and ``grad q``; report the cross-component defects."""
    cfg = config or DecomposeConfig(seminorms=False, keep_charts=False)
    a = helmholtz_decompose(result.v0, domain, cfg)
    b = helmholtz_decompose(result.grad_q, domain, cfg)
    n0 = l2_inside(result.v0, domain)
    nq = l2_inside(result.grad_q, domain)
    da = l2_inside(a.grad_q, domain)
    db = l2_inside(b.v0, domain)
    return {
        "grad_q_of_v0": da, "v0_of_grad_q": db,
        "grad_q_of_v0_rel": da / n0 if n0 > 0 else da,
        "v0_of_grad_q_rel": db / nq if nq > 0 else db,
    }
