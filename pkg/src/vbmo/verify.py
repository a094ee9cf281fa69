"""Self-check suites run by ``vbmo verify``.

Each suite returns a list of ``Check`` records; a suite passes when all of
its checks do.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .counterexample import poisson_normal_derivative
from .extension import extend_parity_at, lagrange_sample, reflect
from .fields import VectorField
from .freezing import frozen_operator, parity_defect, probe_forcing, solve_even, solve_odd
from .geometry import Domain
from .neumann import BoundaryFunction, gauss_identity_check, single_layer_at, single_layer_via_volume


@dataclass
class Check:
    suite: str
    name: str
    value: float
    threshold: float
    passed: bool
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def interior_probes(domain: Domain, n: int, rng, near: int = 10) -> np.ndarray:
    """``n - near`` uniform interior points plus ``near`` points at depths ``10^-1 .. 10^-4``."""
    x0, x1, y0, y1 = domain.grid.box
    pts = []
    while len(pts) < n - near:
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
        if domain.signed_distance(p) > 0:
            pts.append(p)
    s = rng.uniform(0, domain.length, near)
    X, _, Nin, _, _ = domain.frame_at_param(domain.param_of_arclength(s))
    depth = 10.0 ** -np.linspace(1, 4, near)
    return np.vstack([np.array(pts).reshape(-1, 2), X + depth[:, None] * Nin])


def gauss_suite(N: int = 256, probes: int = 50, seed: int = 0, tol: float = 1e-3) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for dom in (Domain.disk(N=N), Domain.ellipse(N=N)):
        t0 = time.perf_counter()
        pts = interior_probes(dom, probes, rng)
        err = max(abs(gauss_identity_check(dom, p) + 1.0) for p in pts)
        out.append(Check("gauss", f"{dom.kind}: max |int dE/dn + 1|", err, tol, err <= tol,
                         time.perf_counter() - t0))
    return out


def poisson_suite(n_fields: int = 20, N: int = 1024, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = -np.inf
    for _ in range(n_fields):
        g = rng.uniform(-1, 1, N) * rng.uniform(0.1, 10)
        gmax = np.max(np.abs(g))
        for k in range(11):
            u = poisson_normal_derivative(g, 2.0 ** -k)
            worst = max(worst, float(np.max(np.abs(u)) - 0.5 * gmax))
    return [Check("poisson", "max(sup|-d_n u| - sup|g|/2)", worst, 1e-10, worst <= 1e-10, time.perf_counter() - t0)]


def parity_suite(N: int = 256, tol: float = 1e-6, seed: int = 0) -> list[Check]:
    t0 = time.perf_counter()
    dom = Domain.disk(N=N)
    op = frozen_operator(dom, 0)
    out = []
    ro = solve_odd(op, probe_forcing(op, -1))
    re = solve_even(op, probe_forcing(op, +1))
    scale_o = float(np.max(np.abs(ro.q)))
    scale_e = float(np.max(np.abs(re.q)))
    out.append(Check("parity", "q_o even defect", parity_defect(ro.q, 1) / scale_o, tol,
                     parity_defect(ro.q, 1) <= tol * scale_o))
    out.append(Check("parity", "q_e even defect", parity_defect(re.q, 1) / scale_e, tol,
                     parity_defect(re.q, 1) <= tol * scale_e))
    # extension: normal part odd, tangential part even across the boundary
    rng = np.random.default_rng(seed)
    v = VectorField.from_function(dom.grid, lambda x, y: (np.sin(2 * x + y), np.cos(x - 3 * y)))
    s = rng.uniform(0, dom.length, 64)
    X, T, Nin, _, _ = dom.frame_at_param(dom.param_of_arclength(s))
    depth = rng.uniform(0.05, 0.5, 64) * dom.rho
    outside = X - depth[:, None] * Nin
    mirror = reflect(outside, dom)
    a = extend_parity_at(v, dom, outside, order=3)
    b = extend_parity_at(v, dom, mirror, order=3)
    n = Nin.T
    t = T.T
    dn = np.max(np.abs(np.sum(n * (a + b), axis=0)))
    dt = np.max(np.abs(np.sum(t * (a - b), axis=0)))
    scale = float(np.max(np.abs(b)))
    out.append(Check("parity", "extension defect", max(dn, dt) / scale, tol, max(dn, dt) <= tol * scale))
    # boundary-centred ball averages of the odd field d_n q_e
    dq = op.crop(op.derivative(re.padded, 1))
    M = op.M
    worst = 0.0
    for r in (2, 4, 8):
        for c in range(r, M - r, 4):
            blk = dq[c - r:c + r, M // 2 - r:M // 2 + r]
            worst = max(worst, abs(float(blk.mean())))
    sc = float(np.max(np.abs(dq)))
    out.append(Check("parity", "ball averages of odd d_n q_e", worst / sc, 1e-3, worst <= 1e-3 * sc))
    for c in out:
        c.seconds = time.perf_counter() - t0
    return out


def single_layer_suite(N: int = 256, delta: float | None = None, probes: int = 100, seed: int = 0,
                       tol: float = 1e-2) -> list[Check]:
    t0 = time.perf_counter()
    dom = Domain.disk(N=N)
    g = BoundaryFunction.from_function(dom, lambda p, s: np.cos(3 * np.arctan2(p[:, 1], p[:, 0])))
    rng = np.random.default_rng(seed)
    # probes stay clear of the collar where the volume data live
    r = 0.6 * np.sqrt(rng.uniform(0, 1, probes))
    a = rng.uniform(0, 2 * np.pi, probes)
    pts = np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
    ex = single_layer_at(g, dom, pts, grad=True)
    ap = lagrange_sample(single_layer_via_volume(g, dom, delta).values, dom.grid, pts)
    err = float(np.max(np.abs(ap - ex)) / np.max(np.abs(ex)))
    return [Check("single-layer", "volume vs quadrature gradient", err, tol, err <= tol, time.perf_counter() - t0)]


SUITES = {
    "gauss": gauss_suite,
    "poisson": poisson_suite,
    "parity": parity_suite,
    "single-layer": single_layer_suite,
}
