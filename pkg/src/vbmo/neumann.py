"""Boundary data, layer potentials and the discrete Neumann problem.

Boundary integrals use the trapezoid rule in arclength (spectrally accurate
for smooth periodic integrands), refined so the node spacing stays well
below the distance of the evaluation point to the boundary.

The Neumann solver discretises ``div grad`` with the composition of the
centred divergence and gradient used everywhere else in the package, so
that ``w - grad q`` is discretely divergence free. Cells within two grid
spacings of the boundary carry a one-sided closure row instead: a quadratic
along the normal through the cell and two interior samples, whose slope at
the boundary is prescribed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.signal import resample

from .cutoffs import bump, bump_derivative
from .errors import CompatibilityViolation, ProbeOutsideDomain, QuadratureDegenerate, SolverDivergence
from .extension import lagrange_sample
from .fields import ScalarField, VectorField, divergence, gradient
from .grid import lagrange_stencil
from .singular import newtonian_potential, potential_gradient


# ------------------------------------------------------------ boundary data
@dataclass
class BoundaryFunction:
    """Samples ``g(s_k)`` at uniform arclength ``s_k = k L / n`` on a closed curve."""

    values: np.ndarray
    length: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or len(self.values) < 4:
            raise ValueError("need at least 4 boundary samples")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("boundary values must be finite")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def s(self) -> np.ndarray:
        return self.length * np.arange(self.n) / self.n

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @classmethod
    def from_function(cls, domain, fn, n: int | None = None) -> "BoundaryFunction":
        """Sample ``fn(points, s)`` (points of shape (n, 2)) on the boundary."""
        n = n or default_samples(domain)
        s = domain.length * np.arange(n) / n
        pts = domain.boundary_point(s)
        return cls(np.broadcast_to(fn(pts, s), (n,)).astype(float), domain.length)

    @classmethod
    def zeros(cls, domain, n: int | None = None) -> "BoundaryFunction":
        return cls(np.zeros(n or default_samples(domain)), domain.length)

    def resampled(self, n: int) -> np.ndarray:
        """Trigonometric interpolant on ``n`` uniform nodes."""
        if n == self.n:
            return self.values.copy()
        return resample(self.values, n)

    def at(self, s) -> np.ndarray:
        """Values at arbitrary arclength positions (refined trig interpolant, then linear)."""
        fine = self.resampled(16 * self.n)
        sf = self.length * np.arange(len(fine)) / len(fine)
        return np.interp(np.mod(s, self.length), sf, fine, period=self.length)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.spacing)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_dict(self) -> dict:
        return {"samples": self.values.tolist(), "length": self.length}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundaryFunction":
        return cls(np.asarray(d["samples"], dtype=float), float(d["length"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "BoundaryFunction":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_samples(domain) -> int:
    """Two samples per grid spacing of boundary length (rounded to even)."""
    n = int(math.ceil(2 * domain.length / domain.grid.h))
    return n + (n % 2)


# ---------------------------------------------------------------- quadrature
@dataclass(frozen=True)
class BoundaryNodes:
    s: np.ndarray
    points: np.ndarray
    normal: np.ndarray  # exterior unit normal
    weight: float


def boundary_nodes(domain, n: int) -> BoundaryNodes:
    return _nodes_cached(domain, int(n))


@lru_cache(maxsize=32)
def _nodes_cached(domain, n):
    s = domain.length * np.arange(n) / n
    t = domain.param_of_arclength(s)
    X, _, Nin, _, _ = domain.frame_at_param(t)
    return BoundaryNodes(s, X, -Nin, domain.length / n)


def _node_count(domain, dist: float, base: int, per: float = 6.0, cap: int = 1 << 20) -> int:
    # keep the spacing below dist / per
    need = int(math.ceil(per * domain.length / max(dist, 1e-300)))
    n = max(base, need)
    return int(min(cap, 1 << int(math.ceil(math.log2(n)))))


def _interior_probe(domain, x) -> tuple[np.ndarray, float]:
    x = np.asarray(x, dtype=float).reshape(2)
    d = domain.signed_distance(x)
    if not d > 0:
        raise ProbeOutsideDomain(f"probe {x.tolist()} is not inside the domain (d={d:.3g})", stage="probe")
    return x, float(d)


def _double_layer_kernel(x, nodes: BoundaryNodes):
    # dE/dn_y (x - y) = (x - y) . n_y / (2 pi |x - y|^2)
    r = x[None, :] - nodes.points
    return np.sum(r * nodes.normal, axis=1) / (2 * np.pi * np.sum(r * r, axis=1))


def gauss_identity_check(domain, x, base: int = 1024) -> float:
    """Boundary integral of ``dE/dn_y (x - y)``; equals ``-1`` for interior ``x``."""
    x, d = _interior_probe(domain, x)
    nodes = boundary_nodes(domain, _node_count(domain, d, base))
    return float(np.sum(_double_layer_kernel(x, nodes)) * nodes.weight)


def abs_kernel_integral(domain, x, base: int = 1024) -> float:
    x, d = _interior_probe(domain, x)
    nodes = boundary_nodes(domain, _node_count(domain, d, base))
    return float(np.sum(np.abs(_double_layer_kernel(x, nodes))) * nodes.weight)


def abs_kernel_bound(domain, probes=None, levels: int = 10) -> dict:
    """``sup_x int |dE/dn_y(x - y)| dH(y)`` over interior probes.

    Default probes: the origin (if inside) and points at depth ``2^-k`` along
    the inward normal at the first chart centre. ``plateau`` is the relative
    change between the last two dyadic probes.
    """
    if probes is None:
        t0 = domain.param_of_arclength(0.0)
        X, _, Nin, _, _ = domain.frame_at_param(np.array([t0]))
        depths = [2.0 ** -k for k in range(1, levels + 1) if 2.0 ** -k < domain.reach]
        near = [X[0] + a * Nin[0] for a in depths]
        probes = ([np.zeros(2)] if domain.signed_distance(np.zeros(2)) > 0 else []) + near
    else:
        depths = []
    vals = [abs_kernel_integral(domain, p) for p in probes]
    near_vals = vals[-len(depths):] if depths else []
    plateau = abs(near_vals[-1] - near_vals[-2]) / near_vals[-1] if len(near_vals) >= 2 else float("nan")
    return {"value": float(max(vals)), "values": vals, "depths": depths, "plateau": plateau}


# -------------------------------------------------------------- single layer
def _check_sampling(g: BoundaryFunction, domain, what: str):
    if g.spacing > domain.grid.h * (1 + 1e-9):
        raise QuadratureDegenerate(f"boundary spacing {g.spacing:.3g} is coarser than the grid ({domain.grid.h:.3g})",
                                   stage=what)


def single_layer_at(g: BoundaryFunction, domain, pts, grad: bool = False, base: int | None = None):
    """``int E(x - y) g(y) dH(y)`` (or its gradient) at arbitrary off-boundary points.

    Points within a few node spacings of the boundary are evaluated with a
    refined node set.
    """
    _check_sampling(g, domain, "single_layer")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    base = base or max(g.n, 1024)
    dist = np.abs(domain.signed_distance(pts))
    out = np.zeros((2, len(pts))) if grad else np.zeros(len(pts))
    counts = np.array([_node_count(domain, dd, base) for dd in np.atleast_1d(dist)])
    for n in np.unique(counts):
        sel = np.nonzero(counts == n)[0]
        nodes = boundary_nodes(domain, n)
        gv = g.resampled(n) * nodes.weight
        chunk = max(1, int(4_000_000 // n))
        for lo in range(0, len(sel), chunk):
            idx = sel[lo:lo + chunk]
            r = pts[idx, None, :] - nodes.points[None]
            r2 = np.sum(r * r, axis=-1)
            if grad:
                k = -r / (2 * np.pi * r2[..., None])
                out[:, idx] = np.einsum("mnc,n->cm", k, gv)
            else:
                out[idx] = (-np.log(r2) / (4 * np.pi)) @ gv
    return out


def single_layer(g: BoundaryFunction, domain) -> ScalarField:
    """Single-layer potential on the domain grid (boundary quadrature, refined near the boundary)."""
    grid = domain.grid
    vals = single_layer_at(g, domain, grid.points).reshape(grid.N, grid.N)
    return ScalarField(grid, vals)


# ------------------------------------------------------- collar extension
@dataclass
class CollarExtension:
    """``g_e = g(pi x)``, ``theta_d = bump(|d| / delta)``, ``g_ec = theta_d g_e`` and ``f_theta_delta``."""

    g_e: np.ndarray
    theta_d: np.ndarray
    g_ec: np.ndarray
    f_theta_delta: np.ndarray
    delta: float


def default_delta(domain) -> float:
    """Collar width ``reach / 8`` (so ``2 delta`` stays well inside the reach)."""
    return domain.reach / 8.0


def collar_extension(g: BoundaryFunction, domain, delta: float | None = None) -> CollarExtension:
    delta = default_delta(domain) if delta is None else float(delta)
    if not 2 * delta < domain.reach:
        raise ValueError("collar width 2*delta must stay below the reach")
    gg = domain.grid_geometry
    band = np.abs(gg.d) < 2 * delta
    g_e = np.zeros_like(gg.d)
    g_e[band] = g.at(gg.s[band])
    th = bump(np.abs(gg.d) / delta)
    # d/dd of theta(d / delta) inside the domain (d > 0)
    dth = bump_derivative(gg.d / delta) / delta
    lap_d = domain.laplacian_distance(gg.kappa, gg.d)
    f = np.where(band, th * lap_d + dth, 0.0)
    return CollarExtension(g_e, th, th * g_e, f, delta)


def single_layer_via_volume(g: BoundaryFunction, domain, delta: float | None = None) -> VectorField:
    """Gradient of the single layer through the volume identity

        delta_Gamma g = div(g_ec 1_Omega grad d) - 1_Omega g_e f_theta_delta.

    The first term is evaluated as ``grad_h div_h (E * F)`` with spectral
    logarithmic potentials of the (discontinuous) components of
    ``F = g_ec 1_Omega grad d``; the second-derivative kernel applied directly
    to jump data rings at the grid scale. The indicator is replaced by cell
    area fractions.
    """
    ce = collar_extension(g, domain, delta)
    chi = domain.cell_fraction
    nrm = domain.grid_geometry.normal
    grid = domain.grid
    F = ce.g_ec * chi * nrm
    U = VectorField(grid, np.stack([newtonian_potential(ScalarField(grid, F[c]), gauge="free").values
                                    for c in range(2)]))
    I1 = gradient(divergence(U))
    I2 = potential_gradient(ScalarField(grid, chi * ce.g_e * ce.f_theta_delta))
    return VectorField(grid, I1.values - I2.values)


# ------------------------------------------------------------ normal trace
TRACE_DEPTHS = (3.0, 4.0, 5.0)


def normal_trace(w: VectorField, domain, n: int | None = None) -> BoundaryFunction:
    """``w . n`` on the boundary (exterior normal) by one-sided extrapolation.

    ``w`` is sampled with local bicubic interpolation at depths ``3h, 4h, 5h``
    along the inward normal (stencils stay inside the domain) and extrapolated
    quadratically to the boundary.
    """
    n = n or default_samples(domain)
    h = domain.grid.h
    nodes = boundary_nodes(domain, n)
    Nin = -nodes.normal
    a = np.array(TRACE_DEPTHS) * h
    samples = [lagrange_sample(w.values, w.grid, nodes.points + ak * Nin) for ak in a]
    c = _extrapolation_weights(a, 0.0)
    wb = sum(ck * sk for ck, sk in zip(c, samples))
    return BoundaryFunction(np.sum(wb.T * nodes.normal, axis=1), domain.length)


def _extrapolation_weights(nodes, x):
    nodes = np.asarray(nodes, dtype=float)
    out = []
    for k in range(len(nodes)):
        lk = 1.0
        for m in range(len(nodes)):
            if m != k:
                lk = lk * (x - nodes[m]) / (nodes[k] - nodes[m])
        out.append(lk)
    return out


# ----------------------------------------------------------- Neumann solve
@dataclass
class NeumannSystem:
    """Sparse bordered system for ``div_h grad_h q = rhs`` with a slope closure."""

    domain: object
    unknown: np.ndarray  # bool grid mask
    interior: np.ndarray  # rows using div_h grad_h
    closure: np.ndarray  # rows using the normal closure
    number: np.ndarray  # grid -> unknown index (-1 elsewhere)
    matrix: sp.csr_matrix
    closure_op: sp.csr_matrix  # closure rows applied to a full-grid field
    closure_cells: np.ndarray  # flat indices of closure cells
    closure_s: np.ndarray  # arclength of their projections


CLOSURE_DEPTHS = (3.0, 4.5)


def _divgrad_offsets():
    # div_h grad_h with centred differences: (q[i+2] - 2q[i] + q[i-2]) / 4h^2 per axis
    return [((2, 0), 1.0), ((-2, 0), 1.0), ((0, 2), 1.0), ((0, -2), 1.0), ((0, 0), -4.0)]


@lru_cache(maxsize=8)
def neumann_system(domain) -> NeumannSystem:
    g = domain.grid
    N, h = g.N, g.h
    gg = domain.grid_geometry
    d = gg.d
    unknown = d > -1.5 * h
    interior = d > 2.0 * h
    closure = unknown & ~interior
    if np.any(unknown[[0, 1, -2, -1], :]) or np.any(unknown[:, [0, 1, -2, -1]]):
        raise SolverDivergence("domain touches the grid edge", stage="solve_neumann")
    number = -np.ones(N * N, dtype=int)
    flat_unknown = np.flatnonzero(unknown)
    number[flat_unknown] = np.arange(len(flat_unknown))
    nu = len(flat_unknown)

    rows, cols, vals = [], [], []
    ii, jj = np.nonzero(interior)
    r_int = number[ii * N + jj]
    for (di, dj), c in _divgrad_offsets():
        col = number[(ii + di) * N + (jj + dj)]
        if np.any(col < 0):
            raise SolverDivergence("interior stencil leaves the unknown set", stage="solve_neumann")
        rows.append(r_int)
        cols.append(col)
        vals.append(np.full(len(col), c / (4 * h * h)))

    # closure rows: slope at the boundary of the quadratic through
    # (d_x, q_x), (D1, q(X + D1 n)), (D2, q(X + D2 n))
    ci, cj = np.nonzero(closure)
    cflat = ci * N + cj
    t = gg.t[closure]
    X, _, Nin, _, _ = domain.frame_at_param(t)
    dx = d[closure]
    D = np.array(CLOSURE_DEPTHS) * h
    nodes = np.stack([dx, np.full_like(dx, D[0]), np.full_like(dx, D[1])], axis=1)
    # derivative at 0 of the Lagrange basis on the three nodes
    dl = np.zeros_like(nodes)
    for k in range(3):
        others = [m for m in range(3) if m != k]
        a, b = nodes[:, others[0]], nodes[:, others[1]]
        dl[:, k] = -(a + b) / ((nodes[:, k] - a) * (nodes[:, k] - b))
    crow_r, crow_c, crow_v = [cflat], [cflat], [dl[:, 0]]
    for k, Dk in enumerate(D):
        idx, w = lagrange_stencil(g, X + Dk * Nin)
        crow_r.append(np.repeat(cflat, 16))
        crow_c.append(idx.ravel())
        crow_v.append((w * dl[:, k + 1][:, None]).ravel())
    cr = np.concatenate(crow_r)
    cc = np.concatenate(crow_c)
    cv = np.concatenate(crow_v)
    if np.any(number[cc] < 0):
        raise SolverDivergence("closure stencil leaves the unknown set", stage="solve_neumann")
    # map rows of closure cells to their position among closure rows
    cpos = -np.ones(N * N, dtype=int)
    cpos[cflat] = np.arange(len(cflat))
    closure_op = sp.csr_matrix((cv, (cpos[cr], cc)), shape=(len(cflat), N * N))
    rows.append(number[cr])
    cols.append(number[cc])
    vals.append(cv)

    # Lagrange multiplier on the closure rows (a uniform slope shift absorbing the
    # discrete incompatibility), mean-zero constraint over the domain
    inside = np.flatnonzero(d > 0)
    rows.append(number[cflat])
    cols.append(np.full(len(cflat), nu))
    vals.append(np.ones(len(cflat)))
    rows.append(np.full(len(inside), nu))
    cols.append(number[inside])
    vals.append(np.full(len(inside), 1.0 / len(inside)))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nu + 1, nu + 1))
    s = np.mod(domain.arclength(t), domain.length)
    return NeumannSystem(domain, unknown, interior, closure, number.reshape(N, N), A, closure_op, cflat, s)


def check_compatibility(g: BoundaryFunction, tol: float) -> float:
    """Relative defect ``|int g| / (|Gamma| sup|g|)``; raises above ``tol``."""
    sup = g.sup()
    if sup == 0.0:
        return 0.0
    rel = abs(g.integral()) / (g.length * sup)
    if rel > tol:
        raise CompatibilityViolation(f"boundary data violate the compatibility condition (defect {rel:.3g} > {tol:.3g})",
                                     stage="solve_neumann")
    return rel


@dataclass
class NeumannResult:
    q: ScalarField
    multiplier: float
    residual: float
    compat_defect: float


def solve_neumann(g: BoundaryFunction, domain, rhs: ScalarField | None = None, lift: ScalarField | None = None,
                  compat_tol: float = 1e-6, tol: float = 1e-10, full: bool = False):
    """Solve ``div_h grad_h q = rhs`` (default 0) with ``dq/dn = g`` (exterior normal).

    Parameters
    ----------
    g : BoundaryFunction
        Prescribed outward normal derivative of ``q + lift``.
    rhs : ScalarField, optional
        Right-hand side on interior rows.
    lift : ScalarField, optional
        A field whose closure slope is subtracted from the data, so that
        ``q + lift`` carries the prescribed normal derivative.
    compat_tol : float
        Without ``rhs``, ``|int g| <= compat_tol |Gamma| sup|g|`` is required
        (``CompatibilityViolation`` otherwise); the mean of ``g`` is removed
        before solving.

    Returns the mean-zero ``q`` (or a ``NeumannResult`` with ``full=True``).
    Raises ``SolverDivergence`` if the sparse solve misses ``tol``.
    """
    _check_sampling(g, domain, "solve_neumann")
    defect = 0.0
    if rhs is None:
        defect = check_compatibility(g, compat_tol)
        g = BoundaryFunction(g.values - g.integral() / g.length, g.length)
    sysm = neumann_system(domain)
    grid = domain.grid
    nu = sysm.matrix.shape[0] - 1
    b = np.zeros(nu + 1)
    num = sysm.number
    if rhs is not None:
        b[num[sysm.interior]] = rhs.values[sysm.interior]
    # inward slope = -g
    slope = -g.at(sysm.closure_s)
    if lift is not None:
        slope = slope - sysm.closure_op @ lift.values.ravel()
    b[num.ravel()[sysm.closure_cells]] = slope
    try:
        x = spla.spsolve(sysm.matrix.tocsc(), b)
    except Exception as exc:  # singular factorisation
        raise SolverDivergence(f"sparse solve failed: {exc}", stage="solve_neumann") from exc
    if not np.all(np.isfinite(x)):
        raise SolverDivergence("sparse solve returned non-finite values", stage="solve_neumann")
    res = float(np.linalg.norm(sysm.matrix @ x - b) / max(np.linalg.norm(b), 1e-300))
    if res > tol and np.linalg.norm(b) > 0:
        raise SolverDivergence(f"relative residual {res:.3g} exceeds {tol:.1e}", stage="solve_neumann")
    q = np.zeros(grid.N * grid.N)
    unk = sysm.unknown.ravel()
    q[unk] = x[:nu]
    q = fill_outside(q.reshape(grid.N, grid.N), sysm.unknown)
    out = ScalarField(grid, q)
    if full:
        return NeumannResult(out, float(x[nu]), res, defect)
    return out


def fill_outside(q: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Constant continuation of ``q`` from the nearest known cell (keeps the field finite)."""
    from scipy import ndimage

    idx = ndimage.distance_transform_edt(~known, return_distances=False, return_indices=True)
    return q[idx[0], idx[1]]


def harmonic_residual(q: ScalarField, domain, margin: float = 2.0) -> float:
    """``max |div_h grad_h q|`` over cells deeper than ``margin`` grid spacings."""
    lap = divergence(gradient(q)).values
    m = domain.d > margin * domain.grid.h
    return float(np.max(np.abs(lap[m]))) if m.any() else 0.0
