"""Grid-sampled fields, finite-difference operators and the BMO-type seminorms.

Seminorm estimators scan a deterministic family of grid balls: dyadic radii
``h * 2**k`` up to the scale cap and centres on every second grid point. A
ball is the set of grid points within distance ``r`` of its centre and
averages are arithmetic means over that set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, signal

from .errors import DegenerateGrid, GridMismatch
from .grid import Grid


# ---------------------------------------------------------------- containers
@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.N, self.grid.N):
            raise ValueError(f"expected shape {(self.grid.N,) * 2}, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_function(cls, grid: Grid, fn, mask=None) -> "ScalarField":
        X, Y = grid.mesh
        return cls(grid, np.broadcast_to(fn(X, Y), X.shape).astype(float), mask)

    def __add__(self, other):
        _check(self.grid, other.grid)
        return ScalarField(self.grid, self.values + other.values, self.mask)

    def __sub__(self, other):
        _check(self.grid, other.grid)
        return ScalarField(self.grid, self.values - other.values, self.mask)

    def scaled(self, a: float) -> "ScalarField":
        return ScalarField(self.grid, a * self.values, self.mask)

    def l2(self, mask=None) -> float:
        m = self.mask if mask is None else mask
        v = self.values if m is None else self.values[m]
        return float(np.sqrt(np.sum(v * v) * self.grid.h**2))


@dataclass
class VectorField:
    grid: Grid
    values: np.ndarray  # shape (2, N, N)
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (2, self.grid.N, self.grid.N):
            raise ValueError(f"expected shape (2, {self.grid.N}, {self.grid.N}), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_function(cls, grid: Grid, fn, mask=None) -> "VectorField":
        X, Y = grid.mesh
        u, v = fn(X, Y)
        return cls(grid, np.stack([np.broadcast_to(u, X.shape), np.broadcast_to(v, X.shape)]).astype(float), mask)

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i], self.mask)

    def __add__(self, other):
        _check(self.grid, other.grid)
        return VectorField(self.grid, self.values + other.values, self.mask)

    def __sub__(self, other):
        _check(self.grid, other.grid)
        return VectorField(self.grid, self.values - other.values, self.mask)

    def scaled(self, a: float) -> "VectorField":
        return VectorField(self.grid, a * self.values, self.mask)

    def l2(self, mask=None) -> float:
        m = self.mask if mask is None else mask
        sq = np.sum(self.values**2, axis=0)
        sq = sq if m is None else sq[m]
        return float(np.sqrt(np.sum(sq) * self.grid.h**2))


def _check(a: Grid, b: Grid):
    if not a.same_as(b):
        raise GridMismatch("fields live on different grids", stage="check")


# ----------------------------------------------------------------- operators
def gradient(q: ScalarField) -> VectorField:
    """Centred second-order gradient (one-sided second order at the box edge)."""
    gx, gy = np.gradient(q.values, q.grid.h, edge_order=2)
    return VectorField(q.grid, np.stack([gx, gy]), q.mask)


def divergence(v: VectorField) -> ScalarField:
    """Centred second-order divergence."""
    h = v.grid.h
    d = np.gradient(v.values[0], h, axis=0, edge_order=2) + np.gradient(v.values[1], h, axis=1, edge_order=2)
    return ScalarField(v.grid, d, v.mask)


def laplacian5(q: np.ndarray, h: float) -> np.ndarray:
    """Five-point Laplacian; the outermost ring is left at zero."""
    out = np.zeros_like(q)
    out[1:-1, 1:-1] = (q[2:, 1:-1] + q[:-2, 1:-1] + q[1:-1, 2:] + q[1:-1, :-2] - 4 * q[1:-1, 1:-1]) / h**2
    return out


def multiply(phi: ScalarField, v: VectorField) -> VectorField:
    """Pointwise product of a scalar multiplier with a vector field."""
    if not phi.grid.same_as(v.grid):
        raise GridMismatch("multiplier and field grids differ", stage="multiply")
    return VectorField(v.grid, phi.values[None] * v.values, v.mask)


def holder_norm(phi: ScalarField, gamma: float = 0.5, mask=None, max_shift: int | None = None) -> float:
    """Sup norm plus the C^gamma seminorm over dyadic grid separations.

    Pairs are sampled along the axes and both diagonals at separations
    ``2**k`` cells; only pairs with both points in ``mask`` count.
    """
    f = phi.values
    N = phi.grid.N
    m = np.ones_like(f, dtype=bool) if mask is None else np.asarray(mask, bool)
    sup = float(np.max(np.abs(f[m]))) if m.any() else 0.0
    semi = 0.0
    max_shift = max_shift or N // 2
    k = 1
    while k <= max_shift:
        for di, dj in ((k, 0), (0, k), (k, k), (k, -k)):
            a = (slice(0, N - di), slice(max(0, -dj), N - max(0, dj)))
            b = (slice(di, N), slice(max(0, dj), N - max(0, -dj)))
            ok = m[a] & m[b]
            if ok.any():
                dist = phi.grid.h * np.hypot(di, dj)
                semi = max(semi, float(np.max(np.abs(f[a] - f[b])[ok])) / dist**gamma)
        k *= 2
    return sup + semi


# ------------------------------------------------------------------ file I/O
def save_field(path, fld: ScalarField | VectorField) -> None:
    """Write a JSON header line followed by raw little-endian float64 samples."""
    comps = 1 if isinstance(fld, ScalarField) else 2
    header = {"N": fld.grid.N, "box": list(fld.grid.box), "components": comps, "dtype": "f64-le"}
    data = np.asarray(fld.values, dtype="<f8").reshape(comps, fld.grid.N, fld.grid.N)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(data).tobytes(order="C"))


def load_field(path) -> ScalarField | VectorField:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("dtype") != "f64-le":
        raise ValueError(f"unsupported dtype {header.get('dtype')!r}")
    N, comps = int(header["N"]), int(header["components"])
    payload = np.frombuffer(raw[nl + 1:], dtype="<f8")
    if payload.size != comps * N * N:
        raise ValueError(f"payload has {payload.size} samples, header implies {comps * N * N}")
    grid = Grid(tuple(header["box"]), N)
    data = payload.reshape(comps, N, N).astype(float)
    if comps == 1:
        return ScalarField(grid, data[0])
    if comps == 2:
        return VectorField(grid, data)
    raise ValueError("only 1 or 2 components are supported")


# ----------------------------------------------------------------- seminorms
@dataclass(frozen=True)
class Witness:
    """Ball attaining a scanned supremum."""

    center: tuple[float, float]
    radius: float

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class SeminormPart:
    value: float
    witness: Witness | None
    scale: float  # mu or nu


@dataclass(frozen=True)
class SeminormReport:
    """``[v]_BMO^mu``, ``[grad d . v]_b^nu`` and their sum with the attaining balls."""

    bmo_value: float
    bmo_witness: Witness | None
    bnu_value: float
    bnu_witness: Witness | None
    mu: float
    nu: float
    vbmo_value: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "vbmo_value", self.bmo_value + self.bnu_value)

    def to_dict(self) -> dict:
        w = lambda x: None if x is None else x.to_dict()  # noqa: E731
        return {"bmo_value": self.bmo_value, "bmo_witness": w(self.bmo_witness),
                "bnu_value": self.bnu_value, "bnu_witness": w(self.bnu_witness),
                "vbmo_value": self.vbmo_value, "mu": self.mu, "nu": self.nu}


def dyadic_radii(h: float, cap: float, rmax: float | None = None) -> np.ndarray:
    """Radii ``h * 2**k`` (k >= 1) not exceeding ``cap`` (and ``rmax`` if given)."""
    top = cap if rmax is None else min(cap, rmax)
    out = []
    r = 2 * h
    while r <= top * (1 + 1e-12):
        out.append(r)
        r *= 2
    return np.array(out)


def ball_offsets(radius: float, h: float) -> np.ndarray:
    """Integer offsets ``o`` with ``|o| h <= radius``."""
    k = int(np.floor(radius / h + 1e-9))
    ii, jj = np.meshgrid(np.arange(-k, k + 1), np.arange(-k, k + 1), indexing="ij")
    m = (ii**2 + jj**2) * h * h <= radius * radius * (1 + 1e-12)
    return np.stack([ii[m], jj[m]], axis=1)


def _admissible_centres(mask: np.ndarray, offs: np.ndarray) -> np.ndarray:
    """Centres whose whole grid ball lies in ``mask`` (and inside the array)."""
    k = int(np.max(np.abs(offs)))
    N = mask.shape[0]
    ok = np.zeros_like(mask, dtype=bool)
    if 2 * k + 1 > N:
        return ok
    fp = np.zeros((2 * k + 1, 2 * k + 1))
    fp[offs[:, 0] + k, offs[:, 1] + k] = 1.0
    outside = signal.fftconvolve((~mask).astype(float), fp, mode="same")
    ok[k:N - k, k:N - k] = outside[k:N - k, k:N - k] < 0.5
    return ok


def mean_oscillation(f: np.ndarray, ci: np.ndarray, cj: np.ndarray, offs: np.ndarray) -> np.ndarray:
    """Mean of ``|f - f_B|`` over grid balls centred at ``(ci, cj)``."""
    n = len(offs)
    acc = np.zeros(ci.shape)
    for di, dj in offs:
        acc += f[ci + di, cj + dj]
    avg = acc / n
    osc = np.zeros(ci.shape)
    for di, dj in offs:
        osc += np.abs(f[ci + di, cj + dj] - avg)
    return osc / n


def _strided(ok: np.ndarray, budget: int) -> tuple[np.ndarray, np.ndarray]:
    stride = 1
    while True:
        sub = np.zeros_like(ok)
        sub[::stride, ::stride] = ok[::stride, ::stride]
        ci, cj = np.nonzero(sub)  # lexicographic order
        if len(ci) <= budget or stride >= ok.shape[0]:
            return ci, cj
        stride *= 2


def bmo_seminorm(f: ScalarField, mu: float, ball_budget: int = 4096, mask=None) -> SeminormPart:
    """Scanned ``[f]_{BMO^mu}``.

    Parameters
    ----------
    f : ScalarField
    mu : float
        Radius cap; ``np.inf`` scans up to half the box width.
    ball_budget : int
        Maximum number of centres per radius; the centre stride (initially 1)
        doubles until the budget is met.
    mask : bool array, optional
        Region the balls must lie in; defaults to ``f.mask`` or the whole box.

    Raises
    ------
    DegenerateGrid
        If ``mu <= 2h``.
    """
    g = f.grid
    if not mu > 2 * g.h:
        raise DegenerateGrid(f"mu={mu} must exceed two grid spacings ({2 * g.h:.3g})", stage="bmo_seminorm", module="fields")
    if ball_budget < 1:
        raise ValueError("ball_budget must be >= 1")
    m = f.mask if mask is None else mask
    m = np.ones((g.N, g.N), bool) if m is None else np.asarray(m, bool)
    best, wit = 0.0, None
    for r in dyadic_radii(g.h, mu, 0.5 * g.width):
        offs = ball_offsets(r, g.h)
        ok = _admissible_centres(m, offs)
        ci, cj = _strided(ok, ball_budget)
        if len(ci) == 0:
            continue
        osc = mean_oscillation(f.values, ci, cj, offs)
        k = int(np.argmax(osc))
        if osc[k] > best:
            best = float(osc[k])
            wit = Witness((float(g.x[ci[k]]), float(g.y[cj[k]])), float(r))
    return SeminormPart(best, wit, float(mu))


SUBSAMPLES = 6
_FINE: dict[int, tuple] = {}


def _fine_inside(domain, S: int = SUBSAMPLES) -> np.ndarray:
    """Domain indicator on the ``S``-fold refined cell-centred grid."""
    key = id(domain)
    hit = _FINE.get(key)
    if hit is not None and hit[0] is domain and hit[1] == S:
        return hit[2]
    N = domain.grid.N
    f = (np.arange(N * S) + 0.5) / S - 0.5
    FI, FJ = np.meshgrid(f, f, indexing="ij")
    ins = ndimage.map_coordinates(domain.d, [FI, FJ], order=1, mode="nearest") > 0
    if len(_FINE) > 8:
        _FINE.clear()
    _FINE[key] = (domain, S, ins)
    return ins


def _cell_fractions(domain, sl, c, r, S: int = SUBSAMPLES) -> np.ndarray:
    """Fraction of each grid cell in ``sl`` lying in ``B_r(c) cap Omega``.

    Cells are split into ``S x S`` subcells; the signed distance is
    interpolated bilinearly to the subcell centres.
    """
    g = domain.grid
    h = g.h
    ins = _fine_inside(domain, S)
    a0, a1, b0, b1 = sl[0].start, sl[0].stop, sl[1].start, sl[1].stop
    xs = g.box[0] + (np.arange(a0 * S, a1 * S) + 0.5) * h / S - c[0]
    ys = g.box[2] + (np.arange(b0 * S, b1 * S) + 0.5) * h / S - c[1]
    ball = xs[:, None] ** 2 + ys[None, :] ** 2 <= r * r
    inside = ball & ins[a0 * S:a1 * S, b0 * S:b1 * S]
    return inside.reshape(a1 - a0, S, b1 - b0, S).mean(axis=(1, 3))


def boundary_centres(domain, spacing: float | None = None) -> np.ndarray:
    """Boundary points at (roughly) the given arclength spacing, default ``h``."""
    h = domain.grid.h if spacing is None else spacing
    n = max(8, int(np.ceil(domain.length / h)))
    return domain.boundary_point(domain.length * np.arange(n) / n)


def bnu_average(f: np.ndarray, domain, centres: np.ndarray, r: float) -> np.ndarray:
    """``r^-2 * integral over Omega cap B_r(x) of |f|`` for each centre.

    Each cell is weighted by the fraction of its area inside the ball and
    the domain, so the half-ball ratio is accurate already for ``r ~ h``.
    """
    g = domain.grid
    h = g.h
    af = np.abs(f)
    k = int(np.ceil(r / h)) + 2
    out = np.empty(len(centres))
    for n, c in enumerate(centres):
        i0, j0 = np.floor(g.index_coords(c)).astype(int)
        sl = (slice(max(i0 - k, 0), min(i0 + k + 2, g.N)), slice(max(j0 - k, 0), min(j0 + k + 2, g.N)))
        w = _cell_fractions(domain, sl, c, r)
        out[n] = float(np.sum(w * af[sl])) * h * h / (r * r)
    return out


def bnu_seminorm(f: ScalarField, domain, nu: float, ball_budget: int = 4096, radii=None) -> SeminormPart:
    """Scanned ``[f]_{b^nu}`` over boundary-centred balls with dyadic radii.

    Raises ``DegenerateGrid`` if ``nu <= 2h``.
    """
    g = f.grid
    if not nu > 2 * g.h:
        raise DegenerateGrid(f"nu={nu} must exceed two grid spacings ({2 * g.h:.3g})", stage="bnu_seminorm", module="fields")
    centres = boundary_centres(domain)
    if len(centres) > ball_budget:
        centres = centres[:: int(np.ceil(len(centres) / ball_budget))]
    rr = dyadic_radii(g.h, nu, 0.5 * g.width) if radii is None else np.asarray(radii)
    best, wit = 0.0, None
    for r in rr:
        vals = bnu_average(f.values, domain, centres, r)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best = float(vals[k])
            wit = Witness((float(centres[k, 0]), float(centres[k, 1])), float(r))
    return SeminormPart(best, wit, float(nu))


def vector_bmo(v: VectorField, mu: float, ball_budget: int = 4096, mask=None) -> SeminormPart:
    """Sum of the component seminorms; the witness is that of the larger part."""
    parts = [bmo_seminorm(v.component(c), mu, ball_budget, mask) for c in range(2)]
    top = max(parts, key=lambda p: p.value)
    return SeminormPart(sum(p.value for p in parts), top.witness, float(mu))


def normal_component(v: VectorField, domain) -> ScalarField:
    """``grad d . v`` with ``grad d`` the inward normal at the projection."""
    nrm = domain.grid_geometry.normal
    return ScalarField(v.grid, np.sum(nrm * v.values, axis=0), v.mask)


def vbmo_norm(v: VectorField, domain, mu: float, nu: float, ball_budget: int = 4096) -> SeminormReport:
    """``[v]_{BMO^mu(Omega)} + [grad d . v]_{b^nu}``."""
    if not v.grid.same_as(domain.grid):
        raise GridMismatch("field and domain grids differ", stage="vbmo_norm", module="fields")
    b = vector_bmo(v, mu, ball_budget, domain.inside)
    n = bnu_seminorm(normal_component(v, domain), domain, nu, ball_budget)
    return SeminormReport(b.value, b.witness, n.value, n.witness, float(mu), float(nu))
