"""Model domains, signed distance, boundary charts, normal coordinates and the
partition of unity.

Boundaries are closed counter-clockwise curves ``X(t)``, ``t in [0, 2pi)``,
given analytically with three derivatives. The signed distance is positive
inside. Nearest boundary points come from a KD-tree seed over 1024 dense
samples followed by Newton iteration on ``(X(t) - x) . X'(t) = 0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .cutoffs import bump
from .errors import ConfigError, CoverageGap, OutOfChart, OutOfReach, SingularJacobian
from .fields import ScalarField
from .grid import Grid

N_SEED = 1024  # dense boundary samples used to seed Newton
N_SPEED = 4096  # samples of |X'| for the spectral arclength map
TWO_PI = 2.0 * np.pi


# ------------------------------------------------------------------- curves
class Curve:
    """Analytic closed curve; subclasses supply ``_derivs(t) -> (X, X', X'', X''')``."""

    def derivs(self, t):
        t = np.asarray(t, dtype=float)
        return self._derivs(t)

    def point(self, t):
        return self.derivs(t)[0]

    def max_extent(self) -> float:
        t = np.linspace(0, TWO_PI, 2048, endpoint=False)
        return float(np.max(np.abs(self.point(t))))


def _stack(a, b):
    return np.stack([a, b], axis=-1)


class Circle(Curve):
    def __init__(self, radius: float):
        self.R = float(radius)

    def _derivs(self, t):
        c, s = np.cos(t), np.sin(t)
        R = self.R
        return _stack(R * c, R * s), _stack(-R * s, R * c), _stack(-R * c, -R * s), _stack(R * s, -R * c)


class Ellipse(Curve):
    def __init__(self, a: float, b: float):
        self.a, self.b = float(a), float(b)

    def _derivs(self, t):
        c, s = np.cos(t), np.sin(t)
        a, b = self.a, self.b
        return _stack(a * c, b * s), _stack(-a * s, b * c), _stack(-a * c, -b * s), _stack(a * s, -b * c)


class StarCurve(Curve):
    """``r(t) = r0 + sum_k a_k cos(k t) + b_k sin(k t)`` in polar form."""

    def __init__(self, r0: float, modes):
        self.r0 = float(r0)
        self.modes = [(int(k), float(a), float(b)) for k, a, b in modes]

    def radius(self, t):
        r = np.full_like(t, self.r0, dtype=float)
        dr = np.zeros_like(r)
        d2r = np.zeros_like(r)
        d3r = np.zeros_like(r)
        for k, a, b in self.modes:
            c, s = np.cos(k * t), np.sin(k * t)
            r += a * c + b * s
            dr += k * (-a * s + b * c)
            d2r += -k * k * (a * c + b * s)
            d3r += k**3 * (a * s - b * c)
        return r, dr, d2r, d3r

    def _derivs(self, t):
        r, r1, r2, r3 = self.radius(t)
        u = _stack(np.cos(t), np.sin(t))
        up = _stack(-np.sin(t), np.cos(t))
        X = r[..., None] * u
        X1 = r1[..., None] * u + r[..., None] * up
        X2 = (r2 - r)[..., None] * u + 2 * r1[..., None] * up
        X3 = (r3 - 3 * r1)[..., None] * u + (3 * r2 - r)[..., None] * up
        return X, X1, X2, X3


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]


# ------------------------------------------------------------------- domain
@dataclass(frozen=True, eq=False)
class Domain:
    """Bounded planar domain with its grid, reach and boundary charts.

    Parameters
    ----------
    kind : {"disk", "ellipse", "star"}
    params : dict
        ``{"radius"}`` for a disk, ``{"a", "b"}`` for an ellipse and
        ``{"r0", "modes": [[k, a_k, b_k], ...]}`` for a star domain.
    N : int
        Grid points per axis.
    box : tuple, optional
        Square ``(xmin, xmax, ymin, ymax)``; defaults to 1.5 times the
        boundary extent.
    rho : float, optional
        Chart radius; defaults to ``reach / 16``.
    n_charts : int, optional
        Number of boundary charts; defaults to ``ceil(|Gamma| / rho)``.
    """

    kind: str
    params: dict = field(default_factory=dict)
    N: int = 256
    box: tuple | None = None
    rho: float | None = None
    n_charts: int | None = None

    def __post_init__(self):
        if self.kind not in ("disk", "ellipse", "star"):
            raise ConfigError(f"unknown domain kind {self.kind!r}", stage="domain")
        if self.box is None:
            ext = 1.5 * self.curve.max_extent()
            object.__setattr__(self, "box", (-ext, ext, -ext, ext))
        else:
            object.__setattr__(self, "box", tuple(float(b) for b in self.box))
        if self.kind == "star":
            t = np.linspace(0, TWO_PI, N_SPEED, endpoint=False)
            if np.min(self.curve.radius(t)[0]) <= 0:
                raise ConfigError("star radius function must stay positive", stage="domain")
        if self.reach <= 0:
            raise ConfigError("computed reach is not positive", stage="domain")
        if self.rho is None:
            object.__setattr__(self, "rho", self.reach / 16.0)
        if not 0 < self.rho < self.reach:
            raise ConfigError(f"rho={self.rho} must lie in (0, reach={self.reach:.4g})", stage="domain")
        if self.n_charts is None:
            object.__setattr__(self, "n_charts", int(math.ceil(self.length / self.rho)))

    # ---------------------------------------------------------- factories
    @classmethod
    def disk(cls, radius: float = 1.0, **kw) -> "Domain":
        return cls("disk", {"radius": float(radius)}, **kw)

    @classmethod
    def ellipse(cls, a: float = 1.5, b: float = 1.0, **kw) -> "Domain":
        return cls("ellipse", {"a": float(a), "b": float(b)}, **kw)

    @classmethod
    def star(cls, r0: float = 1.0, modes=((3, 0.1, 0.0),), **kw) -> "Domain":
        return cls("star", {"r0": float(r0), "modes": [list(m) for m in modes]}, **kw)

    @classmethod
    def from_dict(cls, spec: dict) -> "Domain":
        box = spec.get("box")
        return cls(spec["kind"], dict(spec.get("params", {})), int(spec.get("N", 256)),
                   tuple(box) if box is not None else None, spec.get("rho"), spec.get("n_charts"))

    @classmethod
    def from_json(cls, path) -> "Domain":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "N": self.N, "box": list(self.box),
                "rho": self.rho, "n_charts": self.n_charts}

    def with_(self, **changes) -> "Domain":
        d = self.to_dict()
        d.update(changes)
        if "rho" in changes and "n_charts" not in changes:
            d["n_charts"] = None
        return Domain.from_dict(d)

    # ------------------------------------------------------------ curve data
    @cached_property
    def curve(self) -> Curve:
        p = self.params
        if self.kind == "disk":
            return Circle(p.get("radius", 1.0))
        if self.kind == "ellipse":
            return Ellipse(p.get("a", 1.5), p.get("b", 1.0))
        return StarCurve(p.get("r0", 1.0), p.get("modes", []))

    @cached_property
    def grid(self) -> Grid:
        return Grid(self.box, self.N)

    @cached_property
    def _seed(self):
        t = TWO_PI * np.arange(N_SEED) / N_SEED
        pts = self.curve.point(t)
        return t, cKDTree(pts)

    @cached_property
    def _speed_coeffs(self):
        t = TWO_PI * np.arange(N_SPEED) / N_SPEED
        sp = np.linalg.norm(self.curve.derivs(t)[1], axis=-1)
        c = np.fft.rfft(sp) / N_SPEED
        keep = np.nonzero(np.abs(c) > 1e-16 * abs(c[0]))[0]
        kmax = int(keep.max()) if keep.size else 0
        return c[: kmax + 1]

    @cached_property
    def length(self) -> float:
        return float(TWO_PI * self._speed_coeffs[0].real)

    def arclength(self, t):
        """Arclength from ``t = 0`` to ``t`` (spectrally accurate)."""
        t = np.asarray(t, dtype=float)
        c = self._speed_coeffs
        s = c[0].real * t
        z = np.exp(1j * t)
        zk = np.ones_like(z)
        for k in range(1, len(c)):
            # antiderivative of 2 Re(c_k e^{ikt}); powers of z by recurrence
            zk = zk * z
            s = s + 2.0 * (c[k] * (zk - 1.0) / (1j * k)).real
        return s

    def param_of_arclength(self, s):
        s = np.mod(np.asarray(s, dtype=float), self.length)
        t = TWO_PI * s / self.length
        for _ in range(30):
            sp = np.linalg.norm(self.curve.derivs(t)[1], axis=-1)
            dt = (self.arclength(t) - s) / sp
            t = t - dt
            if np.max(np.abs(dt), initial=0.0) < 1e-14:
                break
        return t

    def frame_at_param(self, t):
        """Point, unit tangent, inward normal, curvature, d(curvature)/ds at ``t``."""
        X, X1, X2, X3 = self.curve.derivs(t)
        sp = np.linalg.norm(X1, axis=-1)
        T = X1 / sp[..., None]
        Nin = np.stack([-T[..., 1], T[..., 0]], axis=-1)
        cr = _cross(X1, X2)
        kappa = cr / sp**3
        dk_dt = _cross(X1, X3) / sp**3 - 3 * cr * _dot(X1, X2) / sp**5
        return X, T, Nin, kappa, dk_dt / sp

    def boundary_point(self, s):
        return self.curve.point(self.param_of_arclength(s))

    def curvature(self, s):
        return self.frame_at_param(self.param_of_arclength(s))[3]

    # -------------------------------------------------------------- distance
    def nearest(self, x):
        """Boundary parameter of the nearest point and the signed distance."""
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        pts = x.reshape(-1, 2)
        tseed, tree = self._seed
        _, idx = tree.query(pts)
        t = tseed[idx].copy()
        maxstep = 2.0 * TWO_PI / N_SEED
        for _ in range(50):
            X, X1, X2, _ = self.curve.derivs(t)
            r = X - pts
            f = _dot(r, X1)
            fp = _dot(X1, X1) + _dot(r, X2)
            ok = fp > 1e-12 * _dot(X1, X1)
            step = np.where(ok, -f / np.where(ok, fp, 1.0), 0.0)
            step = np.clip(step, -maxstep, maxstep)
            t = t + step
            if np.max(np.abs(step), initial=0.0) < 1e-14:
                break
        t = np.mod(t, TWO_PI)
        X, X1 = self.curve.derivs(t)[:2]
        diff = pts - X
        dist = np.linalg.norm(diff, axis=-1)
        Nin = np.stack([-X1[:, 1], X1[:, 0]], axis=-1)
        sgn = np.sign(_dot(diff, Nin))
        return t.reshape(shape), (sgn * dist).reshape(shape)

    def signed_distance(self, x):
        """Signed distance to the boundary, positive inside."""
        d = self.nearest(x)[1]
        return float(d) if np.ndim(d) == 0 else d

    def project_to_boundary(self, x):
        """Unique nearest boundary point; raises ``OutOfReach`` beyond the reach."""
        t, d = self.nearest(x)
        # points within rounding of the reach have no unique projection either
        if np.any(np.abs(d) >= self.reach * (1.0 - 1e-12)):
            raise OutOfReach(f"|d(x)| >= reach {self.reach:.4g}", stage="project_to_boundary")
        return self.curve.point(t)

    def laplacian_distance(self, kappa, d):
        """Laplacian of the signed distance, ``-kappa / (1 - kappa d)``."""
        return -kappa / (1.0 - kappa * d)

    # ----------------------------------------------------------------- reach
    @cached_property
    def reach(self) -> float:
        if self.kind == "disk":
            return float(self.curve.R)
        t = TWO_PI * np.arange(N_SPEED) / N_SPEED
        _, _, _, kappa, _ = self.frame_at_param(t)
        kpos = float(np.max(kappa))
        rc = 1.0 / kpos if kpos > 0 else np.inf
        return float(min(rc, 0.5 * self.min_width))

    @cached_property
    def min_width(self) -> float:
        """Shortest chord cut by an inward normal ray (dense polygon casting)."""
        tp = TWO_PI * np.arange(N_SPEED) / N_SPEED
        P = self.curve.point(tp)
        Q = np.roll(P, -1, axis=0)
        tr = TWO_PI * np.arange(N_SEED) / N_SEED
        X, _, Nin, _, _ = self.frame_at_param(tr)
        E = Q - P  # segments
        best = np.full(N_SEED, np.inf)
        for lo in range(0, N_SEED, 128):
            o = X[lo:lo + 128, None, :]
            dvec = Nin[lo:lo + 128, None, :]
            w = P[None] - o
            den = _cross(dvec, E[None])
            with np.errstate(divide="ignore", invalid="ignore"):
                tt = _cross(w, E[None]) / den
                uu = _cross(w, dvec) / den
            hit = (np.abs(den) > 1e-14) & (uu >= 0) & (uu <= 1) & (tt > 1e-6)
            tt = np.where(hit, tt, np.inf)
            best[lo:lo + 128] = tt.min(axis=1)
        return float(best.min())

    # ------------------------------------------------------- grid geometry
    @cached_property
    def grid_geometry(self) -> "GridGeometry":
        g = self.grid
        t, d = self.nearest(g.points)
        N = g.N
        t = t.reshape(N, N)
        d = d.reshape(N, N)
        _, T, Nin, kappa, dkds = self.frame_at_param(t)
        s = np.mod(self.arclength(t), self.length)
        return GridGeometry(t=t, s=s, d=d, tangent=np.moveaxis(T, -1, 0),
                            normal=np.moveaxis(Nin, -1, 0), kappa=kappa, dkappa=dkds)

    @property
    def d(self) -> np.ndarray:
        return self.grid_geometry.d

    @cached_property
    def inside(self) -> np.ndarray:
        return self.grid_geometry.d > 0

    def soft_indicator(self) -> np.ndarray:
        """Anti-aliased indicator of the domain, ``clip(d/h + 1/2, 0, 1)``."""
        return np.clip(self.d / self.grid.h + 0.5, 0.0, 1.0)

    @cached_property
    def cell_fraction(self) -> np.ndarray:
        """Area fraction of each grid cell inside the domain.

        The boundary is replaced by its tangent line at the projection of the
        cell centre; the fraction is then the CDF of ``n . Y`` for ``Y``
        uniform on the cell, a sum of two uniform variables.
        """
        gg = self.grid_geometry
        h = self.grid.h
        a = 0.5 * h * np.abs(gg.normal[0])
        b = 0.5 * h * np.abs(gg.normal[1])
        a, b = np.maximum(a, b), np.maximum(np.minimum(a, b), 1e-6 * h)
        t = gg.d

        def R(x):
            return 0.5 * np.maximum(x, 0.0) ** 2

        F = (R(t + a + b) - R(t + a - b) - R(t - a + b) + R(t - a - b)) / (4 * a * b)
        return np.clip(F, 0.0, 1.0)

    def eikonal_defect(self, band: float | None = None) -> float:
        """Max of ``| |grad d| - 1 |`` over grid points with ``|d| < band``."""
        band = 0.5 * self.reach if band is None else band
        gx, gy = np.gradient(self.d, self.grid.h)
        m = np.abs(self.d) < band
        # keep stencils inside the band
        m[[0, -1], :] = False
        m[:, [0, -1]] = False
        return float(np.max(np.abs(np.hypot(gx, gy) - 1.0)[m]))

    # ---------------------------------------------------------------- charts
    @cached_property
    def chart_centers(self) -> np.ndarray:
        """Arclength positions of the chart centres."""
        return self.length * np.arange(self.n_charts) / self.n_charts

    def chart(self, j: int, extent: float | None = None) -> "NormalCoordMap":
        return NormalCoordMap(self, j, 4.0 * self.rho if extent is None else extent)

    def wrap(self, ds):
        """Periodic arclength difference in ``[-L/2, L/2)``."""
        L = self.length
        return np.mod(np.asarray(ds) + 0.5 * L, L) - 0.5 * L


@dataclass(frozen=True)
class GridGeometry:
    t: np.ndarray
    s: np.ndarray
    d: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray  # inward unit normal at the projection
    kappa: np.ndarray
    dkappa: np.ndarray


# ----------------------------------------------------------- normal charts
@dataclass(frozen=True)
class ChartFrame:
    """Chart centred at ``center`` with rows of ``rotation`` = (tangent, inward normal).

    ``graph_x`` / ``graph_h`` sample the boundary as a graph ``x_n = h(x')``
    in the rotated frame.
    """

    center: np.ndarray
    s0: float
    rotation: np.ndarray
    graph_x: np.ndarray
    graph_h: np.ndarray
    half_width: float


class NormalCoordMap:
    """Normal coordinates ``psi(eta', eta_n) = X(s0 + eta') + eta_n n(s0 + eta')``.

    ``eta'`` is arclength measured from the chart centre and ``eta_n`` the
    signed distance. ``extent`` is the half-width of the admissible cylinder.
    """

    def __init__(self, domain: Domain, j: int, extent: float):
        if not 0 <= j < domain.n_charts:
            raise OutOfChart(f"chart index {j} out of range", stage="chart")
        if extent >= domain.reach:
            raise OutOfChart(f"chart extent {extent:.4g} reaches the reach {domain.reach:.4g}", stage="chart")
        self.domain = domain
        self.j = j
        self.extent = float(extent)
        self.s0 = float(domain.chart_centers[j])

    @cached_property
    def frame(self) -> ChartFrame:
        dom = self.domain
        t0 = dom.param_of_arclength(self.s0)
        X, T, Nin, _, _ = dom.frame_at_param(t0)
        R = np.stack([T, Nin])
        ss = self.s0 + np.linspace(-self.extent, self.extent, 65)
        loc = (dom.boundary_point(ss) - X) @ R.T
        return ChartFrame(center=X, s0=self.s0, rotation=R, graph_x=loc[:, 0], graph_h=loc[:, 1],
                          half_width=dom.rho)

    def _check(self, eta):
        eta = np.asarray(eta, dtype=float)
        if np.any(np.abs(eta) >= self.extent):
            raise OutOfChart("eta outside the chart cylinder", stage="normal_coordinates")
        return eta

    def forward(self, eta, check: bool = True):
        """Physical point for chart coordinates ``eta[..., (eta', eta_n)]``."""
        eta = self._check(eta) if check else np.asarray(eta, dtype=float)
        t = self.domain.param_of_arclength(self.s0 + eta[..., 0])
        X, _, Nin, _, _ = self.domain.frame_at_param(t)
        return X + eta[..., 1:2] * Nin

    def forward_local(self, eta, check: bool = True):
        """``forward`` expressed in the rotated frame centred at the chart centre."""
        fr = self.frame
        return (self.forward(eta, check) - fr.center) @ fr.rotation.T

    def inverse(self, x, check: bool = True):
        t, d = self.domain.nearest(x)
        s = self.domain.arclength(t)
        eta = np.stack([self.domain.wrap(s - self.s0), d], axis=-1)
        return self._check(eta) if check else eta

    def jacobian(self, eta, step: float):
        """Centred finite-difference Jacobian of ``forward_local``; shape (..., 2, 2)."""
        eta = np.asarray(eta, dtype=float)
        cols = []
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            cols.append((self.forward_local(eta + e, False) - self.forward_local(eta - e, False)) / (2 * step))
        return np.stack(cols, axis=-1)

    def stretch(self, eta):
        """Arclength stretch factor ``J = 1 - kappa eta_n`` of the physical map."""
        eta = np.asarray(eta, dtype=float)
        t = self.domain.param_of_arclength(self.s0 + eta[..., 0])
        kappa = self.domain.frame_at_param(t)[3]
        return 1.0 - kappa * eta[..., 1]

    @cached_property
    def lipschitz_bound(self) -> float:
        """``max(1, |D psi| + |D psi^-1|)`` over the cylinder."""
        s = self.s0 + np.linspace(-self.extent, self.extent, 257)
        kappa = self.domain.curvature(s)
        J = np.concatenate([1 - kappa * self.extent, 1 + kappa * self.extent])
        return float(max(1.0, np.max(np.maximum(J, 1) + np.maximum(1 / J, 1))))


def normal_coordinates(chart: NormalCoordMap, eta):
    """Physical point of chart coordinates; raises ``OutOfChart`` outside the cylinder."""
    return chart.forward(eta)


@dataclass
class MetricCoefficients:
    """Coefficients of ``-Laplace`` in chart coordinates on a symmetric cylinder grid.

    ``b11`` and ``c`` are the even extensions (in ``eta_n``) of the values on
    the domain side; ``b11_raw`` and ``J`` are the physical values on both
    sides.
    """

    eta1: np.ndarray
    etan: np.ndarray
    gamma: np.ndarray  # (2, 2, M, M)
    b11: np.ndarray
    b11_raw: np.ndarray
    c: np.ndarray  # (2, M, M)
    J: np.ndarray
    lipschitz: float


def cylinder_axis(extent: float, M: int) -> np.ndarray:
    """Cell-centred axis symmetric about 0 (reversal maps eta to -eta exactly)."""
    hh = 2.0 * extent / M
    return -extent + (np.arange(M) + 0.5) * hh


def metric_coefficients(chart: NormalCoordMap, M: int = 64, step: float | None = None) -> MetricCoefficients:
    """Sample ``gamma_ij``, ``b = gamma - delta`` and first-order coefficients on the chart cylinder.

    The Jacobian of the chart map is taken by centred differences with ``step``
    equal to the cylinder spacing unless given. Raises ``SingularJacobian``
    when ``|det D psi| < 1e-8`` at some sample.
    """
    ext = chart.extent * (1 - 1e-9)
    a = cylinder_axis(ext, M)
    hh = a[1] - a[0]
    step = hh if step is None else step
    E1, En = np.meshgrid(a, a, indexing="ij")
    eta = np.stack([E1, En], axis=-1)
    Dpsi = chart.jacobian(eta, min(step, 0.5 * (chart.domain.reach - ext)))
    det = np.linalg.det(Dpsi)
    if np.any(np.abs(det) < 1e-8):
        raise SingularJacobian("chart Jacobian degenerates", stage="metric_coefficients")
    Dinv = np.linalg.inv(Dpsi)  # rows: d eta_i / d x_k
    gamma = np.einsum("...ik,...jk->ij...", Dinv, Dinv)
    b_raw = gamma[0, 0] - 1.0
    # domain-side values, reflected evenly in eta_n
    fold = np.where(En >= 0, En, -En)
    t = chart.domain.param_of_arclength(chart.s0 + a)
    _, _, _, kappa, dkds = chart.domain.frame_at_param(t)
    kap = kappa[:, None]
    Jp = 1.0 - kap * fold
    Js = -dkds[:, None] * fold
    upper = En >= 0
    b_even = np.where(upper, b_raw, b_raw[:, ::-1])
    c = np.stack([-Js / Jp**3, kap / Jp])
    J = 1.0 - kap * En
    gb = np.gradient(b_even, hh)
    lip = float(np.max(np.hypot(gb[0], gb[1])))
    return MetricCoefficients(eta1=a, etan=a, gamma=gamma, b11=b_even, b11_raw=b_raw, c=c, J=J, lipschitz=lip)


def metric_at(chart: NormalCoordMap, eta, step: float = 1e-5) -> np.ndarray:
    """``gamma_ij`` at arbitrary chart points (finite-difference Jacobian)."""
    Dinv = np.linalg.inv(chart.jacobian(np.asarray(eta, float), step))
    return np.einsum("...ik,...jk->...ij", Dinv, Dinv)


# ------------------------------------------------------- partition of unity
class PartitionOfUnity:
    """``phi_0`` plus one member per boundary chart, normalised to sum to one on the closed domain.

    Raw weights: ``(1 - chi(d))`` for the interior member and
    ``chi(d) * tau(eta'_j)`` for chart ``j`` with ``chi(d) = bump(2|d|/rho)``
    and ``tau(e) = bump(2|e|/rho)``. Chart members therefore live in
    ``{|eta'| < rho, |d| < rho}`` and ``phi_0 = 1`` where ``d >= rho``.
    """

    def __init__(self, domain: Domain):
        self.domain = domain
        self.rho = domain.rho
        gg = domain.grid_geometry
        closed = gg.d >= 0
        raw0, chi = self._raw_interior(gg.d)
        raw0 = np.where(closed, raw0, 0.0)
        total = raw0.copy()
        self._chart_idx = []
        self._chart_raw = []
        band = closed & (np.abs(gg.d) < self.rho)
        band_flat = np.flatnonzero(band)
        s_band = gg.s.ravel()[band_flat]
        chi_band = chi.ravel()[band_flat]
        for c in domain.chart_centers:
            e = domain.wrap(s_band - c)
            tau = bump(2.0 * e / self.rho)
            nz = tau > 0
            idx = band_flat[nz]
            w = chi_band[nz] * tau[nz]
            self._chart_idx.append(idx)
            self._chart_raw.append(w)
            total.ravel()[idx] += w
        gap = closed & (total < 1.0 - 1e-6)
        if np.any(gap):
            i, j = np.argwhere(gap)[0]
            raise CoverageGap(f"charts leave grid point ({i}, {j}) uncovered (sum={total[i, j]:.3g})",
                              stage="partition_of_unity")
        self._total = np.where(closed, total, 1.0)
        self.phi0 = raw0 / self._total
        self.closed = closed

    def _raw_interior(self, d):
        chi = bump(2.0 * np.abs(d) / self.rho)
        return 1.0 - chi, chi

    @property
    def m(self) -> int:
        return len(self._chart_idx)

    def member(self, j: int) -> np.ndarray:
        """Full-grid values of chart member ``j`` (1-based; 0 is the interior member)."""
        if j == 0:
            return self.phi0.copy()
        out = np.zeros(self.domain.grid.N**2)
        idx = self._chart_idx[j - 1]
        out[idx] = self._chart_raw[j - 1] / self._total.ravel()[idx]
        return out.reshape(self.domain.grid.N, self.domain.grid.N)

    def support(self, j: int) -> np.ndarray:
        """Flat grid indices where chart member ``j`` (1-based) is positive."""
        return self._chart_idx[j - 1]

    def weights_at(self, j: int, eta1, d):
        """Chart member ``j`` (1-based) evaluated at chart coordinates (closed form)."""
        dom = self.domain
        eta1 = np.asarray(eta1, float)
        d = np.asarray(d, float)
        s = dom.chart_centers[j - 1] + eta1
        raw0, chi = self._raw_interior(d)
        total = np.where(d > 0, raw0, 0.0)
        mine = np.zeros_like(chi)
        span = float(np.max(np.abs(eta1), initial=0.0)) + self.rho
        for k, c in enumerate(dom.chart_centers):
            if abs(dom.wrap(dom.chart_centers[j - 1] - c)) >= span:
                continue  # no overlap with the queried points
            tau = bump(2.0 * dom.wrap(s - c) / self.rho)
            total = total + chi * tau
            if k == j - 1:
                mine = chi * tau
        out = np.where(d >= 0, mine / np.maximum(total, 1e-300), 0.0)
        return out

    def coverage_counts(self) -> np.ndarray:
        """Number of chart members that are positive at each grid point."""
        cnt = np.zeros(self.domain.grid.N**2, dtype=int)
        for idx in self._chart_idx:
            cnt[idx] += 1
        return cnt.reshape(self.domain.grid.N, self.domain.grid.N)

    def fields(self) -> list[ScalarField]:
        g = self.domain.grid
        return [ScalarField(g, self.member(j)) for j in range(self.m + 1)]


def partition_of_unity(domain: Domain) -> list[ScalarField]:
    """``[phi_0, phi_1, ..., phi_m]`` on the domain grid (see ``PartitionOfUnity``)."""
    return PartitionOfUnity(domain).fields()
