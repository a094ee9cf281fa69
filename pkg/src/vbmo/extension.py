"""Reflection across the boundary and the parity-preserving extension of fields.

Outside the domain the extended field is

    vbar(x) = -P(x) v(x*) + Q(x) v(x*),     x* = reflect(x),

so the normal part is odd and the tangential part even across the boundary.
``P = n (x) n`` with ``n`` the inward normal at the projection; ``P`` and
``Q = I - P`` are the same at ``x`` and at its mirror point.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import OutOfReach, SupportViolation
from .fields import ScalarField, VectorField
from .grid import lagrange_stencil


@dataclass(frozen=True, eq=False)
class ProjectionPair:
    """``P = grad d(pi x) (x) grad d(pi x)`` and ``Q = I - P`` on the grid collar."""

    domain: object

    @cached_property
    def collar(self) -> np.ndarray:
        return np.abs(self.domain.d) < self.domain.reach

    @cached_property
    def P(self) -> np.ndarray:
        n = np.moveaxis(self.domain.grid_geometry.normal, 0, -1)
        return n[..., :, None] * n[..., None, :]

    @cached_property
    def Q(self) -> np.ndarray:
        return np.eye(2) - self.P

    def defects(self) -> dict:
        """Max entrywise violation of the projection identities on the collar."""
        P, Q, m = self.P[self.collar], self.Q[self.collar], self.collar
        I = np.eye(2)
        return {
            "P2-P": float(np.abs(P @ P - P).max()) if m.any() else 0.0,
            "Q2-Q": float(np.abs(Q @ Q - Q).max()) if m.any() else 0.0,
            "PQ": float(np.abs(P @ Q).max()) if m.any() else 0.0,
            "P+Q-I": float(np.abs(P + Q - I).max()) if m.any() else 0.0,
        }


def _frame(domain, x, limit):
    t, d = domain.nearest(x)
    lim = domain.reach if limit is None else limit
    if np.any(np.abs(d) >= lim * (1.0 - 1e-12)):
        raise OutOfReach(f"point farther than {lim:.4g} from the boundary", stage="reflect", module="extension")
    X, _, Nin, _, _ = domain.frame_at_param(t)
    return X, Nin, d


def reflect(x, domain, limit: float | None = None):
    """Mirror point ``pi x - d(x) n(pi x)``; an involution fixing the boundary.

    Raises ``OutOfReach`` if ``|d(x)| >= limit`` (default: the reach).
    """
    x = np.asarray(x, dtype=float)
    X, Nin, d = _frame(domain, x, limit)
    return X - np.asarray(d)[..., None] * Nin


def lagrange_sample(values: np.ndarray, grid, pts) -> np.ndarray:
    """Local bicubic (tensor 4-point Lagrange) interpolation at physical points.

    Accepts a leading component axis on ``values``.
    """
    idx, w = lagrange_stencil(grid, pts)
    flat = values.reshape(values.shape[:-2] + (-1,))
    return np.sum(flat[..., idx] * w, axis=-1)


def fill_exterior(values: np.ndarray, domain, width: int = 3) -> np.ndarray:
    """Overwrite exterior samples near the boundary by one-sided extrapolation.

    Cells with ``-width h < d < 0`` get the quadratic extrapolation along the
    normal of Lagrange samples at depths ``3h, 4h, 5h`` (whose stencils lie
    in the domain). Remaining exterior cells take the nearest interior value.
    """
    g = domain.grid
    h = g.h
    gg = domain.grid_geometry
    ins = domain.inside
    idx = ndimage.distance_transform_edt(~ins, return_distances=False, return_indices=True)
    out = values[..., idx[0], idx[1]].copy()
    near = (~ins) & (gg.d > -width * h)
    if not near.any():
        return out
    X, _, Nin, _, _ = domain.frame_at_param(gg.t[near])
    dn = gg.d[near]
    depths = np.array([3.0, 4.0, 5.0]) * h
    samples = [lagrange_sample(out, g, X + a * Nin) for a in depths]
    # quadratic Lagrange extrapolation in the depth variable
    acc = 0.0
    for k in range(3):
        lk = np.ones_like(dn)
        for m in range(3):
            if m != k:
                lk = lk * (dn - depths[m]) / (depths[k] - depths[m])
        acc = acc + lk * samples[k]
    out[..., near] = acc
    return out


def sample(values: np.ndarray, grid, pts, domain=None, order: int = 1) -> np.ndarray:
    """Interpolate grid data at physical points.

    With ``domain`` given, exterior samples are first replaced by
    ``fill_exterior`` so stencils straddling the boundary only use data from
    the domain. ``order`` 1 is bilinear, 3 is local bicubic.
    """
    data = values if domain is None else fill_exterior(values, domain)
    pts = np.asarray(pts, dtype=float)
    if order == 3:
        return lagrange_sample(data, grid, pts)
    ic = grid.index_coords(pts)
    if data.ndim == 2:
        return ndimage.map_coordinates(data, ic, order=1, mode="nearest")
    return np.stack([ndimage.map_coordinates(c, ic, order=1, mode="nearest") for c in data])


def extend_even_at(f: ScalarField, domain, pts, order: int = 1) -> np.ndarray:
    """Even extension of ``f`` evaluated at arbitrary points."""
    pts = np.asarray(pts, dtype=float)
    _, d = domain.nearest(pts)
    src = pts.copy()
    out_m = d < 0
    if np.any(out_m):
        src[out_m] = reflect(pts[out_m], domain)
    return sample(f.values, f.grid, src, domain, order)


def extend_parity_at(v: VectorField, domain, pts, order: int = 1) -> np.ndarray:
    """Parity extension of ``v`` at arbitrary points, shape ``(2, ...)``."""
    pts = np.asarray(pts, dtype=float)
    t, d = domain.nearest(pts)
    _, _, Nin, _, _ = domain.frame_at_param(t)
    out_m = d < 0
    src = pts.copy()
    if np.any(out_m):
        src[out_m] = reflect(pts[out_m], domain)
    w = sample(v.values, v.grid, src, domain, order)
    n = np.moveaxis(Nin, -1, 0)
    vn = np.sum(n * w, axis=0)
    # flip the normal part outside: w - 2 (n.w) n
    return np.where(out_m[None], w - 2.0 * vn[None] * n, w)


def _check_chart_support(v: VectorField, domain, j: int, tol: float):
    gg = domain.grid_geometry
    rho = domain.rho
    s0 = domain.chart_centers[j]
    ins = domain.inside
    mag = np.sqrt(np.sum(v.values**2, axis=0))
    scale = float(mag[ins].max()) if ins.any() else 0.0
    if scale == 0.0:
        return
    outside_chart = (np.abs(domain.wrap(gg.s - s0)) >= rho) | (gg.d >= rho)
    if np.any(mag[ins & outside_chart] > tol * scale):
        raise SupportViolation(f"field is not supported in chart {j}", stage="extend_parity", module="extension")


def extend_parity(v: VectorField, domain, j: int | None = None, order: int = 1, tol: float = 1e-10) -> VectorField:
    """Extend ``v`` (given on the domain) to the plane: normal part odd, tangential part even.

    Parameters
    ----------
    v : VectorField
        Samples are used only inside the domain.
    domain : Domain
    j : int, optional
        Chart index; when given, ``v`` must vanish outside ``U_rho(z_j)``
        (``SupportViolation`` otherwise) and the extension lives in the chart.
    order : int
        Interpolation order at the mirror points (1 = bilinear).
    """
    if j is not None:
        _check_chart_support(v, domain, j, tol)
    g = v.grid
    d = domain.d
    ins = domain.inside
    band = (~ins) & (d > -domain.reach)
    out = np.where(ins[None], v.values, 0.0)
    if band.any():
        pts = g.points.reshape(g.N, g.N, 2)[band]
        out[:, band] = extend_parity_at(v, domain, pts, order)
    if j is not None:
        # the exact extension vanishes off the chart; drop interpolation smear
        gg = domain.grid_geometry
        off = (np.abs(domain.wrap(gg.s - domain.chart_centers[j])) >= domain.rho) | (np.abs(d) >= domain.rho)
        out[:, off] = 0.0
    return VectorField(g, out)


def extend_even_scalar(f: ScalarField, domain, order: int = 1) -> ScalarField:
    """Even reflection of ``f`` across the boundary.

    The result is defined on the domain and the exterior collar of width
    ``reach``; the returned mask marks that region and values beyond it are 0.
    """
    g = f.grid
    d = domain.d
    ins = domain.inside
    band = (~ins) & (d > -domain.reach)
    out = np.where(ins, f.values, 0.0)
    if band.any():
        pts = g.points.reshape(g.N, g.N, 2)[band]
        out[band] = extend_even_at(f, domain, pts, order)
    return ScalarField(g, out, ins | band)
