"""Half-space laboratory on a periodic tangential torus of length 2 pi.

For boundary data ``g`` on ``{x_n = 0}`` the single layer is
``u = (1/2) Lambda^-1 exp(-x_n Lambda) g`` with ``Lambda = |xi'|``, so

    -d_n u   has multiplier  (1/2) exp(-x_n |xi|)            (half the Poisson kernel),
    d' u     has multiplier  (i xi / (2|xi|)) exp(-x_n |xi|)  (a Riesz-type operator).

The first stays bounded by ``|g|_inf / 2``; the second blows up
logarithmically for mollified jumps, which ``ce_growth_demo`` measures with
the half-space ``b^nu`` seminorm.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class HalfSpaceField:
    """Boundary data on the torus ``[0, 2 pi)`` together with evaluation heights."""

    g: np.ndarray
    heights: list = field(default_factory=lambda: [2.0 ** -k for k in range(0, 11)])

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        if self.g.ndim != 1 or not np.all(np.isfinite(self.g)):
            raise ValueError("g must be a finite 1-D array")
        if any(h <= 0 for h in self.heights):
            raise ValueError("heights must be positive")

    @property
    def N(self) -> int:
        return len(self.g)

    @property
    def x(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.N) / self.N


def wavenumbers(N: int) -> np.ndarray:
    return np.fft.rfftfreq(N, 1.0 / N)


def normal_multiplier(xi, x_n: float):
    return 0.5 * np.exp(-x_n * np.abs(xi))


def tangential_multiplier(xi, x_n: float):
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape, dtype=complex)
    nz = xi != 0
    out[nz] = 1j * np.sign(xi[nz]) * 0.5 * np.exp(-x_n * np.abs(xi[nz]))
    return out


def single_layer_multiplier(xi, x_n: float):
    """``(1/2) Lambda^-1 exp(-x_n Lambda)``; the zero mode is projected out."""
    xi = np.abs(np.asarray(xi, dtype=float))
    out = np.zeros(xi.shape)
    nz = xi != 0
    out[nz] = 0.5 * np.exp(-x_n * xi[nz]) / xi[nz]
    return out


def _apply(g: np.ndarray, mult) -> np.ndarray:
    return np.fft.irfft(np.fft.rfft(g) * mult, n=len(g))


def _pre(g, x_n):
    if not x_n > 0:
        raise ValueError("height x_n must be positive")
    g = np.asarray(g, dtype=float)
    return g, wavenumbers(len(g))


def poisson_normal_derivative(g, x_n: float) -> np.ndarray:
    """``-d_n`` of the half-space single layer at height ``x_n`` (half the Poisson extension)."""
    g, xi = _pre(g, x_n)
    return _apply(g, normal_multiplier(xi, x_n))


def tangential_derivative(g, x_n: float) -> np.ndarray:
    """Tangential derivative of the half-space single layer at height ``x_n``."""
    g, xi = _pre(g, x_n)
    return _apply(g, tangential_multiplier(xi, x_n))


def mollified_sign(N: int, ell: int) -> np.ndarray:
    """Square wave ``sign(sin x')`` smoothed by a periodic Gaussian of width ``2^-ell``, sup-normalised.

    The Gaussian is positive, so the result stays in [-1, 1] before
    normalisation.
    """
    x = 2 * np.pi * np.arange(N) / N
    sq = np.sign(np.sin(x))
    sq[0] = 0.0
    sq[N // 2] = 0.0
    xi = wavenumbers(N)
    eps = 2.0 ** -ell
    g = _apply(sq, np.exp(-0.5 * (eps * xi) ** 2))
    return g / np.max(np.abs(g))


def halfspace_bnu(g: np.ndarray, kind: str, radii, centres=None, rows: int = 32) -> tuple[float, tuple]:
    """``sup r^-2 int_{B_r(c) cap {x_n > 0}} |u|`` over boundary centres and the given radii.

    ``u`` is the tangential (``kind="tangential"``) or normal derivative
    field. The half ball is integrated with ``rows`` midpoint rows in
    ``x_n`` and exact cumulative sums along ``x'`` (trapezoid in the
    fractional end cells).
    """
    g = np.asarray(g, dtype=float)
    N = len(g)
    dx = 2 * np.pi / N
    xi = wavenumbers(N)
    mult = tangential_multiplier if kind == "tangential" else normal_multiplier
    centres = np.arange(0, N, max(1, N // 256)) if centres is None else np.asarray(centres)
    best, wit = 0.0, (0.0, 0.0)
    ghat = np.fft.rfft(g)
    for r in radii:
        acc = np.zeros(len(centres))
        hn = r / rows
        for k in range(rows):
            xn = (k + 0.5) * hn
            u = np.abs(np.fft.irfft(ghat * mult(xi, xn), n=N))
            half = np.sqrt(r * r - xn * xn)
            C = np.concatenate([[0.0], np.cumsum(u)]) * dx
            # integral over [c - half, c + half] with periodic wrap
            def prim(pos):
                p = pos / dx
                whole = np.floor(p).astype(int)
                frac = p - whole
                laps, idx = np.divmod(whole, N)
                return laps * C[-1] + C[idx] + frac * u[idx] * dx
            cpos = centres * dx
            acc += (prim(cpos + half + 0.5 * dx) - prim(cpos - half + 0.5 * dx)) * hn
        vals = acc / (r * r)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, wit = float(vals[k]), (float(centres[k] * dx), float(r))
    return best, wit


@dataclass
class GrowthRow:
    ell: int
    bnu_tangential: float
    bnu_normal: float
    sup_normal: float
    sup_tangential: float


def ce_growth_demo(ell_max: int, N: int = 1 << 15, nu: float = 1.0, rows: int = 32) -> list[GrowthRow]:
    """``b^nu`` of the tangential and normal derivative fields for ``g_ell``, ``ell = 1..ell_max``.

    Radii are dyadic, ``2^-k <= nu`` down to a quarter of the finest
    mollification scale. ``sup_*`` are sup norms at height ``2^-ell``.
    """
    if ell_max < 1:
        raise ValueError("ell_max must be >= 1")
    if 2 * np.pi / N > 2.0 ** -(ell_max + 3):
        raise ValueError("torus resolution too coarse for the finest mollification scale")
    radii = [2.0 ** -k for k in range(0, ell_max + 3) if 2.0 ** -k <= nu]
    out = []
    for ell in range(1, ell_max + 1):
        g = mollified_sign(N, ell)
        bt, _ = halfspace_bnu(g, "tangential", radii, rows=rows)
        bn, _ = halfspace_bnu(g, "normal", radii, rows=rows)
        h = 2.0 ** -ell
        out.append(GrowthRow(ell, bt, bn, float(np.max(np.abs(poisson_normal_derivative(g, h)))),
                             float(np.max(np.abs(tangential_derivative(g, h))))))
    return out


def growth_fit(rows: list[GrowthRow]) -> dict:
    """Least-squares slope of ``bnu_tangential`` against ``ell`` with ``R^2``."""
    x = np.array([r.ell for r in rows], dtype=float)
    y = np.array([r.bnu_tangential for r in rows])
    if len(x) < 2:
        return {"slope": float("nan"), "r2": float("nan")}
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
    return {"slope": float(coef[0]), "intercept": float(coef[1]), "r2": r2}


def is_strictly_increasing(values) -> bool:
    v = list(values)
    return all(b > a for a, b in zip(v, v[1:]))
