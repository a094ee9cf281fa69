"""Uniform cell-centred Cartesian grid on a square box."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    """``N`` x ``N`` cell centres covering ``box = (xmin, xmax, ymin, ymax)``.

    Arrays sampled on the grid are indexed ``[i, j]`` with ``i`` along x and
    ``j`` along y.
    """

    box: tuple[float, float, float, float]
    N: int

    def __post_init__(self):
        xmin, xmax, ymin, ymax = (float(b) for b in self.box)
        object.__setattr__(self, "box", (xmin, xmax, ymin, ymax))
        if self.N < 4:
            raise ValueError("grid needs N >= 4")
        if not np.isclose(xmax - xmin, ymax - ymin, rtol=1e-12):
            raise ValueError("grid box must be square")

    @property
    def h(self) -> float:
        return (self.box[1] - self.box[0]) / self.N

    @property
    def width(self) -> float:
        return self.box[1] - self.box[0]

    @cached_property
    def x(self) -> np.ndarray:
        return self.box[0] + (np.arange(self.N) + 0.5) * self.h

    @cached_property
    def y(self) -> np.ndarray:
        return self.box[2] + (np.arange(self.N) + 0.5) * self.h

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.x, self.y, indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        X, Y = self.mesh
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    def index_coords(self, pts) -> np.ndarray:
        """Fractional array indices of physical points (for interpolation)."""
        pts = np.asarray(pts, dtype=float)
        fi = (pts[..., 0] - self.box[0]) / self.h - 0.5
        fj = (pts[..., 1] - self.box[2]) / self.h - 0.5
        return np.stack([fi, fj])

    def same_as(self, other: "Grid") -> bool:
        return self.N == other.N and np.allclose(self.box, other.box, rtol=0, atol=1e-14)


def lagrange_stencil(grid: Grid, pts) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices and weights of tensor 4-point Lagrange interpolation.

    Returns arrays of shape ``pts.shape[:-1] + (16,)``; the stencil is the
    4 x 4 block of cells around each point, shifted inward at the array edge.
    """
    pts = np.asarray(pts, dtype=float)
    fi, fj = grid.index_coords(pts)
    N = grid.N
    i0 = np.clip(np.floor(fi).astype(int) - 1, 0, N - 4)
    j0 = np.clip(np.floor(fj).astype(int) - 1, 0, N - 4)
    wi = _lagrange4(fi - i0)
    wj = _lagrange4(fj - j0)
    a = np.arange(4)
    idx = (i0[..., None, None] + a[:, None]) * N + (j0[..., None, None] + a[None, :])
    w = wi[..., :, None] * wj[..., None, :]
    shape = pts.shape[:-1] + (16,)
    return idx.reshape(shape), w.reshape(shape)


def _lagrange4(t):
    # weights of the nodes 0, 1, 2, 3 at position t
    return np.stack([
        -(t - 1) * (t - 2) * (t - 3) / 6.0,
        t * (t - 2) * (t - 3) / 2.0,
        -t * (t - 1) * (t - 3) / 2.0,
        t * (t - 1) * (t - 2) / 6.0,
    ], axis=-1)
