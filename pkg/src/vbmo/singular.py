"""Fundamental solution of -Laplace, Newtonian potentials and second-order Riesz operators.

Free-space convolutions use a truncated kernel: ``E`` is cut off at a radius
``L`` exceeding the box diameter, whose Fourier transform is known in closed
form,

    Ehat_L(k) = (1 - J0(L k)) / k^2 - L log(L) J1(L k) / k.

With the data zero-padded to a period ``P >= width + L`` the periodic
convolution coincides with the free-space one on the box, so results are
spectrally accurate for smooth compactly supported data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import j0, j1

from .errors import SingularPoint, SupportLeak
from .fields import ScalarField, VectorField
from .grid import Grid, lagrange_stencil


def fundamental_solution(x, n: int = 2):
    """``E(x)``: ``-log|x| / 2pi`` for n = 2, ``|x|^(2-n) / (n (n-2) alpha(n))`` otherwise."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularPoint("fundamental solution evaluated at the origin", stage="fundamental_solution")
    if n == 2:
        out = -np.log(r) / (2 * np.pi)
    else:
        alpha = np.pi ** (n / 2) / gamma_fn(n / 2 + 1)
        out = r ** (2 - n) / (n * (n - 2) * alpha)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class SpectralBox:
    """Padded periodic box carrying the symbol tables of the free-space operators.

    Parameters
    ----------
    grid : Grid
        Unpadded grid; data must vanish near its edges.
    pad : int
        Padding factor per axis (at least 3 so that ``P >= width + L``).
    """

    grid: Grid
    pad: int = 3

    def __post_init__(self):
        if self.pad < 3:
            raise ValueError("pad must be >= 3 for the truncated-kernel convolution")

    @property
    def M(self) -> int:
        return self.pad * self.grid.N

    @cached_property
    def wavenumbers(self):
        h = self.grid.h
        kx = 2 * np.pi * np.fft.fftfreq(self.M, h)
        ky = 2 * np.pi * np.fft.rfftfreq(self.M, h)
        return np.meshgrid(kx, ky, indexing="ij")

    @cached_property
    def cutoff_radius(self) -> float:
        return math.sqrt(2.0) * self.grid.width * 1.001

    @cached_property
    def inv_laplacian(self) -> np.ndarray:
        """Symbol of ``E *`` (the truncated-kernel transform)."""
        KX, KY = self.wavenumbers
        K = np.hypot(KX, KY)
        L = self.cutoff_radius
        with np.errstate(divide="ignore", invalid="ignore"):
            g = (1 - j0(L * K)) / K**2 - L * np.log(L) * j1(L * K) / K
        g[0, 0] = L**2 / 4 - L**2 * np.log(L) / 2
        return g

    @cached_property
    def derivative(self) -> tuple[np.ndarray, np.ndarray]:
        """Symbols ``i xi_1`` and ``i xi_2``; the Nyquist row/column is zeroed."""
        KX, KY = self.wavenumbers
        M = self.M
        kx = KX.copy()
        ky = KY.copy()
        kx[M // 2, :] = 0.0
        ky[:, -1] = 0.0
        return 1j * kx, 1j * ky

    def riesz_symbol(self, a: int, b: int) -> np.ndarray:
        """Symbol of ``d_a d_b E *``: ``-xi_a xi_b Ehat``."""
        KX, KY = self.wavenumbers
        K = (KX, KY)
        return -K[a] * K[b] * self.inv_laplacian

    # ----------------------------------------------------------- transforms
    def check_support(self, f: np.ndarray, stage: str, width: int = 2) -> None:
        scale = float(np.max(np.abs(f))) if f.size else 0.0
        if scale == 0.0:
            return
        edge = np.zeros(f.shape, bool)
        edge[:width, :] = edge[-width:, :] = True
        edge[:, :width] = edge[:, -width:] = True
        if np.max(np.abs(f[edge])) > 1e-10 * scale:
            raise SupportLeak("data reaches the edge of the computational box", stage=stage)

    def forward(self, f: np.ndarray) -> np.ndarray:
        N, M = self.grid.N, self.M
        F = np.zeros((M, M))
        F[:N, :N] = f
        return np.fft.rfft2(F)

    def backward(self, Fh: np.ndarray) -> np.ndarray:
        N, M = self.grid.N, self.M
        return np.fft.irfft2(Fh, s=(M, M))[:N, :N]

    def apply(self, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        return self.backward(self.forward(f) * symbol)


_BOXES: dict[tuple, SpectralBox] = {}


def spectral_box(grid: Grid, pad: int = 3) -> SpectralBox:
    """Cached ``SpectralBox`` per grid."""
    key = (grid.box, grid.N, pad)
    if key not in _BOXES:
        _BOXES[key] = SpectralBox(grid, pad)
    return _BOXES[key]


def _mean_zero(u: np.ndarray) -> np.ndarray:
    return u - u.mean()


def newtonian_potential(f: ScalarField, gauge: str = "mean", box: SpectralBox | None = None) -> ScalarField:
    """``u = E * f`` so that ``-Laplace u = f``.

    ``gauge="mean"`` subtracts the box mean; ``gauge="free"`` keeps the
    free-space normalisation. Raises ``SupportLeak`` if ``f`` is nonzero within
    two cells of the box edge.
    """
    box = box or spectral_box(f.grid)
    box.check_support(f.values, "newtonian_potential")
    u = box.apply(f.values, box.inv_laplacian)
    return ScalarField(f.grid, _mean_zero(u) if gauge == "mean" else u)


def potential_gradient(f: ScalarField, box: SpectralBox | None = None) -> VectorField:
    """``grad (E * f)`` evaluated spectrally."""
    box = box or spectral_box(f.grid)
    box.check_support(f.values, "potential_gradient")
    Fh = box.forward(f.values) * box.inv_laplacian
    dx, dy = box.derivative
    return VectorField(f.grid, np.stack([box.backward(Fh * dx), box.backward(Fh * dy)]))


def riesz_second(f: ScalarField, a: int, b: int, box: SpectralBox | None = None) -> ScalarField:
    """``d_a d_b (E * f)``; summing ``a = b`` over both axes returns ``-f``."""
    box = box or spectral_box(f.grid)
    box.check_support(f.values, "riesz_second")
    return ScalarField(f.grid, box.apply(f.values, box.riesz_symbol(a, b)))


def grad_E_conv(F: VectorField, box: SpectralBox | None = None) -> VectorField:
    """``grad (E * div F) = sum_b d_a d_b E * F_b``."""
    box = box or spectral_box(F.grid)
    for c in range(2):
        box.check_support(F.values[c], "grad_E_conv")
    hats = [box.forward(F.values[c]) for c in range(2)]
    out = []
    for a in range(2):
        acc = sum(hats[b] * box.riesz_symbol(a, b) for b in range(2))
        out.append(box.backward(acc))
    return VectorField(F.grid, np.stack(out))


def E_conv_div(F: VectorField, box: SpectralBox | None = None) -> ScalarField:
    """``E * div F`` (spectral divergence, free-space potential)."""
    box = box or spectral_box(F.grid)
    for c in range(2):
        box.check_support(F.values[c], "E_conv_div")
    dx, dy = box.derivative
    acc = (box.forward(F.values[0]) * dx + box.forward(F.values[1]) * dy) * box.inv_laplacian
    return ScalarField(F.grid, box.backward(acc))


def spectral_laplacian(u: np.ndarray, box: SpectralBox) -> np.ndarray:
    """Spectral Laplacian of compactly supported grid data."""
    KX, KY = box.wavenumbers
    return box.apply(u, -(KX**2 + KY**2))


def ball_mean_defect(u: ScalarField, centers, radius: float, n_radial: int = 8, n_angle: int = 64) -> float:
    """Max over ``centers`` of ``|u(x) - mean of u over B_r(x)|``.

    The ball mean uses Gauss-Legendre nodes in the radius and the trapezoid
    rule in the angle, with bicubic interpolation of the grid samples, so a
    harmonic ``u`` gives a defect at interpolation accuracy.
    """
    g = u.grid
    t, w = np.polynomial.legendre.leggauss(n_radial)
    rr = 0.5 * radius * (t + 1)
    wr = 0.5 * radius * w * rr * 2 / radius**2  # weights of 2 r dr / R^2
    th = 2 * np.pi * np.arange(n_angle) / n_angle
    offs = np.stack([rr[:, None] * np.cos(th), rr[:, None] * np.sin(th)], -1)
    out = 0.0
    for c in np.atleast_2d(centers):
        pts = np.concatenate([c[None], (c + offs).reshape(-1, 2)])
        idx, wt = lagrange_stencil(g, pts)
        vals = np.sum(u.values.ravel()[idx] * wt, axis=-1)
        mean = float(np.sum(wr * vals[1:].reshape(n_radial, n_angle).mean(axis=1)))
        out = max(out, abs(vals[0] - mean))
    return out
