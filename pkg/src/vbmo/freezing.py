"""Freezing-coefficient solvers on a boundary chart cylinder.

In chart coordinates ``-Laplace_x = L0 + M`` with

    L0 = A - B,    A = -Laplace_eta,    B = d_1 (b d_1),

``b = 1/J^2 - 1`` reflected evenly in ``eta_n`` and cut off by ``theta_rho``
(1 on ``V_2rho``, supported in ``V_4rho``). ``L0 q = F`` is solved by the
Neumann series ``q = sum_k A^-1 (B A^-1)^k F``, accumulated as
``t_0 = A^-1 F``, ``t_{k+1} = A^-1 B t_k``.

``A^-1`` is spectral on the cylinder grid zero-padded twofold (periodic,
zero mode removed); ``B`` is applied in flux form along ``eta'``. Both
commute with the reflection ``eta_n -> -eta_n`` on the symmetric
cell-centred grid, so partial sums keep their parity to round-off.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .cutoffs import plateau5
from .errors import ConvergenceFailure, SupportViolation, TruncationWarning
from .geometry import cylinder_axis, metric_coefficients


@dataclass
class SeriesConfig:
    """Truncation of the Neumann series."""

    eps: float = 1e-12
    max_terms: int = 64


@dataclass(eq=False)
class FrozenOperator:
    """``L0 = A - d_1 (b_rho d_1)`` on the ``M x M`` cylinder grid over ``[-4 rho, 4 rho]^2``.

    Parameters
    ----------
    b : array (M, M)
        Uncut coefficient ``b_11`` on the cylinder (even in ``eta_n``).
    rho : float
        Chart radius; the cylinder half-width is ``4 rho``.
    series : SeriesConfig
    """

    b: np.ndarray
    rho: float
    series: SeriesConfig = field(default_factory=SeriesConfig)
    chart: object = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        M = self.b.shape[0]
        if self.b.shape != (M, M) or M % 2:
            raise ValueError("b must be a square array with an even side")

    # ------------------------------------------------------------ geometry
    @property
    def M(self) -> int:
        return self.b.shape[0]

    @cached_property
    def axis(self) -> np.ndarray:
        return cylinder_axis(4.0 * self.rho, self.M)

    @property
    def spacing(self) -> float:
        return 8.0 * self.rho / self.M

    @cached_property
    def theta(self) -> np.ndarray:
        """Cut-off ``theta_rho``: 1 on ``V_2rho``, zero outside ``V_4rho``."""
        a = self.axis
        p = plateau5(np.abs(a) / (2.0 * self.rho))
        return p[:, None] * p[None, :]

    @cached_property
    def b_rho(self) -> np.ndarray:
        return self.b * self.theta

    def region(self, r: float) -> np.ndarray:
        """Mask of the sub-cylinder ``V_r``."""
        a = self.axis
        m = np.abs(a) < r
        return m[:, None] & m[None, :]

    # ------------------------------------------------------------- padding
    @property
    def P(self) -> int:
        return 2 * self.M

    def pad(self, u: np.ndarray) -> np.ndarray:
        M = self.M
        out = np.zeros((2 * M, 2 * M))
        out[M // 2:M // 2 + M, M // 2:M // 2 + M] = u
        return out

    def crop(self, U: np.ndarray) -> np.ndarray:
        M = self.M
        return U[M // 2:M // 2 + M, M // 2:M // 2 + M]

    @cached_property
    def _k(self):
        # real-to-complex layout: full axis 0, half axis 1
        k0 = 2 * np.pi * np.fft.fftfreq(self.P, self.spacing)
        k1 = 2 * np.pi * np.fft.rfftfreq(self.P, self.spacing)
        K1, K2 = np.meshgrid(k0, k1, indexing="ij")
        return K1, K2

    @cached_property
    def _inv_symbol(self) -> np.ndarray:
        K1, K2 = self._k
        k2 = K1**2 + K2**2
        with np.errstate(divide="ignore"):
            s = 1.0 / k2
        s[0, 0] = 0.0
        return s

    def _fwd(self, U):
        return sfft.rfft2(U, workers=-1)

    def _bwd(self, Uh):
        return sfft.irfft2(Uh, s=(self.P, self.P), workers=-1)

    @cached_property
    def _b_half(self) -> np.ndarray:
        bp = self.pad(self.b_rho)
        return 0.5 * (bp + np.roll(bp, -1, axis=0))

    # ----------------------------------------------------------- operators
    def A(self, U: np.ndarray) -> np.ndarray:
        K1, K2 = self._k
        return self._bwd(self._fwd(U) * (K1**2 + K2**2))

    def A_inv(self, U: np.ndarray) -> np.ndarray:
        return self._bwd(self._fwd(U) * self._inv_symbol)

    def B(self, U: np.ndarray) -> np.ndarray:
        """Flux form ``D^-(b D^+ U)`` along ``eta'`` (axis 0)."""
        h = self.spacing
        flux = self._b_half * (np.roll(U, -1, axis=0) - U) / h
        return (flux - np.roll(flux, 1, axis=0)) / h

    def derivative(self, U: np.ndarray, axis: int) -> np.ndarray:
        """Spectral derivative (Nyquist mode dropped)."""
        K = self._k[axis].copy()
        nyq = self.P // 2
        if axis == 0:
            K[nyq, :] = 0.0
        else:
            K[:, -1] = 0.0
        return self._bwd(self._fwd(U) * 1j * K)

    def L0(self, U: np.ndarray) -> np.ndarray:
        return self.A(U) - self.B(U)


@dataclass
class SeriesResult:
    """Solution of ``L0 q = F`` and the series diagnostics."""

    q: np.ndarray  # on the M x M cylinder
    forcing: np.ndarray
    term_norms: list
    ratios: list
    residual: float  # relative, on V_2rho
    truncated: bool
    padded: np.ndarray = field(repr=False, default=None)

    @property
    def n_terms(self) -> int:
        return len(self.term_norms)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0


def parity_defect(u: np.ndarray, parity: int) -> float:
    """``max |u(eta', -eta_n) - parity * u(eta', eta_n)|`` on a symmetric grid."""
    return float(np.max(np.abs(u[:, ::-1] - parity * u))) if u.size else 0.0


def _check_input(op: FrozenOperator, f: np.ndarray, parity: int, what: str, tol: float = 1e-10):
    f = np.asarray(f, dtype=float)
    if f.shape != (op.M, op.M):
        raise ValueError(f"{what} must live on the {op.M} x {op.M} cylinder grid")
    scale = float(np.max(np.abs(f)))
    if scale == 0.0:
        return f
    if parity_defect(f, parity) > tol * scale:
        kind = "odd" if parity < 0 else "even"
        raise SupportViolation(f"{what} is not {kind} in eta_n", stage=what, module="freezing")
    if np.max(np.abs(f[~op.region(op.rho * (1 + 1e-9))])) > tol * scale:
        raise SupportViolation(f"{what} is not supported in V_rho", stage=what, module="freezing")
    return f


def neumann_series(op: FrozenOperator, F: np.ndarray) -> SeriesResult:
    """Sum ``A^-1 (B A^-1)^k F`` on the padded grid.

    Raises ``ConvergenceFailure`` when a term fails to shrink and warns with
    ``TruncationWarning`` when ``max_terms`` is reached before ``eps``.
    """
    cfg = op.series
    t = op.A_inv(F)
    q = t.copy()
    n0 = float(np.linalg.norm(t))
    norms = [n0]
    ratios = []
    truncated = False
    if n0 > 0 and np.any(op.b_rho):
        while True:
            if norms[-1] <= cfg.eps * n0:
                break
            if len(norms) >= cfg.max_terms:
                truncated = True
                warnings.warn(f"Neumann series truncated at {cfg.max_terms} terms", TruncationWarning, stacklevel=3)
                break
            t = op.A_inv(op.B(t))
            nk = float(np.linalg.norm(t))
            ratio = nk / norms[-1]
            if ratio >= 1.0:
                raise ConvergenceFailure(f"series term ratio {ratio:.3g} >= 1; shrink rho", stage="neumann_series")
            ratios.append(ratio)
            norms.append(nk)
            q += t
    m = op.pad(op.region(2 * op.rho).astype(float)) > 0
    res = op.L0(q) - F
    fn = float(np.linalg.norm(F[m]))
    residual = float(np.linalg.norm(res[m])) / fn if fn > 0 else float(np.linalg.norm(res[m]))
    return SeriesResult(op.crop(q), op.crop(F), norms, ratios, residual, truncated, q)


def solve_odd(op: FrozenOperator, f: np.ndarray) -> SeriesResult:
    """Solve ``L0 q = d_n f`` for ``f`` odd in ``eta_n`` and supported in ``V_rho``; ``q`` is even."""
    f = _check_input(op, f, -1, "solve_odd")
    F = op.derivative(op.pad(f), 1)
    return neumann_series(op, F)


def solve_even(op: FrozenOperator, g: np.ndarray, i: int = 0) -> SeriesResult:
    """Solve ``L0 q = d_i g`` (``i = 0``: ``eta'``) for ``g`` even in ``eta_n``; ``q`` is even."""
    if i != 0:
        raise ValueError("only the tangential axis i = 0 exists in two dimensions")
    g = _check_input(op, g, 1, "solve_even")
    F = op.derivative(op.pad(g), 0)
    return neumann_series(op, F)


def frozen_operator(domain, j: int, M: int = 64, series: SeriesConfig | None = None,
                    zero_b: bool = False) -> FrozenOperator:
    """Frozen operator of chart ``j`` (0-based) with cylinder half-width ``4 rho``."""
    chart = domain.chart(j, 4.0 * domain.rho)
    mc = metric_coefficients(chart, M)
    b = np.zeros_like(mc.b11) if zero_b else mc.b11
    return FrozenOperator(b, domain.rho, series or SeriesConfig(), chart)


def probe_forcing(op: FrozenOperator, parity: int = -1, k: int = 3) -> np.ndarray:
    """Oscillatory input of the requested parity supported in ``V_rho``."""
    a = op.axis / op.rho
    env = plateau5(np.abs(a) * 2.0)
    E1, En = np.meshgrid(a, a, indexing="ij")
    base = np.cos(k * np.pi * E1) * env[:, None] * env[None, :]
    return base * (np.sin(k * np.pi * En) if parity < 0 else np.cos(k * np.pi * En))


def spectral_radius(op: FrozenOperator, iters: int = 60, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral radius of ``A^-1 B`` (even sector)."""
    if not np.any(op.b_rho):
        return 0.0
    rng = np.random.default_rng(seed)
    u = op.pad(rng.standard_normal((op.M, op.M)))
    u = 0.5 * (u + u[:, ::-1])
    u /= np.linalg.norm(u)
    lam = 0.0
    for _ in range(iters):
        w = op.A_inv(op.B(u))
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        u = w / lam
    return lam


def neumann_series_diagnostics(op: FrozenOperator) -> dict:
    """Per-term norms for a canonical odd forcing, spectral radius and the contraction threshold.

    The threshold extrapolates linearly in ``rho`` (``|b_rho| = O(rho)``):
    ``rho_fail = rho / radius``.
    """
    radius = spectral_radius(op)
    try:
        res = solve_odd(op, probe_forcing(op, -1))
        norms, ratios, residual = res.term_norms, res.ratios, res.residual
    except ConvergenceFailure:
        norms, ratios, residual = [], [float("inf")], float("nan")
    return {
        "rho": op.rho,
        "b_rho_sup": float(np.max(np.abs(op.b_rho))),
        "term_norms": norms,
        "ratios": ratios,
        "max_ratio": max(ratios) if ratios else 0.0,
        "spectral_radius": radius,
        "rho_threshold": op.rho / radius if radius > 0 else float("inf"),
        "residual": residual,
    }
