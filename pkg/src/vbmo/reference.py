"""Reference L2 Helmholtz projection used as an oracle for the decomposition.

Deliberately independent of the chart, extension and singular-integral
machinery: it only needs the signed distance on the grid.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla


def _edge_fraction(da, db):
    """Fraction of the segment between two cell centres where the linear interpolant of ``d`` is positive."""
    out = np.where((da > 0) & (db > 0), 1.0, 0.0)
    cross = (da > 0) != (db > 0)
    pos = np.where(da > 0, da, db)
    neg = np.where(da > 0, db, da)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = pos / (pos - neg)
    return np.where(cross, frac, out)


def l2_projection(v: np.ndarray, d: np.ndarray, h: float, tol: float = 1e-12):
    """Cut-cell L2 Helmholtz projection on a staggered grid.

    Minimises ``sum_e w_e (D q - h v_e)^2`` over cell potentials ``q`` with
    ``w_e`` the inside fraction of each cell-to-cell edge and ``v_e`` the
    edge-normal component averaged from the two cells. Returns ``(v0, q)``
    with ``v0 = v - central grad q``; cells next to the boundary are
    unreliable and should be masked by the caller.
    """
    N = d.shape[0]
    idx = np.arange(N * N).reshape(N, N)
    rows, cols, vals = [], [], []
    b = np.zeros(N * N)
    for axis in (0, 1):
        sl_a = (slice(None, -1), slice(None)) if axis == 0 else (slice(None), slice(None, -1))
        sl_b = (slice(1, None), slice(None)) if axis == 0 else (slice(None), slice(1, None))
        w = _edge_fraction(d[sl_a], d[sl_b])
        m = w > 0
        ia, ib, we = idx[sl_a][m], idx[sl_b][m], w[m]
        ve = 0.5 * (v[axis][sl_a][m] + v[axis][sl_b][m]) * h
        rows += [ia, ib, ia, ib]
        cols += [ia, ib, ib, ia]
        vals += [we, we, -we, -we]
        np.add.at(b, ib, we * ve)
        np.add.at(b, ia, -we * ve)
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N * N, N * N))
    active = np.flatnonzero(np.asarray(A.diagonal()) > 0)
    A = A[active][:, active]
    b = b[active]
    b -= b.mean()
    x, info = spla.cg(A, b, rtol=tol, maxiter=20 * N)
    if info != 0:
        raise RuntimeError(f"oracle CG did not converge (info={info})")
    q = np.zeros(N * N)
    q[active] = x
    q = q.reshape(N, N)
    gx, gy = np.gradient(q, h)
    return v - np.stack([gx, gy]), q


def oracle_deviation(v0: np.ndarray, v: np.ndarray, d: np.ndarray, h: float, margin: float = 3.0) -> float:
    """``|v0 - v0_ref|_2 / |v|_2`` over cells deeper than ``margin`` spacings."""
    ref, _ = l2_projection(v, d, h)
    m = d > margin * h
    den = float(np.sqrt(np.sum(v[:, m] ** 2)))
    num = float(np.sqrt(np.sum((v0 - ref)[:, m] ** 2)))
    return num / den if den > 0 else num
