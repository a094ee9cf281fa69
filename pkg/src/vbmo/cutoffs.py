"""Smooth cutoff profiles shared by the partition of unity and the freezing solver."""
from __future__ import annotations

import numpy as np


def _psi(t):
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = _psi(t)
    b = _psi(1.0 - t)
    return a / (a + b)


def bump(s):
    """C-infinity plateau profile: 1 on [0, 1], 0 on [2, inf); even in s."""
    s = np.abs(np.asarray(s, dtype=float))
    return 1.0 - smooth_step(s - 1.0)


def smooth_step_derivative(t):
    """Derivative of ``smooth_step``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = (t > 0) & (t < 1)
    tm = t[m]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    da = a / tm**2
    db = -b / (1.0 - tm) ** 2
    out[m] = (da * b - a * db) / (a + b) ** 2
    return out


def bump_derivative(s):
    """d/ds of ``bump`` (odd in s)."""
    s = np.asarray(s, dtype=float)
    return -np.sign(s) * smooth_step_derivative(np.abs(s) - 1.0)


def smoothstep5(t):
    """Quintic smoothstep 6t^5 - 15t^4 + 10t^3 clipped to [0, 1] (C^2)."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def plateau5(s):
    """Quintic plateau: 1 on [0, 1], 0 on [2, inf); even in s."""
    return 1.0 - smoothstep5(np.abs(np.asarray(s, dtype=float)) - 1.0)
