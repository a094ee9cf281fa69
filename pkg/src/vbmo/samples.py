"""Named analytic vector fields and the seeded random smooth family."""
from __future__ import annotations

import numpy as np

from .fields import VectorField
from .grid import Grid


def gradient_field(grid: Grid) -> VectorField:
    """``grad x_1 = (1, 0)``."""
    return VectorField.from_function(grid, lambda x, y: (np.ones_like(x), np.zeros_like(x)))


def rotation_field(grid: Grid) -> VectorField:
    return VectorField.from_function(grid, lambda x, y: (-y, x))


def mixed_field(grid: Grid) -> VectorField:
    """``(-y, x) + grad(r^3 cos 3 theta)``; on the unit disk ``v0 = (-y, x)``."""
    return VectorField.from_function(grid, lambda x, y: (-y + 3 * (x * x - y * y), x - 6 * x * y))


def random_smooth(grid: Grid, seed: int, modes: int = 4) -> VectorField:
    """Sum of damped products of cosines with Gaussian coefficients."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, modes, modes))
    ph = rng.uniform(0, 2 * np.pi, (2, modes, modes, 2))
    X, Y = grid.mesh
    vals = np.zeros((2,) + X.shape)
    for c in range(2):
        for k in range(modes):
            for m in range(modes):
                vals[c] += a[c, k, m] * np.cos(k * X + ph[c, k, m, 0]) * np.cos(m * Y + ph[c, k, m, 1]) / (1 + k + m)
    return VectorField(grid, vals)


NAMED = {"gradient": gradient_field, "rotation": rotation_field, "mixed": mixed_field}


def named_field(name: str, grid: Grid, seed: int = 0) -> VectorField:
    """``gradient``, ``rotation``, ``mixed`` or ``random`` (uses ``seed``)."""
    if name == "random":
        return random_smooth(grid, seed)
    try:
        return NAMED[name](grid)
    except KeyError:
        raise ValueError(f"unknown field {name!r}; choose from {sorted(NAMED) + ['random']}") from None
