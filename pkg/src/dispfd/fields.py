"""Uniform grids and grid-sampled fields.

One-dimensional grids use the points ``x_j = j * dx`` for ``j = 1..N`` so the
first stored value sits one spacing to the right of the origin.  Two-dimensional
fields store ``u(x_j, y_i)`` at array index ``[i, j]``: rows vary in ``y`` and
columns vary in ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Grid1D", "Field1D", "Grid2D", "Field2D", "GridMismatchError"]


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid ``x_j = j * dx`` on ``(0, length]``.

    Parameters
    ----------
    n : int
        Number of points.  Periodic experiments expect ``n`` to be even.
    length : float
        Domain length.
    origin : float
        Shift applied to every point, so ``x_j = origin + j * dx``.
    """

    n: int
    length: float = 1.0
    origin: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid needs at least one point")
        if not self.length > 0:
            raise ValueError("domain length must be positive")

    @classmethod
    def from_spacing(cls, dx: float, length: float = 1.0, origin: float = 0.0) -> "Grid1D":
        n = int(round(length / dx))
        if n < 1 or abs(n * dx - length) > 1e-9 * length:
            raise ValueError(f"spacing {dx} does not divide length {length}")
        return cls(n, length, origin)

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return self.origin + np.arange(1, self.n + 1) * self.dx

    def kappa(self, k: float) -> float:
        """Modified wavenumber ``k * dx`` of an angular wavenumber ``k``."""
        return k * self.dx


@dataclass(frozen=True)
class Grid2D:
    """Square uniform grid with ``x_j = origin + j*dx`` and ``y_i = origin + i*dx``."""

    n: int
    length: float = 1.0
    origin: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid needs at least one point")
        if not self.length > 0:
            raise ValueError("domain length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def axis(self) -> np.ndarray:
        return self.origin + np.arange(1, self.n + 1) * self.dx

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` arrays with ``X[i, j] = x_j`` and ``Y[i, j] = y_i``."""
        return np.meshgrid(self.axis, self.axis, indexing="xy")


@dataclass
class Field1D:
    """Values ``U_j`` sampled on a :class:`Grid1D`."""

    grid: Grid1D
    values: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {self.values.shape}")

    @classmethod
    def sample(cls, grid: Grid1D, fun, time: float = 0.0) -> "Field1D":
        return cls(grid, np.asarray(fun(grid.x)), time)

    def like(self, values, time: float | None = None) -> "Field1D":
        return Field1D(self.grid, values, self.time if time is None else time)


@dataclass
class Field2D:
    """Values ``U[i, j] = u(x_j, y_i)`` sampled on a :class:`Grid2D`."""

    grid: Grid2D
    values: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values)
        n = self.grid.n
        if self.values.shape != (n, n):
            raise ValueError(f"expected ({n}, {n}) values, got shape {self.values.shape}")

    @classmethod
    def sample(cls, grid: Grid2D, fun, time: float = 0.0) -> "Field2D":
        x, y = grid.mesh()
        return cls(grid, np.asarray(fun(x, y)), time)

    def like(self, values, time: float | None = None) -> "Field2D":
        return Field2D(self.grid, values, self.time if time is None else time)


def check_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")
