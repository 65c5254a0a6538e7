"""Two-dimensional periodic transport on square tensor grids.

Arrays follow the convention ``U[i, j] = u(x_j, y_i)``: the row index walks
in ``y`` and the column index walks in ``x``.  The x-derivative therefore acts
along axis 1 (``U @ D_x`` with ``D_x = D^T``) and the y-derivative along
axis 0 (``D_y @ U``).  Both reuse one factorization of the 1D operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special

from .csvio import write_csv
from .dispersion import NyquistError, kappa_error
from .fields import Field2D, Grid2D, check_same_grid
from .rk import RKScheme
from .schemes import InteriorScheme
from .transport1d import time_steps

__all__ = [
    "deriv_x",
    "deriv_y",
    "phase_error_2d",
    "RotationResult",
    "rotation_speeds",
    "solve_rotation",
    "heaviside",
    "zalesak_ic",
    "exact_rotation",
    "erf",
    "l2_error_2d",
    "write_snapshot_csv",
    "write_snapshot_binary",
    "read_snapshot_binary",
    "rotation_grid",
]


def erf(x):
    """Error function (absolute accuracy well below ``1e-12``)."""
    out = special.erf(np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def _op(s: InteriorScheme, U: Field2D):
    return s.operator(U.grid.n, U.grid.dx)


def deriv_x(s: InteriorScheme, U: Field2D) -> Field2D:
    """Compact derivative along ``x`` (every row)."""
    return U.like(_op(s, U)(U.values, axis=1))


def deriv_y(s: InteriorScheme, U: Field2D) -> Field2D:
    """Compact derivative along ``y`` (every column)."""
    return U.like(_op(s, U)(U.values, axis=0))


def phase_error_2d(s: InteriorScheme, kx: float, ky: float, cx: float, cy: float, dx: float, T: float) -> float:
    """``(c_x (k_x* - k_x) + c_y (k_y* - k_y)) T`` for constant-speed transport."""
    for k in (kx, ky):
        if abs(k * dx) > math.pi * (1 + 1e-14):
            raise NyquistError(f"|k dx| = {abs(k * dx):.6g} exceeds pi")
    ex = kappa_error(s, kx * dx) / dx
    ey = kappa_error(s, ky * dx) / dx
    return float((cx * ex + cy * ey) * T)


# -- rotating-disk benchmark ------------------------------------------------------------


def rotation_grid(n: int) -> Grid2D:
    """Square grid on ``[-1/2, 1/2]^2`` with ``x_j = -1/2 + j/n``."""
    return Grid2D(n, 1.0, -0.5)


def rotation_speeds(grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """``c_x = 2 pi y`` and ``c_y = -2 pi x`` sampled on the grid."""
    x, y = grid.mesh()
    return 2 * np.pi * y, -2 * np.pi * x


def heaviside(z, delta):
    """Smoothed step ``(1 + erf(4 z / delta)) / 2``."""
    return 0.5 * (1.0 + erf(4.0 * np.asarray(z, dtype=float) / delta))


def zalesak_ic(x, y):
    """Smoothed slotted disk ``(1 - u1) u2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u1 = heaviside(x**2 + (y - 1 / 12) ** 2 - 1 / 20, 1 / 20)
    u2 = 1 - (1 - heaviside(x**2 - 1 / 100, 1 / 40)) * (1 - heaviside((y + 1 / 8) ** 2 - 1 / 36, 1 / 40))
    return (1 - u1) * u2


def exact_rotation(u0fun: Callable, x, y, t: float):
    """Initial profile rotated by ``2 pi t``: ``u0(x cos th - y sin th, x sin th + y cos th)``."""
    th = 2 * np.pi * t
    c, s = math.cos(th), math.sin(th)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return u0fun(x * c - y * s, x * s + y * c)


def l2_error_2d(Ua: Field2D, Ub: Field2D) -> float:
    """``sqrt(sum |Ua - Ub|^2 dx dy)``."""
    check_same_grid(Ua, Ub)
    return float(np.sqrt(np.sum(np.abs(Ua.values - Ub.values) ** 2)) * Ua.grid.dx)


@dataclass
class RotationResult:
    field: Field2D
    dt: float
    n_steps: int
    history: list[tuple[float, float, float]] = field(default_factory=list)


def solve_rotation(
    s: InteriorScheme,
    rk: RKScheme,
    U0: Field2D,
    T: float,
    r: float,
    exact: Callable | None = None,
    stride: int = 1,
) -> RotationResult:
    """RK stepping of ``dU/dt = -(C_x * D_x U + C_y * D_y U)`` (non-conservative form).

    The step is ``dt <= r dx / max(|c_x|, |c_y|)`` over grid points, shrunk to
    land on ``T``.  ``exact(x, y, t)`` enables an error history.
    """
    if r <= 0:
        raise ValueError("CFL number must be positive")
    g = U0.grid
    cx, cy = rotation_speeds(g)
    cmax = float(max(np.max(np.abs(cx)), np.max(np.abs(cy))))
    op = s.operator(g.n, g.dx)
    X, Y = g.mesh()

    def rhs(U):
        return -(cx * op(U, axis=1) + cy * op(U, axis=0))

    hist = []

    def record(i, U):
        if exact is None or (i % stride and i != n):
            return
        t = i * dt if i != n else T
        ref = np.asarray(exact(X, Y, t))
        err = U - ref
        hist.append((t, float(np.sqrt(np.sum(err**2)) * g.dx), float(np.max(np.abs(err)))))

    if T == 0:
        n, dt = 0, 0.0
        record(0, U0.values)
        return RotationResult(U0.like(np.array(U0.values)), 0.0, 0, hist)
    n, dt = time_steps(T, r * g.dx / cmax)
    record(0, U0.values)
    U = rk.integrate(rhs, U0.values, dt, n, callback=record)
    return RotationResult(U0.like(U, T), dt, n, hist)


# -- snapshot output --------------------------------------------------------------------


def write_snapshot_csv(U: Field2D, path) -> Path:
    """Flat ``x, y, u`` rows, ``x`` varying fastest."""
    x, y = U.grid.mesh()
    return write_csv(path, ("x", "y", "u"), zip(x.ravel(), y.ravel(), np.real(U.values).ravel()))


def write_snapshot_binary(U: Field2D, path) -> Path:
    """Row-major float64 values after a one-line text header ``N length origin time``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = U.grid
    with open(path, "wb") as fh:
        fh.write(f"{g.n} {g.length!r} {g.origin!r} {float(U.time)!r}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(np.real(U.values), dtype="<f8").tobytes())
    return path


def read_snapshot_binary(path) -> Field2D:
    with open(path, "rb") as fh:
        n, length, origin, time = fh.readline().decode("ascii").split()
        n = int(n)
        vals = np.frombuffer(fh.read(), dtype="<f8").reshape(n, n)
    return Field2D(Grid2D(n, float(length), float(origin)), vals.copy(), float(time))
