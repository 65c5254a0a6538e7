"""Composite schemes for outflow problems on ``x_j = j dx``, ``j = 1..N``.

The left end ``x_0 = 0`` is an inflow point.  Values ``U_j`` and ``U'_j``
for ``j <= 0`` are taken as zero unless ghost values are supplied.  The right
end ``x_N`` is closed by three one-sided compact rows.

Two variants are provided:

``direct``
    interior rows for ``j = 1..N-3`` coupled to the boundary rows in one
    banded system (UNOPT10TH interior gives UNOPT8TH).
``buffer``
    an ``m``-point buffer system at the right end (mirrored boundary rows,
    tenth-order interior rows, boundary rows) supplies ``U'`` at the last five
    points; the interior scheme is then solved on ``j = 1..N-5`` with those five
    values moved to the right-hand side (KLL2ND interior gives KLL2NDBC).

The one-sided rows are stored with the explicit coefficients ``a..g``
multiplying ``U_N, U_{N-1}, ..., U_{N-6}`` and are applied with the factor
``-1/(2 dx)``; with this factor the three rows are exact for polynomials of
degree 10, 9 and 8.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .banded import BandedMatrix
from .csvio import write_csv
from .fields import Field1D, Grid1D
from .rk import RKScheme
from .schemes import CATALOG, InteriorScheme
from .transport1d import l2_error, linf_error, time_steps

__all__ = [
    "BoundaryRow",
    "BoundaryRows",
    "UNOPTBS",
    "CompositeOperator",
    "DeltaKProfile",
    "InstabilityError",
    "IBVPResult",
    "assemble_direct",
    "derivative_direct",
    "derivative_buffered",
    "solve_outflow_ibvp",
    "tam_ic",
    "tam_exact",
    "delta_k",
    "delta_k_objective",
    "unopt8th",
    "kll2ndbc",
    "ANSATZ_WIDTH",
    "MIN_BUFFER",
]

ANSATZ_WIDTH = 5
MIN_BUFFER = 9
GHOST_U = 6  # ghost values U_j for j = -5..0
GHOST_DU = 2  # ghost derivatives U'_j for j = -1, 0


class InstabilityError(RuntimeError):
    """Solution norm exceeded the growth safeguard."""


@dataclass(frozen=True)
class BoundaryRow:
    """One right-end row.

    ``lhs`` maps an offset relative to the row point to its implicit
    coefficient (the diagonal is 1).  ``rhs[m]`` multiplies ``U_{N-m}``.
    """

    point: int  # 0 for x_N, -1 for x_{N-1}, -2 for x_{N-2}
    lhs: tuple[tuple[int, Fraction], ...]
    rhs: tuple[Fraction, ...]

    def lhs_dict(self) -> dict[int, float]:
        return {o: float(v) for o, v in self.lhs}


@dataclass(frozen=True)
class BoundaryRows:
    """Rows for ``x_{N-2}``, ``x_{N-1}`` and ``x_N`` with explicit prefactor ``scale / dx``."""

    name: str
    rows: tuple[BoundaryRow, BoundaryRow, BoundaryRow]
    scale: Fraction = Fraction(-1, 2)

    def polynomial_exactness(self, max_degree: int = 14) -> list[int]:
        """Highest degree ``q`` such that each row is exact for ``1, x, .., x^q`` (exact arithmetic)."""
        out = []
        for row in self.rows:
            deg = -1
            for q in range(max_degree + 1):
                rhs = self.scale * sum(c * Fraction(-m) ** q for m, c in enumerate(row.rhs))
                lhs = sum(w * (q * Fraction(row.point + o) ** (q - 1) if q else 0) for o, w in ((0, Fraction(1)), *row.lhs))
                if lhs != rhs:
                    break
                deg = q
            out.append(deg)
        return out


F = Fraction
UNOPTBS = BoundaryRows(
    "UNOPTBS",
    (
        BoundaryRow(
            -2,
            ((-2, F(1, 6)), (-1, F(8, 9)), (1, F(4, 15)), (2, F(1, 90))),
            (F(-68, 675), F(-254, 225), F(-7, 6), F(40, 27), F(8, 9), F(2, 75), F(-1, 1350)),
        ),
        BoundaryRow(
            -1,
            ((-2, F(10, 9)), (-1, F(5, 2)), (1, F(1, 18))),
            (F(-257, 540), F(-107, 30), F(-5, 12), F(110, 27), F(5, 12), F(-1, 30), F(1, 540)),
        ),
        BoundaryRow(
            0,
            ((-2, F(15)), (-1, F(12))),
            (F(-79, 10), F(-154, 5), F(55, 2), F(40, 3), F(-5, 2), F(2, 5), F(-1, 30)),
        ),
    ),
)
del F


# -- banded assembly helpers ------------------------------------------------------------


def _put(bands: np.ndarray, lower: int, row: int, col: int, val: float) -> None:
    bands[lower + col - row, row] += val


def _interior_lhs(s: InteriorScheme) -> dict[int, float]:
    return {-2: s.beta, -1: s.alpha, 1: s.alpha, 2: s.beta}


def _explicit(a: float, b: float, c: float, dx: float) -> dict[int, float]:
    return {-3: -c / (6 * dx), -2: -b / (4 * dx), -1: -a / (2 * dx), 1: a / (2 * dx), 2: b / (4 * dx), 3: c / (6 * dx)}


def _boundary_system(n: int, dx: float, rows: list[tuple[int, dict[int, float], dict[int, float]]]) -> tuple[BandedMatrix, BandedMatrix]:
    """Square ``(L, R)`` from rows given as ``(index, lhs_offsets, rhs_offsets)``; out-of-range terms dropped."""
    lo_l = up_l = 2
    lo_r = up_r = 6
    Lb = np.zeros((lo_l + up_l + 1, n))
    Rb = np.zeros((lo_r + up_r + 1, n))
    for i, lhs, rhs in rows:
        _put(Lb, lo_l, i, i, 1.0)
        for o, v in lhs.items():
            if 0 <= i + o < n and v != 0:
                _put(Lb, lo_l, i, i + o, v)
        for o, v in rhs.items():
            if 0 <= i + o < n and v != 0:
                _put(Rb, lo_r, i, i + o, v)
    return BandedMatrix(n, lo_l, up_l, Lb), BandedMatrix(n, lo_r, up_r, Rb)


def _right_rows(br: BoundaryRows, n: int, dx: float) -> list[tuple[int, dict[int, float], dict[int, float]]]:
    """Boundary rows placed at the last three of ``n`` points (0-based indices)."""
    out = []
    fac = float(br.scale) / dx
    for row in br.rows:
        i = n - 1 + row.point
        rhs = {(n - 1 - m) - i: fac * float(c) for m, c in enumerate(row.rhs)}
        out.append((i, row.lhs_dict(), rhs))
    return out


def _mirrored_left_rows(br: BoundaryRows, dx: float) -> list[tuple[int, dict[int, float], dict[int, float]]]:
    """Boundary rows reflected onto the first three of a window.

    ``x_{N-q} -> x_{p0+q}``: implicit couplings keep their coefficients at the
    reflected offsets and the explicit coefficients change sign.
    """
    out = []
    fac = -float(br.scale) / dx
    for row in br.rows:
        i = -row.point
        lhs = {-o: v for o, v in row.lhs_dict().items()}
        rhs = {m - i: fac * float(c) for m, c in enumerate(row.rhs)}
        out.append((i, lhs, rhs))
    return out


# -- composite operator ----------------------------------------------------------------------


@dataclass
class CompositeOperator:
    """Non-periodic first-derivative operator on ``N`` points.

    Parameters
    ----------
    interior : InteriorScheme
        Scheme used away from the right end.
    boundary : BoundaryRows
        Right-end closure rows.
    n, dx : int, float
        Grid size and spacing.
    variant : {"direct", "buffer"}
    m : int
        Buffer width (``buffer`` only, at least 9).
    buffer_interior : InteriorScheme
        Scheme for the inner rows of the buffer (default UNOPT10TH).
    """

    interior: InteriorScheme
    boundary: BoundaryRows
    n: int
    dx: float
    variant: str = "direct"
    m: int = 10
    buffer_interior: InteriorScheme = field(default_factory=lambda: CATALOG["UNOPT10TH"])

    def __post_init__(self):
        if self.variant not in ("direct", "buffer"):
            raise ValueError(f"unknown variant {self.variant!r}")
        s = self.interior
        self._lhs = _interior_lhs(s)
        self._rhs = _explicit(s.a, s.b, s.c, self.dx)
        self._aug = _explicit(s.d, s.e, s.f, self.dx) if s.is_augmented else None
        if self.variant == "direct":
            if self.n < 12:
                raise ValueError(f"direct composite needs N >= 12, got {self.n}")
            if s.is_augmented:
                raise ValueError("direct coupling is defined for classical interiors only; use the buffer variant")
            rows = [(i, self._lhs, self._rhs) for i in range(self.n - 3)] + _right_rows(self.boundary, self.n, self.dx)
            self.L, self.R = _boundary_system(self.n, self.dx, rows)
        else:
            if self.m < MIN_BUFFER:
                raise ValueError(f"buffer width m={self.m} < {MIN_BUFFER}; the buffer system may be ill-posed")
            if self.n < self.m + 12:
                raise ValueError(f"buffer composite needs N >= m + 12 = {self.m + 12}, got {self.n}")
            m = self.m
            bi = self.buffer_interior
            inner = [(i, _interior_lhs(bi), _explicit(bi.a, bi.b, bi.c, self.dx)) for i in range(3, m - 3)]
            rows = _mirrored_left_rows(self.boundary, self.dx) + inner + _right_rows(self.boundary, m, self.dx)
            self.Lbuf, self.Rbuf = _boundary_system(m, self.dx, rows)
            M = self.n - ANSATZ_WIDTH
            Lr = np.zeros((5, M))
            for k, o in enumerate(range(-2, 3)):
                Lr[k] = 1.0 if o == 0 else self._lhs[o]
            self.Lred = BandedMatrix(M, 2, 2, Lr)
            self.Lbuf.factorization()
            self.Lred.factorization()
        if self.variant == "direct":
            self.L.factorization()

    @property
    def name(self) -> str:
        if self.variant == "direct":
            return f"{self.interior.name}+{self.boundary.name}"
        return f"{self.interior.name}+buffer{self.m}"

    # -- stencil application on the ghost-extended vector -----------------------------------

    def _extend(self, U, ghost_u):
        g = np.zeros(GHOST_U, dtype=np.result_type(U, float)) if ghost_u is None else np.asarray(ghost_u)
        if g.shape != (GHOST_U,):
            raise ValueError(f"ghost_u must hold U_j for j = -5..0 ({GHOST_U} values)")
        return np.concatenate([g, U, np.zeros(3, dtype=g.dtype)])

    @staticmethod
    def _stencil(Uext: np.ndarray, coeffs: dict[int, float], j0: int, j1: int) -> np.ndarray:
        """``sum_o coeffs[o] U_{j+o}`` for ``j = j0..j1`` (1-based) on the extended vector."""
        out = np.zeros(j1 - j0 + 1, dtype=Uext.dtype)
        for o, v in coeffs.items():
            if v != 0:
                start = j0 + o + GHOST_U - 1
                out += v * Uext[start : start + (j1 - j0 + 1)]
        return out

    def _ghost_du_term(self, ghost_du, rows: int, dtype) -> np.ndarray:
        out = np.zeros(rows, dtype=dtype)
        if ghost_du is None:
            return out
        gd = np.asarray(ghost_du)
        if gd.shape != (GHOST_DU,):
            raise ValueError("ghost_du must hold U'_j for j = -1, 0")
        # row 1 couples U'_{-1} (beta) and U'_0 (alpha); row 2 couples U'_0 (beta)
        out[0] -= self._lhs[-2] * gd[0] + self._lhs[-1] * gd[1]
        out[1] -= self._lhs[-2] * gd[1]
        return out

    # -- derivative ----------------------------------------------------------------------------

    def __call__(self, U, ghost_u=None, ghost_du=None) -> np.ndarray:
        U = np.asarray(U)
        if U.shape != (self.n,):
            raise ValueError(f"expected {self.n} values, got shape {U.shape}")
        if self.variant == "direct":
            return self._direct(U, ghost_u, ghost_du)
        return self._buffered(U, ghost_u, ghost_du)

    def _direct(self, U, ghost_u, ghost_du):
        n = self.n
        rhs = self.R.matvec(U)
        if ghost_u is not None or ghost_du is not None:
            Uext = self._extend(U, ghost_u)
            # interior rows 1..3 reach left of x_1; replace them with the full stencil
            head = self._stencil(Uext, self._rhs, 1, 3)
            rhs = rhs.astype(np.result_type(rhs, head))
            rhs[:3] = head
            rhs[: n - 3] += self._ghost_du_term(ghost_du, n - 3, rhs.dtype)
        return self.L.solve(rhs)

    def _buffered(self, U, ghost_u, ghost_du):
        n, m = self.n, self.m
        Ub = U[n - m :]
        dU_buf = self.Lbuf.solve(self.Rbuf.matvec(Ub))
        ans = dU_buf[-ANSATZ_WIDTH:]  # U'_{N-4..N}
        M = n - ANSATZ_WIDTH
        Uext = self._extend(U, ghost_u)
        rhs = self._stencil(Uext, self._rhs, 1, M)
        rhs = rhs.astype(np.result_type(rhs, ans))
        if self._aug is not None:
            # W_j for j = -1..N-3, then L W on rows 1..M
            W = self._stencil(Uext, self._aug, -1, n - 3)
            Wpad = np.concatenate([W, np.zeros(2, dtype=W.dtype)])
            LW = W[2 : 2 + M].copy()
            for o in (-2, -1, 1, 2):
                LW = LW + self._lhs[o] * Wpad[2 + o : 2 + o + M]
            rhs = rhs + LW
        rhs = rhs + self._ghost_du_term(ghost_du, M, rhs.dtype)
        # rows N-6 and N-5 couple to the ansatz values U'_{N-4}, U'_{N-3}
        rhs[M - 2] -= self._lhs[2] * ans[0]
        rhs[M - 1] -= self._lhs[1] * ans[0] + self._lhs[2] * ans[1]
        return np.concatenate([self.Lred.solve(rhs), ans])

    def dense(self) -> np.ndarray:
        """Dense matrix of the operator with zero ghosts (columns are images of unit vectors)."""
        return np.column_stack([self(e) for e in np.eye(self.n)])


def unopt8th(n: int, dx: float) -> CompositeOperator:
    """Direct UNOPT10TH + UNOPTBS composite."""
    return CompositeOperator(CATALOG["UNOPT10TH"], UNOPTBS, n, dx, "direct")


def kll2ndbc(n: int, dx: float, m: int = 10) -> CompositeOperator:
    """Buffer-zone composite with KLL2ND interior."""
    return CompositeOperator(CATALOG["KLL2ND"], UNOPTBS, n, dx, "buffer", m)


def assemble_direct(interior: InteriorScheme, boundary: BoundaryRows, n: int, dx: float) -> tuple[BandedMatrix, BandedMatrix]:
    """Banded ``(L, R)`` of the direct composite; values at ``j <= 0`` are zero."""
    op = CompositeOperator(interior, boundary, n, dx, "direct")
    return op.L, op.R


def derivative_direct(op: CompositeOperator, U, dx: float | None = None, **ghosts) -> np.ndarray:
    if op.variant != "direct":
        raise ValueError("operator is not the direct variant")
    _check_dx(op, dx)
    return op(_values(U), **ghosts)


def derivative_buffered(op: CompositeOperator, U, dx: float | None = None, **ghosts) -> np.ndarray:
    if op.variant != "buffer":
        raise ValueError("operator is not the buffer variant")
    _check_dx(op, dx)
    return op(_values(U), **ghosts)


def _values(U):
    return U.values if isinstance(U, Field1D) else np.asarray(U)


def _check_dx(op, dx):
    if dx is not None and not math.isclose(dx, op.dx, rel_tol=1e-12):
        raise ValueError(f"operator built for dx={op.dx}, called with dx={dx}")


# -- outflow IBVP -----------------------------------------------------------------------------


def tam_ic(x, k0: float = 255.0):
    """Gaussian-enveloped packet ``exp(-(25/9) ln2 (x - 1/3)^2) (2 + cos(k0 (x - 1/3)))``."""
    x = np.asarray(x, dtype=float)
    return np.exp(-(25.0 / 9.0) * math.log(2.0) * (x - 1 / 3) ** 2) * (2 + np.cos(k0 * (x - 1 / 3)))


def tam_exact(x, t: float, c: float = 1.0, u0fun: Callable = tam_ic):
    """``u0(x - c t)`` for ``x - c t >= 0`` and zero upstream of the inflow characteristic."""
    xi = np.asarray(x, dtype=float) - c * t
    return np.where(xi >= 0, u0fun(np.maximum(xi, 0.0)), 0.0)


@dataclass
class IBVPResult:
    field: Field1D
    dt: float
    n_steps: int
    history: list[tuple[float, float, float]]

    def write_history(self, path):
        return write_csv(path, ("time", "l2_error", "linf_error"), self.history)


def solve_outflow_ibvp(
    op: CompositeOperator,
    rk: RKScheme,
    c: float,
    U0: Field1D,
    T: float,
    r: float,
    exact: Callable | None = None,
    stride: int = 1,
    growth_limit: float = 1e3,
) -> IBVPResult:
    """RK stepping of ``dU/dt = -c D U`` with zero inflow data.

    ``exact(x, t)`` defaults to :func:`tam_exact` with the given ``c``.  The
    run aborts with :class:`InstabilityError` once the error exceeds
    ``growth_limit`` times the initial solution norm.
    """
    if not c > 0:
        raise ValueError("outflow problem needs c > 0")
    if r <= 0:
        raise ValueError("CFL number must be positive")
    g = U0.grid
    if g.n != op.n or not math.isclose(g.dx, op.dx, rel_tol=1e-12):
        raise ValueError("field grid does not match the operator")
    exact = exact if exact is not None else (lambda x, t: tam_exact(x, t, c))
    norm0 = float(np.sqrt(np.sum(np.abs(U0.values) ** 2) * g.dx))
    limit = growth_limit * max(norm0, np.finfo(float).tiny)
    n, dt = time_steps(T, r * g.dx / c) if T > 0 else (0, 0.0)
    hist = []

    def record(i, U):
        if i % stride and i != n:
            return
        t = i * dt if i != n else T
        ref = Field1D(g, exact(g.x, t))
        cur = Field1D(g, U)
        e2 = l2_error(cur, ref)
        hist.append((t, e2, linf_error(cur, ref)))
        if not np.isfinite(e2) or e2 > limit:
            raise InstabilityError(f"{op.name}: L2 error {e2:.3e} at t={t:.4g} exceeds {growth_limit:g} x initial norm")

    record(0, U0.values)
    U = rk.integrate(lambda V: -c * op(V), U0.values, dt, n, callback=record) if n else U0.values
    return IBVPResult(Field1D(g, U, T), dt, n, hist)


# -- Delta K diagnostic -------------------------------------------------------------------------


@dataclass
class DeltaKProfile:
    """Pointwise numerical wavenumbers ``k_j`` of a plane wave and their deviation from ``k_star``."""

    k: float
    x: np.ndarray
    kj: np.ndarray
    kstar: float

    @property
    def dk(self) -> np.ndarray:
        return self.kj - self.kstar

    def write_csv(self, path):
        dk = self.dk
        return write_csv(path, ("x", "re_kj", "im_kj", "re_dk", "im_dk"), zip(self.x, self.kj.real, self.kj.imag, dk.real, dk.imag))


def delta_k(op, k: float, n: int | None = None, dx: float | None = None, inflow: str = "plane_wave") -> DeltaKProfile:
    """``k_j = -i (D e^{ikx})_j / e^{ikx_j}`` and ``Delta k_j = k_j - k_star``.

    ``op`` is a :class:`CompositeOperator` or an :class:`InteriorScheme` (periodic
    operator on ``n`` points of spacing ``dx``).  For composite operators,
    ``inflow="plane_wave"`` extends the wave to the ghost points ``j <= 0``
    (with ``U'_j = i k_star U_j``) so that only the right-end closure perturbs
    ``k_j``; ``inflow="zero"`` uses the zero inflow data of the IBVP.
    """
    if isinstance(op, InteriorScheme):
        if n is None or dx is None:
            raise ValueError("n and dx are required for a periodic scheme")
        scheme = op
        x = np.arange(1, n + 1) * dx
        U = np.exp(1j * k * x)
        DU = scheme.operator(n, dx)(U)
    else:
        scheme, n, dx = op.interior, op.n, op.dx
        x = np.arange(1, n + 1) * dx
        U = np.exp(1j * k * x)
        kstar = scheme.kappa_star(k * dx) / dx
        if inflow == "plane_wave":
            gx = np.arange(-GHOST_U + 1, 1) * dx
            gu = np.exp(1j * k * gx)
            gdu = 1j * kstar * gu[-GHOST_DU:]
            DU = op(U, ghost_u=gu, ghost_du=gdu)
        elif inflow == "zero":
            DU = op(U.astype(complex))
        else:
            raise ValueError(f"unknown inflow treatment {inflow!r}")
    kstar = float(scheme.kappa_star(k * dx)) / dx
    kj = -1j * DU / U
    return DeltaKProfile(k, x, kj, kstar)


def delta_k_objective(op, k_max: float, n_nodes: int = 64, **kw) -> float:
    """``sum_j int_0^{k_max} |k_j - k_star|^2 dk`` by Gauss-Legendre quadrature (diagnostic only)."""
    t, w = np.polynomial.legendre.leggauss(n_nodes)
    ks = 0.5 * k_max * (t + 1)
    total = 0.0
    for kk, ww in zip(ks, w):
        total += 0.5 * k_max * ww * float(np.sum(np.abs(delta_k(op, kk, **kw).dk) ** 2))
    return total
