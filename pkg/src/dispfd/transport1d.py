"""One-dimensional periodic experiments.

Constant- and variable-coefficient linear transport, the Hopf equation,
their exact solutions, spectra and error norms.  Fields live on the grid
``x_j = j * dx``, ``j = 1..N`` of :class:`~dispfd.fields.Grid1D`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .csvio import write_csv
from .fields import Field1D, Grid1D, check_same_grid
from .rk import BlowUpError, RKScheme
from .schemes import InteriorScheme

__all__ = [
    "SpectrumView",
    "TransportResult",
    "CharacteristicError",
    "NoConvergenceError",
    "dft",
    "idft",
    "modal_solution",
    "time_steps",
    "solve_const_transport",
    "solve_varcoef_transport",
    "varcoef_speed",
    "varcoef_period",
    "exact_varcoef",
    "pseudospectral_derivative",
    "solve_hopf",
    "exact_hopf",
    "l2_error",
    "linf_error",
    "packet_ic",
    "chirp_ic",
    "hopf_ic",
    "K_MAX_CHIRP",
    "HOPF_BREAKING_TIME",
    "write_history",
    "mesh_for_kappa",
    "spectral_operator",
    "upturn_time",
    "linear_growth_residual",
]

K_MAX_CHIRP = 380.0
HOPF_BREAKING_TIME = 2.0 / math.pi


class CharacteristicError(RuntimeError):
    """Backward characteristic integration failed."""


class NoConvergenceError(RuntimeError):
    """Characteristic foot not found; the solution is close to wave breaking."""


# -- spectra -------------------------------------------------------------------------


@dataclass
class SpectrumView:
    """Discrete Fourier coefficients ``U_hat(k')`` for ``k' = -N/2+1 .. N/2``.

    ``U_hat(k') = (1/N) sum_j U_j exp(-2 pi i k' x_j / length)``.
    """

    grid: Grid1D
    kprime: np.ndarray
    coeffs: np.ndarray

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers ``2 pi k' / length``."""
        return 2 * np.pi * self.kprime / self.grid.length

    @property
    def kappa(self) -> np.ndarray:
        return self.k * self.grid.dx

    def coefficient(self, kp: int) -> complex:
        return complex(self.coeffs[int(np.searchsorted(self.kprime, kp))]) if kp in self.kprime else 0j

    def write_csv(self, path):
        c = self.coeffs
        return write_csv(path, ("kprime", "re", "im", "abs"), zip(self.kprime, c.real, c.imag, np.abs(c)))


def _kprime(n: int) -> np.ndarray:
    # even n: -n/2+1..n/2; odd n: symmetric -(n-1)/2..(n-1)/2
    lo = -(n // 2) + 1 if n % 2 == 0 else -(n // 2)
    return np.arange(lo, lo + n)


def dft(U) -> SpectrumView:
    """Forward transform with ``1/N`` normalization on the grid points ``x_j``."""
    if not isinstance(U, Field1D):
        raise TypeError("dft expects a Field1D")
    g = U.grid
    kp = _kprime(g.n)
    raw = np.fft.fft(U.values) / g.n
    # fft indexes from x_1 = origin + dx; shift phases to the x_j convention
    phase = np.exp(-2j * np.pi * kp * (g.origin + g.dx) / g.length)
    return SpectrumView(g, kp, raw[kp % g.n] * phase)


def idft(S: SpectrumView, real: bool = False) -> Field1D:
    """Inverse of :func:`dft`.  ``real=True`` drops the imaginary part."""
    g = S.grid
    kp = S.kprime
    phase = np.exp(2j * np.pi * kp * (g.origin + g.dx) / g.length)
    raw = np.zeros(g.n, dtype=complex)
    raw[kp % g.n] = S.coeffs * phase
    vals = np.fft.ifft(raw) * g.n
    return Field1D(g, vals.real if real else vals)


def _apply_multiplier(U: Field1D, mult: np.ndarray) -> np.ndarray:
    S = dft(U)
    out = idft(SpectrumView(S.grid, S.kprime, S.coeffs * mult))
    return out.values.real if np.isrealobj(U.values) else out.values


def pseudospectral_derivative(U: Field1D) -> Field1D:
    """Spectral derivative ``idft(i k U_hat)``; the unpaired Nyquist mode is dropped for real data."""
    S = dft(U)
    mult = 1j * S.k
    if S.grid.n % 2 == 0 and np.isrealobj(U.values):
        mult = np.where(S.kprime == S.grid.n // 2, 0.0, mult)
    return U.like(_apply_multiplier(U, mult))


# -- norms -------------------------------------------------------------------------


def _values_and_dx(Ua, Ub):
    if isinstance(Ua, Field1D) and isinstance(Ub, Field1D):
        check_same_grid(Ua, Ub)
        return Ua.values, Ub.values, Ua.grid.dx
    raise TypeError("expected two Field1D values")


def l2_error(Ua: Field1D, Ub: Field1D) -> float:
    """``sqrt(sum |Ua_j - Ub_j|^2 dx)``."""
    a, b, dx = _values_and_dx(Ua, Ub)
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2) * dx))


def linf_error(Ua: Field1D, Ub: Field1D) -> float:
    a, b, _ = _values_and_dx(Ua, Ub)
    return float(np.max(np.abs(a - b)))


# -- initial conditions ------------------------------------------------------------


def packet_ic(x):
    """Gaussian-modulated wave packet with primary wavenumber ``30 pi`` on ``[0, 1]``."""
    x = np.asarray(x, dtype=float)
    return np.cos(30 * np.pi * x) * np.exp(-80 * (x - 0.5) ** 2)


def chirp_ic(x):
    """``cos(k(x) x)`` with ``k(x) = 30 pi exp(-0.75 (x - 5)^2)`` on ``[0, 10]``."""
    x = np.asarray(x, dtype=float)
    return np.cos(30 * np.pi * np.exp(-0.75 * (x - 5) ** 2) * x)


def hopf_ic(x):
    """``3/4 + sin(2 pi x)/4`` on ``[0, 1]``."""
    return 0.75 + 0.25 * np.sin(2 * np.pi * np.asarray(x))


# -- time stepping helpers -------------------------------------------------------------


def time_steps(T: float, dt_max: float) -> tuple[int, float]:
    """Smallest step count landing on ``T`` with a step no larger than ``dt_max``."""
    if T < 0:
        raise ValueError("T must be non-negative")
    if T == 0:
        return 0, 0.0
    n = max(1, math.ceil(T / dt_max - 1e-9))
    return n, T / n


@dataclass
class TransportResult:
    """Final field of a time-stepping run and its optional error history."""

    field: Field1D
    dt: float
    n_steps: int
    history: list[tuple[float, float, float]] = field(default_factory=list)

    def write_history(self, path):
        return write_history(path, self.history)


def write_history(path, history):
    return write_csv(path, ("time", "l2_error", "linf_error"), history)


def _run(rk, rhs, U0: Field1D, T, dt, n, exact=None, stride=1, monitor=None) -> TransportResult:
    hist = []
    g = U0.grid

    def record(i, U):
        if exact is None or (i % stride and i != n):
            return
        t = i * dt if i != n else T
        ref = Field1D(g, exact(g.x, t))
        cur = Field1D(g, U)
        hist.append((t, l2_error(cur, ref), linf_error(cur, ref)))
        if monitor is not None:
            monitor(t, hist[-1])

    record(0, U0.values)
    U = rk.integrate(rhs, U0.values, dt, n, callback=record) if n else U0.values
    return TransportResult(Field1D(g, U, T), dt, n, hist)


def modal_solution(s: InteriorScheme, rk: RKScheme | None, U0: Field1D, c: float, T: float, dt: float | None = None) -> Field1D:
    """Diagonalized solution of semi- or fully-discrete constant-speed transport.

    Each mode evolves as ``U_hat(k') exp(-i omega_star T)`` with
    ``omega_star dt = i log P(-i c k_star dt)`` when ``rk`` is given, and as
    ``U_hat(k') exp(-i c k_star T)`` otherwise.
    """
    if c == 0 or T == 0:
        return U0.like(np.array(U0.values), T)
    S = dft(U0)
    g = U0.grid
    kstar = np.asarray(s.kappa_star(np.abs(S.kappa))) * np.sign(S.kappa) / g.dx
    if rk is None:
        mult = np.exp(-1j * c * kstar * T)
    else:
        if dt is None or dt <= 0:
            raise ValueError("dt is required with an RK scheme")
        n = T / dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"T/dt = {n} is not an integer")
        omega_dt = rk.numerical_frequency(c * kstar * dt)
        mult = np.exp(-1j * omega_dt * round(n))
    vals = _apply_multiplier(U0, mult)
    return U0.like(vals, T)


def solve_const_transport(
    s: InteriorScheme,
    rk: RKScheme,
    c: float,
    U0: Field1D,
    T: float,
    r: float,
    exact: Callable | None = None,
    stride: int = 1,
) -> TransportResult:
    """RK stepping of ``dU/dt = -c D U`` with ``dt <= r dx / |c|`` landing exactly on ``T``.

    ``exact(x, t)`` enables an error history sampled every ``stride`` steps.
    """
    if r <= 0:
        raise ValueError("CFL number must be positive")
    if c == 0 or T == 0:
        return _run(rk, None, U0, T, 0.0, 0, exact)
    g = U0.grid
    op = s.operator(g.n, g.dx)
    n, dt = time_steps(T, r * g.dx / abs(c))
    return _run(rk, lambda U: -c * op(U), U0, T, dt, n, exact, stride)


def solve_varcoef_transport(
    s: InteriorScheme,
    rk: RKScheme,
    cfun: Callable,
    U0: Field1D,
    T: float,
    r: float,
    exact: Callable | None = None,
    stride: int = 1,
    derivative: Callable | None = None,
) -> TransportResult:
    """RK stepping of ``dU/dt = -C D U`` with ``C = diag(cfun(x_j))``.

    ``derivative`` overrides the compact operator (e.g. with
    :func:`pseudospectral_derivative` applied to raw arrays).
    """
    if r <= 0:
        raise ValueError("CFL number must be positive")
    g = U0.grid
    cvals = np.broadcast_to(np.asarray(cfun(g.x), dtype=float), (g.n,))
    cmax = float(np.max(np.abs(cvals)))
    if cmax == 0 or T == 0:
        return _run(rk, None, U0, T, 0.0, 0, exact)
    D = derivative if derivative is not None else s.operator(g.n, g.dx)
    n, dt = time_steps(T, r * g.dx / cmax)
    return _run(rk, lambda U: -cvals * D(U), U0, T, dt, n, exact, stride)


def spectral_operator(grid: Grid1D) -> Callable[[np.ndarray], np.ndarray]:
    """Array version of :func:`pseudospectral_derivative` for use as an RHS operator."""

    def D(U):
        return pseudospectral_derivative(Field1D(grid, U)).values

    return D


# -- variable-coefficient exact solution ------------------------------------------------


def varcoef_speed(A: float, B: float) -> Callable:
    """``c(x) = A + B sin^2(2 pi x)``."""

    def c(x):
        return A + B * np.sin(2 * np.pi * np.asarray(x)) ** 2

    return c


def varcoef_period(A: float, B: float) -> float:
    """Time period ``1 / (|A| sqrt(1 + B/A))`` of transport with :func:`varcoef_speed`."""
    if A == 0 or 1 + B / A <= 0:
        raise ValueError("speed changes sign; no periodic characteristic")
    return 1.0 / (abs(A) * math.sqrt(1 + B / A))


def characteristic_foot(cfun: Callable, x, T: float, rtol: float = 1e-12, atol: float = 1e-12) -> np.ndarray:
    """Foot ``xi`` of the characteristic of ``dX/dt = c(X)`` that reaches ``x`` at time ``T``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if T == 0:
        return x.copy()
    sol = solve_ivp(lambda t, X: -cfun(X), (0.0, T), x, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise CharacteristicError(sol.message)
    return sol.y[:, -1]


def exact_varcoef(A: float, B: float, u0fun: Callable, x, T: float, length: float | None = 1.0):
    """Exact solution of ``u_t + (A + B sin^2(2 pi x)) u_x = 0`` by backward characteristics.

    The foot of each characteristic is wrapped into ``[0, length)`` before
    ``u0fun`` is evaluated, so ``u0fun`` only needs to be defined on one
    period.  ``length=None`` skips the wrapping.
    """
    if A == 0 or 1 + B / A <= 0:
        raise ValueError("speed changes sign; characteristics do not cover the domain")
    xa = np.asarray(x, dtype=float)
    xi = characteristic_foot(varcoef_speed(A, B), xa.ravel(), T)
    if length is not None:
        xi = np.mod(xi, length)
    return np.asarray(u0fun(xi)).reshape(xa.shape)


# -- Hopf equation --------------------------------------------------------------------


def solve_hopf(
    s: InteriorScheme | None,
    rk: RKScheme,
    U0: Field1D,
    T: float,
    r: float,
    exact: Callable | None = None,
    stride: int = 1,
    monitor: Callable | None = None,
) -> TransportResult:
    """RK stepping of ``dU/dt = -D(U^2/2)`` with ``dt <= r dx / max|U0|``.

    ``s=None`` uses the pseudospectral derivative.
    """
    if r <= 0:
        raise ValueError("CFL number must be positive")
    g = U0.grid
    umax = float(np.max(np.abs(U0.values)))
    if umax == 0 or T == 0:
        return _run(rk, None, U0, T, 0.0, 0, exact)
    D = s.operator(g.n, g.dx) if s is not None else spectral_operator(g)
    n, dt = time_steps(T, r * g.dx / umax)

    def rhs(U):
        F = -D(0.5 * U * U)
        if not np.all(np.isfinite(F)):
            raise BlowUpError("non-finite flux derivative (steepening overflow)")
        return F

    return _run(rk, rhs, U0, T, dt, n, exact, stride, monitor)


def _complex_step(fun, xi):
    h = 1e-30
    try:
        val = np.asarray(fun(xi + 1j * h))
        if np.iscomplexobj(val):
            return val.imag / h
    except (TypeError, ValueError):
        pass
    eps = 1e-6
    return (np.asarray(fun(xi + eps)) - np.asarray(fun(xi - eps))) / (2 * eps)


def exact_hopf(u0fun: Callable, x, t: float, tol: float = 1e-13, max_iter: int = 100):
    """Exact pre-breaking Hopf solution ``u0(xi)`` with ``x = xi + u0(xi) t``.

    Newton iteration on the characteristic foot; points that fail to converge
    fall back to bisection on a bracketing interval.
    """
    xa = np.asarray(x, dtype=float)
    if t == 0:
        return np.asarray(u0fun(xa), dtype=float)
    xf = xa.ravel()
    xi = xf - np.asarray(u0fun(xf), dtype=float) * t
    done = np.zeros(xf.shape, dtype=bool)
    for _ in range(max_iter):
        g = xi + np.asarray(u0fun(xi), dtype=float) * t - xf
        dg = 1.0 + _complex_step(u0fun, xi) * t
        step = np.where(dg > 0, g / np.where(dg == 0, 1.0, dg), 0.0)
        xi = xi - step
        done = np.abs(step) <= tol * np.maximum(1.0, np.abs(xi))
        if done.all():
            break
    for i in np.flatnonzero(~done):
        xi[i] = _bisect_foot(u0fun, xf[i], t, tol)
    return np.asarray(u0fun(xi), dtype=float).reshape(xa.shape)


def _bisect_foot(u0fun, x, t, tol):
    def g(z):
        return z + float(u0fun(z)) * t - x

    u = float(u0fun(x))
    width = max(1.0, abs(u) * t)
    lo, hi = x - width, x + width
    for _ in range(60):
        if g(lo) <= 0 <= g(hi):
            break
        lo, hi = lo - width, hi + width
        width *= 2
    else:
        raise NoConvergenceError("cannot bracket the characteristic foot")
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 4e-16 * max(1.0, abs(lo)):
            break
    # a non-monotone residual (overlapping characteristics) means breaking
    if abs(g(0.5 * (lo + hi))) > 1e-9:
        raise NoConvergenceError("characteristic foot not unique; wave breaking")
    return 0.5 * (lo + hi)


# -- meshes -----------------------------------------------------------------------------


def mesh_for_kappa(k: float, kappa: float, length: float = 1.0) -> Grid1D:
    """Even-N grid whose modified wavenumber ``k dx`` is closest to ``kappa``."""
    n = 2 * max(4, round(k * length / (2 * kappa)))
    return Grid1D(n, length)


# -- error-history diagnostics --------------------------------------------------------------


def upturn_time(times, errors, threshold: float = 3.0, window: float = 0.02, t_min: float = 0.1) -> float:
    """First ``t >= t_min`` where the local slope ``d ln e / d ln t`` reaches ``threshold``.

    The slope is a secant over ``[t - window, t]``.  Returns ``inf`` if the
    history never steepens that much.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(errors, dtype=float)
    for i in np.flatnonzero(t >= t_min):
        j = np.searchsorted(t, t[i] - window, side="right") - 1
        if j < 0 or t[j] <= 0 or e[j] <= 0 or e[i] <= 0 or j == i:
            continue
        if math.log(e[i] / e[j]) / math.log(t[i] / t[j]) >= threshold:
            return float(t[i])
    return math.inf


def linear_growth_residual(times, errors, through_origin: bool = False) -> float:
    """Relative RMS residual of a least-squares line fit ``e ~ s t (+ b)``.

    Normalized by the mean error; small values mean near-linear growth.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(errors, dtype=float)
    A = t[:, None] if through_origin else np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, e, rcond=None)
    res = e - A @ coef
    return float(np.sqrt(np.mean(res**2)) / np.mean(np.abs(e)))
