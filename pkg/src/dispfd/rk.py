"""Explicit M-stage Runge-Kutta integrators in two-storage form.

An integrator is fixed by its stability polynomial ``P(z) = sum a_m z^m``
with ``a_0 = 1``.  For a linear problem ``U' = A U`` one step multiplies by
``P(dt A)``.  The stage weights ``w_i`` realize ``P`` through

    K_1 = dt F(U),   K_i = dt F(U + w_{i-1} K_{i-1}),   U_next = U + w_M K_M,

which keeps only ``U`` and one stage vector alive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "BlowUpError",
    "FrequencyUndefinedError",
    "RKScheme",
    "stage_weights",
    "coefficients_from_weights",
    "rk8",
    "taylor_rk",
]

CANCEL_RTOL = 1e-12


class BlowUpError(FloatingPointError):
    """Non-finite values appeared during time stepping."""


class FrequencyUndefinedError(ArithmeticError):
    """``P(-iz)`` vanishes so the numerical frequency has no logarithm."""


def stage_weights(a: Sequence[float]) -> tuple[float, ...]:
    """Stage weights from stability-polynomial coefficients.

    ``w_M = a_1`` and ``w_{M-i+1} = a_i / a_{i-1}`` for ``i = 2..M``.

    Examples
    --------
    >>> stage_weights([1, 1, 0.5])
    (0.5, 1.0)
    """
    a = list(a)
    if len(a) < 2:
        raise ValueError("need at least a_0 and a_1")
    if a[0] != 1:
        raise ValueError("a_0 must equal 1")
    M = len(a) - 1
    for m in range(1, M):
        if a[m] == 0:
            raise ZeroDivisionError(f"a_{m} = 0 makes the stage weights undefined")
    w = [0.0] * M
    w[M - 1] = a[1]
    for i in range(2, M + 1):
        w[M - i] = a[i] / a[i - 1]
    return tuple(w)


def coefficients_from_weights(w: Sequence[float]) -> tuple[float, ...]:
    """Inverse of :func:`stage_weights`: ``a_m = prod_{i=M-m+1..M} w_i``."""
    M = len(w)
    a = [1]
    for m in range(1, M + 1):
        a.append(a[-1] * w[M - m])
    return tuple(a)


@dataclass(frozen=True)
class RKScheme:
    """Explicit integrator defined by its stability-polynomial coefficients.

    Parameters
    ----------
    a : tuple of float
        ``a_0 .. a_M`` with ``a_0 = 1``.
    name : str
        Label for reports.
    """

    a: tuple[float, ...]
    name: str = "rk"

    def __post_init__(self):
        if len(self.a) < 2 or self.a[0] != 1:
            raise ValueError("coefficients must start with a_0 = 1 and have degree >= 1")
        # weights from the given values so exact rationals give exact ratios
        w = tuple(float(x) for x in stage_weights(self.a))
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "_w", w)

    @property
    def stages(self) -> int:
        return len(self.a) - 1

    @property
    def w(self) -> tuple[float, ...]:
        return self._w

    @property
    def order(self) -> int:
        """Largest ``p`` with ``a_m = 1/m!`` for all ``m <= p``."""
        p = 0
        for m in range(1, len(self.a)):
            if abs(self.a[m] * math.factorial(m) - 1.0) > 1e-14:
                break
            p = m
        return p

    # -- time stepping --------------------------------------------------------------

    def step(self, rhs: Callable[[np.ndarray], np.ndarray], U: np.ndarray, dt: float) -> np.ndarray:
        """Advance ``U`` by one step of size ``dt`` for ``dU/dt = rhs(U)``."""
        w = self._w
        K = dt * rhs(U)
        for i in range(1, len(w)):
            K = dt * rhs(U + w[i - 1] * K)
        out = U + w[-1] * K
        if not np.all(np.isfinite(out)):
            raise BlowUpError("non-finite values after RK step")
        return out

    def integrate(self, rhs, U, dt: float, n_steps: int, callback=None) -> np.ndarray:
        """Take ``n_steps`` steps; ``callback(step_index, U)`` runs after each step."""
        for n in range(n_steps):
            U = self.step(rhs, U, dt)
            if callback is not None:
                callback(n + 1, U)
        return U

    # -- linear analysis --------------------------------------------------------------

    def stability_polynomial(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for coef in reversed(self.a):
            out = out * z + coef
        return out if out.ndim else complex(out)

    def _remainder_coefficients(self, extra: int = 40) -> np.ndarray:
        """Coefficients ``q_n`` of ``exp(-w) P(w) - 1``, rounding noise removed."""
        M = self.stages
        q = np.zeros(M + extra + 1)
        for n in range(1, M + extra + 1):
            terms = [self.a[m] * (-1.0) ** (n - m) / math.factorial(n - m) for m in range(0, min(n, M) + 1)]
            total = math.fsum(terms)
            scale = max(abs(t) for t in terms)
            q[n] = 0.0 if abs(total) <= CANCEL_RTOL * scale else total
        return q

    def frequency_error(self, z):
        """``omega_star dt - z`` for ``z = c k_star dt``, accurate for small ``z``.

        Uses ``i log(exp(iz) P(-iz))`` summed as a series when ``|z| <= 1``.
        """
        z = np.asarray(z, dtype=float)
        small = np.abs(z) <= 1.0
        out = np.zeros(z.shape, dtype=complex)
        if np.any(~small):
            zz = z[~small]
            out[~small] = self.numerical_frequency(zz) - zz
        if np.any(small):
            q = self._remainder_coefficients()
            wv = -1j * z[small]
            s = np.zeros(wv.shape, dtype=complex)
            for coef in reversed(q):
                s = s * wv + coef
            out[small] = 1j * _log1p(s)
        return out if out.ndim else complex(out)

    def numerical_frequency(self, z):
        """``omega_star dt = i log P(-iz)`` on the principal branch."""
        z = np.asarray(z, dtype=float)
        p = self.stability_polynomial(-1j * z)
        if np.any(p == 0):
            raise FrequencyUndefinedError("P(-iz) = 0: numerical frequency undefined")
        out = 1j * np.log(p)
        return out if out.ndim else complex(out)

    def max_stable_cfl(self, scheme, n_kappa: int = 2048, r_max: float = 10.0, tol: float = 1e-4) -> float:
        """Largest CFL number ``r`` with ``max |P(-i r kappa_star)| <= 1 + 1e-12`` on ``(0, pi]``."""
        ks = np.abs(np.asarray(scheme.kappa_star(np.pi * np.arange(1, n_kappa + 1) / n_kappa)))
        # the maximum of kappa_star can fall between samples; add a refined maximizer
        i = int(np.argmax(ks))
        lo, hi = np.pi * max(i, 1) / n_kappa, np.pi * min(i + 2, n_kappa) / n_kappa
        ks = np.r_[ks, np.abs(np.asarray(scheme.kappa_star(np.linspace(lo, hi, 257))))]

        def stable(r):
            return np.max(np.abs(self.stability_polynomial(-1j * r * ks))) <= 1 + 1e-12

        if not stable(tol):
            return 0.0
        lo, hi = tol, r_max
        if stable(hi):
            return hi
        # march up so bisection brackets the first loss of stability
        r = tol
        while r < r_max and stable(min(2 * r, r_max)):
            r = min(2 * r, r_max)
        lo, hi = r, min(2 * r, r_max)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if stable(mid) else (lo, mid)
        return lo


def _log1p(s: np.ndarray) -> np.ndarray:
    out = np.log(1.0 + s)
    tiny = np.abs(s) < 1e-3
    if np.any(tiny):
        t = s[tiny]
        acc = np.zeros_like(t)
        for n in range(12, 0, -1):
            acc = acc * t + (-1.0) ** (n + 1) / n
        out[tiny] = acc * t
    return out


def taylor_rk(M: int) -> RKScheme:
    """The ``M``-stage scheme whose polynomial is the degree-``M`` Taylor polynomial of ``exp``."""
    return RKScheme(tuple(Fraction(1, math.factorial(m)) for m in range(M + 1)), name=f"RK{M}")


def rk8() -> RKScheme:
    """Eight-stage, eighth-order scheme for linear problems (``a_m = 1/m!``)."""
    return taylor_rk(8)
