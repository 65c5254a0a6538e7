"""Dispersion analysis of compact schemes.

Quantities here are functions of the resolution characteristic
``kappa -> kappa_star``: absolute and relative dispersion error, group
velocity ratio, the leading-order error term, resolving limits and the phase-
and L2-error predictors for linear transport.

For small ``kappa`` the difference ``kappa_star - kappa`` suffers cancellation
when evaluated from the closed form.  :func:`kappa_error` therefore sums the
Taylor series of the numerator ``N - kappa*D + S*D`` (``S`` is the augmentation
term) and divides by ``D`` whenever ``kappa <= SERIES_SWITCH``.  Series
coefficients that are below ``1e-12`` of the magnitude of the terms that
produced them are set to zero: they are rounding noise of coefficients that
vanish exactly for the rational scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .csvio import write_csv
from .schemes import InteriorScheme

__all__ = [
    "NyquistError",
    "DegenerateFitError",
    "DispersionProfile",
    "LeadingErrorFit",
    "L2Prediction",
    "kappa_error",
    "error_taylor_coefficients",
    "profile",
    "default_kappa_samples",
    "group_velocity_ratio",
    "leading_error_fit",
    "resolving_limit",
    "phase_error",
    "phase_error_full",
    "predict_l2_error",
]

SERIES_SWITCH = 1.0
SERIES_DEGREE = 61
CANCEL_RTOL = 1e-12
THETA_VALID = 0.1
PARTICIPATION_RTOL = 1e-3


class NyquistError(ValueError):
    """Modified wavenumber beyond pi."""


class DegenerateFitError(ArithmeticError):
    """Leading error coefficient indistinguishable from zero."""


# -- accurate error evaluation ------------------------------------------------------


@lru_cache(maxsize=256)
def error_taylor_coefficients(s: InteriorScheme, degree: int = SERIES_DEGREE) -> tuple[float, ...]:
    """Taylor coefficients ``p_n`` of ``P = N - kappa*D + S*D`` for ``n = 0..degree``.

    ``kappa_star - kappa = P / D`` with ``D = 1 + 2 alpha cos k + 2 beta cos 2k``.
    Only odd powers are nonzero.
    """
    fact = [float(math.factorial(n)) for n in range(degree + 2)]
    num = np.zeros(degree + 2)
    den = np.zeros(degree + 2)
    aug = np.zeros(degree + 2)
    for n in range(degree + 2):
        j = n // 2
        sign = -1.0 if j % 2 else 1.0
        if n % 2:
            num[n] = sign * (s.a + 4.0**j * s.b + 9.0**j * s.c) / fact[n]
            aug[n] = sign * (s.d + 4.0**j * s.e + 9.0**j * s.f) / fact[n]
        else:
            den[n] = sign * (2.0 * s.alpha + 2.0 * s.beta * 4.0**j) / fact[n] + (1.0 if n == 0 else 0.0)
    p = np.zeros(degree + 1)
    for n in range(1, degree + 1, 2):
        terms = [num[n], -den[n - 1]]
        terms += [aug[i] * den[n - i] for i in range(1, n + 1, 2)]
        total = math.fsum(terms)
        scale = max(abs(t) for t in terms)
        p[n] = 0.0 if abs(total) <= CANCEL_RTOL * scale else total
    return tuple(p)


def kappa_error(s: InteriorScheme, kappa):
    """Signed dispersion error ``kappa_star - kappa``, accurate for small ``kappa``."""
    k = np.asarray(kappa, dtype=float)
    direct = np.asarray(s.kappa_star(k), dtype=float) - k
    small = np.abs(k) <= SERIES_SWITCH
    if np.any(small):
        p = np.array(error_taylor_coefficients(s))
        ks = k[small] if k.ndim else k
        k2 = ks * ks
        acc = np.zeros_like(ks)
        for n in range(len(p) - 1 if (len(p) - 1) % 2 else len(p) - 2, 0, -2):
            acc = acc * k2 + p[n]
        series = ks * acc / s.denominator(ks)
        if k.ndim:
            direct = direct.copy()
            direct[small] = series
        else:
            direct = np.asarray(series)
    return direct if direct.ndim else float(direct)


def group_velocity_ratio(s: InteriorScheme, kappa):
    """Ratio of numerical to exact group velocity, ``d kappa_star / d kappa``."""
    return s.dkappa_star(kappa)


# -- profiles -------------------------------------------------------------------------


def default_kappa_samples(n: int = 2048) -> np.ndarray:
    """``n`` uniform samples of ``(0, pi]``."""
    return np.pi * np.arange(1, n + 1) / n


@dataclass
class DispersionProfile:
    """Tabulated resolution characteristic of one scheme."""

    scheme: str
    kappa: np.ndarray
    kappa_star: np.ndarray
    abs_err: np.ndarray
    rel_err: np.ndarray
    dkstar_dkappa: np.ndarray

    columns = ("kappa", "kappa_star", "abs_err", "rel_err", "dkstar_dkappa")

    def rows(self):
        return zip(*(getattr(self, c) for c in self.columns))

    def write_csv(self, path) -> Path:
        return write_csv(path, self.columns, self.rows())


def profile(s: InteriorScheme, kappa_samples=None) -> DispersionProfile:
    """Tabulate ``kappa_star``, its error and its analytic slope on ``kappa_samples``."""
    k = default_kappa_samples() if kappa_samples is None else np.asarray(kappa_samples, dtype=float)
    if k.ndim != 1 or k.size == 0:
        raise ValueError("kappa samples must be a non-empty 1-D sequence")
    if k[0] <= 0 or k[-1] > np.pi + 1e-15 or np.any(np.diff(k) <= 0):
        raise ValueError("kappa samples must be strictly increasing in (0, pi]")
    err = np.asarray(kappa_error(s, k))
    return DispersionProfile(
        scheme=s.name,
        kappa=k,
        kappa_star=np.asarray(s.kappa_star(k)),
        abs_err=np.abs(err),
        rel_err=np.abs(err) / k,
        dkstar_dkappa=np.asarray(s.dkappa_star(k)),
    )


# -- leading-order regime --------------------------------------------------------------


@dataclass
class LeadingErrorFit:
    """``kappa_star - kappa ~ coefficient * kappa**(order + 1)`` on ``(0, gamma]``."""

    order: int
    coefficient: float
    gamma: float
    eps_gamma: float
    extrapolation_table: list[float] = field(default_factory=list, repr=False)

    def leading_term(self, kappa):
        return self.coefficient * np.asarray(kappa, dtype=float) ** (self.order + 1)


def _richardson(values: np.ndarray, ratio: float) -> tuple[float, list[float]]:
    """Extrapolate a sequence ``g(h_m)`` with ``h_{m+1} = h_m / sqrt(ratio)`` and error in powers of ``h**2``."""
    table = [np.array(values, dtype=float)]
    while len(table[-1]) > 1:
        prev = table[-1]
        p = ratio ** len(table)
        table.append((p * prev[1:] - prev[:-1]) / (p - 1.0))
    # pick the most stable column: smallest change between successive estimates
    best, best_delta = table[0][-1], abs(table[0][-1] - table[0][-2])
    for col in table[1:]:
        if len(col) < 2:
            continue
        delta = abs(col[-1] - col[-2])
        if delta < best_delta:
            best, best_delta = col[-1], delta
    return float(best), [float(c[-1]) for c in table]


def leading_error_fit(s: InteriorScheme, eps_gamma: float = 0.1, n_samples: int = 10_000) -> LeadingErrorFit:
    """Leading dispersion-error term and the radius where it describes the error.

    The order ``s`` comes from the order conditions.  The coefficient of
    ``kappa**(s+1)`` is extrapolated from ``(kappa_star - kappa)/kappa**(s+1)``
    at ``kappa = 2**-m``, ``m = 4..20``.  ``gamma`` is the largest ``kappa``
    such that the relative deviation from the leading term stays within
    ``eps_gamma`` on every smaller sample, refined by bisection to ``1e-4``.
    """
    if not 0 < eps_gamma < 1:
        raise ValueError("eps_gamma must lie in (0, 1)")
    order = s.formal_order()
    ks = 2.0 ** -np.arange(4, 21)
    g = np.asarray(kappa_error(s, ks)) / ks ** (order + 1)
    coef, table = _richardson(g, 4.0)
    if abs(coef) < 1e-14:
        raise DegenerateFitError(f"{s.name}: leading coefficient {coef:.3e} indistinguishable from zero")

    def ok(k):
        k = np.asarray(k, dtype=float)
        lead = coef * k ** (order + 1)
        return np.abs((np.asarray(kappa_error(s, k)) - lead) / lead) <= eps_gamma

    k = default_kappa_samples(n_samples)
    good = ok(k)
    if good.all():
        gamma = float(k[-1])
    elif not good[0]:
        gamma = 0.0
    else:
        i = int(np.argmin(good))
        lo, hi = float(k[i - 1]), float(k[i])
        while hi - lo > 1e-4:
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if ok(mid) else (lo, mid)
        gamma = lo
    return LeadingErrorFit(order, coef, gamma, eps_gamma, table)


def resolving_limit(s: InteriorScheme, eps: float, n_samples: int = 10_000, kappa_max: float = np.pi) -> float:
    """Largest ``Gamma_r`` with ``|kappa_star - kappa|/kappa <= eps`` on ``(0, Gamma_r]``.

    Uses a uniform sample of ``(0, kappa_max]``; the first violating interval
    is refined by bisection to ``1e-4``.  Returns 0 if the smallest sample
    already violates the bound.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")

    def ok(k):
        k = np.asarray(k, dtype=float)
        return np.abs(np.asarray(kappa_error(s, k))) / k <= eps

    k = kappa_max * np.arange(1, n_samples + 1) / n_samples
    good = ok(k)
    if good.all():
        return float(k[-1])
    i = int(np.argmin(good))
    if i == 0:
        return 0.0
    lo, hi = float(k[i - 1]), float(k[i])
    while hi - lo > 1e-4:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


# -- phase and L2 error predictors --------------------------------------------------------


def _check_nyquist(kappa: float) -> None:
    if abs(kappa) > np.pi * (1 + 1e-14):
        raise NyquistError(f"|k dx| = {abs(kappa):.6g} exceeds pi")


def phase_error(s: InteriorScheme, k: float, dx: float, c: float, T: float) -> float:
    """Phase error ``c k T (kappa_star - kappa)/kappa`` of semi-discrete transport."""
    kappa = k * dx
    _check_nyquist(kappa)
    if kappa == 0.0:
        return 0.0
    return float(c * k * T * kappa_error(s, kappa) / kappa)


def phase_error_full(s: InteriorScheme, rk, k: float, dx: float, c: float, dt: float, T: float) -> float:
    """Phase error ``Re(omega_star) T - c k T`` including time integration by ``rk``."""
    spatial = phase_error(s, k, dx, c, T)
    if dt == 0.0 or k == 0.0:
        return spatial
    z = c * dt / dx * s.kappa_star(k * dx)
    temporal = rk.frequency_error(z) * T / dt
    return float(spatial + np.real(temporal))


@dataclass
class L2Prediction:
    """Predicted L2 error and whether the small-phase-error regime holds."""

    value: float
    max_theta: float
    valid: bool
    warning: str | None = None

    def __float__(self) -> float:
        return self.value


def predict_l2_error(s: InteriorScheme, spectrum, c: float, T: float, dx: float | None = None) -> L2Prediction:
    """Predict the L2 error of transport from the initial spectrum.

    ``(c T / dx) * sqrt(length * sum |U_hat|^2 |kappa_star - kappa|^2)`` over all
    resolved modes.  The prediction is flagged invalid when some participating
    mode (``|U_hat| > 1e-3 max|U_hat|``) has ``|theta_e| > 0.1``.
    """
    grid = spectrum.grid
    dx = grid.dx if dx is None else dx
    kp = np.asarray(spectrum.kprime, dtype=float)
    coeffs = np.asarray(spectrum.coeffs)
    kappa = 2 * np.pi * kp * dx / grid.length
    err = np.asarray(kappa_error(s, kappa))
    amp = np.abs(coeffs)
    value = float(c * T / dx * math.sqrt(grid.length * float(np.sum(amp**2 * err**2))))
    if not amp.any():
        return L2Prediction(0.0, 0.0, True)
    part = (amp > PARTICIPATION_RTOL * amp.max()) & (kappa != 0)
    theta = np.zeros_like(kappa)
    theta[part] = c * T * err[part] / dx
    max_theta = float(np.max(np.abs(theta)))
    valid = max_theta <= THETA_VALID
    warning = None if valid else f"max participating |theta_e| = {max_theta:.3g} > {THETA_VALID}: prediction regime invalid"
    return L2Prediction(value, max_theta, valid, warning)
