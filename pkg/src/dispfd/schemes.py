"""Interior compact first-derivative schemes.

A scheme couples derivative values through the implicit (left) stencil

    beta*U'_{j-2} + alpha*U'_{j-1} + U'_j + alpha*U'_{j+1} + beta*U'_{j+2}

and sets it equal to the antisymmetric explicit stencil with coefficients
``a/2``, ``b/4`` and ``c/6`` at offsets 1, 2 and 3 (divided by ``dx``).  The
augmented form adds ``L @ Rt @ U`` where ``Rt`` is an explicit stencil with
coefficients ``d``, ``e`` and ``f`` in the same positions, so that

    U' = L^{-1} R U + Rt U.

On a plane wave both forms act as multiplication by ``i * kappa_star / dx``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .banded import CyclicBandedMatrix

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "PoleError",
    "InteriorScheme",
    "DerivativeOperator",
    "SchemeCatalog",
    "CATALOG",
    "kappa_star",
    "order_residuals",
    "consistency_residual",
    "build_operators",
    "derivative",
    "load_schemes",
    "dump_schemes",
    "builtin_fractions",
    "SchemeFileError",
]

POLE_TOL = 1e-12
ORDER_TOL = 1e-9
COEFF_NAMES = ("alpha", "beta", "a", "b", "c", "d", "e", "f")


class PoleError(ZeroDivisionError):
    """The implicit-stencil symbol ``1 + 2 alpha cos k + 2 beta cos 2k`` vanishes."""


class SchemeFileError(ValueError):
    """Malformed coefficient file or record."""


@dataclass(frozen=True)
class InteriorScheme:
    """Coefficients of a symmetric compact first-derivative stencil.

    Parameters
    ----------
    name : str
        Identifier used by the catalog and in reports.
    alpha, beta : float
        Implicit couplings at offsets 1 and 2.
    a, b, c : float
        Explicit coefficients at offsets 1, 2 and 3.
    d, e, f : float
        Augmentation coefficients.  All zero for a classical Padé scheme.
    gamma_opt : float, optional
        Upper limit of the band the coefficients were optimized for.
    """

    name: str
    alpha: float = 0.0
    beta: float = 0.0
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    e: float = 0.0
    f: float = 0.0
    gamma_opt: float | None = None

    def __post_init__(self):
        for key in COEFF_NAMES:
            val = getattr(self, key)
            if not math.isfinite(val):
                raise ValueError(f"coefficient {key} of {self.name} is not finite")
            object.__setattr__(self, key, float(val))

    # -- coefficient views ---------------------------------------------------

    @property
    def is_augmented(self) -> bool:
        return self.d != 0.0 or self.e != 0.0 or self.f != 0.0

    @property
    def is_explicit(self) -> bool:
        return self.alpha == 0.0 and self.beta == 0.0

    def coefficients(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in COEFF_NAMES}

    def with_coefficients(self, name: str | None = None, **coeffs) -> "InteriorScheme":
        return replace(self, name=self.name if name is None else name, **coeffs)

    # -- resolution characteristic ---------------------------------------------

    def denominator(self, kappa):
        kappa = np.asarray(kappa, dtype=float)
        return 1.0 + 2.0 * self.alpha * np.cos(kappa) + 2.0 * self.beta * np.cos(2.0 * kappa)

    def _check_pole(self, den) -> None:
        if np.any(np.abs(den) < POLE_TOL):
            raise PoleError(f"{self.name}: implicit stencil symbol vanishes")

    def kappa_star(self, kappa):
        """Effective modified wavenumber of a plane wave with modified wavenumber ``kappa``."""
        kappa = np.asarray(kappa, dtype=float)
        den = self.denominator(kappa)
        self._check_pole(den)
        num = self.a * np.sin(kappa) + self.b / 2 * np.sin(2 * kappa) + self.c / 3 * np.sin(3 * kappa)
        aug = self.d * np.sin(kappa) + self.e / 2 * np.sin(2 * kappa) + self.f / 3 * np.sin(3 * kappa)
        out = num / den + aug
        return out if out.ndim else float(out)

    def dkappa_star(self, kappa):
        """Analytic derivative ``d kappa_star / d kappa`` by the quotient rule."""
        kappa = np.asarray(kappa, dtype=float)
        den = self.denominator(kappa)
        self._check_pole(den)
        num = self.a * np.sin(kappa) + self.b / 2 * np.sin(2 * kappa) + self.c / 3 * np.sin(3 * kappa)
        dnum = self.a * np.cos(kappa) + self.b * np.cos(2 * kappa) + self.c * np.cos(3 * kappa)
        dden = -2.0 * self.alpha * np.sin(kappa) - 4.0 * self.beta * np.sin(2 * kappa)
        daug = self.d * np.cos(kappa) + self.e * np.cos(2 * kappa) + self.f * np.cos(3 * kappa)
        out = (dnum * den - num * dden) / den**2 + daug
        return out if out.ndim else float(out)

    # -- accuracy constraints ----------------------------------------------------

    def order_residuals(self) -> list[float]:
        """Residuals of the five Taylor-order conditions (orders 2, 4, 6, 8, 10).

        The first condition is ``a + b + c = 1 + 2 alpha + 2 beta``; for
        ``n >= 1`` the condition is
        ``a + 4**n b + 9**n c = 2 (2n + 1)(alpha + 4**n beta)``.
        """
        al, be, a, b, c = self.alpha, self.beta, self.a, self.b, self.c
        res = [abs(a + b + c - (1.0 + 2.0 * al + 2.0 * be))]
        for n in range(1, 5):
            p = 4**n
            res.append(abs(a + p * b + 9**n * c - 2.0 * (2 * n + 1) * (al + p * be)))
        return res

    def formal_order(self) -> int:
        """Twice the number of leading order conditions met to ``1e-9``."""
        if self.is_augmented:
            return 2 if self.consistency_residual() < ORDER_TOL else 0
        m = 0
        for r in self.order_residuals():
            if r >= ORDER_TOL:
                break
            m += 1
        return 2 * m

    def consistency_residual(self) -> float:
        """``|(a+b+c)/(1+2 alpha+2 beta) + d+e+f - 1|``, i.e. ``kappa_star'(0) - 1``."""
        den = 1.0 + 2.0 * self.alpha + 2.0 * self.beta
        return abs((self.a + self.b + self.c) / den + (self.d + self.e + self.f) - 1.0)

    # -- discrete operators --------------------------------------------------------

    def build_operators(self, n: int, dx: float) -> tuple[CyclicBandedMatrix, CyclicBandedMatrix, CyclicBandedMatrix]:
        """Cyclic matrices ``(L, R, Rt)`` on ``n`` points of spacing ``dx``."""
        if n < 8:
            raise ValueError(f"grid too small for compact stencils: n={n} < 8")
        if not dx > 0:
            raise ValueError("dx must be positive")
        L = CyclicBandedMatrix(n, 2, [self.beta, self.alpha, 1.0, self.alpha, self.beta])
        R = CyclicBandedMatrix(n, 3, _explicit_row(self.a, self.b, self.c, dx))
        Rt = CyclicBandedMatrix(n, 3, _explicit_row(self.d, self.e, self.f, dx))
        return L, R, Rt

    def operator(self, n: int, dx: float) -> "DerivativeOperator":
        return _cached_operator(self, int(n), float(dx))

    def derivative(self, U, dx: float | None = None, axis: int = 0):
        """Periodic compact derivative of ``U``.

        ``U`` may be a :class:`~dispfd.fields.Field1D` (``dx`` taken from its
        grid) or an array, in which case ``dx`` is required and the derivative
        acts along ``axis``.
        """
        from .fields import Field1D

        if isinstance(U, Field1D):
            return U.like(self.operator(U.grid.n, U.grid.dx)(U.values))
        if dx is None:
            raise ValueError("dx is required for array input")
        U = np.asarray(U)
        return self.operator(U.shape[axis], dx)(U, axis=axis)


def _explicit_row(a: float, b: float, c: float, dx: float) -> list[float]:
    return [-c / (6 * dx), -b / (4 * dx), -a / (2 * dx), 0.0, a / (2 * dx), b / (4 * dx), c / (6 * dx)]


class DerivativeOperator:
    """Callable periodic derivative ``U -> L^{-1} R U + Rt U`` with cached factorization."""

    def __init__(self, scheme: InteriorScheme, n: int, dx: float):
        self.scheme, self.n, self.dx = scheme, n, dx
        self.L, self.R, self.Rt = scheme.build_operators(n, dx)
        self.L.factorization()

    def __call__(self, U, axis: int = 0) -> np.ndarray:
        out = self.L.solve(self.R.matvec(U, axis=axis), axis=axis)
        if self.scheme.is_augmented:
            out = out + self.Rt.matvec(U, axis=axis)
        return out

    def dense(self) -> np.ndarray:
        return np.linalg.solve(self.L.to_dense(), self.R.to_dense()) + self.Rt.to_dense()


@lru_cache(maxsize=64)
def _cached_operator(scheme: InteriorScheme, n: int, dx: float) -> DerivativeOperator:
    return DerivativeOperator(scheme, n, dx)


# -- functional aliases ---------------------------------------------------------------


def kappa_star(s: InteriorScheme, kappa):
    return s.kappa_star(kappa)


def order_residuals(s: InteriorScheme) -> list[float]:
    return s.order_residuals()


def consistency_residual(s: InteriorScheme) -> float:
    return s.consistency_residual()


def build_operators(s: InteriorScheme, n: int, dx: float):
    return s.build_operators(n, dx)


def derivative(s: InteriorScheme, U, dx: float | None = None, axis: int = 0):
    return s.derivative(U, dx, axis)


# -- built-in coefficient tables ---------------------------------------------------------

# decimal strings are kept verbatim; floats are parsed from them once
_BUILTIN_TEXT: dict[str, dict[str, str]] = {
    "OPT2ND1P5": {
        "a": "1.382433766621239",
        "alpha": "0.5267276883269482",
        "b": "0.7782394862770302",
        "beta": "0.06166491031289359",
        "c": "0.01611194438141422",
        "gamma_opt": "1.5",
    },
    "OPT2ND1P8": {
        "a": "1.361203029457461",
        "alpha": "0.5412576434842603",
        "b": "0.8382608566836231",
        "beta": "0.06893488676613146",
        "c": "0.02092117435969928",
        "gamma_opt": "1.8",
    },
    "KLL2ND": {
        "a": "1.271681048997683",
        "d": "0.01957068852632900805",
        "b": "1.0324635517800887",
        "e": "-0.024173863453322705888322",
        "c": "0.0710624871538077965",
        "f": "0.001112355198712081607526",
        "alpha": "0.585636483962933",
        "beta": "0.09783577170489735",
        "gamma_opt": "2.0",
    },
}

_BUILTIN_FRACTIONS: dict[str, dict[str, Fraction]] = {
    "UNOPT10TH": {
        "a": Fraction(17, 12),
        "alpha": Fraction(1, 2),
        "b": Fraction(101, 150),
        "beta": Fraction(1, 20),
        "c": Fraction(1, 100),
    },
    "CD4": {"a": Fraction(4, 3), "b": Fraction(-1, 3)},
}


def _builtin_schemes() -> dict[str, InteriorScheme]:
    out = {}
    for name, coeffs in _BUILTIN_FRACTIONS.items():
        out[name] = InteriorScheme(name, **{k: float(v) for k, v in coeffs.items()})
    for name, coeffs in _BUILTIN_TEXT.items():
        out[name] = InteriorScheme(name, **{k: float(v) for k, v in coeffs.items()})
    order = ["UNOPT10TH", "OPT2ND1P5", "OPT2ND1P8", "KLL2ND", "CD4"]
    return {k: out[k] for k in order}


def builtin_decimal_text(name: str) -> dict[str, str] | None:
    """The printed decimal strings of a built-in optimized scheme, if any."""
    return dict(_BUILTIN_TEXT[name]) if name in _BUILTIN_TEXT else None


def builtin_fractions(name: str) -> dict[str, str] | None:
    """Exact rational coefficients of a built-in scheme, as ``"p/q"`` strings."""
    if name not in _BUILTIN_FRACTIONS:
        return None
    return {k: str(v) for k, v in _BUILTIN_FRACTIONS[name].items()}


class SchemeCatalog(Mapping[str, InteriorScheme]):
    """Read-only name-to-scheme mapping.

    :meth:`with_schemes` returns a new catalog; the original is never changed.
    """

    def __init__(self, schemes: Iterable[InteriorScheme] = ()):
        self._schemes: dict[str, InteriorScheme] = {}
        for s in schemes:
            self._schemes[s.name] = s

    @classmethod
    def builtin(cls) -> "SchemeCatalog":
        return cls(_builtin_schemes().values())

    @classmethod
    def default(cls) -> "SchemeCatalog":
        """Built-ins merged with the user catalog file (see :func:`user_catalog_path`)."""
        cat = cls.builtin()
        path = user_catalog_path()
        if path.exists():
            cat = cat.with_schemes(load_schemes(path))
        return cat

    def __getitem__(self, name: str) -> InteriorScheme:
        try:
            return self._schemes[name]
        except KeyError:
            known = ", ".join(self._schemes)
            raise KeyError(f"unknown scheme {name!r}; known: {known}") from None

    def __iter__(self):
        return iter(self._schemes)

    def __len__(self) -> int:
        return len(self._schemes)

    def names(self) -> list[str]:
        return list(self._schemes)

    def with_schemes(self, schemes: Iterable[InteriorScheme]) -> "SchemeCatalog":
        return SchemeCatalog([*self._schemes.values(), *schemes])


CATALOG = SchemeCatalog.builtin()


def user_catalog_path() -> Path:
    env = os.environ.get("DISPFD_CATALOG")
    if env:
        return Path(env)
    base = os.environ.get("XDG_DATA_HOME") or os.path.join(os.path.expanduser("~"), ".local", "share")
    return Path(base) / "dispfd" / "schemes.toml"


# -- coefficient files ---------------------------------------------------------------


def scheme_from_record(rec: Mapping, where: str = "record") -> InteriorScheme:
    """Validate one coefficient record.  ``name``, ``alpha``, ``beta``, ``a``, ``b`` and ``c`` are required."""
    if not isinstance(rec, Mapping):
        raise SchemeFileError(f"{where}: expected a table of coefficients")
    for key in ("name", "alpha", "beta", "a", "b", "c"):
        if key not in rec:
            raise SchemeFileError(f"{where}: missing required field {key!r}")
    unknown = set(rec) - {"name", "gamma_opt", *COEFF_NAMES}
    if unknown:
        raise SchemeFileError(f"{where}: unknown field(s) {sorted(unknown)}")
    kw = {}
    for key in (*COEFF_NAMES, "gamma_opt"):
        if key not in rec:
            continue
        val = rec[key]
        try:
            if isinstance(val, bool):
                raise TypeError
            kw[key] = float(val)
        except (TypeError, ValueError):
            raise SchemeFileError(f"{where}: field {key!r} is not a decimal number: {val!r}") from None
        if not math.isfinite(kw[key]):
            raise SchemeFileError(f"{where}: field {key!r} is not finite")
    name = rec["name"]
    if not isinstance(name, str) or not name:
        raise SchemeFileError(f"{where}: field 'name' must be a non-empty string")
    return InteriorScheme(name, **kw)


def load_schemes(path) -> list[InteriorScheme]:
    """Read a coefficient file (TOML ``[[scheme]]`` tables or a JSON list of records)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise SchemeFileError(f"{path}: cannot parse: {exc}") from exc
    if isinstance(data, Mapping):
        if "scheme" in data:
            data = data["scheme"]
        elif "name" in data:
            data = [data]
        else:
            raise SchemeFileError(f"{path}: no [[scheme]] records found")
    if not isinstance(data, list) or not data:
        raise SchemeFileError(f"{path}: no scheme records found")
    return [scheme_from_record(rec, f"{path} record {i + 1}") for i, rec in enumerate(data)]


def dump_schemes(schemes: Iterable[InteriorScheme], path=None) -> str:
    """Write schemes as TOML ``[[scheme]]`` tables with round-trip decimals."""
    lines = []
    for s in schemes:
        lines.append("[[scheme]]")
        lines.append(f"name = {json.dumps(s.name)}")
        for key in COEFF_NAMES:
            lines.append(f"{key} = {repr(getattr(s, key))}")
        if s.gamma_opt is not None:
            lines.append(f"gamma_opt = {repr(float(s.gamma_opt))}")
        lines.append("")
    text = "\n".join(lines)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text


def scheme_to_dict(s: InteriorScheme) -> dict:
    return {k: v for k, v in asdict(s).items() if v is not None}


def scheme_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(InteriorScheme))
