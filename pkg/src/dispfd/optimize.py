"""Re-derivation of optimized coefficients.

The objective is the integrated dispersion error

    E = int_0^Gamma |kappa_star(kappa) - kappa|^n W(kappa) d kappa

evaluated by composite Gauss-Legendre quadrature.  Accuracy constraints are
enforced by eliminating ``a`` (and, for higher-order constraint sets, ``b``
and ``c``) so the minimizer works on an unconstrained set of free variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize as _nm_minimize

from .schemes import CATALOG, COEFF_NAMES, InteriorScheme, PoleError

__all__ = [
    "OptimizationSpec",
    "OptimizationResult",
    "VerificationReport",
    "objective",
    "minimize",
    "verify_derivation",
    "eliminate",
    "PANELS",
    "NODES_PER_PANEL",
]

PANELS = 8
NODES_PER_PANEL = 64
MAX_EVALUATIONS = 100_000
N_RESTARTS = 5
ELIMINATION_ORDER = ("a", "b", "c")
CATALOG_SLACK = 2.0


@dataclass(frozen=True)
class OptimizationSpec:
    """What to minimize.

    Parameters
    ----------
    gamma : float
        Upper integration limit, ``0 < gamma < pi``.
    n : int
        Kernel exponent, one of 1, 2, 4.
    weight : callable, optional
        ``W(kappa)``; ``None`` means ``W = 1``.
    constraints : int
        Number of leading order conditions to enforce.  For augmented free
        sets only ``1`` (the generalized consistency condition) is allowed.
    free : tuple of str
        Coefficients varied by the minimizer.
    initial : InteriorScheme
        Starting point; coefficients not in ``free`` stay fixed at its values.
    name : str
        Name given to the resulting scheme.
    """

    gamma: float
    n: int = 2
    weight: Callable | None = None
    constraints: int = 1
    free: tuple[str, ...] = ("alpha", "beta", "b", "c")
    initial: InteriorScheme = field(default_factory=lambda: CATALOG["UNOPT10TH"])
    name: str = "OPTIMIZED"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma < math.pi:
            raise ValueError(f"gamma must lie in (0, pi), got {self.gamma}")
        if self.n not in (1, 2, 4):
            raise ValueError(f"kernel exponent must be 1, 2 or 4, got {self.n}")
        unknown = set(self.free) - set(COEFF_NAMES)
        if unknown:
            raise ValueError(f"unknown free coefficients {sorted(unknown)}")
        if not 0 <= self.constraints <= 3:
            raise ValueError("constraints must be between 0 and 3")
        elim = set(ELIMINATION_ORDER[: self.constraints])
        if elim & set(self.free):
            raise ValueError(f"eliminated coefficients {sorted(elim & set(self.free))} cannot also be free")
        if self.augmented and self.constraints > 1:
            raise ValueError("augmented schemes support only the consistency constraint")
        object.__setattr__(self, "free", tuple(self.free))

    @property
    def augmented(self) -> bool:
        return any(k in self.free for k in ("d", "e", "f")) or self.initial.is_augmented

    @property
    def eliminated(self) -> tuple[str, ...]:
        return ELIMINATION_ORDER[: self.constraints]


# -- quadrature ------------------------------------------------------------------------------


def _nodes(gamma: float, panels: int = PANELS, per_panel: int = NODES_PER_PANEL):
    t, w = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(0.0, gamma, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    return (mid + half * t).ravel(), (half * w).ravel()


class _Kernel:
    """Trig tables on the quadrature nodes for fast repeated evaluation."""

    def __init__(self, gamma, n, weight, panels=PANELS, per_panel=NODES_PER_PANEL):
        k, w = _nodes(gamma, panels, per_panel)
        w = w * (np.asarray(weight(k), dtype=float) if weight is not None else 1.0)
        # kappa_star - kappa cancels about six digits near the optimum; extended
        # precision keeps the integrand accurate to well below 1e-12 relative
        k = k.astype(np.longdouble)
        self.k = k
        self.w = w.astype(np.longdouble)
        self.n = n
        self.s1, self.s2, self.s3 = np.sin(k), np.sin(2 * k) / 2, np.sin(3 * k) / 3
        self.c1, self.c2 = np.cos(k), np.cos(2 * k)
        # a finer check grid for poles between nodes
        kk = np.linspace(0.0, gamma, 4097)
        self.p1, self.p2 = np.cos(kk), np.cos(2 * kk)

    def has_pole(self, al, be) -> bool:
        den = 1.0 + 2 * al * self.p1 + 2 * be * self.p2
        return bool(np.any(np.abs(den) < 1e-12) or np.any(np.sign(den) != np.sign(den[0])))

    def __call__(self, c: dict[str, float]) -> float:
        c = {key: np.longdouble(v) for key, v in c.items()}
        den = 1 + 2 * c["alpha"] * self.c1 + 2 * c["beta"] * self.c2
        ks = (c["a"] * self.s1 + c["b"] * self.s2 + c["c"] * self.s3) / den
        ks = ks + c["d"] * self.s1 + c["e"] * self.s2 + c["f"] * self.s3
        return float(np.sum(self.w * np.abs(ks - self.k) ** self.n))


def objective(s: InteriorScheme, spec: OptimizationSpec | float, panels: int = PANELS) -> float:
    """``E = int_0^Gamma |kappa_star - kappa|^n W d kappa`` (8 panels x 64 nodes by default).

    Raises
    ------
    PoleError
        If the implicit symbol vanishes on ``[0, Gamma]``.
    """
    if not isinstance(spec, OptimizationSpec):
        spec = OptimizationSpec(float(spec))
    ker = _Kernel(spec.gamma, spec.n, spec.weight, panels)
    if ker.has_pole(s.alpha, s.beta):
        raise PoleError(f"{s.name}: kappa_star has a pole in (0, {spec.gamma}]")
    return ker(s.coefficients())


# -- constraint elimination ----------------------------------------------------------------


def _constraint_rows(k: int) -> list[tuple[dict[str, float], float]]:
    """Leading order conditions as ``(coefficients over a, b, c, alpha, beta, rhs)``."""
    rows = [({"a": 1.0, "b": 1.0, "c": 1.0, "alpha": -2.0, "beta": -2.0}, 1.0)]
    for n in range(1, k):
        p = 4.0**n
        rows.append(({"a": 1.0, "b": p, "c": 9.0**n, "alpha": -2.0 * (2 * n + 1), "beta": -2.0 * (2 * n + 1) * p}, 0.0))
    return rows[:k]


def eliminate(coeffs: dict[str, float], constraints: int) -> dict[str, float]:
    """Solve the first ``constraints`` order conditions for ``a`` (``b``, ``c``).

    With nonzero ``d, e, f`` the single constraint is the generalized
    consistency ``(a+b+c)/(1+2 alpha+2 beta) + d+e+f = 1``.
    """
    c = dict(coeffs)
    if constraints == 0:
        return c
    aug = c.get("d", 0.0) or c.get("e", 0.0) or c.get("f", 0.0)
    if aug or constraints == 1:
        c["a"] = (1 + 2 * c["alpha"] + 2 * c["beta"]) * (1 - c["d"] - c["e"] - c["f"]) - c["b"] - c["c"]
        return c
    elim = ELIMINATION_ORDER[:constraints]
    rows = _constraint_rows(constraints)
    A = np.array([[r[v] for v in elim] for r, _ in rows])
    rhs = np.array([b - sum(r[v] * c[v] for v in r if v not in elim) for r, b in rows])
    for v, x in zip(elim, np.linalg.solve(A, rhs)):
        c[v] = float(x)
    return c


# -- minimization --------------------------------------------------------------------------------


@dataclass
class OptimizationResult:
    scheme: InteriorScheme
    objective: float
    evaluations: int
    converged: bool
    constraint_residual: float
    message: str = ""


def minimize(spec: OptimizationSpec, max_evaluations: int = MAX_EVALUATIONS, restarts: int = N_RESTARTS) -> OptimizationResult:
    """Nelder-Mead over the free coefficients with constraints eliminated.

    Each descent is restarted from its own result until it stops improving;
    then ``restarts`` randomly perturbed starts around the best point are tried.
    A run that exhausts ``max_evaluations`` returns the best point found with
    ``converged=False``.
    """
    ker = _Kernel(spec.gamma, spec.n, spec.weight)
    base = spec.initial.coefficients()
    free = spec.free
    evals = 0

    def full(x) -> dict[str, float]:
        c = dict(base)
        c.update(zip(free, map(float, x)))
        return eliminate(c, spec.constraints)

    def f(x) -> float:
        nonlocal evals
        evals += 1
        c = full(x)
        if ker.has_pole(c["alpha"], c["beta"]):
            return math.inf
        return ker(c)

    x0 = np.array([base[k] for k in free], dtype=float)
    if not math.isfinite(f(x0)):
        raise PoleError("initial guess has a pole in the integration range")
    best_x, best_f = x0, f(x0)
    rng = np.random.default_rng(spec.seed)
    converged = True

    def descend(start):
        nonlocal best_x, best_f, converged
        x = start
        fx = math.inf
        while evals < max_evaluations:
            r = _nm_minimize(
                f,
                x,
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-14, "maxfev": max_evaluations - evals, "adaptive": len(free) > 4},
            )
            if r.fun < best_f:
                best_x, best_f = np.array(r.x), float(r.fun)
            if not r.success:
                converged = False
                return
            if r.fun >= fx * (1 - 1e-12):
                return
            x, fx = r.x, r.fun
        converged = False

    descend(x0)
    for _ in range(restarts):
        if evals >= max_evaluations:
            break
        scale = 1e-2 * np.abs(best_x) + 1e-3
        descend(best_x + scale * rng.standard_normal(best_x.size))

    coeffs = full(best_x)
    s = InteriorScheme(spec.name, gamma_opt=spec.gamma, **coeffs)
    res = s.consistency_residual() if spec.augmented else (s.order_residuals()[0] if spec.constraints else 0.0)
    msg = "" if converged else f"evaluation budget of {max_evaluations} exhausted; best point reported"
    return OptimizationResult(s, best_f, evals, converged, res, msg)


# -- verification ------------------------------------------------------------------------------------


@dataclass
class VerificationReport:
    name: str
    passed: bool
    objective_catalog: float
    objective_derived: float
    gap: float
    max_coefficient_diff: float
    coefficient_match: bool
    derived: InteriorScheme

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "objective_catalog": self.objective_catalog,
            "objective_derived": self.objective_derived,
            "gap": self.gap,
            "max_coefficient_diff": self.max_coefficient_diff,
            "coefficient_match": self.coefficient_match,
            "derived": self.derived.coefficients(),
        }


def default_spec(s: InteriorScheme) -> OptimizationSpec:
    """The free set and constraint used for the built-in optimized schemes."""
    if s.gamma_opt is None:
        raise ValueError(f"{s.name} has no optimization limit")
    free: Sequence[str] = ("alpha", "beta", "b", "c", "d", "e", "f") if s.is_augmented else ("alpha", "beta", "b", "c")
    return OptimizationSpec(s.gamma_opt, free=tuple(free), name=s.name + "_DERIVED")


def verify_derivation(name: str, spec: OptimizationSpec | None = None, catalog=None, tol_objective: float | None = None) -> VerificationReport:
    """Re-derive a catalog scheme and compare objectives and coefficients.

    Passes when the derived objective does not exceed the catalog one by more
    than ``tol_objective`` (``1e-10`` for augmented, ``1e-12`` otherwise), the
    catalog entry meets its eliminated constraint to ``1e-6`` and its objective
    is within a factor ``CATALOG_SLACK`` of the derived one.  The last two
    catch corrupted catalog entries, which the minimizer would simply beat.
    """
    cat = catalog if catalog is not None else CATALOG
    s = cat[name]
    spec = spec if spec is not None else default_spec(s)
    tol = tol_objective if tol_objective is not None else (1e-10 if spec.augmented else 1e-12)
    out = minimize(spec)
    e_cat = objective(s, spec)
    gap = out.objective - e_cat
    diff = max(abs(out.scheme.coefficients()[k] - s.coefficients()[k]) for k in COEFF_NAMES)
    cres = s.consistency_residual() if spec.augmented else (s.order_residuals()[0] if spec.constraints else 0.0)
    ok = gap <= tol and cres <= 1e-6 and e_cat <= CATALOG_SLACK * out.objective + tol
    return VerificationReport(name, ok, e_cat, out.objective, gap, diff, diff <= 1e-4, out.scheme)
