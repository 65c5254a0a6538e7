"""Command-line runner for config-driven experiments.

Usage::

    dispfd <experiment> --config run.toml [--out DIR] [--jobs N]
    dispfd catalog list | show NAME | import FILE
    dispfd repro [NAME ...] [--list] [--out DIR] [--jobs N]

Exit codes: 0 when every run finished and passed validation, 1 for a config
error, 2 for a runtime failure.  ``DISPFD_OUT`` overrides the output root
given in the config; ``--out`` overrides both.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .boundary import (
    UNOPTBS,
    CompositeOperator,
    InstabilityError,
    delta_k,
    solve_outflow_ibvp,
    tam_exact,
    tam_ic,
)
from .csvio import write_csv
from .dispersion import (
    DegenerateFitError,
    default_kappa_samples,
    leading_error_fit,
    predict_l2_error,
    profile,
    resolving_limit,
)
from .fields import Field1D, Field2D, Grid1D
from .optimize import OptimizationSpec, minimize, objective
from .rk import BlowUpError, RKScheme, taylor_rk
from .schemes import (
    CATALOG,
    COEFF_NAMES,
    InteriorScheme,
    PoleError,
    SchemeCatalog,
    SchemeFileError,
    builtin_decimal_text,
    builtin_fractions,
    dump_schemes,
    load_schemes,
    scheme_from_record,
    user_catalog_path,
)
from .transport1d import (
    CharacteristicError,
    NoConvergenceError,
    chirp_ic,
    dft,
    exact_hopf,
    exact_varcoef,
    hopf_ic,
    l2_error,
    linf_error,
    mesh_for_kappa,
    packet_ic,
    solve_const_transport,
    solve_hopf,
    solve_varcoef_transport,
    spectral_operator,
    upturn_time,
    varcoef_period,
    varcoef_speed,
)
from .transport2d import (
    exact_rotation,
    rotation_grid,
    solve_rotation,
    write_snapshot_binary,
    write_snapshot_csv,
    zalesak_ic,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXPERIMENTS = ("resolve", "optimize", "solve1d", "varcoef", "hopf", "solve2d", "ibvp", "deltak", "sweep")
RUNTIME_ERRORS = (
    BlowUpError,
    InstabilityError,
    NoConvergenceError,
    CharacteristicError,
    PoleError,
    DegenerateFitError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


# -- config handling ------------------------------------------------------------------------


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass
class Config:
    """Typed accessors over the raw mapping, with field-named errors."""

    raw: dict
    kind: str

    def get(self, key, default=None, typ=None, where=None):
        val = self.raw.get(key, default)
        if val is None:
            return None
        if typ is not None:
            try:
                if typ is float and isinstance(val, bool):
                    raise TypeError
                val = typ(val)
            except (TypeError, ValueError):
                raise ConfigError(f"field '{where or key}': expected {typ.__name__}, got {val!r}") from None
        return val

    def require(self, key, typ=None):
        if key not in self.raw:
            raise ConfigError(f"missing required field '{key}' for experiment '{self.kind}'")
        return self.get(key, typ=typ)

    def positive(self, key, default=None):
        val = self.get(key, default, float)
        if val is None or not val > 0:
            raise ConfigError(f"field '{key}' must be positive, got {val!r}")
        return val

    def nonnegative(self, key, default=None):
        val = self.get(key, default, float)
        if val is None or val < 0:
            raise ConfigError(f"field '{key}' must be >= 0, got {val!r}")
        return val

    def listof(self, key, typ, default=None):
        val = self.raw.get(key, default)
        if val is None:
            return None
        vals = val if isinstance(val, list) else [val]
        out = []
        for i, v in enumerate(vals):
            try:
                out.append(typ(v))
            except (TypeError, ValueError):
                raise ConfigError(f"field '{key}[{i}]': expected {typ.__name__}, got {v!r}") from None
        return out


def _catalog(cfg: Config) -> SchemeCatalog:
    cat = SchemeCatalog.default()
    extra = cfg.get("catalog", typ=str)
    if extra:
        try:
            cat = cat.with_schemes(load_schemes(extra))
        except (OSError, SchemeFileError) as exc:
            raise ConfigError(f"field 'catalog': {exc}") from None
    return cat


def resolve_schemes(cfg: Config, allow_spectral: bool = False) -> list:
    """``schemes`` as names or inline coefficient tables; ``"spectral"`` where allowed."""
    cat = _catalog(cfg)
    raw = cfg.raw.get("schemes", cfg.raw.get("scheme"))
    if raw is None:
        raise ConfigError(f"missing required field 'schemes' for experiment '{cfg.kind}'")
    items = raw if isinstance(raw, list) else [raw]
    out = []
    for i, item in enumerate(items):
        where = f"schemes[{i}]"
        if isinstance(item, dict):
            try:
                out.append(scheme_from_record(item, where))
            except SchemeFileError as exc:
                raise ConfigError(str(exc)) from None
        elif item == "spectral":
            if not allow_spectral:
                raise ConfigError(f"field '{where}': 'spectral' is not available for '{cfg.kind}'")
            out.append(None)
        elif isinstance(item, str):
            if item not in cat:
                raise ConfigError(f"field '{where}': unknown scheme {item!r}; known: {', '.join(cat.names())}")
            out.append(cat[item])
        else:
            raise ConfigError(f"field '{where}': expected a name or a coefficient table")
    return out


def resolve_rk(cfg: Config) -> RKScheme:
    spec = cfg.raw.get("rk", {"stages": 8})
    if isinstance(spec, int):
        spec = {"stages": spec}
    if not isinstance(spec, dict):
        raise ConfigError("field 'rk': expected a table with 'stages' or 'a'")
    if "a" in spec:
        try:
            return RKScheme(tuple(float(v) for v in spec["a"]), name=str(spec.get("name", "custom")))
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"field 'rk.a': {exc}") from None
    stages = spec.get("stages", 8)
    if not isinstance(stages, int) or stages < 1:
        raise ConfigError(f"field 'rk.stages': expected a positive integer, got {stages!r}")
    return taylor_rk(stages)


def resolve_meshes(cfg: Config, k: float | None = None, length: float = 1.0) -> list[Grid1D]:
    """``grid.n`` (list), ``grid.dx`` (list) or ``grid.kappa`` (list, needs ``k``)."""
    grid = cfg.raw.get("grid")
    if not isinstance(grid, dict):
        raise ConfigError(f"missing required table 'grid' (with 'n', 'dx' or 'kappa') for '{cfg.kind}'")
    sub = Config(grid, cfg.kind)
    if "n" in grid:
        ns = sub.listof("n", int)
        bad = [n for n in ns if n < 8]
        if bad:
            raise ConfigError(f"field 'grid.n': grids need at least 8 points, got {bad}")
        return [Grid1D(n, length) for n in ns]
    if "dx" in grid:
        out = []
        for dx in sub.listof("dx", float):
            n = round(length / dx)
            if n < 8 or not math.isclose(n * dx, length, rel_tol=1e-9):
                raise ConfigError(f"field 'grid.dx': {dx} does not divide the domain into >= 8 cells")
            out.append(Grid1D(n, length))
        return out
    if "kappa" in grid:
        if k is None:
            raise ConfigError("field 'grid.kappa' needs a reference wavenumber 'k'")
        kap = sub.listof("kappa", float)
        if any(not 0 < v <= math.pi for v in kap):
            raise ConfigError("field 'grid.kappa': values must lie in (0, pi]")
        return [mesh_for_kappa(k, v, length) for v in kap]
    raise ConfigError("table 'grid' needs one of 'n', 'dx' or 'kappa'")


ICS_1D: dict[str, Callable] = {"packet": packet_ic, "chirp": chirp_ic, "hopf": hopf_ic}


def resolve_ic(cfg: Config, default: str) -> tuple[str, Callable]:
    name = cfg.get("ic", default, str)
    if name == "sine":
        return name, partial(_sine, cfg.positive("k"))
    if name not in ICS_1D:
        raise ConfigError(f"field 'ic': unknown initial condition {name!r}; choose from {sorted(ICS_1D) + ['sine']}")
    return name, ICS_1D[name]


def _sine(k, x):
    return np.sin(k * np.asarray(x))


def _label(s) -> str:
    return "spectral" if s is None else s.name


def scheme_record(s: InteriorScheme) -> dict:
    """Exact coefficients: float values plus printed decimals or fractions when known."""
    rec: dict[str, Any] = {"name": s.name, "coefficients": s.coefficients(), "gamma_opt": s.gamma_opt}
    text = builtin_decimal_text(s.name)
    if CATALOG.get(s.name) == s:
        if text is not None:
            rec["decimal_text"] = text
        frac = builtin_fractions(s.name)
        if frac is not None:
            rec["fractions"] = frac
    return rec


# -- jobs (top level so they can run in worker processes) ---------------------------------


@dataclass
class Job:
    kind: str
    params: dict = field(default_factory=dict)


def _timed(fun, *args):
    t0 = time.perf_counter()
    out = fun(*args)
    return out, time.perf_counter() - t0


def _history_csv(path, history):
    return write_csv(path, ("time", "l2_error", "linf_error"), history)


def job_const(p: dict) -> dict:
    s, rk, g = p["scheme"], p["rk"], Grid1D(p["n"], p["length"])
    u0, c, T = p["ic"], p["c"], p["T"]
    U0 = Field1D(g, u0(g.x))

    def exact(x, t):
        return u0(np.mod(x - c * t, g.length))

    res, wall = _timed(solve_const_transport, s, rk, c, U0, T, p["r"], exact, p["stride"])
    ref = Field1D(g, exact(g.x, T))
    _history_csv(Path(p["out"]) / f"history_{s.name}_N{g.n}.csv", res.history)
    row = _row(s.name, g, p.get("k"), res.field, ref, wall, res.n_steps)
    if p.get("predict") and p.get("k") is not None:
        pred = predict_l2_error(s, dft(U0), c, T)
        row.update(predicted_l2=pred.value, prediction_valid=pred.valid)
    return row


def job_varcoef(p: dict) -> dict:
    s, rk, g = p["scheme"], p["rk"], Grid1D(p["n"])
    A, B, T, u0 = p["A"], p["B"], p["T"], p["ic"]
    U0 = Field1D(g, u0(g.x))
    cfun = varcoef_speed(A, B)

    def exact(x, t):
        return exact_varcoef(A, B, u0, x, t)

    D = spectral_operator(g) if s is None else None
    res, wall = _timed(solve_varcoef_transport, s, rk, cfun, U0, T, p["r"], exact if p["history"] else None, p["stride"], D)
    ref = Field1D(g, exact(g.x, T))
    out = Path(p["out"])
    name = _label(s)
    if res.history:
        _history_csv(out / f"history_{name}_N{g.n}.csv", res.history)
    dft(res.field).write_csv(out / f"spectrum_{name}_N{g.n}.csv")
    dft(ref).write_csv(out / f"spectrum_exact_N{g.n}.csv")
    return _row(name, g, p.get("k"), res.field, ref, wall, res.n_steps)


def job_hopf(p: dict) -> dict:
    s, rk, g = p["scheme"], p["rk"], Grid1D(p["n"])
    U0 = Field1D(g, hopf_ic(g.x))

    def exact(x, t):
        return exact_hopf(hopf_ic, x, t)

    res, wall = _timed(solve_hopf, s, rk, U0, p["T"], p["r"], exact, p["stride"])
    name = _label(s)
    _history_csv(Path(p["out"]) / f"history_{name}_N{g.n}.csv", res.history)
    ref = Field1D(g, exact(g.x, p["T"]))
    row = _row(name, g, None, res.field, ref, wall, res.n_steps)
    h = np.array(res.history)
    row["upturn_time"] = upturn_time(h[:, 0], h[:, 1]) if len(h) > 2 else math.inf
    return row


def job_rotation(p: dict) -> dict:
    s, rk = p["scheme"], p["rk"]
    g = rotation_grid(p["n"])
    U0 = Field2D.sample(g, zalesak_ic)

    def exact(x, y, t):
        return exact_rotation(zalesak_ic, x, y, t)

    res, wall = _timed(solve_rotation, s, rk, U0, p["T"], p["r"], exact, p["stride"])
    out = Path(p["out"])
    _history_csv(out / f"history_{s.name}_N{g.n}.csv", res.history)
    write_snapshot_csv(res.field, out / f"snapshot_{s.name}_N{g.n}.csv")
    write_snapshot_binary(res.field, out / f"snapshot_{s.name}_N{g.n}.bin")
    t, l2, linf = res.history[-1]
    return {"scheme": s.name, "n": g.n, "dx": g.dx, "l2_error": l2, "linf_error": linf, "wall_time": wall, "steps": res.n_steps}


def job_ibvp(p: dict) -> dict:
    op: CompositeOperator = p["op"]
    rk, g = p["rk"], Grid1D(op.n)
    U0 = Field1D(g, tam_ic(g.x, p["k0"]))
    c = p["c"]

    def exact(x, t):
        return tam_exact(x, t, c, lambda z: tam_ic(z, p["k0"]))

    res, wall = _timed(solve_outflow_ibvp, op, rk, c, U0, p["T"], p["r"], exact, p["stride"])
    res.write_history(Path(p["out"]) / f"history_{p['label']}_N{g.n}.csv")
    h = np.array(res.history)
    late = h[(h[:, 0] >= 0.5) & (h[:, 0] <= 0.8), 1]
    t, l2, linf = res.history[-1]
    return {
        "scheme": p["label"],
        "n": g.n,
        "dx": g.dx,
        "l2_error": l2,
        "linf_error": linf,
        "max_l2_0.5_0.8": float(late.max()) if late.size else None,
        "wall_time": wall,
        "steps": res.n_steps,
    }


def _row(name, g, k, U, ref, wall, steps) -> dict:
    return {
        "scheme": name,
        "n": g.n,
        "dx": g.dx,
        "kappa": None if k is None else k * g.dx,
        "l2_error": l2_error(U, ref),
        "linf_error": linf_error(U, ref),
        "wall_time": wall,
        "steps": steps,
    }


JOBS = {"const": job_const, "varcoef": job_varcoef, "hopf": job_hopf, "rotation": job_rotation, "ibvp": job_ibvp}


def _dispatch(job: Job) -> dict:
    try:
        return {"ok": True, "row": JOBS[job.kind](job.params)}
    except RUNTIME_ERRORS as exc:
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}", "row": {"scheme": _job_label(job)}}


def _job_label(job: Job) -> str:
    p = job.params
    if "label" in p:
        return p["label"]
    return _label(p.get("scheme"))


def run_jobs(jobs: list[Job], n_workers: int) -> list[dict]:
    """Run independent jobs; results come back in submission order."""
    if n_workers <= 1 or len(jobs) <= 1:
        return [_dispatch(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
        return list(pool.map(_dispatch, jobs))


# -- experiments ------------------------------------------------------------------------------


@dataclass
class Outcome:
    rows: list[dict]
    schemes: list[InteriorScheme]
    failures: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _collect(results, schemes, extra=None) -> Outcome:
    rows, fails = [], []
    for r in results:
        rows.append(r["row"])
        if not r["ok"]:
            fails.append(f"{r['row'].get('scheme')}: {r['error']}")
            rows[-1]["error"] = r["error"]
    return Outcome(rows, [s for s in schemes if s is not None], fails, extra or {})


def exp_resolve(cfg: Config, out: Path, jobs: int) -> Outcome:
    schemes = resolve_schemes(cfg)
    n = cfg.get("n_samples", 2048, int)
    if n < 2:
        raise ConfigError("field 'n_samples' must be at least 2")
    eps = cfg.listof("eps", float, [])
    rows = []
    for s in schemes:
        prof = profile(s, default_kappa_samples(n))
        prof.write_csv(out / f"resolve_{s.name}.csv")
        row: dict[str, Any] = {"scheme": s.name, "samples": n}
        try:
            fit = leading_error_fit(s)
            row.update(leading_order=fit.order, leading_coefficient=fit.coefficient, gamma=fit.gamma)
        except DegenerateFitError as exc:
            row["leading_fit"] = str(exc)
        for e in eps:
            row[f"resolving_limit_{e!r}"] = resolving_limit(s, e)
        rows.append(row)
    return Outcome(rows, schemes)


def exp_optimize(cfg: Config, out: Path, jobs: int) -> Outcome:
    sub = cfg.raw.get("optimize", cfg.raw)
    c = Config(sub, cfg.kind)
    gamma = c.require("gamma", float)
    init_name = c.get("initial", "UNOPT10TH", str)
    cat = _catalog(cfg)
    if init_name not in cat:
        raise ConfigError(f"field 'initial': unknown scheme {init_name!r}")
    free = c.listof("free", str, ["alpha", "beta", "b", "c"])
    try:
        spec = OptimizationSpec(
            gamma,
            n=c.get("n", 2, int),
            constraints=c.get("constraints", 1, int),
            free=tuple(free),
            initial=cat[init_name],
            name=c.get("name", "OPTIMIZED", str),
            seed=c.get("seed", 0, int),
        )
    except ValueError as exc:
        raise ConfigError(f"table 'optimize': {exc}") from None
    res = minimize(spec)
    path = out / f"{spec.name}.toml"
    path.write_text(dump_schemes([res.scheme]), encoding="utf-8")
    row: dict[str, Any] = {
        "scheme": spec.name,
        "objective": res.objective,
        "evaluations": res.evaluations,
        "converged": res.converged,
        "constraint_residual": res.constraint_residual,
    }
    compare = c.get("compare", None, str)
    schemes = [res.scheme]
    if compare:
        if compare not in cat:
            raise ConfigError(f"field 'compare': unknown scheme {compare!r}")
        ref = cat[compare]
        e_ref = objective(ref, spec)
        row.update(
            compare=compare,
            objective_reference=e_ref,
            objective_gap=res.objective - e_ref,
            max_coefficient_diff=max(abs(res.scheme.coefficients()[k] - ref.coefficients()[k]) for k in COEFF_NAMES),
        )
        schemes.append(ref)
    fails = [] if res.converged else [res.message]
    return Outcome([row], schemes, fails)


def _const_jobs(cfg: Config, out: Path, predict: bool) -> tuple[list[Job], list]:
    schemes = resolve_schemes(cfg)
    rk = resolve_rk(cfg)
    ic_name, u0 = resolve_ic(cfg, "packet")
    k = cfg.get("k", 30 * math.pi if ic_name == "packet" else None, float)
    meshes = resolve_meshes(cfg, k)
    T = cfg.nonnegative("T", 1.0)
    r = cfg.positive("r", 0.1)
    c = cfg.get("c", 1.0, float)
    stride = cfg.get("stride", 100, int)
    jobs = [
        Job("const", dict(scheme=s, rk=rk, n=g.n, length=g.length, ic=u0, c=c, T=T, r=r, stride=stride, out=str(out), k=k, predict=predict))
        for s in schemes
        for g in meshes
    ]
    return jobs, schemes


def exp_solve1d(cfg: Config, out: Path, jobs: int) -> Outcome:
    js, schemes = _const_jobs(cfg, out, predict=False)
    return _collect(run_jobs(js, jobs), schemes)


def exp_sweep(cfg: Config, out: Path, jobs: int) -> Outcome:
    js, schemes = _const_jobs(cfg, out, predict=True)
    outcome = _collect(run_jobs(js, jobs), schemes)
    cols = ("scheme", "n", "dx", "kappa", "l2_error", "linf_error", "predicted_l2")
    write_csv(out / "sweep.csv", cols, ([row.get(c) for c in cols] for row in outcome.rows if "error" not in row))
    return outcome


def exp_varcoef(cfg: Config, out: Path, jobs: int) -> Outcome:
    schemes = resolve_schemes(cfg, allow_spectral=True)
    rk = resolve_rk(cfg)
    A = cfg.get("A", 0.2, float)
    B = cfg.get("B", 1.0, float)
    if not A > 0 or A + B <= 0:
        raise ConfigError("fields 'A', 'B': the speed must stay positive (A > 0, A + B > 0)")
    _, u0 = resolve_ic(cfg, "packet")
    T = cfg.nonnegative("T", varcoef_period(A, B))
    meshes = resolve_meshes(cfg)
    params = dict(rk=rk, A=A, B=B, T=T, ic=u0, r=cfg.positive("r", 0.1), stride=cfg.get("stride", 200, int), out=str(out), k=cfg.get("k", None, float))
    params["history"] = bool(cfg.get("history", False))
    js = [Job("varcoef", dict(params, scheme=s, n=g.n)) for s in schemes for g in meshes]
    return _collect(run_jobs(js, jobs), schemes, {"period": varcoef_period(A, B)})


def exp_hopf(cfg: Config, out: Path, jobs: int) -> Outcome:
    schemes = resolve_schemes(cfg, allow_spectral=True)
    rk = resolve_rk(cfg)
    T = cfg.nonnegative("T", 0.6)
    if T >= 2 / math.pi:
        raise ConfigError(f"field 'T': {T} is at or past the breaking time 2/pi")
    meshes = resolve_meshes(cfg)
    params = dict(rk=rk, T=T, r=cfg.positive("r", 0.1), stride=cfg.get("stride", 1, int), out=str(out))
    js = [Job("hopf", dict(params, scheme=s, n=g.n)) for s in schemes for g in meshes]
    return _collect(run_jobs(js, jobs), schemes)


def exp_solve2d(cfg: Config, out: Path, jobs: int) -> Outcome:
    schemes = resolve_schemes(cfg)
    rk = resolve_rk(cfg)
    grid = cfg.raw.get("grid", {"n": 100})
    ns = Config(grid, cfg.kind).listof("n", int, [100]) if isinstance(grid, dict) else None
    if not ns or any(n < 8 for n in ns):
        raise ConfigError("field 'grid.n': expected grid sizes of at least 8")
    params = dict(rk=rk, T=cfg.nonnegative("T", 1.0), r=cfg.positive("r", 0.1), stride=cfg.get("stride", 100, int), out=str(out))
    js = [Job("rotation", dict(params, scheme=s, n=n)) for s in schemes for n in ns]
    return _collect(run_jobs(js, jobs), schemes)


COMPOSITES = {
    "UNOPT8TH": dict(interior="UNOPT10TH", variant="direct"),
    "KLL2NDBC": dict(interior="KLL2ND", variant="buffer", m=10),
}


def resolve_composites(cfg: Config, n: int, dx: float) -> list[tuple[str, CompositeOperator]]:
    cat = _catalog(cfg)
    raw = cfg.raw.get("composites", ["UNOPT8TH", "KLL2NDBC"])
    out = []
    for i, item in enumerate(raw if isinstance(raw, list) else [raw]):
        where = f"composites[{i}]"
        if isinstance(item, str):
            if item not in COMPOSITES:
                raise ConfigError(f"field '{where}': unknown composite {item!r}; known: {', '.join(COMPOSITES)}")
            label, spec = item, COMPOSITES[item]
        elif isinstance(item, dict):
            spec = item
            label = str(item.get("label", f"{item.get('interior')}_{item.get('variant', 'direct')}"))
        else:
            raise ConfigError(f"field '{where}': expected a name or a table")
        interior = spec.get("interior")
        if interior not in cat:
            raise ConfigError(f"field '{where}.interior': unknown scheme {interior!r}")
        try:
            op = CompositeOperator(cat[interior], UNOPTBS, n, dx, spec.get("variant", "direct"), int(spec.get("m", 10)))
        except ValueError as exc:
            raise ConfigError(f"field '{where}': {exc}") from None
        out.append((label, op))
    return out


def exp_ibvp(cfg: Config, out: Path, jobs: int) -> Outcome:
    rk = resolve_rk(cfg)
    ops = [lo for g in resolve_meshes(cfg) for lo in resolve_composites(cfg, g.n, g.dx)]
    c = cfg.positive("c", 1.0)
    params = dict(rk=rk, c=c, T=cfg.nonnegative("T", 0.8), r=cfg.positive("r", 0.1), stride=cfg.get("stride", 10, int), k0=cfg.get("k0", 255.0, float), out=str(out))
    js = [Job("ibvp", dict(params, op=op, label=label)) for label, op in ops]
    outcome = _collect(run_jobs(js, jobs), [])
    outcome.schemes = list({op.interior.name: op.interior for _, op in ops}.values())
    return outcome


def exp_deltak(cfg: Config, out: Path, jobs: int) -> Outcome:
    ops = [lo for g in resolve_meshes(cfg) for lo in resolve_composites(cfg, g.n, g.dx)]
    kps = cfg.listof("kprime", float, [0, 10, 20, 30, 40, 50, 60, 70, 80, 90])
    inflow = cfg.get("inflow", "plane_wave", str)
    if inflow not in ("plane_wave", "zero"):
        raise ConfigError("field 'inflow': expected 'plane_wave' or 'zero'")
    rows = []
    for label, op in ops:
        for kp in kps:
            prof = delta_k(op, 2 * math.pi * kp, inflow=inflow)
            prof.write_csv(out / f"deltak_{label}_N{op.n}_k{kp:g}.csv")
            rel = np.abs(prof.dk) / max(abs(prof.kstar), np.finfo(float).tiny)
            rows.append(
                {
                    "scheme": label,
                    "n": op.n,
                    "kprime": kp,
                    "kstar": prof.kstar,
                    "max_rel_dk_x_le_0.85": float(rel[prof.x <= 0.85].max()) if kp else float(np.abs(prof.dk[prof.x <= 0.85]).max()),
                    "max_rel_dk": float(rel.max()) if kp else float(np.abs(prof.dk).max()),
                }
            )
    return Outcome(rows, list({op.interior.name: op.interior for _, op in ops}.values()))


RUNNERS = {
    "resolve": exp_resolve,
    "optimize": exp_optimize,
    "solve1d": exp_solve1d,
    "varcoef": exp_varcoef,
    "hopf": exp_hopf,
    "solve2d": exp_solve2d,
    "ibvp": exp_ibvp,
    "deltak": exp_deltak,
    "sweep": exp_sweep,
}


# -- report ------------------------------------------------------------------------------------


def environment() -> dict:
    import scipy

    return {
        "dispfd": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def output_root(cfg_out: str | None, cli_out: str | None, kind: str) -> Path:
    if cli_out:
        return Path(cli_out)
    env = os.environ.get("DISPFD_OUT")
    if env:
        return Path(env) / kind
    return Path(cfg_out) if cfg_out else Path("dispfd-out") / kind


def run_config(raw: dict, kind: str, out: Path | None = None, jobs: int = 1, cli_out: str | None = None) -> tuple[dict, Path]:
    """Validate, run and report one experiment; returns the report and its directory."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table at the top level")
    declared = raw.get("kind", kind)
    if declared != kind:
        raise ConfigError(f"field 'kind': config declares {declared!r} but '{kind}' was requested")
    cfg = Config(raw, kind)
    outdir = out if out is not None else output_root(cfg.get("out", None, str), cli_out, kind)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    outcome = RUNNERS[kind](cfg, outdir, jobs)
    report = {
        "kind": kind,
        "config": raw,
        "status": "ok" if not outcome.failures else "failed",
        "failures": outcome.failures,
        "schemes": [scheme_record(s) for s in outcome.schemes],
        "rows": outcome.rows,
        "extra": outcome.extra,
        "wall_time": time.perf_counter() - t0,
        "environment": environment(),
    }
    (outdir / "report.json").write_text(json.dumps(_jsonable(report), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return report, outdir


# -- catalog and repro ---------------------------------------------------------------------------


def catalog_command(args) -> int:
    cat = SchemeCatalog.default()
    if args.action == "list":
        for name in cat.names():
            s = cat[name]
            tag = "augmented" if s.is_augmented else ("explicit" if s.is_explicit else "compact")
            print(f"{name}\t{tag}\torder {s.formal_order()}" + (f"\tgamma {s.gamma_opt!r}" if s.gamma_opt else ""))
        return 0
    if args.action == "show":
        if not args.name:
            print("error: 'catalog show' needs a scheme name", file=sys.stderr)
            return 1
        if args.name not in cat:
            print(f"error: unknown scheme {args.name!r}", file=sys.stderr)
            return 1
        print(json.dumps(_jsonable(scheme_record(cat[args.name])), indent=2))
        return 0
    if args.action == "import":
        if not args.name:
            print("error: 'catalog import' needs a file", file=sys.stderr)
            return 1
        try:
            new = load_schemes(args.name)
        except (OSError, SchemeFileError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        dest = user_catalog_path()
        existing = load_schemes(dest) if dest.exists() else []
        merged = {s.name: s for s in existing}
        merged.update({s.name: s for s in new})
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(dump_schemes(merged.values()), encoding="utf-8")
        print(f"imported {', '.join(s.name for s in new)} into {dest}")
        return 0
    return 1


def repro_configs() -> dict[str, Any]:
    root = resources.files("dispfd") / "repro"
    return {p.name[:-5]: p for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".toml")}


def repro_command(args) -> int:
    configs = repro_configs()
    if args.list or not configs:
        for name, path in configs.items():
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
            print(f"{name}\t{raw.get('kind')}\t{raw.get('description', '')}")
        return 0
    names = args.names or list(configs)
    unknown = [n for n in names if n not in configs]
    if unknown:
        print(f"error: unknown repro set(s) {unknown}; see 'dispfd repro --list'", file=sys.stderr)
        return 1
    base = Path(args.out) if args.out else Path(os.environ.get("DISPFD_OUT", "dispfd-out")) / "repro"
    code = 0
    for name in names:
        raw = tomllib.loads(configs[name].read_text(encoding="utf-8"))
        code = max(code, _run_and_summarize(raw, raw["kind"], base / name, args.jobs))
    return code


def _run_and_summarize(raw, kind, out, jobs, cli_out=None) -> int:
    try:
        report, outdir = run_config(raw, kind, out, jobs, cli_out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"{kind}: {len(report['rows'])} run(s), status {report['status']} -> {outdir / 'report.json'}")
    for f in report["failures"]:
        print(f"  failed: {f}", file=sys.stderr)
    return 0 if report["status"] == "ok" else 2


# -- entry point ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dispfd", description="Compact finite-difference dispersion experiments.")
    p.add_argument("--version", action="version", version=f"dispfd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENTS:
        sp = sub.add_parser(kind, help=f"run a '{kind}' experiment from a config file")
        sp.add_argument("--config", required=True, help="TOML or JSON experiment file")
        sp.add_argument("--out", help="output directory (overrides config and DISPFD_OUT)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    cp = sub.add_parser("catalog", help="list, show or import schemes")
    cp.add_argument("action", choices=("list", "show", "import"))
    cp.add_argument("name", nargs="?", help="scheme name (show) or coefficient file (import)")
    rp = sub.add_parser("repro", help="run bundled reproduction configs")
    rp.add_argument("names", nargs="*")
    rp.add_argument("--list", action="store_true")
    rp.add_argument("--out")
    rp.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "catalog":
        return catalog_command(args)
    if args.command == "repro":
        return repro_command(args)
    if args.jobs < 1:
        print("config error: --jobs must be at least 1", file=sys.stderr)
        return 1
    try:
        raw = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return _run_and_summarize(raw, args.command, None, args.jobs, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
