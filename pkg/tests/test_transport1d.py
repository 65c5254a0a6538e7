import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispfd.fields import Field1D, Grid1D, GridMismatchError
from dispfd.rk import rk8, taylor_rk
from dispfd.schemes import CATALOG
from dispfd.transport1d import (
    HOPF_BREAKING_TIME,
    K_MAX_CHIRP,
    chirp_ic,
    dft,
    exact_hopf,
    exact_varcoef,
    hopf_ic,
    idft,
    l2_error,
    linear_growth_residual,
    linf_error,
    mesh_for_kappa,
    modal_solution,
    packet_ic,
    pseudospectral_derivative,
    solve_const_transport,
    solve_hopf,
    solve_varcoef_transport,
    time_steps,
    upturn_time,
    varcoef_period,
    varcoef_speed,
)

NAMES = list(CATALOG)


def direct_dft(U, length, x):
    n = len(U)
    lo = -(n // 2) + 1 if n % 2 == 0 else -(n // 2)
    kp = np.arange(lo, lo + n)
    E = np.exp(-2j * np.pi * np.outer(kp, x) / length)
    return kp, E @ U / n


@pytest.mark.parametrize("n,length,origin", [(16, 1.0, 0.0), (210, 1.0, 0.0), (15, 10.0, 0.0), (64, 1.0, -0.5)])
def test_dft_matches_direct_sum(rng, n, length, origin):
    g = Grid1D(n, length, origin)
    U = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    S = dft(Field1D(g, U))
    kp, ref = direct_dft(U, length, g.x)
    assert np.array_equal(S.kprime, kp)
    assert np.max(np.abs(S.coeffs - ref)) <= 1e-13


def test_dft_examples(rng):
    g = Grid1D(32)
    S = dft(Field1D(g, np.full(32, 2.5)))
    assert S.coefficient(0) == pytest.approx(2.5, abs=1e-15)
    assert np.max(np.abs(np.delete(S.coeffs, np.flatnonzero(S.kprime == 0)))) <= 1e-15
    S = dft(Field1D(g, np.exp(2j * np.pi * 3 * g.x)))
    assert abs(S.coefficient(3) - 1) <= 1e-14
    assert np.sum(np.abs(S.coeffs) > 1e-13) == 1
    U = rng.standard_normal(32)
    S = dft(Field1D(g, U))
    assert np.max(np.abs(idft(S).values - U)) <= 1e-13
    # real field symmetry on the interior modes
    for kp in range(1, 16):
        assert abs(S.coefficient(-kp) - np.conj(S.coefficient(kp))) <= 1e-15


def test_dft_requires_field():
    with pytest.raises(TypeError):
        dft(np.zeros(4))


def test_errors_and_parseval(rng):
    g = Grid1D(50, 2.0)
    a = Field1D(g, rng.standard_normal(50))
    b = Field1D(g, rng.standard_normal(50))
    assert l2_error(a, a) == 0.0
    assert l2_error(Field1D(g, np.ones(50)), Field1D(g, np.zeros(50))) == pytest.approx(math.sqrt(2.0), rel=1e-15)
    spec = math.sqrt(g.length * np.sum(np.abs(dft(a).coeffs - dft(b).coeffs) ** 2))
    assert abs(l2_error(a, b) - spec) <= 1e-12
    assert linf_error(a, b) == np.max(np.abs(a.values - b.values))
    with pytest.raises(GridMismatchError):
        l2_error(a, Field1D(Grid1D(50), a.values))


def test_pseudospectral_derivative(rng):
    g = Grid1D(64, 2.0)
    d = pseudospectral_derivative(Field1D(g, np.sin(2 * np.pi * g.x / 2.0)))
    assert np.max(np.abs(d.values - np.pi * np.cos(np.pi * g.x))) <= 1e-12
    assert np.max(np.abs(pseudospectral_derivative(Field1D(g, np.ones(64))).values)) <= 1e-14
    amp = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    ks = np.arange(1, 21) * 2 * np.pi / 2.0
    U = np.real(sum(a * np.exp(1j * k * g.x) for a, k in zip(amp, ks)))
    dU = np.real(sum(1j * k * a * np.exp(1j * k * g.x) for a, k in zip(amp, ks)))
    assert np.max(np.abs(pseudospectral_derivative(Field1D(g, U)).values - dU)) <= 1e-11


def test_initial_conditions():
    assert packet_ic(0.5) == pytest.approx(-1.0, abs=1e-15)
    assert hopf_ic(0.0) == 0.75
    assert K_MAX_CHIRP == 380.0
    g = Grid1D(8192, 10.0)
    S = dft(Field1D.sample(g, chirp_ic))
    amp = np.abs(S.coeffs)
    assert amp[np.abs(S.k) > K_MAX_CHIRP].max() <= 1e-2 * amp.max()
    assert amp[np.abs(S.k) > 1.2 * K_MAX_CHIRP].max() <= 1e-10 * amp.max()


def test_time_steps():
    assert time_steps(0.0, 0.1) == (0, 0.0)
    n, dt = time_steps(1.0, 0.3)
    assert n == 4 and dt == 0.25
    n, dt = time_steps(1.0, 0.1)
    assert n == 10 and dt <= 0.1
    with pytest.raises(ValueError):
        time_steps(-1.0, 0.1)


def test_modal_trivial_cases():
    g = Grid1D(32)
    U0 = Field1D.sample(g, packet_ic)
    assert np.array_equal(modal_solution(CATALOG["CD4"], None, U0, 0.0, 1.0).values, U0.values)
    wave = Field1D(g, np.sin(2 * np.pi * g.x))
    out = modal_solution(CATALOG["UNOPT10TH"], None, wave, 1.0, 0.25)
    ks = CATALOG["UNOPT10TH"].kappa_star(2 * np.pi / 32) * 32
    assert np.max(np.abs(out.values - np.sin(2 * np.pi * g.x - ks * 0.25))) <= 1e-13
    with pytest.raises(ValueError):
        modal_solution(CATALOG["CD4"], rk8(), U0, 1.0, 1.0, 0.3)


@pytest.mark.parametrize("name", NAMES)
def test_stepping_equals_modal_solution(name):
    s = CATALOG[name]
    g = Grid1D(128)
    U0 = Field1D.sample(g, packet_ic)
    res = solve_const_transport(s, rk8(), 1.0, U0, 1.0, 0.128)
    assert res.n_steps == 1000
    ref = modal_solution(s, rk8(), U0, 1.0, 1.0, res.dt)
    assert np.max(np.abs(res.field.values - ref.values)) <= 1e-10


@settings(max_examples=10, deadline=None)
@given(c=st.floats(-2.0, 2.0).filter(lambda v: abs(v) > 0.1), kp=st.integers(1, 30), M=st.integers(4, 8))
def test_property_stepping_equals_modal(c, kp, M):
    s = CATALOG["KLL2ND"]
    g = Grid1D(64)
    U0 = Field1D(g, np.cos(2 * np.pi * kp * g.x) + 0.3 * np.sin(2 * np.pi * (kp // 2) * g.x))
    rk = taylor_rk(M)
    res = solve_const_transport(s, rk, c, U0, 0.5, 0.1)
    ref = modal_solution(s, rk, U0, c, 0.5, res.dt)
    assert np.max(np.abs(res.field.values - ref.values)) <= 1e-10


def test_const_transport_trivial_and_history():
    g = Grid1D(64)
    U0 = Field1D.sample(g, packet_ic)
    res = solve_const_transport(CATALOG["CD4"], rk8(), 0.0, U0, 1.0, 0.1)
    assert np.array_equal(res.field.values, U0.values)
    res = solve_const_transport(
        CATALOG["UNOPT10TH"], rk8(), 1.0, U0, 0.5, 0.5, exact=lambda x, t: packet_ic(np.mod(x - t, 1.0)), stride=3
    )
    ts = [h[0] for h in res.history]
    assert ts[0] == 0.0 and ts[-1] == 0.5 and res.history[0][1] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        solve_const_transport(CATALOG["CD4"], rk8(), 1.0, U0, 1.0, 0.0)


def test_refinement_monotone_resolved():
    k = 30 * math.pi
    errs = []
    for kappa in (1.0, 0.5):
        g = mesh_for_kappa(k, kappa)
        U0 = Field1D.sample(g, packet_ic)
        out = solve_const_transport(CATALOG["UNOPT10TH"], rk8(), 1.0, U0, 1.0, 0.1).field
        errs.append(l2_error(out, U0))
    assert errs[1] < errs[0]


def test_varcoef_constant_reduces():
    g = Grid1D(64)
    U0 = Field1D.sample(g, packet_ic)
    a = solve_varcoef_transport(CATALOG["KLL2ND"], rk8(), lambda x: 0.7 * np.ones_like(x), U0, 0.3, 0.2).field
    b = solve_const_transport(CATALOG["KLL2ND"], rk8(), 0.7, U0, 0.3, 0.2).field
    assert np.max(np.abs(a.values - b.values)) <= 1e-12


# closed-form characteristics of dX/dt = A + B sin^2(2 pi X)


def _phase(theta, q):
    n = np.round(theta / np.pi)
    return np.arctan(q * np.tan(theta - n * np.pi)) + n * np.pi


def _phase_inv(psi, q):
    n = np.round(psi / np.pi)
    return np.arctan(np.tan(psi - n * np.pi) / q) + n * np.pi


def closed_form_foot(A, B, x, T):
    q = math.sqrt((A + B) / A)
    omega = 2 * np.pi * math.sqrt(A * (A + B))
    theta = _phase_inv(_phase(2 * np.pi * np.asarray(x), q) - omega * T, q)
    return theta / (2 * np.pi)


def test_varcoef_period_and_exact(rng):
    A, B = 0.2, 1.0
    Tp = varcoef_period(A, B)
    assert Tp == pytest.approx(5 / math.sqrt(6), rel=1e-15)
    with pytest.raises(ValueError):
        varcoef_period(1.0, -2.0)
    x = rng.uniform(0, 1, 200)
    u0 = lambda z: np.sin(2 * np.pi * z) + 0.5 * np.cos(6 * np.pi * z)  # noqa: E731
    assert np.array_equal(exact_varcoef(A, B, u0, x, 0.0), u0(x))
    for T in (0.13, 0.9, Tp):
        ref = u0(closed_form_foot(A, B, x, T))
        assert np.max(np.abs(exact_varcoef(A, B, u0, x, T) - ref)) <= 1e-9
    assert np.max(np.abs(exact_varcoef(A, B, u0, x, Tp) - u0(x))) <= 1e-9


def test_varcoef_half_period_symmetry(rng):
    A, B = 0.2, 1.0
    Tp = varcoef_period(A, B)
    u0 = lambda z: np.exp(np.sin(2 * np.pi * z))  # noqa: E731
    x = rng.uniform(0, 1, 100)
    t = rng.uniform(0, 1, 100)
    lhs = np.array([exact_varcoef(A, B, u0, xi - 0.5, ti) for xi, ti in zip(x, t)])
    rhs = np.array([exact_varcoef(A, B, u0, xi, ti + Tp / 2) for xi, ti in zip(x, t)])
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_varcoef_speed():
    c = varcoef_speed(0.2, 1.0)
    assert c(0.25) == pytest.approx(1.2)
    assert c(0.0) == 0.2


def test_hopf_exact():
    assert np.array_equal(exact_hopf(hopf_ic, np.array([0.1, 0.4]), 0.0), hopf_ic(np.array([0.1, 0.4])))
    x = np.linspace(0, 1, 7)
    assert np.allclose(exact_hopf(lambda z: 0.75 + 0 * z, x, 0.4), 0.75)
    # characteristic identity and conservation of the mean
    g = Grid1D(4096)
    for t in (0.1, 0.3, 0.6):
        u = exact_hopf(hopf_ic, g.x, t)
        xi = g.x - u * t
        assert np.max(np.abs(hopf_ic(xi) - u)) <= 1e-12
        assert np.mean(u) == pytest.approx(0.75, abs=1e-10)
    assert HOPF_BREAKING_TIME == 2 / math.pi


def test_hopf_solver_constant_and_mean():
    g = Grid1D(100)
    U0 = Field1D(g, np.full(100, 0.75))
    out = solve_hopf(CATALOG["UNOPT10TH"], rk8(), U0, 0.3, 0.1).field
    assert np.max(np.abs(out.values - 0.75)) <= 1e-13
    U0 = Field1D.sample(g, hopf_ic)
    out = solve_hopf(CATALOG["KLL2ND"], rk8(), U0, 0.3, 0.1).field
    assert abs(np.mean(out.values) - np.mean(U0.values)) <= 1e-10
    exact = exact_hopf(hopf_ic, g.x, 0.3)
    assert np.max(np.abs(out.values - exact)) <= 1e-4
    spectral = solve_hopf(None, rk8(), U0, 0.3, 0.1).field
    assert abs(np.mean(spectral.values) - 0.75) <= 1e-10


def test_upturn_and_linear_growth():
    t = np.linspace(0, 1, 1001)
    lin = 1e-3 * t
    assert upturn_time(t[1:], lin[1:]) == math.inf
    assert linear_growth_residual(t, lin, through_origin=True) <= 1e-12
    e = 1e-3 * t + np.where(t > 0.5, (t - 0.5) ** 6 * 1e3, 0.0)
    tu = upturn_time(t[1:], e[1:])
    assert 0.5 < tu < 0.6
    assert linear_growth_residual(t, e) > 0.1
