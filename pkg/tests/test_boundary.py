import math

import numpy as np
import pytest

from dispfd.banded import BandedMatrix
from dispfd.boundary import (
    UNOPTBS,
    CompositeOperator,
    InstabilityError,
    assemble_direct,
    delta_k,
    delta_k_objective,
    derivative_buffered,
    derivative_direct,
    kll2ndbc,
    solve_outflow_ibvp,
    tam_exact,
    tam_ic,
    unopt8th,
)
from dispfd.fields import Field1D, Grid1D
from dispfd.rk import rk8
from dispfd.schemes import CATALOG


def bump(x, center=0.3, width=0.12):
    """Smooth compactly supported field with analytic derivative."""
    z = (x - center) / width
    inside = np.abs(z) < 1
    u = np.zeros_like(x)
    du = np.zeros_like(x)
    zi = z[inside]
    u[inside] = np.exp(-1 / (1 - zi**2)) * np.cos(40 * x[inside])
    env = np.exp(-1 / (1 - zi**2))
    denv = env * (-2 * zi / (1 - zi**2) ** 2) / width
    du[inside] = denv * np.cos(40 * x[inside]) - 40 * env * np.sin(40 * x[inside])
    return u, du


def test_unoptbs_exact_fractions_and_degrees():
    assert UNOPTBS.polynomial_exactness() == [10, 9, 8]
    assert UNOPTBS.rows[2].rhs[0] == -79 / 10 or float(UNOPTBS.rows[2].rhs[0]) == -7.9


def test_construction_errors():
    with pytest.raises(ValueError):
        unopt8th(11, 0.1)
    with pytest.raises(ValueError):
        kll2ndbc(100, 0.01, m=8)
    with pytest.raises(ValueError):
        kll2ndbc(21, 0.05, m=10)
    with pytest.raises(ValueError):
        CompositeOperator(CATALOG["KLL2ND"], UNOPTBS, 100, 0.01, "direct")
    with pytest.raises(ValueError):
        CompositeOperator(CATALOG["UNOPT10TH"], UNOPTBS, 100, 0.01, "sideways")
    op = unopt8th(40, 1 / 40)
    with pytest.raises(ValueError):
        derivative_buffered(op, np.zeros(40))
    with pytest.raises(ValueError):
        derivative_direct(op, np.zeros(40), dx=0.5)
    with pytest.raises(ValueError):
        op(np.zeros(39))


def test_interior_rows_equal_cyclic_rows():
    n, dx = 60, 1 / 60
    L, R = assemble_direct(CATALOG["UNOPT10TH"], UNOPTBS, n, dx)
    Lc, Rc, _ = CATALOG["UNOPT10TH"].build_operators(n, dx)
    Ld, Rd, Lcd, Rcd = L.to_dense(), R.to_dense(), Lc.to_dense(), Rc.to_dense()
    for i in range(3, n - 6):
        assert np.allclose(Ld[i], Lcd[i], rtol=0, atol=1e-14)
        assert np.allclose(Rd[i], Rcd[i], rtol=0, atol=1e-12)
    # the first rows are the cyclic rows with wrapped entries removed
    for i in range(3):
        keep = np.arange(n) <= i + 3
        assert np.allclose(Rd[i][keep], Rcd[i][keep], atol=1e-12)
        assert not np.any(Rd[i][n - 3 :])


@pytest.mark.parametrize("factory", [unopt8th, kll2ndbc])
def test_constant_field_and_zero_data(factory):
    op = factory(100, 0.01)
    assert np.max(np.abs(op(np.full(100, 2.0), ghost_u=np.full(6, 2.0), ghost_du=np.zeros(2)))) <= 1e-10
    assert not np.any(op(np.zeros(100)))


def test_direct_polynomial_exactness_at_right_end():
    n, dx = 40, 1 / 40
    op = unopt8th(n, dx)
    x = np.arange(1, n + 1) * dx
    gx = np.arange(-5, 1) * dx
    for q in range(9):
        du = op(x**q, ghost_u=gx**q, ghost_du=q * gx[-2:] ** max(q - 1, 0) * (q > 0))
        ref = q * x ** max(q - 1, 0) * (q > 0)
        assert np.max(np.abs(du - ref)) <= 1e-8 * max(1, q)


def test_mirror_consistency():
    # reflected rows at the buffer's left edge reproduce polynomial derivatives like the right rows do
    m, dx = 10, 0.1
    op = kll2ndbc(40, dx, m)
    Lb, Rb = op.Lbuf.to_dense(), op.Rbuf.to_dense()
    x = np.arange(1, m + 1) * dx

    def residual(row, q, x0):
        u = (x - x0) ** q
        du = q * (x - x0) ** (q - 1) if q else np.zeros_like(x)
        return abs(Lb[row] @ du - Rb[row] @ u)

    # rows 0 and m-1 sit on the outermost point (degree 8), then 9, then 10
    for row, deg in zip(range(3), (8, 9, 10)):
        for q in range(deg + 1):
            assert residual(row, q, x[0]) <= 1e-9
            assert residual(m - 1 - row, q, x[-1]) <= 1e-9
        assert residual(row, deg + 1, x[0]) > 1e-9
        assert residual(row, deg + 1, x[0]) == pytest.approx(residual(m - 1 - row, deg + 1, x[-1]), rel=1e-6)


def test_buffered_matches_periodic_interior():
    n, dx = 200, 1 / 200
    x = np.arange(1, n + 1) * dx
    u, _ = bump(x)
    ref = CATALOG["KLL2ND"].operator(n, dx)(u)
    outs = [derivative_buffered(kll2ndbc(n, dx, m), u, dx) for m in (10, 12, 14)]
    # the first points see zero inflow data instead of the periodic wrap
    window = (x > 0.05) & (x <= 0.5)
    for out in outs:
        assert np.max(np.abs(out[window] - ref[window])) <= 1e-9 * np.max(np.abs(ref))
    head = x <= 0.5
    assert np.max(np.abs(outs[0][head] - outs[1][head])) <= 1e-10
    assert np.max(np.abs(outs[0][head] - outs[2][head])) <= 1e-10


def test_direct_error_bounded_by_cyclic():
    n, dx = 200, 1 / 200
    x = np.arange(1, n + 1) * dx
    u, du = bump(x, 0.5, 0.2)
    cyc = np.max(np.abs(CATALOG["UNOPT10TH"].operator(n, dx)(u) - du))
    out = derivative_direct(unopt8th(n, dx), Field1D(Grid1D(n), u), dx)
    assert np.max(np.abs(out[5:-5] - du[5:-5])) <= 2 * cyc


def test_dense_matches_calls(rng):
    op = kll2ndbc(30, 1 / 30)
    D = op.dense()
    U = rng.standard_normal(30)
    assert np.max(np.abs(D @ U - op(U))) <= 1e-10 * np.max(np.abs(D @ U))


def test_tam_exact():
    x = np.linspace(0, 1, 11)
    assert np.array_equal(tam_exact(x, 0.0), tam_ic(x))
    out = tam_exact(x, 0.3)
    assert np.all(out[x < 0.3 - 1e-12] == 0)
    assert out[-1] == pytest.approx(tam_ic(0.7))


def test_ibvp_zero_and_history(tmp_path):
    n = 100
    g = Grid1D(n)
    op = unopt8th(n, g.dx)
    res = solve_outflow_ibvp(op, rk8(), 1.0, Field1D(g, np.zeros(n)), 0.2, 0.1, exact=lambda x, t: 0 * x)
    assert not np.any(res.field.values)
    res = solve_outflow_ibvp(op, rk8(), 1.0, Field1D.sample(g, tam_ic), 0.05, 0.1, stride=4)
    assert res.history[0][0] == 0.0 and res.history[-1][0] == 0.05
    lines = res.write_history(tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "time,l2_error,linf_error"
    with pytest.raises(ValueError):
        solve_outflow_ibvp(op, rk8(), -1.0, Field1D(g, np.zeros(n)), 0.2, 0.1)


def test_ibvp_instability_abort():
    n = 60
    g = Grid1D(n)
    op = kll2ndbc(n, g.dx)
    with pytest.raises(InstabilityError):
        solve_outflow_ibvp(op, rk8(), 1.0, Field1D.sample(g, tam_ic), 0.5, 0.1, growth_limit=1e-6)


@pytest.mark.parametrize("name", list(CATALOG))
def test_delta_k_periodic_is_zero(name):
    prof = delta_k(CATALOG[name], 2 * np.pi * 7, 64, 1 / 64)
    assert np.max(np.abs(prof.dk)) <= 1e-11 * max(1.0, abs(prof.kstar))
    with pytest.raises(ValueError):
        delta_k(CATALOG[name], 1.0)


def test_delta_k_unopt8th(tmp_path):
    n, dx = 200, 1 / 200
    op = unopt8th(n, dx)
    prof = delta_k(op, 2 * np.pi * 50)
    rel = np.abs(prof.dk) / abs(prof.kstar)
    assert np.max(rel[prof.x <= 0.85]) <= 1e-3
    assert np.argmax(rel) >= n - 10
    lines = prof.write_csv(tmp_path / "dk.csv").read_text().splitlines()
    assert lines[0] == "x,re_kj,im_kj,re_dk,im_dk" and len(lines) == n + 1
    # flat-region values sit on k_star, so they are ordered like k_star
    flat = prof.x <= 0.85
    kps = range(0, 100, 10)
    vals = [delta_k(op, 2 * np.pi * kp).kj.real[flat] for kp in kps]
    kstars = [delta_k(op, 2 * np.pi * kp).kstar for kp in kps]
    for v, ks in zip(vals, kstars):
        assert np.max(np.abs(v - ks)) <= 1e-3 * max(ks, 1.0)
    order = np.argsort(kstars)
    assert np.all(np.diff([np.mean(vals[i]) for i in order]) > 0)
    assert np.all(np.diff([np.mean(v) for v in vals[:9]]) > 0)
    with pytest.raises(ValueError):
        delta_k(op, 1.0, inflow="mirror")
    zero = delta_k(op, 2 * np.pi * 50, inflow="zero")
    assert np.max(np.abs(zero.dk[:3])) > np.max(np.abs(prof.dk[:3]))


def test_delta_k_objective():
    op = unopt8th(64, 1 / 64)
    small = delta_k_objective(op, 2 * np.pi * 5, n_nodes=16)
    large = delta_k_objective(op, 2 * np.pi * 20, n_nodes=16)
    assert 0 < small < large and math.isfinite(large)
