import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispfd.fields import Field1D, Grid1D
from dispfd.schemes import (
    CATALOG,
    InteriorScheme,
    PoleError,
    SchemeCatalog,
    SchemeFileError,
    builtin_decimal_text,
    dump_schemes,
    load_schemes,
    scheme_from_record,
)

NAMES = list(CATALOG)


def test_catalog_contents():
    assert NAMES == ["UNOPT10TH", "OPT2ND1P5", "OPT2ND1P8", "KLL2ND", "CD4"]
    u = CATALOG["UNOPT10TH"]
    assert (u.a, u.alpha, u.b, u.beta, u.c) == (17 / 12, 1 / 2, 101 / 150, 1 / 20, 1 / 100)
    cd4 = CATALOG["CD4"]
    assert (cd4.alpha, cd4.beta, cd4.a, cd4.b, cd4.c) == (0.0, 0.0, 4 / 3, -1 / 3, 0.0)


def test_decimals_are_verbatim():
    for name in ("OPT2ND1P5", "OPT2ND1P8", "KLL2ND"):
        text = builtin_decimal_text(name)
        s = CATALOG[name]
        for key, val in text.items():
            assert float(val) == getattr(s, key)
    assert builtin_decimal_text("KLL2ND")["e"] == "-0.024173863453322705888322"
    assert builtin_decimal_text("UNOPT10TH") is None


def test_kappa_star_points():
    for s in CATALOG.values():
        assert s.kappa_star(0.0) == 0.0
    assert abs(CATALOG["UNOPT10TH"].kappa_star(math.pi)) < 1e-15
    k1 = CATALOG["UNOPT10TH"].kappa_star(1.0)
    assert 1e-6 < 1.0 - k1 < 3e-6
    assert abs(CATALOG["CD4"].kappa_star(math.pi / 2) - 4 / 3) < 1e-15


def test_kappa_star_pole():
    s = InteriorScheme("pole", alpha=0.5, a=1.0)  # 1 + cos(kappa) vanishes at pi
    with pytest.raises(PoleError):
        s.kappa_star(math.pi)


def test_order_residuals():
    assert max(CATALOG["UNOPT10TH"].order_residuals()) <= 1e-12
    assert CATALOG["UNOPT10TH"].formal_order() == 10
    for name in ("OPT2ND1P5", "OPT2ND1P8"):
        r = CATALOG[name].order_residuals()
        assert r[0] <= 1e-12 and min(r[1:]) > 1e-12
    # exact decimal arithmetic on the stored text
    t = {k: Fraction(v) for k, v in builtin_decimal_text("OPT2ND1P8").items()}
    second = abs(t["a"] + 4 * t["b"] + 9 * t["c"] - 6 * (t["alpha"] + 4 * t["beta"]))
    assert CATALOG["OPT2ND1P8"].order_residuals()[1] == pytest.approx(float(second), rel=1e-9)
    assert 5.5e-4 < float(second) < 5.6e-4
    r = CATALOG["CD4"].order_residuals()
    assert r[0] == 0.0 and r[1] == 0.0 and r[2] > 0
    assert CATALOG["CD4"].formal_order() == 4


def test_order_residuals_fraction_oracle():
    # exact rational substitution for UNOPT10TH
    a, al, b, be, c = Fraction(17, 12), Fraction(1, 2), Fraction(101, 150), Fraction(1, 20), Fraction(1, 100)
    assert a + b + c == 1 + 2 * al + 2 * be
    for n in range(1, 5):
        assert a + 4**n * b + 9**n * c == 2 * (2 * n + 1) * (al + 4**n * be)


def test_consistency_residual():
    assert CATALOG["UNOPT10TH"].consistency_residual() <= 1e-15
    assert CATALOG["KLL2ND"].consistency_residual() <= 1e-6
    assert InteriorScheme("fwd", a=1.0).consistency_residual() == 0.0


def test_consistency_matches_small_kappa_slope():
    # kappa_star'(0) - 1 equals the consistency residual formula
    for s in CATALOG.values():
        assert abs(s.dkappa_star(0.0) - 1.0) <= 1e-12


def test_build_operators_structure():
    L, R, Rt = CATALOG["CD4"].build_operators(16, 0.1)
    assert np.array_equal(L.to_dense(), np.eye(16))
    assert not np.any(Rt.to_dense())
    for s in CATALOG.values():
        _, R, _ = s.build_operators(32, 1 / 32)
        assert np.allclose(R.to_dense().sum(axis=1), 0.0, atol=1e-12)
    _, R, _ = CATALOG["UNOPT10TH"].build_operators(32, 1 / 32)
    assert np.max(np.abs(R.matvec(np.ones(32)))) <= 1e-12
    with pytest.raises(ValueError):
        CATALOG["CD4"].build_operators(7, 0.1)


def test_derivative_constant_and_sine():
    g = Grid1D(256)
    for s in CATALOG.values():
        d = s.derivative(Field1D(g, np.full(g.n, 3.0)))
        assert np.max(np.abs(d.values)) <= 1e-10
    d = CATALOG["UNOPT10TH"].derivative(Field1D(g, np.sin(2 * np.pi * g.x)))
    assert np.max(np.abs(d.values - 2 * np.pi * np.cos(2 * np.pi * g.x))) <= 1e-10


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("n", [32, 64, 128])
def test_eigen_relation(name, n):
    s = CATALOG[name]
    dx = 1.0 / n
    x = np.arange(1, n + 1) * dx
    for kp in range(-n // 2 + 1, n // 2 + 1, max(1, n // 16)):
        U = np.exp(2j * np.pi * kp * x)
        kstar = s.kappa_star(2 * np.pi * kp * dx) / dx
        assert np.max(np.abs(s.derivative(U, dx) - 1j * kstar * U)) <= 1e-11 * max(1.0, abs(kstar))


def test_derivative_axis():
    s = CATALOG["KLL2ND"]
    n = 32
    x = np.arange(1, n + 1) / n
    U = np.sin(2 * np.pi * x)[None, :] * np.arange(1, 4)[:, None]
    D = s.derivative(U, 1 / n, axis=1)
    for i in range(3):
        assert np.allclose(D[i], s.derivative(U[i], 1 / n), atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(kappa=st.floats(0.0, math.pi), idx=st.integers(0, len(NAMES) - 1))
def test_property_oddness(kappa, idx):
    s = CATALOG[NAMES[idx]]
    assert s.kappa_star(-kappa) == pytest.approx(-s.kappa_star(kappa), abs=1e-15)


def test_record_validation_names_field():
    with pytest.raises(SchemeFileError, match="alpha"):
        scheme_from_record({"name": "X", "beta": 0, "a": 1, "b": 0, "c": 0})
    with pytest.raises(SchemeFileError, match="unknown"):
        scheme_from_record({"name": "X", "alpha": 0, "beta": 0, "a": 1, "b": 0, "c": 0, "g": 1})
    with pytest.raises(SchemeFileError, match="decimal"):
        scheme_from_record({"name": "X", "alpha": "one", "beta": 0, "a": 1, "b": 0, "c": 0})


def test_file_round_trip(tmp_path):
    path = tmp_path / "s.toml"
    dump_schemes(CATALOG.values(), path)
    back = load_schemes(path)
    assert [s.name for s in back] == NAMES
    for s in back:
        assert s == CATALOG[s.name]


def test_json_import(tmp_path):
    path = tmp_path / "kim.json"
    path.write_text('[{"name": "KIM4TH", "alpha": "0.5862704032801503", "beta": "0.09549533555017055", '
                    '"a": "0.6431406736919156", "b": "0.2586011023495066", "c": "0.007140953479797375"}]')
    (s,) = load_schemes(path)
    assert s.name == "KIM4TH" and s.alpha == 0.5862704032801503


def test_user_catalog_merge(tmp_path, monkeypatch):
    path = tmp_path / "user.toml"
    dump_schemes([InteriorScheme("MINE", a=1.0)], path)
    monkeypatch.setenv("DISPFD_CATALOG", str(path))
    cat = SchemeCatalog.default()
    assert "MINE" in cat and "UNOPT10TH" in cat
    with pytest.raises(KeyError):
        cat["nope"]


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        InteriorScheme("bad", a=float("nan"))
