import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispfd.banded import (
    BandedMatrix,
    CyclicBandedMatrix,
    SingularMatrixError,
    apply,
    solve_banded,
    solve_cyclic,
    solve_dense,
)
from dispfd.schemes import CATALOG


def random_banded(rng, n, lower, upper, dominant=True):
    a = np.zeros((n, n))
    for o in range(-lower, upper + 1):
        idx = np.arange(max(0, -o), min(n, n - o))
        a[idx, idx + o] = rng.uniform(-1, 1, idx.size)
    if dominant:
        a += np.diag(2.0 * (lower + upper + 1) * np.ones(n))
    return a


def random_cyclic(rng, n, p):
    bands = rng.uniform(-1, 1, (2 * p + 1, n))
    bands[p] += 2 * (2 * p + 1)
    return CyclicBandedMatrix(n, p, bands)


def test_identity_apply_and_solve():
    eye = CyclicBandedMatrix(3, 0, [1.0])
    v = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(apply(eye, v), v)
    assert np.array_equal(solve_cyclic(CyclicBandedMatrix(8, 0, [1.0]), np.arange(8.0)), np.arange(8.0))
    ident = BandedMatrix(5, 0, 0, np.ones((1, 5)))
    assert np.array_equal(solve_banded(ident, np.arange(5.0)), np.arange(5.0))


def test_cyclic_central_difference_on_plane_wave():
    n = 12
    M = CyclicBandedMatrix(n, 1, [-0.5, 0.0, 0.5])
    kap = 2 * np.pi / n
    v = np.exp(1j * kap * np.arange(n))
    assert np.allclose(apply(M, v), 1j * np.sin(kap) * v, atol=1e-15)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_cyclic_apply_matches_dense(rng, p):
    M = random_cyclic(rng, 8, p)
    v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    assert np.max(np.abs(M.matvec(v) - M.to_dense() @ v)) <= 1e-14


def test_banded_apply_matches_dense(rng):
    a = random_banded(rng, 8, 2, 3)
    M = BandedMatrix.from_dense(a, 2, 3)
    v = rng.standard_normal(8)
    assert np.max(np.abs(M.matvec(v) - a @ v)) <= 1e-14
    assert np.array_equal(M.to_dense(), a)


def test_unopt10th_lhs_round_trip():
    s = CATALOG["UNOPT10TH"]
    L, _, _ = s.build_operators(16, 1 / 16)
    x = np.cos(np.arange(16.0)) + 0.3
    assert np.max(np.abs(L.solve(L.matvec(x)) - x)) <= 1e-12


def test_cyclic_pentadiagonal_against_dense_oracle(rng):
    M = random_cyclic(rng, 8, 2)
    b = rng.standard_normal(8)
    assert np.max(np.abs(M.solve(b) - solve_dense(M.to_dense(), b))) <= 1e-12
    assert np.max(np.abs(M.solve(b) - M.solve_dense(b))) <= 1e-12


def test_bidiagonal_back_substitution():
    # [[2, 1, 0], [0, 4, 2], [0, 0, 5]] x = [4, 10, 10]: x3 = 2, x2 = (10 - 4) / 4, x1 = (4 - 1.5) / 2
    a = np.array([[2.0, 1.0, 0.0], [0.0, 4.0, 2.0], [0.0, 0.0, 5.0]])
    M = BandedMatrix.from_dense(a, 0, 1)
    assert np.allclose(M.solve(np.array([4.0, 10.0, 10.0])), [1.25, 1.5, 2.0], atol=1e-15)


def test_banded_random_against_dense(rng):
    a = random_banded(rng, 10, 3, 2)
    b = rng.standard_normal(10)
    assert np.max(np.abs(solve_banded(BandedMatrix.from_dense(a, 3, 2), b) - np.linalg.solve(a, b))) <= 1e-12


def test_complex_rhs(rng):
    M = random_cyclic(rng, 20, 2)
    b = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    x = M.solve(b)
    assert np.iscomplexobj(x)
    assert np.max(np.abs(M.matvec(x) - b)) <= 1e-12


def test_solve_along_axis(rng):
    M = random_cyclic(rng, 16, 2)
    B = rng.standard_normal((5, 16))
    X = M.solve(B, axis=1)
    for i in range(5):
        assert np.allclose(X[i], M.solve(B[i]), atol=1e-14)
    assert np.allclose(M.matvec(X, axis=1), B, atol=1e-12)


def test_singular_cyclic_raises():
    # rows (1, -2, 1) annihilate constants
    M = CyclicBandedMatrix(10, 1, [1.0, -2.0, 1.0])
    with pytest.raises(SingularMatrixError):
        M.solve(np.ones(10))


def test_singular_banded_raises():
    a = np.diag([1.0, 0.0, 1.0, 1.0])
    with pytest.raises(SingularMatrixError):
        BandedMatrix.from_dense(a, 0, 0).solve(np.ones(4))


def test_dimension_mismatch():
    M = CyclicBandedMatrix(8, 1, [0.2, 1.0, 0.2])
    with pytest.raises(ValueError):
        M.matvec(np.ones(7))
    with pytest.raises(ValueError):
        M.solve(np.ones(9))


def test_invalid_shapes():
    with pytest.raises(ValueError):
        CyclicBandedMatrix(5, 2, [1, 1, 1, 1, 1])  # n must exceed 2p + 1
    with pytest.raises(ValueError):
        CyclicBandedMatrix(20, 4, np.ones(9))
    with pytest.raises(ValueError):
        BandedMatrix(10, 7, 0, np.ones((8, 10)))


def test_off_band_entries_zero(rng):
    bands = rng.standard_normal((4, 6))
    a = BandedMatrix(6, 2, 1, bands).to_dense()
    i, j = np.indices(a.shape)
    assert np.all(a[(j - i > 1) | (i - j > 2)] == 0)


def test_circulant_eigen_relation():
    s = CATALOG["UNOPT10TH"]
    n = 64
    L, _, _ = s.build_operators(n, 1 / n)
    for kp in (1, 5, 17, 31):
        kap = 2 * np.pi * kp / n
        e = np.exp(1j * kap * np.arange(n))
        expect = e / (1 + 2 * s.alpha * np.cos(kap) + 2 * s.beta * np.cos(2 * kap))
        assert np.max(np.abs(L.solve(e) - expect)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(9, 80),
    p=st.integers(0, 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_property_cyclic_round_trip(n, p, seed):
    if n <= 2 * p + 1:
        return
    rng = np.random.default_rng(seed)
    M = random_cyclic(rng, n, p)
    b = rng.standard_normal(n)
    x = M.solve(b)
    assert np.max(np.abs(M.matvec(x) - b)) <= 1e-10 * max(1.0, np.max(np.abs(b)))


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 60),
    lower=st.integers(0, 6),
    upper=st.integers(0, 6),
    seed=st.integers(0, 2**32 - 1),
)
def test_property_banded_round_trip(n, lower, upper, seed):
    rng = np.random.default_rng(seed)
    a = random_banded(rng, n, lower, upper)
    M = BandedMatrix.from_dense(a, lower, upper)
    b = rng.standard_normal(n)
    assert np.max(np.abs(M.matvec(M.solve(b)) - b)) <= 1e-10 * max(1.0, np.max(np.abs(b)))


def test_large_cyclic_uses_woodbury(rng):
    # beyond the dense fallback size
    M = random_cyclic(rng, 2000, 3)
    b = rng.standard_normal(2000)
    assert np.max(np.abs(M.matvec(M.solve(b)) - b)) <= 1e-10
