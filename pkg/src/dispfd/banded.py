"""Banded and cyclic-banded matrices.

Both storage classes keep one row of coefficients per diagonal offset:
``bands[k, i]`` is the entry of row ``i`` at column ``i + (k - lower)``.  For
the cyclic variant column indices wrap modulo ``n``.

Factorizations are computed lazily on the first solve and cached on the
instance.  Matrices are treated as immutable after construction.
"""

from __future__ import annotations

import threading

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "SingularMatrixError",
    "BandedMatrix",
    "CyclicBandedMatrix",
    "apply",
    "solve_banded",
    "solve_cyclic",
]

# pivots below this fraction of the largest pivot count as singular
PIVOT_RTOL = 1e-14
DENSE_FALLBACK_MAX = 512


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when banded elimination meets a (numerically) zero pivot."""


def _as_bands(bands, n: int, width: int) -> np.ndarray:
    bands = np.array(bands, dtype=float)
    if bands.ndim == 1:
        bands = np.repeat(bands[:, None], n, axis=1)
    if bands.shape != (width, n):
        raise ValueError(f"bands must have shape ({width}, {n}), got {bands.shape}")
    if not np.all(np.isfinite(bands)):
        raise ValueError("band coefficients must be finite")
    bands.setflags(write=False)
    return bands


def _check_rhs(n: int, rhs) -> np.ndarray:
    rhs = np.asarray(rhs)
    if rhs.shape[0] != n:
        raise ValueError(f"dimension mismatch: matrix has {n} rows, vector has {rhs.shape[0]}")
    return rhs


class _LUBand:
    """LAPACK ``gbtrf`` factorization of a real banded matrix."""

    def __init__(self, bands: np.ndarray, lower: int, upper: int):
        n = bands.shape[1]
        ab = np.zeros((2 * lower + upper + 1, n))
        # LAPACK layout: ab[kl + ku + i - j, j] = A[i, j]
        for k in range(lower + upper + 1):
            off = k - lower
            rows = np.arange(max(0, -off), min(n, n - off))
            ab[lower + upper - off, rows + off] = bands[k, rows]
        lu, piv, info = lapack.dgbtrf(ab, lower, upper)
        diag = np.abs(lu[lower + upper])
        scale = np.max(np.abs(bands)) if bands.size else 0.0
        if info > 0 or scale == 0.0 or diag.min() < PIVOT_RTOL * scale:
            raise SingularMatrixError("banded elimination met a pivot below relative tolerance")
        self.lu, self.piv, self.lower, self.upper = lu, piv, lower, upper

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(rhs):
            return self.solve(rhs.real) + 1j * self.solve(rhs.imag)
        b = np.asarray(rhs, dtype=float)
        flat = b.reshape(b.shape[0], -1)
        x, info = lapack.dgbtrs(self.lu, self.lower, self.upper, flat, self.piv)
        if info != 0:
            raise np.linalg.LinAlgError(f"dgbtrs failed with info={info}")
        return x.reshape(b.shape)


class BandedMatrix:
    """Square banded matrix without wrap-around.

    Parameters
    ----------
    n : int
        Number of rows.
    lower, upper : int
        Number of sub- and super-diagonals (at most 6 each).
    bands : array_like, shape (lower + upper + 1, n)
        ``bands[lower + o, i]`` holds ``M[i, i + o]``.  Entries that would fall
        outside the matrix are ignored.
    """

    max_bandwidth = 6

    def __init__(self, n: int, lower: int, upper: int, bands):
        if n < 1:
            raise ValueError("n must be >= 1")
        if not (0 <= lower <= self.max_bandwidth and 0 <= upper <= self.max_bandwidth):
            raise ValueError(f"bandwidths must lie in [0, {self.max_bandwidth}]")
        self.n, self.lower, self.upper = int(n), int(lower), int(upper)
        self.bands = _as_bands(bands, self.n, lower + upper + 1)
        # zero the entries that point outside the matrix
        b = np.array(self.bands)
        for k in range(lower + upper + 1):
            off = k - lower
            if off < 0:
                b[k, : min(-off, n)] = 0.0
            elif off > 0:
                b[k, max(n - off, 0) :] = 0.0
        b.setflags(write=False)
        self.bands = b
        self._lu: _LUBand | None = None
        self._lock = threading.Lock()

    @classmethod
    def from_dense(cls, a, lower: int, upper: int) -> "BandedMatrix":
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        bands = np.zeros((lower + upper + 1, n))
        for k in range(lower + upper + 1):
            off = k - lower
            rows = np.arange(max(0, -off), min(n, n - off))
            bands[k, rows] = a[rows, rows + off]
        return cls(n, lower, upper, bands)

    def offsets(self) -> range:
        return range(-self.lower, self.upper + 1)

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for k, off in enumerate(self.offsets()):
            rows = np.arange(max(0, -off), min(self.n, self.n - off))
            a[rows, rows + off] = self.bands[k, rows]
        return a

    def matvec(self, v) -> np.ndarray:
        v = _check_rhs(self.n, v)
        out = np.zeros(v.shape, dtype=np.result_type(v, float))
        tail = (slice(None),) * (v.ndim - 1)
        shape = (self.n,) + (1,) * (v.ndim - 1)
        for k, off in enumerate(self.offsets()):
            if abs(off) >= self.n:
                continue
            coef = self.bands[k].reshape(shape)
            if off >= 0:
                out[(slice(0, self.n - off),) + tail] += coef[: self.n - off] * v[(slice(off, None),) + tail]
            else:
                out[(slice(-off, None),) + tail] += coef[-off:] * v[(slice(0, self.n + off),) + tail]
        return out

    def factorization(self) -> _LUBand:
        if self._lu is None:
            with self._lock:
                if self._lu is None:
                    self._lu = _LUBand(self.bands, self.lower, self.upper)
        return self._lu

    def solve(self, rhs) -> np.ndarray:
        rhs = _check_rhs(self.n, rhs)
        return self.factorization().solve(rhs)


class CyclicBandedMatrix:
    """Square matrix with ``2p + 1`` diagonals that wrap around modulo ``n``.

    ``bands[p + o, i]`` holds ``M[i, (i + o) mod n]`` for ``o`` in ``-p..p``.
    A 1-D ``bands`` argument of length ``2p + 1`` gives a circulant matrix.
    """

    def __init__(self, n: int, half_bandwidth: int, bands):
        p = int(half_bandwidth)
        if not 0 <= p <= 3:
            raise ValueError("half_bandwidth must be in {0, 1, 2, 3}")
        if n <= 2 * p + 1:
            raise ValueError(f"n={n} too small for half bandwidth {p}: need n > {2 * p + 1}")
        self.n, self.half_bandwidth = int(n), p
        self.bands = _as_bands(bands, self.n, 2 * p + 1)
        # constant diagonals are applied as scalars
        self._scalar = [float(b[0]) if np.all(b == b[0]) else None for b in self.bands]
        self._factor = None
        self._lock = threading.Lock()

    @property
    def p(self) -> int:
        return self.half_bandwidth

    def offsets(self) -> range:
        return range(-self.p, self.p + 1)

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        rows = np.arange(self.n)
        for k, off in enumerate(self.offsets()):
            a[rows, (rows + off) % self.n] += self.bands[k]
        return a

    def matvec(self, v, axis: int = 0) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[axis] != self.n:
            raise ValueError(f"dimension mismatch: matrix has {self.n} rows, vector has {v.shape[axis]}")
        if axis != 0:
            return np.moveaxis(self.matvec(np.moveaxis(v, axis, 0)), 0, axis)
        n, p = self.n, self.p
        # periodic padding turns every offset into a contiguous slice
        vp = np.concatenate([v[n - p :], v, v[:p]]) if p else v
        out = np.zeros(v.shape, dtype=np.result_type(v, float))
        shape = (n,) + (1,) * (v.ndim - 1)
        for k, off in enumerate(self.offsets()):
            coef = self._scalar[k]
            if coef is None:
                out += self.bands[k].reshape(shape) * vp[p + off : p + off + n]
            elif coef != 0.0:
                out += coef * vp[p + off : p + off + n]
        return out

    def _build_factor(self):
        n, p = self.n, self.p
        core = np.zeros((2 * p + 1, n))
        for k, off in enumerate(self.offsets()):
            rows = np.arange(max(0, -off), min(n, n - off))
            core[k, rows] = self.bands[k, rows]
        if p == 0:
            return ("core", BandedMatrix(n, 0, 0, core).factorization(), None)
        # wrap-around entries form a rank-2p correction living in the first and last p rows
        idx = np.r_[0:p, n - p : n]
        wrap = self.to_dense()[idx] - BandedMatrix(n, p, p, core).to_dense()[idx]
        try:
            lu = BandedMatrix(n, p, p, core).factorization()
            e = np.zeros((n, 2 * p))
            e[idx, np.arange(2 * p)] = 1.0
            z = lu.solve(e)
            cap = np.eye(2 * p) + wrap @ z
            if np.linalg.cond(cap) > 1.0 / PIVOT_RTOL:
                raise SingularMatrixError("Woodbury capacitance matrix is singular")
            return ("woodbury", lu, (z, np.linalg.inv(cap), wrap))
        except SingularMatrixError:
            if n > DENSE_FALLBACK_MAX:
                raise
            dense = self.to_dense()
            if np.linalg.cond(dense) > 1.0 / PIVOT_RTOL:
                raise
            return ("dense", dense, None)

    def factorization(self):
        if self._factor is None:
            with self._lock:
                if self._factor is None:
                    self._factor = self._build_factor()
        return self._factor

    def solve(self, rhs, axis: int = 0) -> np.ndarray:
        rhs = np.asarray(rhs)
        if rhs.shape[axis] != self.n:
            raise ValueError(f"dimension mismatch: matrix has {self.n} rows, vector has {rhs.shape[axis]}")
        if axis != 0:
            return np.moveaxis(self.solve(np.moveaxis(rhs, axis, 0)), 0, axis)
        kind, lu, extra = self.factorization()
        if kind == "dense":
            return solve_dense(lu, rhs)
        y = lu.solve(rhs)
        if kind == "core":
            return y
        z, cap_inv, wrap = extra
        flat = y.reshape(self.n, -1)
        corr = z @ (cap_inv @ (wrap @ flat))
        return (flat - corr).reshape(y.shape)

    def solve_dense(self, rhs) -> np.ndarray:
        """Reference solve through a dense LU; used as a test oracle (``n <= 512``)."""
        if self.n > DENSE_FALLBACK_MAX:
            raise ValueError("dense path limited to n <= 512")
        return solve_dense(self.to_dense(), _check_rhs(self.n, rhs))


def solve_dense(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return np.linalg.solve(a, rhs.reshape(a.shape[0], -1)).reshape(rhs.shape)


def apply(m: BandedMatrix | CyclicBandedMatrix, v) -> np.ndarray:
    """Exact banded matrix-vector product ``m @ v``."""
    return m.matvec(v)


def solve_cyclic(m: CyclicBandedMatrix, rhs) -> np.ndarray:
    """Solve ``m x = rhs`` by banded LU of the acyclic core plus a Woodbury correction."""
    return m.solve(rhs)


def solve_banded(m: BandedMatrix, rhs) -> np.ndarray:
    """Solve ``m x = rhs`` with partial pivoting inside the band."""
    return m.solve(rhs)
