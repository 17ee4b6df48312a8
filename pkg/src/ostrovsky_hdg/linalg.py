"""Dense LU, block-tridiagonal solves, and a radix-2 FFT.

The block solver is the backbone of the statically condensed skeleton
systems: plain block Thomas for line topologies, plus a rank-2b
Sherman-Morrison-Woodbury correction (or a dense fallback for very small
systems) when periodic corner blocks are present.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SingularBlockError, SingularMatrixError

_EPS = float(np.finfo(float).eps)


@dataclass
class LUFactorization:
    """Packed LU factors of a square matrix with row-pivot record."""

    lu: np.ndarray
    piv: np.ndarray

    @property
    def n(self) -> int:
        return self.lu.shape[0]


def lu_factor(a: np.ndarray) -> LUFactorization:
    """LU factorization with partial pivoting.

    Raises:
        SingularMatrixError: When the best available pivot is numerically
            zero; carries the elimination step index.
    """
    a = np.array(a, dtype=float)
    n, n2 = a.shape
    if n != n2:
        raise ConfigurationError(f"matrix must be square, got {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    tiny = max(scale, 1.0) * _EPS * n
    piv = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= tiny:
            raise SingularMatrixError(k)
        if p != k:
            a[[k, p]] = a[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        a[k + 1:, k] /= a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return LUFactorization(a, piv)


def lu_solve(fac: LUFactorization, b: np.ndarray) -> np.ndarray:
    """Solve with precomputed LU factors; b may be a vector or a matrix of columns."""
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    x = b[fac.piv].reshape(fac.n, -1).copy()
    lu = fac.lu
    for k in range(1, fac.n):
        x[k] -= lu[k, :k] @ x[:k]
    for k in range(fac.n - 1, -1, -1):
        x[k] = (x[k] - lu[k, k + 1:] @ x[k + 1:]) / lu[k, k]
    return x[:, 0] if single else x.reshape(b.shape)


@dataclass
class BlockTridiagonalSystem:
    """Block tridiagonal system, optionally with periodic corner coupling.

    Attributes:
        diag: Diagonal blocks, shape (m, b, b).
        lower: Sub-diagonal blocks, shape (m - 1, b, b); lower[i] multiplies
            block unknown i in row i + 1.
        upper: Super-diagonal blocks, shape (m - 1, b, b); upper[i] multiplies
            block unknown i + 1 in row i.
        rhs: Right-hand side, shape (m, b).
        corner_upper: Row 0 coupling to block m - 1, or None.
        corner_lower: Row m - 1 coupling to block 0, or None.

    Corner blocks must both be present (periodic) or both absent.
    """

    diag: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray
    corner_upper: np.ndarray | None = None
    corner_lower: np.ndarray | None = None

    def __post_init__(self):
        m, b, b2 = self.diag.shape
        if b != b2:
            raise ConfigurationError("diagonal blocks must be square")
        if m < 1:
            raise ConfigurationError(f"need at least 1 block row, got {m}")
        if m < 2 and self.corner_upper is not None:
            raise ConfigurationError("periodic coupling needs at least 2 block rows")
        if self.lower.shape != (m - 1, b, b) or self.upper.shape != (m - 1, b, b):
            raise ConfigurationError("off-diagonal block arrays have wrong shape")
        if self.rhs.shape != (m, b):
            raise ConfigurationError(f"rhs must have shape ({m}, {b})")
        if (self.corner_upper is None) != (self.corner_lower is None):
            raise ConfigurationError("corner blocks must be given together")
        for c in (self.corner_upper, self.corner_lower):
            if c is not None and c.shape != (b, b):
                raise ConfigurationError("corner blocks must be (b, b)")

    @property
    def m(self) -> int:
        return self.diag.shape[0]

    @property
    def b(self) -> int:
        return self.diag.shape[1]

    @property
    def periodic(self) -> bool:
        return self.corner_upper is not None

    def to_dense(self):
        m, b = self.m, self.b
        a = np.zeros((m * b, m * b))
        for i in range(m):
            a[i * b:(i + 1) * b, i * b:(i + 1) * b] = self.diag[i]
        for i in range(m - 1):
            a[(i + 1) * b:(i + 2) * b, i * b:(i + 1) * b] = self.lower[i]
            a[i * b:(i + 1) * b, (i + 1) * b:(i + 2) * b] = self.upper[i]
        if self.periodic:
            a[0:b, (m - 1) * b:] += self.corner_upper
            a[(m - 1) * b:, 0:b] += self.corner_lower
        return a, self.rhs.reshape(-1)


class _ThomasFactor:
    """Block UL-style factorization of the tridiagonal part, reusable across rhs."""

    def __init__(self, diag, lower, upper):
        m = diag.shape[0]
        self.m = m
        self.lower = lower
        self.facs = []
        self.w = []
        c = diag[0]
        for i in range(m):
            try:
                fac = lu_factor(c)
            except SingularMatrixError as exc:
                raise SingularBlockError(i) from exc
            self.facs.append(fac)
            if i < m - 1:
                wi = lu_solve(fac, upper[i])
                self.w.append(wi)
                c = diag[i + 1] - lower[i] @ wi

    def solve(self, rhs):
        # rhs shape (m, b) or (m, b, k)
        g = [lu_solve(self.facs[0], rhs[0])]
        for i in range(1, self.m):
            g.append(lu_solve(self.facs[i], rhs[i] - self.lower[i - 1] @ g[i - 1]))
        x = list(g)
        for i in range(self.m - 2, -1, -1):
            x[i] = g[i] - self.w[i] @ x[i + 1]
        return np.stack(x)


def _solve_dense_fallback(system: BlockTridiagonalSystem) -> np.ndarray:
    a, rhs = system.to_dense()
    try:
        x = lu_solve(lu_factor(a), rhs)
    except SingularMatrixError as exc:
        raise SingularBlockError(exc.pivot_index // system.b) from exc
    return x


def block_tridiag_solve(system: BlockTridiagonalSystem) -> np.ndarray:
    """Solve a block tridiagonal system; returns the flat solution (m * b,).

    Periodic corner coupling is handled by a rank-2b bordering correction on
    top of the block Thomas factorization; systems too small for that split
    (m < 4) go through a dense solve instead.

    Raises:
        SingularBlockError: Singular pivot block, carrying the block row index.
    """
    m, b = system.m, system.b
    if not system.periodic:
        return _ThomasFactor(system.diag, system.lower, system.upper).solve(
            system.rhs).reshape(-1)
    if m < 4:
        return _solve_dense_fallback(system)

    fac = _ThomasFactor(system.diag, system.lower, system.upper)
    # corners as V @ W^T: V carries the blocks, W^T reads blocks m-1 and 0
    v = np.zeros((m, b, 2 * b))
    v[0, :, :b] = system.corner_upper
    v[m - 1, :, b:] = system.corner_lower
    ainv_rhs = fac.solve(system.rhs)
    ainv_v = fac.solve(v)
    wt_ainv_v = np.vstack([ainv_v[m - 1], ainv_v[0]])
    wt_ainv_rhs = np.concatenate([ainv_rhs[m - 1], ainv_rhs[0]])
    cap = np.eye(2 * b) + wt_ainv_v
    try:
        correction = lu_solve(lu_factor(cap), wt_ainv_rhs)
    except SingularMatrixError as exc:
        raise SingularBlockError(
            m - 1, "periodic corner correction is singular") from exc
    x = ainv_rhs - ainv_v @ correction
    return x.reshape(-1)


# ---------------------------------------------------------------------------
# radix-2 FFT

_twiddle_cache: dict[int, list[np.ndarray]] = {}
_bitrev_cache: dict[int, np.ndarray] = {}


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reversal(n: int) -> np.ndarray:
    idx = _bitrev_cache.get(n)
    if idx is None:
        bits = n.bit_length() - 1
        idx = np.zeros(n, dtype=np.intp)
        for j in range(bits):
            idx = (idx << 1) | ((np.arange(n) >> j) & 1)
        _bitrev_cache[n] = idx
    return idx


def _twiddles(n: int) -> list[np.ndarray]:
    tables = _twiddle_cache.get(n)
    if tables is None:
        tables = []
        size = 2
        while size <= n:
            half = size // 2
            tables.append(np.exp(-2j * np.pi * np.arange(half) / size))
            size *= 2
        _twiddle_cache[n] = tables
    return tables


def fft_forward(values: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT, X_m = sum_j v_j exp(-2 pi i j m / K).

    The length must be a power of two.
    """
    v = np.asarray(values)
    if v.ndim != 1:
        raise ConfigurationError("fft input must be one-dimensional")
    n = len(v)
    if not _is_power_of_two(n):
        raise ConfigurationError(f"fft length must be a power of two, got {n}")
    x = v[_bit_reversal(n)].astype(complex)
    if n == 1:
        return x
    for stage, tw in enumerate(_twiddles(n)):
        size = 2 << stage
        half = size >> 1
        x = x.reshape(n // size, size)
        a = x[:, :half]
        tb = x[:, half:] * tw
        x = np.concatenate([a + tb, a - tb], axis=1)
    return x.reshape(n)


def fft_inverse(values: np.ndarray) -> np.ndarray:
    """Inverse of fft_forward, including the 1/K normalization."""
    v = np.asarray(values)
    n = len(v)
    return np.conj(fft_forward(np.conj(v))) / n
