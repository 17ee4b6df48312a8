import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ostrovsky_hdg.errors import (
    ConfigurationError,
    SingularBlockError,
    SingularMatrixError,
)
from ostrovsky_hdg.linalg import (
    BlockTridiagonalSystem,
    block_tridiag_solve,
    fft_forward,
    fft_inverse,
    lu_factor,
    lu_solve,
)


def unpack_lu(fac):
    n = fac.n
    low = np.tril(fac.lu, -1) + np.eye(n)
    up = np.triu(fac.lu)
    perm = np.eye(n)[fac.piv]
    return perm, low, up


def test_lu_reconstructs_pa():
    rng = np.random.default_rng(0)
    for n in (1, 2, 5, 17, 64):
        a = rng.standard_normal((n, n))
        perm, low, up = unpack_lu(lu_factor(a))
        assert np.max(np.abs(perm @ a - low @ up)) < 1e-11


def test_lu_solve_residual():
    # conditioning up to 1e8 with O(1) solutions; the residual bound is on
    # data whose solve does not amplify past double precision
    rng = np.random.default_rng(1)
    for n in (3, 10, 40):
        u, _ = np.linalg.qr(rng.standard_normal((n, n)))
        v, _ = np.linalg.qr(rng.standard_normal((n, n)))
        s = np.logspace(0, -8, n)
        a = u @ np.diag(s) @ v
        x_true = rng.standard_normal(n)
        b = a @ x_true
        x = lu_solve(lu_factor(a), b)
        assert np.max(np.abs(a @ x - b)) <= 1e-11 * (1 + np.max(np.abs(b)))


def test_lu_solve_multiple_rhs():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((6, 6)) + 6 * np.eye(6)
    b = rng.standard_normal((6, 4))
    x = lu_solve(lu_factor(a), b)
    assert np.max(np.abs(a @ x - b)) < 1e-12


def test_lu_singular_reports_pivot_index():
    with pytest.raises(SingularMatrixError) as info:
        lu_factor(np.array([[1.0, 2.0], [2.0, 4.0]]))
    assert info.value.pivot_index == 1
    with pytest.raises(SingularMatrixError) as info:
        lu_factor(np.zeros((3, 3)))
    assert info.value.pivot_index == 0


def make_system(rng, b, m, periodic):
    diag = rng.standard_normal((m, b, b))
    diag += (2 * b + 2) * np.eye(b)  # keep it comfortably nonsingular
    lower = rng.standard_normal((m - 1, b, b))
    upper = rng.standard_normal((m - 1, b, b))
    rhs = rng.standard_normal((m, b))
    if periodic:
        cu = rng.standard_normal((b, b))
        cl = rng.standard_normal((b, b))
    else:
        cu = cl = None
    return BlockTridiagonalSystem(diag, lower, upper, rhs, cu, cl)


def dense_oracle(system):
    """Independent dense scatter plus numpy solve."""
    m, b = system.m, system.b
    a = np.zeros((m * b, m * b))
    for i in range(m):
        a[i * b:(i + 1) * b, i * b:(i + 1) * b] = system.diag[i]
        if i > 0:
            a[i * b:(i + 1) * b, (i - 1) * b:i * b] = system.lower[i - 1]
        if i < m - 1:
            a[i * b:(i + 1) * b, (i + 1) * b:(i + 2) * b] = system.upper[i]
    if system.periodic:
        a[:b, (m - 1) * b:] += system.corner_upper
        a[(m - 1) * b:, :b] += system.corner_lower
    return np.linalg.solve(a, system.rhs.reshape(-1))


def test_block_tridiag_frozen_scalar_case():
    diag = np.full((4, 1, 1), 2.0)
    off = np.full((3, 1, 1), -1.0)
    rhs = np.ones((4, 1))
    x = block_tridiag_solve(BlockTridiagonalSystem(diag, off.copy(), off.copy(), rhs))
    assert np.allclose(x, [2.0, 3.0, 3.0, 2.0], atol=1e-12)


def test_block_tridiag_random_vs_dense_oracle():
    rng = np.random.default_rng(3)
    count = 0
    for b in (1, 2, 3, 4):
        for m in (2, 3, 4, 5, 8, 16):
            for periodic in (False, True):
                sys_ = make_system(rng, b, m, periodic)
                x = block_tridiag_solve(sys_)
                ref = dense_oracle(sys_)
                scale = max(1.0, np.max(np.abs(ref)))
                assert np.max(np.abs(x - ref)) < 1e-10 * scale
                count += 1
    assert count == 48  # deterministic grid of shapes


def test_block_tridiag_more_random_cases():
    # together with the grid above this brings the sample past 100 systems
    rng = np.random.default_rng(4)
    for _ in range(60):
        b = int(rng.integers(1, 5))
        m = int(rng.integers(2, 17))
        periodic = bool(rng.integers(0, 2))
        sys_ = make_system(rng, b, m, periodic)
        x = block_tridiag_solve(sys_)
        ref = dense_oracle(sys_)
        assert np.max(np.abs(x - ref)) < 1e-10 * max(1.0, np.max(np.abs(ref)))


def test_block_tridiag_singular_block_named():
    diag = np.stack([np.eye(2), np.zeros((2, 2)), np.eye(2), np.eye(2)])
    lower = np.zeros((3, 2, 2))
    upper = np.zeros((3, 2, 2))
    rhs = np.ones((4, 2))
    with pytest.raises(SingularBlockError) as info:
        block_tridiag_solve(BlockTridiagonalSystem(diag, lower, upper, rhs))
    assert info.value.block_index == 1


def test_block_tridiag_validation():
    with pytest.raises(ConfigurationError):
        BlockTridiagonalSystem(
            np.zeros((0, 2, 2)), np.zeros((0, 2, 2)), np.zeros((0, 2, 2)),
            np.zeros((0, 2)))
    # periodic coupling makes no sense with a single block row
    with pytest.raises(ConfigurationError):
        BlockTridiagonalSystem(
            np.eye(2)[None], np.zeros((0, 2, 2)), np.zeros((0, 2, 2)),
            np.zeros((1, 2)), corner_upper=np.zeros((2, 2)),
            corner_lower=np.zeros((2, 2)))
    with pytest.raises(ConfigurationError):
        BlockTridiagonalSystem(
            np.zeros((3, 2, 2)), np.zeros((2, 2, 2)), np.zeros((2, 2, 2)),
            np.zeros((3, 2)), corner_upper=np.zeros((2, 2)))


def test_block_tridiag_single_row():
    # a two-element Dirichlet mesh condenses to one interior node
    rng = np.random.default_rng(8)
    for b in (1, 3):
        diag = rng.standard_normal((1, b, b)) + (b + 2) * np.eye(b)
        rhs = rng.standard_normal((1, b))
        empty = np.zeros((0, b, b))
        x = block_tridiag_solve(BlockTridiagonalSystem(diag, empty, empty, rhs))
        assert np.max(np.abs(diag[0] @ x - rhs[0])) < 1e-12


def test_fft_frozen_examples():
    out = fft_forward(np.ones(8))
    expected = np.zeros(8, dtype=complex)
    expected[0] = 8.0
    assert np.max(np.abs(out - expected)) < 1e-13
    impulse = np.zeros(4)
    impulse[0] = 1.0
    assert np.max(np.abs(fft_forward(impulse) - np.ones(4))) < 1e-13


def naive_dft(v):
    k = len(v)
    j = np.arange(k)
    return np.exp(-2j * np.pi * np.outer(j, j) / k) @ np.asarray(v, dtype=complex)


def test_fft_against_naive_dft():
    rng = np.random.default_rng(5)
    v = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    assert np.max(np.abs(fft_forward(v) - naive_dft(v))) < 1e-11


def test_fft_against_numpy():
    rng = np.random.default_rng(6)
    for k in (1, 2, 8, 128, 1024):
        v = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        assert np.max(np.abs(fft_forward(v) - np.fft.fft(v))) < 1e-10
        assert np.max(np.abs(fft_inverse(v) - np.fft.ifft(v))) < 1e-10


def test_fft_roundtrip():
    rng = np.random.default_rng(7)
    for k in (2, 16, 256):
        v = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        assert np.max(np.abs(fft_inverse(fft_forward(v)) - v)) < 1e-12


def test_fft_rejects_bad_lengths():
    for n in (3, 12, 100):
        with pytest.raises(ConfigurationError):
            fft_forward(np.zeros(n))


@given(
    logk=st.integers(min_value=3, max_value=10),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
@settings(max_examples=40, deadline=None)
def test_fft_parseval(logk, seed):
    k = 2**logk
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    lhs = np.sum(np.abs(v) ** 2)
    rhs = np.sum(np.abs(fft_forward(v)) ** 2) / k
    assert abs(lhs - rhs) < 1e-11 * max(1.0, lhs)
