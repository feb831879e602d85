"""Tests for the dense numerical kernels: matrix exponential, Lyapunov
solver, semidefinite square-root factors, and the deterministic SVD."""

import numpy as np
import pytest

from lqobt.errors import IndefiniteMatrixError, LyapunovError
from lqobt.numcore import expm, psd_sqrt_factor, solve_lyapunov, svd


# ---------------------------------------------------------------- expm


def test_expm_zero_matrix_is_identity():
    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))


def test_expm_diagonal_closed_form():
    A = np.diag([-1.0, -2.0, 0.5])
    for t in (0.0, 0.3, 1.0, 2.5):
        want = np.diag(np.exp(np.diag(A) * t))
        assert np.allclose(expm(A, t), want, rtol=1e-13, atol=1e-14)


def test_expm_nilpotent_truncates():
    # exp of a strictly upper-triangular matrix is the finite Taylor sum
    A = np.array([[0.0, 2.0], [0.0, 0.0]])
    want = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert np.allclose(expm(A), want, rtol=0, atol=1e-15)


def test_expm_semigroup_property():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n = int(rng.integers(2, 13))
        A = rng.standard_normal((n, n))
        s, t = rng.uniform(0.1, 1.5, 2)
        left = expm(A, s + t)
        right = expm(A, s) @ expm(A, t)
        assert np.allclose(left, right, rtol=1e-11, atol=1e-11)


def test_expm_rejects_bad_input():
    with pytest.raises(ValueError):
        expm(np.ones((2, 3)))
    with pytest.raises(ValueError):
        expm(np.array([[np.nan, 0.0], [0.0, 1.0]]))


# ------------------------------------------------------- solve_lyapunov


def test_lyapunov_scalar():
    X = solve_lyapunov(np.array([[-1.0]]), np.array([[1.0]]))
    assert abs(X[0, 0] - 0.5) <= 1e-14


def test_lyapunov_diagonal_closed_form():
    # A' X + X A + W = 0 with diagonal A: X_ij = -W_ij / (a_i + a_j)
    a = np.array([-1.0, -2.0, -5.0])
    A = np.diag(a)
    rng = np.random.default_rng(3)
    W = rng.standard_normal((3, 3))
    W = 0.5 * (W + W.T)
    X = solve_lyapunov(A, W)
    want = W / -(a[:, None] + a[None, :])
    assert np.allclose(X, want, rtol=1e-12, atol=1e-13)


def test_lyapunov_zero_rhs_gives_zero():
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    X = solve_lyapunov(A, np.zeros((2, 2)))
    assert np.abs(X).max() <= 1e-14


def test_lyapunov_residual_and_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(2, 25))
        G = rng.standard_normal((n, n)) / np.sqrt(n)
        A = G - (np.linalg.eigvals(G).real.max() + rng.uniform(0.3, 1.0)) * np.eye(n)
        W = rng.standard_normal((n, n))
        W = W @ W.T
        X = solve_lyapunov(A, W)
        res = A.T @ X + X @ A + W
        assert np.linalg.norm(res) <= 1e-9 * max(1.0, np.linalg.norm(W))
        assert np.abs(X - X.T).max() <= 1e-12 * (1.0 + np.abs(X).max())


def test_lyapunov_unstable_coefficient_fails():
    with pytest.raises(LyapunovError):
        solve_lyapunov(np.array([[1.0]]), np.array([[1.0]]))


def test_lyapunov_shape_errors():
    with pytest.raises(ValueError):
        solve_lyapunov(np.ones((2, 3)), np.eye(2))
    with pytest.raises(ValueError):
        solve_lyapunov(-np.eye(2), np.eye(3))


# ------------------------------------------------------ psd_sqrt_factor


def test_psd_sqrt_identity():
    F = psd_sqrt_factor(np.eye(3))
    assert F.shape == (3, 3)
    assert np.allclose(F @ F.T, np.eye(3), rtol=0, atol=1e-14)


def test_psd_sqrt_drops_null_space():
    X = np.diag([4.0, 0.0])
    F = psd_sqrt_factor(X)
    assert F.shape == (2, 1)
    assert np.allclose(F @ F.T, X, rtol=0, atol=1e-13)


def test_psd_sqrt_zero_matrix():
    F = psd_sqrt_factor(np.zeros((4, 4)))
    assert F.shape == (4, 0)


def test_psd_sqrt_roundtrip_random():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(2, 20))
        k = int(rng.integers(1, n + 1))
        G = rng.standard_normal((n, k))
        X = G @ G.T
        F = psd_sqrt_factor(X)
        assert F.shape[1] <= k
        scale = 1.0 + np.abs(X).max()
        assert np.abs(F @ F.T - X).max() <= 1e-10 * scale


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(IndefiniteMatrixError):
        psd_sqrt_factor(np.diag([1.0, -1.0]))


def test_psd_sqrt_rejects_asymmetric():
    with pytest.raises(ValueError):
        psd_sqrt_factor(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_psd_sqrt_tiny_negative_dust_is_clipped():
    # round-off sized negative eigenvalues must not trip the definiteness check
    X = np.diag([1.0, -1e-15])
    F = psd_sqrt_factor(X)
    assert F.shape == (2, 1)


# ----------------------------------------------------------------- svd


def test_svd_diagonal():
    res = svd(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(res.S, [3.0, 2.0, 1.0], rtol=0, atol=1e-14)


def test_svd_rank_one_outer_product():
    u = np.array([[2.0], [0.0], [0.0]])
    v = np.array([[5.0, 0.0]])
    res = svd(u @ v)
    assert abs(res.S[0] - 10.0) <= 1e-13
    assert np.abs(res.S[1:]).max() <= 1e-13


def test_svd_zero_matrix():
    res = svd(np.zeros((3, 2)))
    assert np.abs(res.S).max() == 0.0


def _check_svd(M):
    res = svd(M)
    k = res.S.size
    assert k == min(M.shape)
    assert np.all(np.diff(res.S) <= 1e-12 * (res.S[0] + 1.0))
    recon = res.Z @ (res.S[:, None] * res.Y.conj().T)
    scale = 1.0 + np.abs(M).max()
    assert np.abs(recon - M).max() <= 1e-11 * scale
    assert np.abs(res.Z.conj().T @ res.Z - np.eye(k)).max() <= 1e-11
    assert np.abs(res.Y.conj().T @ res.Y - np.eye(k)).max() <= 1e-11


def test_svd_reconstruction_and_orthonormality():
    rng = np.random.default_rng(17)
    # square, wide, and tall enough to take the QR-compression branch
    for shape in [(6, 6), (4, 9), (50, 7), (201, 3)]:
        _check_svd(rng.standard_normal(shape))


def test_svd_complex_input():
    rng = np.random.default_rng(19)
    M = rng.standard_normal((8, 5)) + 1j * rng.standard_normal((8, 5))
    _check_svd(M)


def test_svd_deterministic_across_calls():
    rng = np.random.default_rng(23)
    for shape in [(7, 7), (40, 4)]:
        M = rng.standard_normal(shape)
        a, b = svd(M), svd(M)
        assert np.array_equal(a.Z, b.Z)
        assert np.array_equal(a.S, b.S)
        assert np.array_equal(a.Y, b.Y)


def test_svd_sign_convention_pins_left_vectors():
    # the first sizable entry of every left vector is made real positive,
    # so negating the input negates Y, not the convention on Z
    rng = np.random.default_rng(29)
    M = rng.standard_normal((6, 4))
    a, b = svd(M), svd(-M)
    assert np.allclose(a.Z, b.Z, rtol=0, atol=1e-13)
    assert np.allclose(a.Y, -b.Y, rtol=0, atol=1e-13)


def test_svd_rejects_nonfinite():
    with pytest.raises(ValueError):
        svd(np.array([[1.0, np.inf]]))
