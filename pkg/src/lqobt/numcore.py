"""Dense linear-algebra kernels used throughout the package.

Thin, contract-checked wrappers around LAPACK-backed routines plus a
hand-rolled Lyapunov solver. Everything operates on plain numpy arrays.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from .errors import IndefiniteMatrixError, LyapunovError

__all__ = ["expm", "solve_lyapunov", "psd_sqrt_factor", "svd", "SvdResult"]


def expm(A, t=1.0):
    """Matrix exponential ``exp(A*t)`` via scaling-and-squaring with Pade
    approximants.

    Parameters
    ----------
    A
        Square matrix with finite entries.
    t
        Real scalar time; may be negative or zero.

    Returns
    -------
    Dense array of the same shape as `A`.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.isfinite(A).all() or not np.isfinite(t):
        raise ValueError("non-finite input to expm")
    if A.shape[0] == 0:
        return np.zeros((0, 0))
    return spla.expm(A * float(t))


def solve_lyapunov(A, W, tol=None, maxiter=100):
    """Solve the observability-side Lyapunov equation ``A' X + X A + W = 0``.

    Uses the matrix sign-function Newton iteration with determinant-based
    scaling. `A` must be Hurwitz (all eigenvalues in the open left half
    plane); otherwise the iteration cannot converge to ``sign(A) = -I`` and
    a :class:`~lqobt.errors.LyapunovError` is raised after `maxiter` steps.

    For the controllability-side equation ``A P + P A' + W = 0`` call
    ``solve_lyapunov(A.T, W)``.

    Parameters
    ----------
    A
        Square Hurwitz matrix.
    W
        Symmetric right-hand side of the same shape as `A`.
    tol
        Relative stopping tolerance on ``||A_k + I||_F``; defaults to
        ``10 * n * eps``.
    maxiter
        Iteration cap.

    Returns
    -------
    X
        Symmetric solution (symmetrized on exit).
    """
    A = np.asarray(A, dtype=float)
    W = np.asarray(W, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if W.shape != A.shape:
        raise ValueError(f"shape mismatch: A is {A.shape}, W is {W.shape}")
    if not (np.isfinite(A).all() and np.isfinite(W).all()):
        raise ValueError("non-finite input to solve_lyapunov")
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    if tol is None:
        tol = 10 * n * np.finfo(float).eps

    A = A.copy()
    X = W.copy()
    sqrt_n = np.sqrt(n)
    for it in range(1, maxiter + 1):
        try:
            lu, piv = spla.lu_factor(A)
        except spla.LinAlgError as exc:
            raise LyapunovError(
                f"sign iteration hit a singular iterate at step {it}"
            ) from exc
        # determinant-based scaling c = |det A_k|^(1/n), computed in logs
        logdet = np.log(np.abs(np.diag(lu))).sum()
        c = np.exp(logdet / n)
        if not np.isfinite(c) or c == 0.0:
            c = 1.0
        Ainv = spla.lu_solve((lu, piv), np.eye(n))
        X = 0.5 * (X / c + c * (Ainv.T @ X @ Ainv))
        A = 0.5 * (A / c + c * Ainv)
        err = spla.norm(A + np.eye(n), "fro") / sqrt_n
        if err <= tol:
            X = 0.5 * X
            return 0.5 * (X + X.T)
    raise LyapunovError(
        f"sign iteration did not converge in {maxiter} steps "
        f"(residual {err:.2e}); is A Hurwitz?"
    )


def psd_sqrt_factor(X, rank_tol=1e-13, dust_tol=1e-12):
    """Square-root factor ``F`` with ``F F' = X`` of a symmetric PSD matrix.

    Computed from the symmetric eigendecomposition. Eigenvalues below
    ``rank_tol * lambda_max`` are truncated, so `F` has ``n x k`` shape with
    ``k`` the numerical rank. Small negative eigenvalues (down to
    ``-dust_tol * ||X||_2``) are tolerated and clipped to zero; anything
    more negative raises :class:`~lqobt.errors.IndefiniteMatrixError`.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("non-finite input to psd_sqrt_factor")
    if not np.allclose(X, X.T, rtol=0.0, atol=1e-12 * max(1.0, abs(X).max())):
        raise ValueError("input matrix is not symmetric")
    n = X.shape[0]
    if n == 0:
        return np.zeros((0, 0))

    lam, V = np.linalg.eigh(0.5 * (X + X.T))
    lam, V = lam[::-1], V[:, ::-1]
    norm2 = abs(lam).max() if n else 0.0
    if norm2 == 0.0:
        return np.zeros((n, 0))
    if lam.min() < -dust_tol * norm2:
        raise IndefiniteMatrixError(
            f"matrix has eigenvalue {lam.min():.3e} below -{dust_tol:.0e} * ||X||"
        )
    lam = np.clip(lam, 0.0, None)
    k = int(np.count_nonzero(lam > rank_tol * lam[0]))
    return V[:, :k] * np.sqrt(lam[:k])


@dataclass
class SvdResult:
    """Singular value decomposition ``M = Z @ diag(S) @ Y.conj().T``.

    `Z` and `Y` have orthonormal columns; `S` is nonincreasing and
    nonnegative. Column signs (phases, in the complex case) are fixed
    deterministically: the first entry of each left singular vector with
    magnitude above 1e-12 is made real and positive.
    """

    Z: np.ndarray
    S: np.ndarray
    Y: np.ndarray


def svd(M):
    """Economy SVD with a deterministic sign convention.

    Parameters
    ----------
    M
        Real or complex matrix (may have zero rows or columns).

    Returns
    -------
    :class:`SvdResult`
    """
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    if M.size and not np.isfinite(M).all():
        raise ValueError("non-finite input to svd")
    if M.shape[0] > 2 * M.shape[1] > 0:
        # tall matrix: factor through a reduced QR so the SVD runs on the
        # small triangle (much faster, equally backward stable)
        Q, R = spla.qr(M, mode="economic")
        Zr, S, Yh = spla.svd(R, full_matrices=False)
        Z = Q @ Zr
    else:
        Z, S, Yh = spla.svd(M, full_matrices=False)
    Y = Yh.conj().T
    for j in range(Z.shape[1]):
        col = Z[:, j]
        big = np.nonzero(np.abs(col) > 1e-12)[0]
        if big.size == 0:
            continue
        lead = col[big[0]]
        phase = lead / abs(lead)
        if phase != 1.0:
            Z[:, j] = col / phase
            Y[:, j] = Y[:, j] * np.conj(phase)
    return SvdResult(Z=Z, S=S, Y=Y)
