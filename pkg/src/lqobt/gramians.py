"""System Gramians, Hankel singular values and intrusive balanced truncation.

The observability Gramian of a quadratic-output system splits into a linear
part (driven by ``C'C``) and a quadratic part (driven by ``M_q P M_q``, one
term per channel); balancing uses their sum. All solvers here require access
to the state-space matrices; the data-driven counterpart lives in
:mod:`lqobt.databt`.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import UnstableSystemError
from .model import LqoSystem, ReducedLqoSystem
from .numcore import psd_sqrt_factor, solve_lyapunov, svd

__all__ = [
    "Gramians",
    "compute_gramians",
    "hankel_singular_values",
    "intrusive_bt",
    "h2_norm",
    "h2_error",
]

RANK_TOL = 1e-13
TIE_TOL = 1e-12


@dataclass
class Gramians:
    """Controllability and (split) observability Gramians with factors.

    ``P`` solves ``A P + P A' + B B' = 0``. The observability Gramian is
    ``Q = Q1 + Q2`` where ``Q1`` solves ``A' Q1 + Q1 A + C'C = 0`` and ``Q2``
    solves ``A' Q2 + Q2 A + sum_q M_q P M_q = 0``. ``U``, ``L1``, ``L2`` are
    square-root factors of ``P``, ``Q1``, ``Q2``; ``L = [L1, L2]`` so that
    ``L L' = Q``.
    """

    P: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    L: np.ndarray


def compute_gramians(sys):
    """Solve the three Lyapunov equations of `sys` and factor the results.

    Raises :class:`~lqobt.errors.UnstableSystemError` for systems that are
    not asymptotically stable (the Gramians do not exist then).
    """
    if not sys.is_stable:
        raise UnstableSystemError(
            f"spectral abscissa {sys.spectral_abscissa():.3e} >= 0; "
            "Gramians are undefined"
        )
    A = sys.A
    P = solve_lyapunov(A.T, sys.B @ sys.B.T)
    Q1 = solve_lyapunov(A, sys.C.T @ sys.C)
    W2 = np.zeros_like(A)
    for M in sys.Ms:
        W2 += M @ P @ M
    Q2 = solve_lyapunov(A, W2)
    Q = Q1 + Q2
    U = psd_sqrt_factor(P)
    L1 = psd_sqrt_factor(Q1)
    L2 = psd_sqrt_factor(Q2)
    L = np.hstack([L1, L2])
    return Gramians(P=P, Q1=Q1, Q2=Q2, Q=Q, U=U, L1=L1, L2=L2, L=L)


def hankel_singular_values(gramians):
    """Singular values of ``L' U``: the Hankel singular values of the
    quadratic-output system, nonincreasing."""
    return svd(gramians.L.T @ gramians.U).S


def intrusive_bt(sys, r, gramians=None):
    """Balanced truncation using explicit Gramian factors.

    The projection bases come from the singular value decomposition
    ``L'U = Z S Y'`` truncated at order `r`:
    ``W = L Z_1 S_1^{-1/2}`` and ``V = U Y_1 S_1^{-1/2}``, which satisfy
    ``W'V = I``. The reduced system is
    ``(W'AV, W'B, CV, {V'M_qV})``.

    Parameters
    ----------
    sys
        Stable :class:`~lqobt.model.LqoSystem`.
    r
        Reduced order, at most the numerical rank of ``L'U``.
    gramians
        Optional precomputed :class:`Gramians`.

    Returns
    -------
    :class:`~lqobt.model.ReducedLqoSystem` with provenance ``"intrusive-bt"``.
    """
    if gramians is None:
        gramians = compute_gramians(sys)
    res = svd(gramians.L.T @ gramians.U)
    S = res.S
    if S.size == 0 or S[0] == 0.0:
        raise ValueError("the Hankel spectrum is identically zero")
    rank = int(np.count_nonzero(S > RANK_TOL * S[0]))
    if not 1 <= r <= rank:
        raise ValueError(f"order {r} outside [1, {rank}] (numerical rank)")
    if r < S.size and S[r - 1] - S[r] <= TIE_TOL * S[0]:
        warnings.warn(
            f"truncation at r={r} splits a near-tied singular value pair; "
            "the reduced model is not unique",
            stacklevel=2,
        )
    scale = 1.0 / np.sqrt(S[:r])
    W = gramians.L @ (res.Z[:, :r] * scale)
    V = gramians.U @ (res.Y[:, :r] * scale)
    return ReducedLqoSystem(
        W.T @ sys.A @ V,
        W.T @ sys.B,
        sys.C @ V,
        [V.T @ M @ V for M in sys.Ms],
        provenance="intrusive-bt",
    )


def h2_norm(sys, gramians=None):
    """H2-type norm ``sqrt(trace(B' Q B))`` with ``Q`` the full
    observability Gramian.

    Equals the L2 norm of the kernel family: the squared norm is the
    integral of ``||h1||_F^2`` plus the double integral of the squared
    quadratic kernels summed over channels.
    """
    if gramians is None:
        gramians = compute_gramians(sys)
    val = np.trace(sys.B.T @ gramians.Q @ sys.B)
    return float(np.sqrt(max(val, 0.0)))


def h2_error(sys, rom):
    """H2-type norm of the difference system between `sys` and `rom`.

    Builds the parallel-coupled error system (block-diagonal dynamics,
    stacked inputs, differenced outputs, ``diag(M_q, -M_q_r)`` quadratic
    terms) and returns its :func:`h2_norm`. Raises
    :class:`~lqobt.errors.UnstableSystemError` if `rom` is unstable, which
    data-driven reduction can produce.
    """
    if (sys.m, sys.p) != (rom.m, rom.p):
        raise ValueError(
            f"input/output dimensions differ: ({sys.m}, {sys.p}) vs "
            f"({rom.m}, {rom.p})"
        )
    if not rom.is_stable:
        raise UnstableSystemError(
            "reduced model is unstable; the H2 error is undefined "
            f"(abscissa {rom.spectral_abscissa():.3e})"
        )
    n, r = sys.n, rom.n
    A_err = np.zeros((n + r, n + r))
    A_err[:n, :n] = sys.A
    A_err[n:, n:] = rom.A
    B_err = np.vstack([sys.B, rom.B])
    C_err = np.hstack([sys.C, -rom.C])
    Ms_err = []
    for M, Mr in zip(sys.Ms, rom.Ms):
        Mq = np.zeros((n + r, n + r))
        Mq[:n, :n] = M
        Mq[n:, n:] = -Mr
        Ms_err.append(Mq)
    err_sys = LqoSystem(A_err, B_err, C_err, Ms_err)
    return h2_norm(err_sys)
