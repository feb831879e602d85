"""Data-driven balanced truncation from kernel or transfer-function samples.

This module never touches state-space matrices. It consumes a *sampler*, an
object exposing kernel evaluations (time domain) or transfer-function
evaluations (frequency domain), and assembles weighted sample matrices that
coincide exactly with the products of implicit square-root quadrature factors
of the system Gramians:

========  =====================  ===========================================
matrix    factor product         sample content
========  =====================  ===========================================
``H``     ``L' U``               kernel values
``M``     ``L' A U``             kernel derivative values
``h``     ``L' B``               kernel values at single nodes
``g``     ``C U``                kernel values at single nodes
``K_q``   ``U' M_q U``           quadratic kernel values on the node grid
========  =====================  ===========================================

Reduction then runs entirely on these matrices: truncate the SVD of ``H`` and
project, which reproduces intrusive balanced truncation of the quadrature
Gramians without ever forming the factors.

Row-block convention for the quadratic part: within each output channel the
row block of the pair ``(k, j)`` sits at block index ``k * N_q + j`` (the
controllability-side node is the outer index), and channels are stacked
outermost. Any fixed row permutation yields an equivalent reduced model.
"""

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FrequencyCollisionError
from .model import ReducedLqoSystem
from .numcore import svd
from .quadrature import QuadratureRule

__all__ = [
    "KernelDataset",
    "DataMatrices",
    "collect_time_data",
    "collect_freq_data",
    "build_htilde",
    "build_mtilde",
    "build_htilde_gtilde_ktilde",
    "build_freq_matrices",
    "build_data_matrices",
    "lqo_qbt",
    "lqo_qbt_auto",
    "lqo_qbt_streamed",
    "reduce_from_matrices",
    "StreamedQbt",
    "save_dataset",
    "load_dataset",
]

RANK_TOL = 1e-13
TIE_TOL = 1e-12
GRAM_RANK_TOL = 1e-8


# ---------------------------------------------------------------------------
# dataset containers
# ---------------------------------------------------------------------------


@dataclass
class KernelDataset:
    """Raw weighted-sample ingredients of the data matrices.

    ``p_nodes``/``q_nodes`` are the effective sampling nodes on the
    controllability ("P") and observability ("Q") side together with their
    square-root weights. In the time domain they equal the generating rule's
    arrays. In the frequency domain with conjugate closure they are the
    signed, interleaved node lists ``(+w_1, -w_1, +w_2, ...)`` with weights
    scaled by ``1/(2 pi)``.

    Time-domain sample arrays (``N_p = len(p_nodes)``, ``N_q = len(q_nodes)``):

    ==============  =======================  ================================
    field           shape                    entry
    ==============  =======================  ================================
    ``h1_sum``      (N_q, N_p, p, m)         ``h1(tau_j + t_i)``
    ``dh1_sum``     (N_q, N_p, p, m)         ``dh1(tau_j + t_i)``
    ``h1_in``       (N_q, p, m)              ``h1(tau_j)``
    ``h1_out``      (N_p, p, m)              ``h1(t_i)``
    ``h2_sum``      (p, N_p, N_q, N_p, m, m) ``h2_q(t_k, tau_j + t_i)``
    ``dh2_sum``     (p, N_p, N_q, N_p, m, m) ``dh2_q(t_k, tau_j + t_i)``
    ``h2_in``       (p, N_p, N_q, m, m)      ``h2_q(t_k, tau_j)``
    ``h2_quad``     (p, N_p, N_p, m, m)      ``h2_q(t_i, t_k)``
    ==============  =======================  ================================

    Frequency-domain sample arrays (nodes enter as ``i * node``):

    ==============  =======================  ================================
    ``tf1_in``      (N_q, p, m)              ``H1(i s_k)``
    ``tf1_out``     (N_p, p, m)              ``H1(i th_l)``
    ``tf2_cross``   (p, N_p, N_q, m, m)      ``H2_q(-i th_k, i s_j)``
    ``tf2_quad``    (p, N_p, N_p, m, m)      ``H2_q(-i th_l, i th_k)``
    ==============  =======================  ================================
    """

    domain: str
    m: int
    p: int
    p_nodes: np.ndarray
    p_sqrt_weights: np.ndarray
    q_nodes: np.ndarray
    q_sqrt_weights: np.ndarray
    rule_p: QuadratureRule
    rule_q: QuadratureRule
    conjugate_closure: bool = False
    h1_sum: np.ndarray = None
    dh1_sum: np.ndarray = None
    h1_in: np.ndarray = None
    h1_out: np.ndarray = None
    h2_sum: np.ndarray = None
    dh2_sum: np.ndarray = None
    h2_in: np.ndarray = None
    h2_quad: np.ndarray = None
    tf1_in: np.ndarray = None
    tf1_out: np.ndarray = None
    tf2_cross: np.ndarray = None
    tf2_quad: np.ndarray = None

    @property
    def Np(self):
        return self.p_nodes.size

    @property
    def Nq(self):
        return self.q_nodes.size

    def __post_init__(self):
        if self.domain not in ("time", "freq"):
            raise ValueError(f"unknown domain {self.domain!r}")
        Np, Nq, m, p = self.Np, self.Nq, self.m, self.p
        if self.domain == "time":
            expected = {
                "h1_sum": (Nq, Np, p, m),
                "dh1_sum": (Nq, Np, p, m),
                "h1_in": (Nq, p, m),
                "h1_out": (Np, p, m),
                "h2_sum": (p, Np, Nq, Np, m, m),
                "dh2_sum": (p, Np, Nq, Np, m, m),
                "h2_in": (p, Np, Nq, m, m),
                "h2_quad": (p, Np, Np, m, m),
            }
        else:
            expected = {
                "tf1_in": (Nq, p, m),
                "tf1_out": (Np, p, m),
                "tf2_cross": (p, Np, Nq, m, m),
                "tf2_quad": (p, Np, Np, m, m),
            }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr is None:
                raise ValueError(f"{self.domain} dataset is missing {name}")
            if arr.shape != shape:
                raise ValueError(
                    f"{name} has shape {arr.shape}, expected {shape}"
                )


@dataclass
class DataMatrices:
    """The five assembled sample matrices.

    ``H`` and ``M`` share the row space ``(N_q p + p N_p N_q m)`` and the
    column space ``N_p m``; ``h`` stacks against the same rows with ``m``
    columns; ``g`` is ``p x (N_p m)``; ``K`` holds one ``(N_p m) x (N_p m)``
    block per output channel.
    """

    H: np.ndarray
    M: np.ndarray
    h: np.ndarray
    g: np.ndarray
    K: list
    domain: str = "time"

    def __post_init__(self):
        if self.H.shape != self.M.shape:
            raise ValueError("H and M must have identical shapes")
        if self.h.shape[0] != self.H.shape[0]:
            raise ValueError("h must match the rows of H")
        if self.g.shape[1] != self.H.shape[1]:
            raise ValueError("g must match the columns of H")
        for Kq in self.K:
            if Kq.shape != (self.H.shape[1],) * 2:
                raise ValueError("each K block must be square in the columns of H")


# ---------------------------------------------------------------------------
# collection
# ---------------------------------------------------------------------------


def collect_time_data(sampler, rule_p, rule_q, derivatives="exact",
                      fd_step_rel=1e-6):
    """Sample the kernels of `sampler` at all node combinations of two rules.

    The sampler must provide grid evaluations ``h1_grid(a, b)``,
    ``h2_grid(a, b, c)`` (see :class:`~lqobt.model.LqoSystem` for the exact
    conventions) and, with ``derivatives="exact"``, their derivative
    counterparts ``dh1_grid``/``dh2_grid``. With ``derivatives="fd"`` the
    derivative samples are synthesized by central finite differences of
    pointwise ``h1``/``h2`` evaluations with relative step `fd_step_rel`,
    for workflows where only kernel values are available.

    Parameters
    ----------
    sampler
        Kernel oracle; only its evaluation methods are invoked.
    rule_p, rule_q
        Quadrature rules for the controllability and observability side.
    derivatives
        ``"exact"`` or ``"fd"``.
    fd_step_rel
        Relative finite-difference step (times the evaluation point).

    Returns
    -------
    :class:`KernelDataset` with ``domain="time"``.
    """
    t = rule_p.nodes
    tau = rule_q.nodes
    zero = np.zeros(1)

    h1_sum = np.asarray(sampler.h1_grid(tau, t))
    if h1_sum.ndim != 4 or h1_sum.shape[:2] != (tau.size, t.size):
        raise ValueError("sampler returned h1 samples of unexpected shape")
    p, m = h1_sum.shape[2:]
    h1_in = np.asarray(sampler.h1_grid(tau, zero))[:, 0]
    h1_out = np.asarray(sampler.h1_grid(t, zero))[:, 0]
    h2_sum = np.moveaxis(np.asarray(sampler.h2_grid(t, tau, t)), 3, 0)
    h2_in = np.moveaxis(np.asarray(sampler.h2_grid(t, tau, zero))[:, :, 0], 2, 0)
    h2_quad = np.moveaxis(np.asarray(sampler.h2_grid(t, t, zero))[:, :, 0], 2, 0)

    if derivatives == "exact":
        dh1_sum = np.asarray(sampler.dh1_grid(tau, t))
        dh2_sum = np.moveaxis(np.asarray(sampler.dh2_grid(t, tau, t)), 3, 0)
    elif derivatives == "fd":
        zsum = tau[:, None] + t[None, :]
        step = fd_step_rel * zsum
        dh1_sum = (
            np.asarray(sampler.h1(zsum + step)) - np.asarray(sampler.h1(zsum - step))
        ) / (2.0 * step)[..., None, None]
        z1 = t[:, None, None]
        z2 = zsum[None, :, :]
        step2 = fd_step_rel * z2
        dh2 = (
            np.asarray(sampler.h2(z1, z2 + step2))
            - np.asarray(sampler.h2(z1, z2 - step2))
        ) / (2.0 * step2)[..., None, None, None]
        dh2_sum = np.moveaxis(dh2, 3, 0)
    else:
        raise ValueError(f"unknown derivative mode {derivatives!r}")

    return KernelDataset(
        domain="time", m=m, p=p,
        p_nodes=t.copy(), p_sqrt_weights=rule_p.sqrt_weights.copy(),
        q_nodes=tau.copy(), q_sqrt_weights=rule_q.sqrt_weights.copy(),
        rule_p=rule_p, rule_q=rule_q,
        h1_sum=h1_sum, dh1_sum=dh1_sum, h1_in=h1_in, h1_out=h1_out,
        h2_sum=h2_sum, dh2_sum=dh2_sum, h2_in=h2_in, h2_quad=h2_quad,
    )


def _closed_nodes(rule):
    """Interleaved signed nodes ``(+w1, -w1, +w2, ...)`` with square-root
    weights scaled for an integral over the whole real frequency axis
    against the measure ``dw / (2 pi)``."""
    nodes = np.empty(2 * len(rule))
    nodes[0::2] = rule.nodes
    nodes[1::2] = -rule.nodes
    sw = np.repeat(rule.sqrt_weights / np.sqrt(2.0 * np.pi), 2)
    return nodes, sw


def collect_freq_data(sampler, rule_p, rule_q, conjugate_closure=True):
    """Sample transfer functions of `sampler` on the imaginary axis.

    The sampler must provide ``tf1(s)`` (vectorized over an array of complex
    points) and ``tf2_grid(s1s, s2s)`` returning all output channels; see
    :class:`~lqobt.model.LqoSystem`.

    With `conjugate_closure` (the default) each rule's nodes are mirrored to
    negative frequencies and the weights are scaled by ``1/(2 pi)``, so the
    implicit quadrature approximates the Gramians' spectral integrals over
    the whole axis and the sample matrices can be transformed to real ones.
    Without closure the raw positive-frequency rules are used; the matrices
    stay complex and are useful for analysis only.

    Node sets of the two sides must not intersect (divided differences);
    collisions raise :class:`~lqobt.errors.FrequencyCollisionError`.

    Returns
    -------
    :class:`KernelDataset` with ``domain="freq"``.
    """
    scale = max(rule_p.nodes[-1], rule_q.nodes[-1])
    dist = np.abs(rule_p.nodes[:, None] - rule_q.nodes[None, :]).min()
    if dist <= 1e-12 * scale:
        raise FrequencyCollisionError(
            "controllability- and observability-side frequency nodes collide"
        )
    if conjugate_closure:
        th, rho = _closed_nodes(rule_p)
        s, phi = _closed_nodes(rule_q)
    else:
        th, rho = rule_p.nodes.copy(), rule_p.sqrt_weights.copy()
        s, phi = rule_q.nodes.copy(), rule_q.sqrt_weights.copy()

    tf1_in = np.asarray(sampler.tf1(1j * s))
    if tf1_in.ndim != 3 or tf1_in.shape[0] != s.size:
        raise ValueError("sampler returned transfer samples of unexpected shape")
    p, m = tf1_in.shape[1:]
    tf1_out = np.asarray(sampler.tf1(1j * th))
    tf2_cross = np.moveaxis(np.asarray(sampler.tf2_grid(-1j * th, 1j * s)), 2, 0)
    tf2_quad = np.moveaxis(np.asarray(sampler.tf2_grid(-1j * th, 1j * th)), 2, 0)

    return KernelDataset(
        domain="freq", m=m, p=p,
        p_nodes=th, p_sqrt_weights=rho,
        q_nodes=s, q_sqrt_weights=phi,
        rule_p=rule_p, rule_q=rule_q,
        conjugate_closure=conjugate_closure,
        tf1_in=tf1_in, tf1_out=tf1_out,
        tf2_cross=tf2_cross, tf2_quad=tf2_quad,
    )


# ---------------------------------------------------------------------------
# time-domain assembly
# ---------------------------------------------------------------------------


def _require_domain(ds, domain):
    if ds.domain != domain:
        raise ValueError(
            f"expected a {domain}-domain dataset, got {ds.domain!r}"
        )


def _linear_block(samples, phi, rho):
    """(N_q, N_p, p, m) samples -> (N_q p, N_p m) weighted matrix."""
    Nq, Np, p, m = samples.shape
    w = phi[:, None, None, None] * rho[None, :, None, None]
    return (w * samples).transpose(0, 2, 1, 3).reshape(Nq * p, Np * m)


def _quadratic_block(samples, phi, rho):
    """(p, N_p, N_q, N_p, m, m) samples -> (p N_p N_q m, N_p m) matrix."""
    p, Np, Nq = samples.shape[:3]
    m = samples.shape[-1]
    w = (
        rho[None, :, None, None, None, None]
        * phi[None, None, :, None, None, None]
        * rho[None, None, None, :, None, None]
    )
    return (w * samples).transpose(0, 1, 2, 4, 3, 5).reshape(
        p * Np * Nq * m, Np * m
    )


def build_htilde(ds):
    """Stacked kernel sample matrix ``H`` (equals ``L' U``), time domain."""
    _require_domain(ds, "time")
    rho, phi = ds.p_sqrt_weights, ds.q_sqrt_weights
    return np.vstack([
        _linear_block(ds.h1_sum, phi, rho),
        _quadratic_block(ds.h2_sum, phi, rho),
    ])


def build_mtilde(ds):
    """Stacked derivative sample matrix ``M`` (equals ``L' A U``)."""
    _require_domain(ds, "time")
    rho, phi = ds.p_sqrt_weights, ds.q_sqrt_weights
    return np.vstack([
        _linear_block(ds.dh1_sum, phi, rho),
        _quadratic_block(ds.dh2_sum, phi, rho),
    ])


def build_htilde_gtilde_ktilde(ds):
    """Input block ``h`` (= ``L' B``), output block ``g`` (= ``C U``) and
    quadratic blocks ``K_q`` (= ``U' M_q U``), time domain."""
    _require_domain(ds, "time")
    rho, phi = ds.p_sqrt_weights, ds.q_sqrt_weights
    Np, Nq, m, p = ds.Np, ds.Nq, ds.m, ds.p

    h_lin = (phi[:, None, None] * ds.h1_in).reshape(Nq * p, m)
    w_in = phi[None, None, :, None, None] * rho[None, :, None, None, None]
    h_quad = (w_in * ds.h2_in).reshape(p * Np * Nq * m, m)
    h = np.vstack([h_lin, h_quad])

    g = (rho[:, None, None] * ds.h1_out).transpose(1, 0, 2).reshape(p, Np * m)

    w_k = rho[None, :, None, None, None] * rho[None, None, :, None, None]
    K = [
        (w_k * ds.h2_quad)[q].transpose(0, 2, 1, 3).reshape(Np * m, Np * m)
        for q in range(p)
    ]
    return h, g, K


# ---------------------------------------------------------------------------
# frequency-domain assembly
# ---------------------------------------------------------------------------


def build_freq_matrices(ds, realify=None):
    """Assemble all five matrices from transfer-function samples.

    Entries are divided differences of transfer-function values: the linear
    part is a Loewner matrix over the two node sets, its derivative companion
    the shifted Loewner matrix, and the quadratic rows repeat the pattern in
    the second argument of the two-variable transfer function with the first
    argument held at a (negated) controllability-side node.

    With `realify` (defaults to the dataset's conjugate-closure flag) the
    complex matrices are transformed by a fixed unitary pairing of conjugate
    nodes into real ones; this requires the dataset to be conjugate closed.

    Returns
    -------
    :class:`DataMatrices` with ``domain="freq"``.
    """
    _require_domain(ds, "freq")
    if realify is None:
        realify = ds.conjugate_closure
    th, rho = ds.p_nodes, ds.p_sqrt_weights
    s, phi = ds.q_nodes, ds.q_sqrt_weights
    Np, Nq, m, p = ds.Np, ds.Nq, ds.m, ds.p

    denom1 = 1j * s[:, None] - 1j * th[None, :]            # (Nq, Np)
    w1 = phi[:, None] * rho[None, :]
    num1 = ds.tf1_in[:, None] - ds.tf1_out[None, :]        # (Nq, Np, p, m)
    H1 = (-w1 / denom1)[..., None, None] * num1
    snum1 = (
        (1j * s)[:, None, None, None] * ds.tf1_in[:, None]
        - (1j * th)[None, :, None, None] * ds.tf1_out[None, :]
    )
    M1 = (-w1 / denom1)[..., None, None] * snum1
    H1 = H1.transpose(0, 2, 1, 3).reshape(Nq * p, Np * m)
    M1 = M1.transpose(0, 2, 1, 3).reshape(Nq * p, Np * m)

    # quadratic rows: pair (k, j) against column l; scale factors are
    # separable, so apply them in place one axis at a time
    denom2 = (1j * s)[None, None, :, None] - (1j * th)[None, None, None, :]
    cross = ds.tf2_cross[:, :, :, None]                    # (p, Np, Nq, 1, m, m)
    quad = ds.tf2_quad[:, :, None, :]                      # (p, Np, 1, Np, m, m)

    def scale_and_stack(num):
        num /= denom2[..., None, None]
        num *= -rho[None, :, None, None, None, None]
        num *= phi[None, None, :, None, None, None]
        num *= rho[None, None, None, :, None, None]
        return num.transpose(0, 1, 2, 4, 3, 5).reshape(p * Np * Nq * m, Np * m)

    H2 = scale_and_stack(cross - quad)
    M2 = scale_and_stack(
        (1j * s)[None, None, :, None, None, None] * cross
        - (1j * th)[None, None, None, :, None, None] * quad
    )

    H = np.vstack([H1, H2])
    del H2
    M = np.vstack([M1, M2])
    del M2

    h_lin = (phi[:, None, None] * ds.tf1_in).reshape(Nq * p, m)
    w_in = phi[None, None, :, None, None] * rho[None, :, None, None, None]
    h_quad = (w_in * ds.tf2_cross).reshape(p * Np * Nq * m, m)
    h = np.vstack([h_lin, h_quad])

    g = (rho[:, None, None] * ds.tf1_out).transpose(1, 0, 2).reshape(p, Np * m)

    w_k = rho[None, :, None, None, None] * rho[None, None, :, None, None]
    K = [
        (w_k * ds.tf2_quad)[q].transpose(0, 2, 1, 3).reshape(Np * m, Np * m)
        for q in range(p)
    ]

    dm = DataMatrices(H=H, M=M, h=h, g=g, K=K, domain="freq")
    if realify:
        dm = _realify(dm, ds)
    return dm


_SQRT2 = np.sqrt(2.0)


def _pair_rows(X, axis):
    """Left-multiply a length-2 conjugate-pair axis by the 2x2 unitary
    ``[[1, 1], [-i, i]] / sqrt(2)`` (sum and scaled difference)."""
    X = np.moveaxis(X, axis, 0)
    out = np.empty_like(X)
    out[0] = (X[0] + X[1]) / _SQRT2
    out[1] = (X[1] - X[0]) * (1j / _SQRT2)
    return np.moveaxis(out, 0, axis)


def _pair_cols(X, axis):
    """Right-multiply a length-2 conjugate-pair axis by the 2x2 unitary
    ``[[1, i], [1, -i]] / sqrt(2)``."""
    X = np.moveaxis(X, axis, 0)
    out = np.empty_like(X)
    out[0] = (X[0] + X[1]) / _SQRT2
    out[1] = (X[0] - X[1]) * (1j / _SQRT2)
    return np.moveaxis(out, 0, axis)


def _realify(dm, ds):
    """Transform all five matrices by the fixed conjugate-pair unitary and
    drop the (verified small) residual imaginary parts.

    The unitary is a Kronecker product of identical 2x2 blocks acting on
    adjacent ``(+w, -w)`` node pairs, so it is applied axis by axis on
    reshaped views instead of ever being formed as a matrix."""
    if not ds.conjugate_closure:
        raise ValueError("realification requires a conjugate-closed dataset")
    Np, Nq, m, p = ds.Np, ds.Nq, ds.m, ds.p
    nc = Np * m

    def rows(X):
        c = X.shape[1]
        top = _pair_rows(X[: Nq * p].reshape(Nq // 2, 2, p, c), 1)
        bot = X[Nq * p:].reshape(p, Np // 2, 2, Nq // 2, 2, m, c)
        bot = _pair_rows(_pair_rows(bot, 2), 4)
        return np.vstack([top.reshape(Nq * p, c), bot.reshape(-1, c)])

    def cols(X):
        lead = X.shape[:-1]
        Y = _pair_cols(X.reshape(lead + (Np // 2, 2, m)), len(lead) + 1)
        return Y.reshape(lead + (nc,))

    def quad_rows(X):
        return _pair_rows(X.reshape(Np // 2, 2, m, -1), 1).reshape(nc, -1)

    H = cols(rows(dm.H))
    M = cols(rows(dm.M))
    h = rows(dm.h)
    g = cols(dm.g)
    K = [cols(quad_rows(Kq)) for Kq in dm.K]

    def as_real(X):
        scale = np.abs(X).max() if X.size else 0.0
        if scale and np.abs(X.imag).max() > 1e-8 * scale:
            raise ValueError(
                "realification left significant imaginary parts; "
                "the dataset is not conjugate symmetric"
            )
        return np.ascontiguousarray(X.real)

    return DataMatrices(
        H=as_real(H), M=as_real(M), h=as_real(h), g=as_real(g),
        K=[as_real(Kq) for Kq in K], domain="freq",
    )


def build_data_matrices(ds, realify=None):
    """Uniform entry point: assemble :class:`DataMatrices` from any dataset.

    Dispatches on the dataset's domain; single-input single-output data is
    just the one-by-one block special case of the general layout.
    """
    if ds.domain == "time":
        h, g, K = build_htilde_gtilde_ktilde(ds)
        return DataMatrices(
            H=build_htilde(ds), M=build_mtilde(ds), h=h, g=g, K=K,
            domain="time",
        )
    return build_freq_matrices(ds, realify=realify)


# ---------------------------------------------------------------------------
# reduction
# ---------------------------------------------------------------------------


def _truncation_guard(S, r, max_r):
    if S.size == 0 or S[0] == 0.0:
        raise ValueError("the sample matrix H is identically zero")
    rank = int(np.count_nonzero(S > RANK_TOL * S[0]))
    limit = min(rank, max_r)
    if not 1 <= r <= limit:
        raise ValueError(f"order {r} outside [1, {limit}] (numerical rank)")
    if r < S.size and S[r - 1] - S[r] <= TIE_TOL * S[0]:
        warnings.warn(
            f"truncation at r={r} splits a near-tied singular value pair; "
            "the reduced model is not unique",
            stacklevel=3,
        )


def reduce_from_matrices(dm, r, provenance="time-qbt", factors=None):
    """Truncate the SVD of ``dm.H`` at order `r` and project the remaining
    matrices into the balanced coordinates.

    The reduced model is
    ``A_r = S^{-1/2} Z' M Y S^{-1/2}``, ``B_r = S^{-1/2} Z' h``,
    ``C_r = g Y S^{-1/2}``, ``M_rq = S^{-1/2} Y' K_q Y S^{-1/2}``
    with ``(Z, S, Y)`` the rank-`r` truncated SVD of ``H``. A precomputed
    decomposition of ``dm.H`` can be passed as `factors` so that sweeps
    over several orders decompose only once.
    """
    if np.iscomplexobj(dm.H):
        raise ValueError(
            "complex data matrices cannot produce a real reduced model; "
            "collect with conjugate closure and realify"
        )
    res = svd(dm.H) if factors is None else factors
    _truncation_guard(res.S, r, dm.H.shape[1])
    scale = 1.0 / np.sqrt(res.S[:r])
    Z1 = res.Z[:, :r] * scale
    Y1 = res.Y[:, :r] * scale
    A_r = Z1.T @ dm.M @ Y1
    B_r = Z1.T @ dm.h
    C_r = dm.g @ Y1
    Ms_r = [Y1.T @ Kq @ Y1 for Kq in dm.K]
    return ReducedLqoSystem(A_r, B_r, C_r, Ms_r, provenance=provenance)


def lqo_qbt(ds, r, realify=None):
    """Quadrature-based balanced truncation from a kernel dataset.

    Assembles the five data matrices and reduces to order `r`; see
    :func:`reduce_from_matrices`. Time-domain datasets give provenance
    ``"time-qbt"``, frequency-domain ones ``"freq-qbt"`` (these must be
    conjugate closed so the model can be made real).

    Parameters
    ----------
    ds
        :class:`KernelDataset`.
    r
        Reduced order, within the numerical rank of the sample matrix.

    Returns
    -------
    :class:`~lqobt.model.ReducedLqoSystem`
    """
    dm = build_data_matrices(ds, realify=realify)
    tag = "time-qbt" if ds.domain == "time" else "freq-qbt"
    return reduce_from_matrices(dm, r, provenance=tag)


def lqo_qbt_auto(sampler, rule_p, rule_q, orders, max_bytes=4e8):
    """Time-domain QBT choosing between the direct and streaming paths.

    Materializes the sample matrices and decomposes them exactly when they
    fit within `max_bytes`; otherwise switches to the Gram-accumulation
    path of :func:`lqo_qbt_streamed`. The sampler must expose ``m`` and
    ``p`` attributes so the size can be estimated up front.

    Returns
    -------
    tuple ``(singular_values, roms)`` with one reduced model per entry of
    `orders`.
    """
    m, p = sampler.m, sampler.p
    n_p, n_q = rule_p.nodes.size, rule_q.nodes.size
    rows = n_q * p + p * n_p * n_q * m
    if 8.0 * rows * n_p * m > max_bytes:
        out = lqo_qbt_streamed(sampler, rule_p, rule_q, orders)
        return out.singular_values, out.roms
    ds = collect_time_data(sampler, rule_p, rule_q)
    dm = build_data_matrices(ds)
    res = svd(dm.H)
    roms = [reduce_from_matrices(dm, r, factors=res) for r in orders]
    return res.S, roms


# ---------------------------------------------------------------------------
# streaming reduction for large node counts
# ---------------------------------------------------------------------------


@dataclass
class StreamedQbt:
    """Result of :func:`lqo_qbt_streamed`: the singular values of the
    (never materialized) sample matrix and one reduced model per requested
    order."""

    singular_values: np.ndarray
    orders: list
    roms: list


def lqo_qbt_streamed(sampler, rule_p, rule_q, orders, chunk=48):
    """Time-domain QBT that never materializes the stacked sample matrix.

    Mathematically identical to :func:`lqo_qbt` (the singular value
    decomposition of ``H`` is obtained from the eigendecomposition of the
    Gram matrix ``H'H``, accumulated over row blocks), at the cost of
    squaring the condition number: singular values below about ``1e-8``
    of the largest cannot be resolved, and requested orders must stay above
    that level. Intended for node counts in the hundreds, where the direct
    path would need tens of gigabytes.

    Parameters
    ----------
    sampler
        Kernel oracle with grid evaluation methods (time domain).
    rule_p, rule_q
        Quadrature rules.
    orders
        Iterable of reduction orders; models are produced for all of them
        from one pass over the data.
    chunk
        Number of controllability-side nodes per accumulated row block.

    Returns
    -------
    :class:`StreamedQbt`
    """
    t, rho = rule_p.nodes, rule_p.sqrt_weights
    tau, phi = rule_q.nodes, rule_q.sqrt_weights
    Np, Nq = t.size, tau.size
    zero = np.zeros(1)

    h1_sum = np.asarray(sampler.h1_grid(tau, t))
    p, m = h1_sum.shape[2:]
    dh1_sum = np.asarray(sampler.dh1_grid(tau, t))
    H1 = _linear_block(h1_sum, phi, rho)
    M1 = _linear_block(dh1_sum, phi, rho)

    h1_in = np.asarray(sampler.h1_grid(tau, zero))[:, 0]
    h1_out = np.asarray(sampler.h1_grid(t, zero))[:, 0]
    h2_in = np.moveaxis(np.asarray(sampler.h2_grid(t, tau, zero))[:, :, 0], 2, 0)
    h2_quad = np.moveaxis(np.asarray(sampler.h2_grid(t, t, zero))[:, :, 0], 2, 0)

    h_lin = (phi[:, None, None] * h1_in).reshape(Nq * p, m)
    w_in = phi[None, None, :, None, None] * rho[None, :, None, None, None]
    h2_rows = (w_in * h2_in)                                # (p, Np, Nq, m, m)
    g = (rho[:, None, None] * h1_out).transpose(1, 0, 2).reshape(p, Np * m)
    w_k = rho[None, :, None, None, None] * rho[None, None, :, None, None]
    K = [
        (w_k * h2_quad)[q].transpose(0, 2, 1, 3).reshape(Np * m, Np * m)
        for q in range(p)
    ]

    nc = Np * m
    G_H = H1.T @ H1
    G_M = H1.T @ M1
    w_h = H1.T @ h_lin
    for lo in range(0, Np, chunk):
        hi = min(lo + chunk, Np)
        ksl = slice(lo, hi)
        vals = np.moveaxis(np.asarray(sampler.h2_grid(t[ksl], tau, t)), 3, 0)
        dvals = np.moveaxis(np.asarray(sampler.dh2_grid(t[ksl], tau, t)), 3, 0)
        for arr in (vals, dvals):
            # fresh arrays from the sampler, weighted in place
            arr *= rho[None, ksl, None, None, None, None]
            arr *= phi[None, None, :, None, None, None]
            arr *= rho[None, None, None, :, None, None]
        rows = (hi - lo) * Nq * m
        Hblk = vals.transpose(0, 1, 2, 4, 3, 5).reshape(p * rows, nc)
        Mblk = dvals.transpose(0, 1, 2, 4, 3, 5).reshape(p * rows, nc)
        hblk = h2_rows[:, ksl].reshape(p * rows, m)
        G_H += Hblk.T @ Hblk
        G_M += Hblk.T @ Mblk
        w_h += Hblk.T @ hblk

    lam, Y = np.linalg.eigh(0.5 * (G_H + G_H.T))
    lam, Y = lam[::-1], np.ascontiguousarray(Y[:, ::-1])
    S = np.sqrt(np.clip(lam, 0.0, None))
    for j in range(Y.shape[1]):
        big = np.nonzero(np.abs(Y[:, j]) > 1e-12)[0]
        if big.size and Y[big[0], j] < 0.0:
            Y[:, j] = -Y[:, j]

    if S.size == 0 or S[0] == 0.0:
        raise ValueError("the sample matrix H is identically zero")
    rank = int(np.count_nonzero(S > GRAM_RANK_TOL * S[0]))
    orders = list(orders)
    roms = []
    for r in orders:
        if not 1 <= r <= rank:
            raise ValueError(
                f"order {r} outside [1, {rank}] (resolvable rank of the "
                "Gram accumulation)"
            )
        Y1 = Y[:, :r]
        s1 = S[:r]
        A_r = ((Y1 / s1 ** 1.5).T @ G_M @ Y1) / np.sqrt(s1)
        B_r = (Y1 / s1 ** 1.5).T @ w_h
        C_r = (g @ Y1) / np.sqrt(s1)
        Ms_r = [((Y1 / np.sqrt(s1)).T @ Kq @ (Y1 / np.sqrt(s1))) for Kq in K]
        roms.append(
            ReducedLqoSystem(A_r, B_r, C_r, Ms_r, provenance="time-qbt")
        )
    return StreamedQbt(singular_values=S, orders=orders, roms=roms)


# ---------------------------------------------------------------------------
# dataset persistence
# ---------------------------------------------------------------------------

_TIME_FIELDS = ("h1_sum", "dh1_sum", "h1_in", "h1_out",
                "h2_sum", "dh2_sum", "h2_in", "h2_quad")
_FREQ_FIELDS = ("tf1_in", "tf1_out", "tf2_cross", "tf2_quad")


def save_dataset(ds, directory):
    """Write a dataset as one CSV per sample family plus a JSON manifest.

    Every CSV row holds the integer node indices of one sample block followed
    by its row-major entries, printed with full round-trip precision, so that
    :func:`load_dataset` restores the dataset bit-exactly.
    """
    os.makedirs(directory, exist_ok=True)
    fields = _TIME_FIELDS if ds.domain == "time" else _FREQ_FIELDS
    manifest = {
        "domain": ds.domain,
        "m": ds.m,
        "p": ds.p,
        "N_p": int(ds.Np),
        "N_q": int(ds.Nq),
        "conjugate_closure": bool(ds.conjugate_closure),
        "p_nodes": [repr(v.item()) for v in ds.p_nodes],
        "p_sqrt_weights": [repr(v.item()) for v in ds.p_sqrt_weights],
        "q_nodes": [repr(v.item()) for v in ds.q_nodes],
        "q_sqrt_weights": [repr(v.item()) for v in ds.q_sqrt_weights],
        "rule_p": _rule_echo(ds.rule_p),
        "rule_q": _rule_echo(ds.rule_q),
        "fields": {},
    }
    for name in fields:
        arr = getattr(ds, name)
        manifest["fields"][name] = {
            "file": f"{name}.csv",
            "shape": list(arr.shape),
            "complex": bool(np.iscomplexobj(arr)),
        }
        _write_samples(os.path.join(directory, f"{name}.csv"), arr)
    with open(os.path.join(directory, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1)


def _rule_echo(rule):
    return {
        "kind": rule.kind,
        "nodes": [repr(v.item()) for v in rule.nodes],
        "sqrt_weights": [repr(v.item()) for v in rule.sqrt_weights],
    }


def _write_samples(path, arr):
    # node axes first, block axes (at most the trailing two) last
    n_block = min(2, arr.ndim)
    lead = arr.shape[:-n_block] if arr.ndim > n_block else ()
    block = int(np.prod(arr.shape[len(lead):], dtype=int))
    flat = arr.reshape(lead + (block,)) if lead else arr.reshape(1, block)
    with open(path, "w") as f:
        idx_names = ",".join(f"i{d}" for d in range(len(lead))) if lead else "i0"
        f.write(f"{idx_names},entries...\n")
        for idx in np.ndindex(lead or (1,)):
            row = flat[idx] if lead else flat[0]
            # item() yields plain Python scalars whose repr round-trips
            cells = ",".join(repr(v.item()).replace(" ", "") for v in row)
            f.write(",".join(str(i) for i in idx) + "," + cells + "\n")


def _read_samples(path, shape, is_complex):
    conv = complex if is_complex else float
    values = []
    with open(path) as f:
        next(f)
        for line in f:
            line = line.strip()
            if not line:
                continue
            n_block = min(2, len(shape))
            n_idx = max(len(shape) - n_block, 1)
            parts = line.split(",")
            values.extend(conv(v) for v in parts[n_idx:])
    dtype = complex if is_complex else float
    return np.array(values, dtype=dtype).reshape(shape)


def load_dataset(directory):
    """Read a dataset written by :func:`save_dataset`."""
    with open(os.path.join(directory, "manifest.json")) as f:
        manifest = json.load(f)
    kwargs = {
        "domain": manifest["domain"],
        "m": manifest["m"],
        "p": manifest["p"],
        "conjugate_closure": manifest["conjugate_closure"],
        "p_nodes": np.array([float(v) for v in manifest["p_nodes"]]),
        "p_sqrt_weights": np.array(
            [float(v) for v in manifest["p_sqrt_weights"]]
        ),
        "q_nodes": np.array([float(v) for v in manifest["q_nodes"]]),
        "q_sqrt_weights": np.array(
            [float(v) for v in manifest["q_sqrt_weights"]]
        ),
        "rule_p": _rule_from_echo(manifest["rule_p"]),
        "rule_q": _rule_from_echo(manifest["rule_q"]),
    }
    for name, info in manifest["fields"].items():
        kwargs[name] = _read_samples(
            os.path.join(directory, info["file"]),
            tuple(info["shape"]),
            info["complex"],
        )
    return KernelDataset(**kwargs)


def _rule_from_echo(echo):
    return QuadratureRule(
        np.array([float(v) for v in echo["nodes"]]),
        np.array([float(v) for v in echo["sqrt_weights"]]),
        kind=echo["kind"],
    )
