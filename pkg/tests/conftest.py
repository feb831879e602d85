"""Shared test helpers: random stable systems, random rules, and explicit
quadrature-factor oracles.

The factor builders are deliberately naive (one matrix exponential or
resolvent solve per node, columns assembled with hstack) so that they form
an independent oracle for the vectorized sample-matrix assembly in the
package: agreement between the two is the central correctness property of
the data-driven route.
"""

import numpy as np

from lqobt import LqoSystem, QuadratureRule
from lqobt.numcore import expm


def random_stable_system(rng, n=None, m=1, p=1, ms_scale=1.0):
    """Random asymptotically stable system with dense matrices.

    `A` is a scaled Ginibre matrix shifted left of the imaginary axis by a
    random margin, so the spectral abscissa is strictly negative.
    """
    if n is None:
        n = int(rng.integers(2, 21))
    G = rng.standard_normal((n, n)) / np.sqrt(n)
    margin = rng.uniform(0.3, 1.2)
    A = G - (np.linalg.eigvals(G).real.max() + margin) * np.eye(n)
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    Ms = []
    for _ in range(p):
        R = rng.standard_normal((n, n))
        Ms.append(ms_scale * 0.5 * (R + R.T))
    return LqoSystem(A, B, C, Ms)


def random_rule(rng, max_nodes=8, lo=0.05, hi=3.0, avoid=None):
    """Random quadrature rule with well-separated positive nodes.

    With `avoid` (an existing rule) the nodes are also kept away from that
    rule's nodes, as divided differences need disjoint node sets.
    """
    n = int(rng.integers(2, max_nodes + 1))
    for _ in range(100):
        nodes = np.sort(rng.uniform(lo, hi, n))
        if np.diff(nodes).min() < 1e-2 * (hi - lo) / n:
            continue
        if avoid is not None:
            dist = np.abs(nodes[:, None] - avoid.nodes[None, :]).min()
            if dist < 1e-2 * (hi - lo) / n:
                continue
        break
    sw = rng.uniform(0.4, 1.3, n)
    return QuadratureRule(nodes, sw)


def time_factors(sys_, rule_p, rule_q):
    """Explicit time-domain quadrature factors ``(U, L)``.

    ``U`` has one ``rho_i exp(A t_i) B`` block column per node of `rule_p`;
    ``L = [L1, L2]`` stacks ``phi_j exp(A' tau_j) C'`` and, ordered with the
    output channel outermost and the `rule_p` node in the middle,
    ``rho_k phi_j exp(A' tau_j) M_q exp(A t_k) B``.
    """
    A, B, C = sys_.A, sys_.B, sys_.C
    t, rho = rule_p.nodes, rule_p.sqrt_weights
    tau, phi = rule_q.nodes, rule_q.sqrt_weights
    U = np.hstack([rho[i] * expm(A, t[i]) @ B for i in range(t.size)])
    L1 = np.hstack([phi[j] * expm(A.T, tau[j]) @ C.T for j in range(tau.size)])
    L2 = np.hstack([
        rho[k] * phi[j] * expm(A.T, tau[j]) @ M @ expm(A, t[k]) @ B
        for M in sys_.Ms
        for k in range(t.size)
        for j in range(tau.size)
    ])
    return U, np.hstack([L1, L2])


def freq_factors(sys_, th, rho, s, phi):
    """Explicit frequency-domain factors ``(U, L)`` from resolvent solves.

    ``U`` columns are ``rho_l (i th_l I - A)^{-1} B``; ``L`` stacks
    ``phi_k (i s_k I - A)^{-H} C'`` and, channel-outermost with the `th`
    node in the middle,
    ``rho_k phi_j (i s_j I - A)^{-H} M_q (i th_k I - A)^{-1} B``.
    The sample matrices equal conjugate-transpose products of these.
    """
    A, B, C = sys_.A, sys_.B, sys_.C
    n = sys_.n
    I = np.eye(n)

    def res(x, rhs):
        return np.linalg.solve(1j * x * I - A, rhs)

    def res_h(x, rhs):
        # (i x I - A)^{-H} rhs for real A
        return np.linalg.solve(-1j * x * I - A.T, rhs)

    U = np.hstack([rho[l] * res(th[l], B) for l in range(th.size)])
    L1 = np.hstack([phi[k] * res_h(s[k], C.T) for k in range(s.size)])
    L2 = np.hstack([
        rho[k] * phi[j] * res_h(s[j], M @ res(th[k], B))
        for M in sys_.Ms
        for k in range(th.size)
        for j in range(s.size)
    ])
    return U, np.hstack([L1, L2])


def factor_products(sys_, U, L, hermitian=False):
    """The five matrix products the sample matrices must reproduce."""
    Lh = L.conj().T if hermitian else L.T
    Uh = U.conj().T if hermitian else U.T
    H = Lh @ U
    M = Lh @ sys_.A @ U
    h = Lh @ sys_.B
    g = sys_.C @ U
    K = [Uh @ Mq @ U for Mq in sys_.Ms]
    return H, M, h, g, K


def assert_matrices_match(dm, products, tol=1e-10):
    """Max-abs agreement of assembled matrices with the factor products,
    scaled by ``1 + max |entry|`` per matrix."""
    H, M, h, g, K = products
    pairs = [("H", dm.H, H), ("M", dm.M, M), ("h", dm.h, h), ("g", dm.g, g)]
    pairs += [(f"K_{q}", dm.K[q], K[q]) for q in range(len(K))]
    for name, got, want in pairs:
        scale = 1.0 + (np.abs(want).max() if want.size else 0.0)
        dev = np.abs(got - want).max() if want.size else 0.0
        assert dev <= tol * scale, f"{name}: deviation {dev:.3e} > {tol} * {scale:.3e}"


def tf_agree(sys_a, sys_b, points, rtol, scale_sys=None):
    """Relative agreement of both transfer functions at the given complex
    points; the denominator comes from `scale_sys` (default `sys_a`)."""
    ref = scale_sys or sys_a
    for sp in points:
        denom1 = max(np.abs(ref.tf1(sp)).max(), 1e-12)
        dev1 = np.abs(sys_a.tf1(sp) - sys_b.tf1(sp)).max()
        assert dev1 <= rtol * denom1, f"H1 at {sp}: {dev1:.3e} > {rtol * denom1:.3e}"
        ta = np.asarray(sys_a.tf2(sp, sp.conjugate()))
        tb = np.asarray(sys_b.tf2(sp, sp.conjugate()))
        tr = np.asarray(ref.tf2(sp, sp.conjugate()))
        denom2 = max(np.abs(tr).max(), 1e-12)
        dev2 = np.abs(ta - tb).max()
        assert dev2 <= rtol * denom2, f"H2 at {sp}: {dev2:.3e} > {rtol * denom2:.3e}"


def scalar_s1():
    """The unit scalar benchmark: A=-1, B=C=1, M=1."""
    return LqoSystem([[-1.0]], [1.0], [1.0], np.array([[1.0]]))
