"""Small shipped test kernels."""
from __future__ import annotations

import numpy as np

from .kernel import Kernel, TailSpec
from .tails import DiscretePareto


def scalar_walk_kernel(up: float = 0.3, stay: float = 0.2, down: float = 0.5) -> Kernel:
    """Skip-free scalar random walk reflected at 0.

    Level 0 stays with probability 1 - up.  For up < down the stationary
    law is geometric: x(k) = (1 - r) r^k with r = up / down.
    """
    if abs(up + stay + down - 1) > 1e-12:
        raise ValueError("probabilities must sum to 1")
    return Kernel(1, 1, {1: [[up]], 0: [[stay]], -1: [[down]]},
                  {0: [[1 - up]], 1: [[up]], -1: [[down]]})


PERIOD_TWO_A = {
    1: np.array([[0, 0, 1 / 6], [0, 0, 1 / 6], [1 / 6, 1 / 6, 0]]),
    -1: np.array([[0, 0, 1 / 6], [0, 0, 1 / 6], [1 / 6, 1 / 6, 0]]),
    -2: np.array([[1 / 3, 1 / 3, 0], [1 / 3, 1 / 3, 0], [0, 0, 1 / 3]]),
}


def period_two_kernel(eps: float = 0.0, gamma: float = 2.5, kmax: int = 256) -> Kernel:
    """The period-two three-phase kernel with a natural boundary.

    Non-boundary levels use the A blocks above (A(0) = O).  The boundary
    blocks are what the same walk does when it cannot go below level 0:
    B(0) = A(-1) + A(-2), B(1) = A(1), B(-1) = A(-1) + A(-2), B(-2) = A(-2).

    With ``eps > 0`` level 0 additionally jumps, with probability eps,
    by 1 + Y with Y ~ DiscretePareto(gamma), landing in a uniform phase.
    This gives a heavy-tailed boundary without touching the A blocks, so
    the period stays two.
    """
    A = {k: v.copy() for k, v in PERIOD_TWO_A.items()}
    B = {0: A[-1] + A[-2], 1: A[1].copy(), -1: A[-1] + A[-2], -2: A[-2].copy()}
    if eps == 0:
        return Kernel(3, 3, A, B)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    Y = DiscretePareto(gamma)
    B[0] = (1 - eps) * B[0]
    B[1] = (1 - eps) * B[1]
    J = np.full((3, 3), 1 / 3)
    beta = Y.pmf(np.arange(kmax))
    for k in range(1, kmax + 1):
        B[k] = B.get(k, np.zeros((3, 3))) + eps * beta[k - 1] * J
    EY = Y.mean
    # sum_{k > kmax} k eps beta(k-1) = eps (E[Y; Y >= kmax] + P(Y >= kmax))
    tail_mean = eps * (Y.partial_mean_above(kmax - 1) + float(Y.ccdf(kmax - 1)))
    CBE = eps * EY * np.array([[2 / 3, 1 / 3]] * 3)
    tail = TailSpec(family="pareto",
                    params={"gamma": gamma, "eps": eps,
                            "mass_B": [eps * float(Y.ccdf(kmax - 1))] * 3,
                            "mean_B": [tail_mean] * 3},
                    cA=np.zeros(3), cB=np.full(3, eps * EY),
                    CAE=np.zeros((3, 2)), CBE=CBE)
    return Kernel(3, 3, A, B, tail)


TWO_PHASE_Q = np.array([[0.7, 0.3], [0.4, 0.6]])
TWO_PHASE_W = np.array([0.6, 0.9])


def two_phase_kernel(phi: float = 0.3, q: float = 0.5, gamma: float = 2.0, kmax: int = 2048,
                     Q=TWO_PHASE_Q, w=TWO_PHASE_W) -> Kernel:
    """Two-phase disaster queue with a strictly substochastic A.

    In phase i a slot brings a DiscretePareto(gamma) batch with probability
    w_i and no arrival otherwise; the phase then moves by Q.  Service and
    disasters are as in the scalar disaster queue.
    """
    Q = np.asarray(Q, dtype=float)
    w = np.asarray(w, dtype=float)
    M = len(w)
    Y = DiscretePareto(gamma)
    beta = Y.pmf(np.arange(kmax + 1))
    bi = w[:, None] * beta[None, :]
    bi[:, 0] += 1 - w
    a = np.empty((M, kmax + 1))
    a[:, 0] = (1 - phi) * bi[:, 0] * (1 - q)
    a[:, 1:] = (1 - phi) * (bi[:, :-1] * q + bi[:, 1:] * (1 - q))
    A = {-1: a[:, 0, None] * Q}
    A.update({k - 1: a[:, k, None] * Q for k in range(1, kmax + 1)})
    B = {0: phi * Q + (1 - phi) * bi[:, 0, None] * Q,
         -1: phi * Q + a[:, 0, None] * Q, -2: phi * Q}
    B.update({k: (1 - phi) * bi[:, k, None] * Q for k in range(1, kmax + 1)})
    cc = Y.ccdf
    massA = (1 - phi) * w * (q * float(cc(kmax - 1)) + (1 - q) * float(cc(kmax)))
    massB = (1 - phi) * w * float(cc(kmax))
    C = (1 - phi) * w[:, None] * Q
    tail = TailSpec(family="pareto",
                    params={"gamma": gamma, "phi": phi, "q": q,
                            "mass_A": massA.tolist(), "mass_B": massB.tolist()},
                    CA=C, CB=C, B_down="repeat_last")
    return Kernel(M, M, A, B, tail)
