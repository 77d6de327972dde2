"""Period of the Markov additive process driven by {A(k)} and the L(k) limits.

The period tau is the largest integer for which a phase labeling p
satisfies

    [A(k)]_{ij} > 0  only if  k = p(j) - p(i)  (mod tau).

It is found by assigning integer potentials along a BFS tree of the
support digraph (edge i -> j with weight k) and taking the gcd of the
potential residuals of all edges.
"""
from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .kernel import Kernel, PerronData, scc_classes
from .matan import MatanArtifacts, transform
from .seq import MatrixSeq


@dataclass(frozen=True)
class PeriodInfo:
    tau: int
    p: np.ndarray
    E: np.ndarray
    classes: tuple

    def to_dict(self) -> dict:
        return {"tau": self.tau, "p": [int(v) for v in self.p]}


def _edges(k: Kernel):
    kc = k.closed()
    seq = kc.A_seq
    for n, blk in enumerate(seq.blocks):
        kk = seq.lo + n
        for i, j in zip(*np.nonzero(blk)):
            yield int(i), int(j), kk


def detect_period(k: Kernel) -> PeriodInfo:
    """Period tau and canonical labeling p (root phase 0 gets p = 0).

    Raises
    ------
    ValueError
        If A is reducible, if no edge ever changes the level balance (the
        period is then undefined), or if the labeling check fails.
    """
    kc = k.closed()
    M = kc.M
    comps = scc_classes(kc.A_sum())
    if len(comps) > 1:
        raise ValueError(f"A is reducible; classes {comps}")
    edges = list(_edges(kc))
    adj: dict[int, list] = {i: [] for i in range(M)}
    for i, j, kk in edges:
        adj[i].append((j, kk))
    pot = [None] * M
    pot[0] = 0
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j, kk in adj[i]:
            if pot[j] is None:
                pot[j] = pot[i] + kk
                queue.append(j)
    tau = 0
    for i, j, kk in edges:
        tau = math.gcd(tau, abs(kk - (pot[j] - pot[i])))
    if tau == 0:
        raise ValueError("every cycle of A has zero net level change: period undefined")
    p = np.array([v % tau for v in pot], dtype=int)
    for i, j, kk in edges:
        if (kk - (p[j] - p[i])) % tau:
            raise ValueError(f"labeling check failed on edge {i}->{j} with jump {kk}")
    E = np.zeros((M, tau))
    E[np.arange(M), p] = 1.0
    classes = tuple(tuple(np.flatnonzero(p == l).tolist()) for l in range(tau))
    return PeriodInfo(tau, p, E, classes)


def support_violations(seq: MatrixSeq, info: PeriodInfo, sign: int = 1) -> float:
    """Largest entry of ``seq`` at a position breaking the congruence.

    With ``sign=1`` the rule is k = p(j) - p(i) (A, Phi); with ``sign=-1``
    it is k = p(i) - p(j) (G, L: downward passages).
    """
    worst = 0.0
    p = info.p
    diff = (p[None, :] - p[:, None]) * sign
    for n, blk in enumerate(seq.blocks):
        kk = seq.lo + n
        bad = (kk - diff) % info.tau != 0
        if bad.any():
            worst = max(worst, float(np.abs(blk[bad]).max()))
    return worst


_REF_FRACTION = (math.sqrt(5) - 1) / 2


def spectral_period_check(k: Kernel, n: int, tol: float = 1e-8) -> bool:
    """True iff det(I - A^(omega_n)) vanishes, omega_n = exp(2 pi i / n).

    The determinant is compared with its magnitude at an irrational point
    of the unit circle, so the test is scale free.
    """
    if n < 1:
        raise ValueError("n must be positive")
    kc = k.closed()
    I = np.eye(kc.M)
    w = cmath.exp(2j * math.pi / n)
    ref = cmath.exp(2j * math.pi * _REF_FRACTION)
    d = abs(np.linalg.det(I - transform(kc.A_seq, w)))
    dref = abs(np.linalg.det(I - transform(kc.A_seq, ref)))
    return bool(d < tol * max(dref, 1e-300))


@dataclass(frozen=True)
class PsiData:
    psi: np.ndarray
    H: tuple
    L_limits: tuple


def psi_vector(k: Kernel, art: MatanArtifacts, pd: PerronData, sigma: float,
               info: PeriodInfo | None = None) -> PsiData:
    """psi = pi (I - R)(I - Phi(0)) / (-sigma) and the blocks H_l, tau E H_l."""
    if sigma is None or not sigma < 0:
        raise ValueError(f"sigma must be negative, got {sigma}")
    info = detect_period(k) if info is None else info
    M = art.R.shape[0]
    I = np.eye(M)
    psi = pd.pi @ (I - art.R) @ (I - art.phi0) / (-sigma)
    tau, p = info.tau, info.p
    H = []
    for l in range(tau):
        h = np.zeros((tau, M))
        h[(p + l) % tau, np.arange(M)] = psi
        H.append(h)
    limits = tuple(tau * info.E @ h for h in H)
    return PsiData(psi, tuple(H), limits)


@dataclass(frozen=True)
class LLimitReport:
    n_grid: tuple
    errors: dict          # l -> list of ||L(n tau + l) - tau E H_l|| over n_grid
    sum_errors: list      # ||sum_l L(n tau + l) - tau e psi|| over n_grid
    forbidden_max: list   # largest incongruent entry of L(n tau + l) over n_grid
    h_sum_residual: float
    decreasing: bool
    floor: float

    def to_dict(self) -> dict:
        return {"n_grid": list(self.n_grid), "errors": {str(l): v for l, v in self.errors.items()},
                "sum_errors": self.sum_errors, "forbidden_max": self.forbidden_max,
                "h_sum_residual": self.h_sum_residual, "decreasing": self.decreasing}


def l_limit_convergence(L_seq: MatrixSeq, info: PeriodInfo, psi: PsiData, n_grid,
                        floor: float = 1e-8) -> LLimitReport:
    """Distance of L(n tau + l) to its limit tau E H_l along ``n_grid``.

    ``decreasing`` holds when, for every l, each of the last three errors
    is below its predecessor or already at the ``floor``.
    """
    tau = info.tau
    n_grid = tuple(int(n) for n in n_grid)
    need = max(n_grid) * tau + tau - 1
    if L_seq.hi < need:
        raise ValueError(f"L horizon {L_seq.hi} below {need}")
    M = L_seq.shape[0]
    p = info.p
    allowed = [((p[:, None] - p[None, :] - l) % tau == 0) for l in range(tau)]
    errors = {l: [] for l in range(tau)}
    sums, forb = [], []
    target = tau * np.outer(np.ones(M), psi.psi)
    for n in n_grid:
        acc = np.zeros((M, M))
        f = 0.0
        for l in range(tau):
            Lk = L_seq[n * tau + l]
            errors[l].append(float(np.abs(Lk - psi.L_limits[l]).max()))
            if (~allowed[l]).any():
                f = max(f, float(np.abs(Lk[~allowed[l]]).max()))
            acc += Lk
        sums.append(float(np.abs(acc - target).max()))
        forb.append(f)
    hres = float(np.abs(sum(psi.H) - np.outer(np.ones(tau), psi.psi)).max())
    dec = True
    for l in range(tau):
        tail = errors[l][-3:]
        for a, b in zip(tail, tail[1:]):
            if not (b < a or b <= floor):
                dec = False
    return LLimitReport(n_grid, errors, sums, forb, hres, dec, floor)
