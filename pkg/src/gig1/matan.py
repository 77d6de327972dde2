"""Censored-chain matrices and the sequences built from them.

Pipeline: Phi (fixed point) -> G -> L -> R, R0 -> F.  Everything runs on
the closed kernel (tail deficit folded into the stored blocks), and on a
closed kernel Phi(k) vanishes outside the stored jump window, so the
Phi window is exactly the kernel's and needs no growth policy.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernel import Kernel, spectral_radius
from .seq import MatrixSeq, cross_sum


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    """Engineering knobs of the Phi fixed point and the derived sequences.

    kmax is the horizon of L, F and the stationary sequence.  The first
    ``record_sweeps`` sweeps keep their minimal entrywise increment so
    monotonicity can be audited.
    """

    tol: float = 1e-12
    max_iter: int = 200000
    kmax: int = 4096
    record_sweeps: int = 50
    callback: Callable | None = None


@dataclass(frozen=True)
class MatanArtifacts:
    phi: MatrixSeq
    G_seq: MatrixSeq
    G: np.ndarray
    L_seq: MatrixSeq
    R_seq: MatrixSeq
    R0_seq: MatrixSeq
    R: np.ndarray
    R0: np.ndarray
    F_seq: MatrixSeq
    iterations: int
    converged: bool
    checks: dict = field(default_factory=dict)

    @property
    def phi0(self) -> np.ndarray:
        return self.phi[0]

    def inv_I_minus_phi0(self) -> np.ndarray:
        return np.linalg.inv(np.eye(self.phi.shape[0]) - self.phi0)


def _neg_update(V: np.ndarray, Nn: np.ndarray) -> np.ndarray:
    """``out[k] = sum_{m>=1} V[m] @ Nn[k+m]`` via transposed cross sums."""
    return cross_sum(Nn.transpose(0, 2, 1), V.transpose(0, 2, 1)).transpose(0, 2, 1)


def solve_phi(k: Kernel, opts: SolveOptions = SolveOptions()) -> MatrixSeq:
    """Minimal nonnegative solution Phi(-Ka-..Ka+) of the censoring fixed point.

    Jacobi sweeps from Phi = O: every block is updated from the previous
    sweep.  The iterates are entrywise nondecreasing.  On hitting the
    iteration cap the last iterate is returned with
    ``meta["converged"] = False``.
    """
    kc = k.closed()
    M = kc.M
    U, D = kc.Ka_plus, kc.Ka_minus
    Apos = kc.A_seq.window(0, U)
    Aneg = np.zeros((D + 1, M, M))
    Aneg[1:] = kc.A_seq.window(-D, -1)[::-1]
    I = np.eye(M)
    P = np.zeros_like(Apos)
    Nn = np.zeros_like(Aneg)
    incs: list[float] = []
    d = d_prev = np.inf
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        inv = np.linalg.inv(I - P[0])
        W = np.einsum("ij,mjk->mik", inv, Nn)
        V = np.einsum("mij,jk->mik", P, inv)
        newP = Apos + cross_sum(P, W)
        newN = Aneg + _neg_update(V, Nn)
        newN[0] = 0.0
        dP, dN = newP - P, newN - Nn
        if it <= opts.record_sweeps:
            incs.append(float(min(dP.min(), dN.min())))
        d_prev, d = d, float(max(np.abs(dP).max(), np.abs(dN).max() if D else 0.0))
        P, Nn = newP, newN
        if opts.callback is not None:
            opts.callback(it, P, Nn)
        if d < opts.tol:
            converged = True
            break
    rate = d / d_prev if np.isfinite(d_prev) and d_prev > 0 else 0.0
    bound = d * rate / (1 - rate) if rate < 1 else float("inf")
    blocks = np.concatenate([Nn[1:][::-1], P], axis=0)
    cond = float(np.linalg.cond(I - P[0]))
    if cond > 1e12:
        warnings.warn(f"I - Phi(0) is ill conditioned (cond {cond:.3g})", RuntimeWarning)
    meta = {"iterations": it, "converged": converged, "rate": rate,
            "last_increment": d, "sweep_min_increments": incs, "cond": cond}
    return MatrixSeq(-D, blocks, residual_bound=bound, meta=meta)


def g_from_phi(phi: MatrixSeq) -> tuple[MatrixSeq, np.ndarray]:
    """G(k) = (I - Phi(0))^{-1} Phi(-k) for k >= 1, and G = sum G(k).

    The residual bound of the result bounds the row sums of the error.
    """
    M = phi.shape[0]
    A = np.eye(M) - phi[0]
    if np.linalg.cond(A) > 1e14:
        raise np.linalg.LinAlgError("I - Phi(0) is singular: broken Phi solve")
    D = max(-phi.lo, 0)
    neg = phi.window(-D, -1)[::-1] if D else np.zeros((0, M, M))
    Gb = np.linalg.solve(A, neg.transpose(1, 0, 2).reshape(M, -1)).reshape(M, D, M).transpose(1, 0, 2) \
        if D else neg
    # Ge = inv sum_k Phi(-k)e and G*e = e, so a per-entry Phi error d moves
    # the row sums of G by at most ||inv|| d M (D + 1)
    bound = phi.residual_bound * np.abs(np.linalg.inv(A)).sum(axis=1).max() * M * (D + 1)
    G_seq = MatrixSeq(1, Gb, residual_bound=bound)
    return G_seq, G_seq.total()


def l_sequence(G_seq: MatrixSeq, kmax: int) -> MatrixSeq:
    """L(1..kmax) from L(k) = G(k) + sum_{j=1}^{k-1} L(j) G(k-j)."""
    M = G_seq.shape[0]
    D = G_seq.hi if len(G_seq) else 0
    Gw = G_seq.window(1, max(D, 1))
    L = np.zeros((kmax + 1, M, M))
    for k in range(1, kmax + 1):
        acc = Gw[k - 1].copy() if k <= D else np.zeros((M, M))
        n = min(D, k - 1)
        if n:
            # sum_{i=1}^{n} L(k-i) G(i)
            acc += np.einsum("iab,ibc->ac", L[k - 1:k - n - 1 if k - n - 1 >= 0 else None:-1], Gw[:n])
        L[k] = acc
    return MatrixSeq(1, L[1:], residual_bound=G_seq.residual_bound)


def _r_from(up: np.ndarray, L_seq: MatrixSeq, inv: np.ndarray) -> np.ndarray:
    """[X(k) + sum_m X(k+m) L(m)] inv for k = 1..len(up)-1 (``up[0]`` is X(0), unused)."""
    H = max(L_seq.hi, 0)
    Lw = np.zeros((H + 1, *L_seq.shape))
    if H:
        Lw[1:] = L_seq.window(1, H)
    S = up + cross_sum(up, Lw)
    return np.einsum("kij,jl->kil", S[1:], inv)


def r_sequences(k: Kernel, phi: MatrixSeq, L_seq: MatrixSeq) -> tuple[MatrixSeq, MatrixSeq]:
    """R0(1..Kb+) and R(1..Ka+) from the kernel blocks and L.

    R is also formed as Phi(k)(I - Phi(0))^{-1}; the max discrepancy of
    the two routes is stored in ``R_seq.meta["phi_route_diff"]``.
    """
    kc = k.closed()
    M = kc.M
    inv = np.linalg.inv(np.eye(M) - phi[0])
    U, Ub = kc.Ka_plus, kc.Kb_plus
    if L_seq.hi < max(U, Ub) - 1:
        raise ValueError("L horizon shorter than the up-jump window")
    Aup = kc.A_seq.window(0, U)
    Rb = _r_from(Aup, L_seq, inv) if U else np.zeros((0, M, M))
    Bup = np.zeros((Ub + 1, kc.M0, M))
    if Ub:
        Bup[1:] = kc.B_up.window(1, Ub)
    R0b = _r_from(Bup, L_seq, inv) if Ub else np.zeros((0, kc.M0, M))
    alt = np.einsum("kij,jl->kil", phi.window(1, U), inv) if U else Rb
    diff = float(np.abs(alt - Rb).max()) if U else 0.0
    scale = np.abs(inv).sum(axis=1).max()
    R_seq = MatrixSeq(1, Rb, residual_bound=phi.residual_bound * scale,
                      meta={"phi_route_diff": diff})
    R0_seq = MatrixSeq(1, R0b, residual_bound=phi.residual_bound * scale)
    return R0_seq, R_seq


def f_sequence(R_seq: MatrixSeq, kmax: int) -> MatrixSeq:
    """F(0..kmax) from F(0) = I, F(k) = sum_{l=1}^{k} F(k-l) R(l)."""
    M = R_seq.shape[0]
    R = R_seq.total()
    # R of a null or transient chain has sp(R) = 1 up to the Phi error
    if spectral_radius(R) >= 1 - max(1e-12, 10 * R_seq.residual_bound):
        raise NonConvergence("sp(R) >= 1: chain not positive recurrent")
    U = R_seq.hi if len(R_seq) else 0
    Rw = R_seq.window(1, max(U, 1))
    F = np.zeros((kmax + 1, M, M))
    F[0] = np.eye(M)
    for k in range(1, kmax + 1):
        n = min(U, k)
        # sum_{l=1}^{n} F(k-l) R(l)
        F[k] = np.einsum("lab,lbc->ac", F[k - 1:k - n - 1 if k - n - 1 >= 0 else None:-1], Rw[:n])
    return MatrixSeq(0, F, residual_bound=R_seq.residual_bound)


def solve(k: Kernel, opts: SolveOptions = SolveOptions()) -> MatanArtifacts:
    """Run the whole matrix-analytic chain on the closed kernel.

    Raises
    ------
    NonConvergence
        If the Phi iteration hits its cap or sp(R) >= 1.
    """
    kc = k.closed()
    phi = solve_phi(kc, opts)
    if not phi.meta["converged"]:
        raise NonConvergence(f"Phi iteration did not reach tol {opts.tol} "
                             f"in {phi.meta['iterations']} sweeps")
    G_seq, G = g_from_phi(phi)
    H = max(opts.kmax, kc.Ka_plus, kc.Kb_plus)
    L_seq = l_sequence(G_seq, H)
    R0_seq, R_seq = r_sequences(kc, phi, L_seq)
    F_seq = f_sequence(R_seq, opts.kmax)
    art = MatanArtifacts(phi, G_seq, G, L_seq, R_seq, R0_seq, R_seq.total(), R0_seq.total(),
                         F_seq, phi.meta["iterations"], True)
    art.checks["phi_route_diff"] = R_seq.meta["phi_route_diff"]
    art.checks["factorization_residual"] = factorization_residual(kc, art, 1.0)
    return art


def transform(seq: MatrixSeq, z: complex, sign: int = 1) -> np.ndarray:
    """sum_k X(k) z^(sign*k) over the stored range."""
    idx = seq.indices()
    w = np.power(complex(z) if np.iscomplexobj(z) else float(z), sign * idx.astype(float))
    return np.einsum("k,kij->ij", w, seq.blocks)


def factorization_residual(k: Kernel, art: MatanArtifacts, z: float = 1.0) -> float:
    """Sup norm of (I - A^(z)) - (I - R^(z))(I - Phi(0))(I - G^(z)).

    Truncation residual bounds of R and G are added so the number never
    understates the error.
    """
    if not 0 < z <= 1:
        raise ValueError("z must lie in (0, 1]")
    kc = k.closed()
    M = kc.M
    I = np.eye(M)
    Ah = transform(kc.A_seq, z)
    Rh = transform(art.R_seq, z)
    Gh = transform(art.G_seq, z, sign=-1)
    lhs = I - Ah
    rhs = (I - Rh) @ (I - art.phi0) @ (I - Gh)
    return float(np.abs(lhs - rhs).max() + art.R_seq.residual_bound + art.G_seq.residual_bound)


def mean_jump_G(art: MatanArtifacts) -> np.ndarray:
    """sum_k k G(k) e."""
    g = art.G_seq
    return np.einsum("k,kij->i", g.indices().astype(float), g.blocks)


def sigma_via_G(art: MatanArtifacts, pi: np.ndarray) -> float:
    """Drift recomputed as -pi (I - R)(I - Phi(0)) sum_k k G(k) e."""
    M = art.R.shape[0]
    I = np.eye(M)
    return float(-pi @ (I - art.R) @ (I - art.phi0) @ mean_jump_G(art))
