"""Stationary distribution: matrix-product form and a brute-force oracle."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .kernel import Kernel, level_matrix, perron_left
from .matan import MatanArtifacts, NonConvergence
from .seq import MatrixSeq

MATRIX_ANALYTIC = "MatrixAnalytic"
ORACLE = "Oracle"
ORACLE_MAX_STATES = 12000


@dataclass(frozen=True)
class StationaryResult:
    """x(0), x(1..K) and the tail sums xbar(0..K) = sum_{l>k} x(l)."""

    x0: np.ndarray
    x_seq: np.ndarray
    xbar_seq: np.ndarray
    normalization_residual: float
    source: str
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def K(self) -> int:
        return self.x_seq.shape[0]

    def x(self, k: int) -> np.ndarray:
        return self.x0 if k == 0 else self.x_seq[k - 1]

    def level_mass(self) -> np.ndarray:
        """x(k) e for k = 0..K."""
        return np.concatenate([[self.x0.sum()], self.x_seq.sum(axis=1)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "phase", "x", "xbar"])
            M0, M = len(self.x0), self.x_seq.shape[1]
            for i in range(max(M0, M)):
                w.writerow([0, i, "%.17g" % self.x0[i] if i < M0 else "",
                            "%.17g" % self.xbar_seq[0, i] if i < M else ""])
            for k in range(1, self.K + 1):
                for i in range(M):
                    w.writerow([k, i, "%.17g" % self.x_seq[k - 1, i], "%.17g" % self.xbar_seq[k, i]])


def read_stationary_csv(path, source: str = MATRIX_ANALYTIC) -> StationaryResult:
    rows = list(csv.DictReader(open(path, newline="")))
    x0 = [float(r["x"]) for r in rows if r["k"] == "0" and r["x"] != ""]
    xb0 = [float(r["xbar"]) for r in rows if r["k"] == "0" and r["xbar"] != ""]
    M = len(xb0)
    rest = [r for r in rows if r["k"] != "0"]
    K = len(rest) // M
    x = np.array([float(r["x"]) for r in rest]).reshape(K, M)
    xb = np.array([float(r["xbar"]) for r in rest]).reshape(K, M)
    return StationaryResult(np.array(x0), x, np.vstack([xb0, xb]), 0.0, source)


def _conv_vec(y: np.ndarray, S: np.ndarray, n: int) -> np.ndarray:
    """out[k] = sum_j y[j] @ S[k-j] for k = 0..n-1 (y: (a, p), S: (b, p, q))."""
    p, q = S.shape[1], S.shape[2]
    out = np.zeros((n, q))
    for i in range(p):
        yi = y[:, i]
        if not yi.any():
            continue
        for j in range(q):
            s = S[:, i, j]
            if s.any():
                out[:, j] += np.convolve(yi, s)[:n]
    return out


def rf_sequence(R0_seq: MatrixSeq, F_seq: MatrixSeq, kmax: int) -> np.ndarray:
    """(R0 * F)(k) for k = 0..kmax (index 0 is the zero block)."""
    M0, M = R0_seq.shape
    R0 = np.zeros((kmax + 1, M0, M))
    R0[1:] = R0_seq.window(1, kmax)
    F = F_seq.window(0, kmax)
    out = np.zeros((kmax + 1, M0, M))
    for i in range(M0):
        for l in range(M):
            r = R0[:, i, l]
            if not r.any():
                continue
            for j in range(M):
                out[:, i, j] += np.convolve(r, F[:, l, j])[:kmax + 1]
    return out


def boundary_vector(k: Kernel, art: MatanArtifacts) -> np.ndarray:
    """x(0) from the level-0 censored matrix K0 = B(0) + sum_k (R0*F)(k) B(-k).

    Scaled so that x(0) e + x(0) R0 (I - R)^{-1} e = 1.
    """
    kc = k.closed()
    M = kc.M
    I = np.eye(M)
    inv = np.linalg.inv(I - art.R)
    Kd = kc.Kb_minus
    if art.F_seq.hi < Kd:
        raise ValueError("F horizon shorter than the boundary down window")
    RF = rf_sequence(art.R0_seq, art.F_seq, Kd)
    K0 = np.array(kc.B_block(0), dtype=float)
    last = Kd - 1 if kc.repeat_last and Kd else Kd
    for j in range(1, last + 1):
        K0 = K0 + RF[j] @ kc.B_block(-j)
    if kc.repeat_last and Kd:
        # sum_{j >= Kd} (R0*F)(j) = R0 (I - R)^{-1} - sum_{j < Kd} (R0*F)(j)
        rest = art.R0 @ inv - RF[:Kd].sum(axis=0)
        K0 = K0 + rest @ kc.B_block(-Kd)
    pd = perron_left(K0)
    slack = max(1e-8, 10 * (art.R_seq.residual_bound + art.phi.residual_bound))
    if abs(pd.sp - 1) > slack:
        raise NonConvergence(f"Perron value of K0 is {pd.sp:.12g}, not 1 (slack {slack:.2g})")
    x0 = pd.pi
    return x0 / (x0.sum() + (x0 @ art.R0 @ inv).sum())


def stationary_sequence(x0, R0_seq: MatrixSeq, F_seq: MatrixSeq, K: int,
                        R_seq: MatrixSeq | None = None, check_tol: float = 1e-8) -> StationaryResult:
    """x(k) = x(0) (R0 * F)(k) for k = 1..K, with tail sums.

    If ``R_seq`` is given, x(k) is also formed from
    x(k) = x(0) R0(k) + sum_{l<k} x(l) R(k-l); the largest relative gap is
    stored as ``meta["recursion_discrepancy"]``.  Tail sums use
    xbar(n) = [x(0) Rbar0(n) + sum_{l=1}^{n} x(l) Rbar(n-l)] (I - R)^{-1},
    which avoids subtracting from 1.
    """
    x0 = np.asarray(x0, dtype=float)
    if F_seq.hi < K:
        raise ValueError(f"F horizon {F_seq.hi} shorter than K = {K}")
    M0, M = R0_seq.shape
    y = np.zeros((K + 1, M))
    y[1:] = x0 @ R0_seq.window(1, K)
    x = _conv_vec(y, F_seq.window(0, K), K + 1)
    meta = {}
    if R_seq is not None:
        Rw = np.zeros((K + 1, M, M))
        Rw[1:] = R_seq.window(1, K)
        xs = x.copy()
        xs[0] = 0.0
        alt = y + _conv_vec(xs, Rw, K + 1)
        gap = np.abs(alt[1:] - x[1:]) / np.maximum(np.abs(x[1:]), 1e-300)
        meta["recursion_discrepancy"] = float(gap.max()) if K else 0.0
        if meta["recursion_discrepancy"] > check_tol:
            raise NonConvergence(f"x(k) forms disagree by {meta['recursion_discrepancy']:.3g}")
        R = R_seq.total()
        Rbar = np.zeros((K + 1, M, M))
        tails = R_seq.tail_sums()
        Rbar[0] = R
        n = min(K, R_seq.hi)
        if n >= 1:
            Rbar[1:n + 1] = tails[:n]
        R0bar = np.zeros((K + 1, M0, M))
        R0bar[0] = R0_seq.total()
        n0 = min(K, R0_seq.hi)
        if n0 >= 1:
            R0bar[1:n0 + 1] = R0_seq.tail_sums()[:n0]
        inv = np.linalg.inv(np.eye(M) - R)
        num = np.einsum("i,kij->kj", x0, R0bar) + _conv_vec(xs, Rbar, K + 1)
        xbar = num @ inv
    else:
        total = 1.0 - x0.sum()
        xbar = np.maximum(total - np.cumsum(x, axis=0), 0)
    total = x0.sum() + x[1:].sum() + xbar[K].sum()
    return StationaryResult(x0, x[1:], xbar, abs(total - 1.0), MATRIX_ANALYTIC, meta)


def stationary(k: Kernel, art: MatanArtifacts, K: int | None = None) -> StationaryResult:
    """Boundary vector plus the matrix-product sequence up to K (default: F horizon)."""
    K = art.F_seq.hi if K is None else K
    x0 = boundary_vector(k, art)
    sr = stationary_sequence(x0, art.R0_seq, art.F_seq, K, art.R_seq)
    inv = np.linalg.inv(np.eye(art.R.shape[0]) - art.R)
    sr.meta["xbar0_closure"] = float(np.abs(sr.xbar_seq[0] - x0 @ art.R0 @ inv).max())
    sr.meta["trusted_K"] = min(K, trusted_horizon(k, art.L_seq))
    return sr


def trusted_horizon(k: Kernel, L_seq: MatrixSeq, floor: float = 1e-12) -> int:
    """Highest level whose x(k) is not visibly moved by the folded tail mass.

    Closing the kernel puts the jump mass beyond the stored window onto
    jumps that first land on level h = min(Ka+ + 1, Kb+).  From there it
    leaks downward with weight L(m), so levels below h - m0 are kept, m0
    being the first m with max L(m) <= floor.  A scalar chain that is
    skip-free downward passes every level on the way down, so the landing
    point is irrelevant and m0 = 0.  If L never falls to the floor, a tenth
    of h is given up.
    """
    d0, d = k.deficits()
    if k.tail is None or max(d0.max(), d.max()) <= 1e-15:
        return np.iinfo(np.int64).max
    h = max(min(k.Ka_plus + 1, k.Kb_plus), 1)
    if k.M == 1 and k.Ka_minus <= 1 and k.Kb_minus <= 1 and not k.repeat_last:
        return h - 1
    norms = np.abs(L_seq.blocks).max(axis=(1, 2)) if len(L_seq) else np.zeros(0)
    small = np.flatnonzero(norms <= floor)
    m0 = int(L_seq.lo + small[0]) if len(small) else h // 10
    return max(h - 1 - m0, 0)


def balance_residual(k: Kernel, sr: StationaryResult, K: int | None = None) -> float:
    """Max relative gap in x(n) = x(0)B(n) + sum_l x(l)A(n-l) for 1 <= n <= K - down span."""
    kc = k.closed()
    K = sr.K if K is None else K
    top = K - kc.Ka_minus
    if top < 1:
        return 0.0
    M = kc.M
    x = np.zeros((K + 1, M))
    x[1:] = sr.x_seq[:K]
    lo = kc.A_seq.lo
    # shift A so that index 0 holds A(lo)
    Ash = kc.A_seq.blocks
    conv = _conv_vec(x, Ash, K + 1 - lo)  # conv[m] = sum_l x(l) A(m - l + lo)
    rhs = np.array([sr.x0 @ kc.B_block(n) + conv[n - lo] for n in range(1, top + 1)])
    lhs = x[1:top + 1]
    return float((np.abs(lhs - rhs) / np.maximum(np.abs(lhs), 1e-300)).max())


# -- oracle ----------------------------------------------------------------

def gth_stationary(P: np.ndarray) -> np.ndarray:
    """Stationary vector of a stochastic matrix by subtraction-free state reduction.

    States are eliminated from the last one down.  Only the columns where
    the pivot row is nonzero are touched, so banded level structure keeps
    the cost near O(n^2).  ``P`` is overwritten.
    """
    n = P.shape[0]
    S = np.zeros(n)
    for s in range(n - 1, 0, -1):
        row = P[s, :s]
        tot = row.sum()
        if tot <= 0:
            raise ValueError(f"reducible chain: state {s} cannot reach lower states")
        S[s] = tot
        cols = np.flatnonzero(row)
        rows = np.flatnonzero(P[:s, s])
        if rows.size and cols.size:
            P[np.ix_(rows, cols)] += np.outer(P[rows, s] / tot, row[cols])
    x = np.zeros(n)
    x[0] = 1.0
    for s in range(1, n):
        x[s] = x[:s] @ P[:s, s] / S[s]
    return x / x.sum()


def oracle_solve(k: Kernel, N: int, max_states: int = ORACLE_MAX_STATES) -> StationaryResult:
    """Stationary vector of the chain cut at level N with last-level augmentation.

    Raises
    ------
    ValueError
        If N is below twice the down-jump span, the truncated chain is
        reducible, or the dense matrix would exceed ``max_states``.
    """
    kc = k.closed()
    down = max(kc.Ka_minus, kc.Kb_minus, 1)
    if N < 2 * down:
        raise ValueError(f"N = {N} below twice the down-jump span ({down})")
    n = kc.M0 + N * kc.M
    if n > max_states:
        raise MemoryError(f"oracle needs {n} states, cap is {max_states}")
    T = level_matrix(kc, N, augment=True)
    rs = T.sum(axis=1)
    if np.abs(rs - 1).max() > 1e-9:
        raise ValueError(f"truncated matrix not stochastic (max row error {np.abs(rs - 1).max():.3g})")
    pi = gth_stationary(T)
    M0, M = kc.M0, kc.M
    x0 = pi[:M0]
    xs = pi[M0:].reshape(N, M)
    xbar = np.zeros((N + 1, M))
    # xbar(k) = sum_{l>k}, accumulated from the top level down
    xbar[:-1] = np.cumsum(xs[::-1], axis=0)[::-1]
    return StationaryResult(x0, xs, xbar, abs(pi.sum() - 1.0), ORACLE, {"N": N})


# -- comparison ------------------------------------------------------------

@dataclass(frozen=True)
class DiffReport:
    abs_diff: np.ndarray
    rel_diff: np.ndarray
    xbar_abs_diff: np.ndarray
    xbar_rel_diff: np.ndarray
    tol: float

    @property
    def max_abs(self) -> float:
        return float(self.abs_diff.max())

    @property
    def max_rel(self) -> float:
        return float(self.rel_diff.max())

    @property
    def worst_level(self) -> int:
        return int(np.argmax(self.rel_diff))

    @property
    def flagged_levels(self) -> list[int]:
        return np.flatnonzero(self.rel_diff > self.tol).tolist()

    def to_dict(self) -> dict:
        return {"max_abs_diff": self.max_abs, "max_rel_diff": self.max_rel,
                "worst_level": self.worst_level, "flagged_levels": self.flagged_levels[:50],
                "max_xbar_rel_diff": float(self.xbar_rel_diff.max()), "tol": self.tol}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "abs_diff", "rel_diff"])
            for kk, (a, r) in enumerate(zip(self.abs_diff, self.rel_diff)):
                w.writerow([kk, "%.17g" % a, "%.17g" % r])


def _rel(a, b):
    d = np.abs(a - b)
    scale = np.maximum(np.abs(a), np.abs(b))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(scale > 0, d / scale, 0.0)
    return d.max(axis=-1), r.max(axis=-1)


def compare(a: StationaryResult, b: StationaryResult, K: int, tol: float = 1e-8) -> DiffReport:
    """Per-level max-over-phase absolute and relative gaps for levels 0..K."""
    if len(a.x0) != len(b.x0) or a.x_seq.shape[1] != b.x_seq.shape[1]:
        raise ValueError("phase dimensions differ")
    K = min(K, a.K, b.K)
    ad0, rd0 = _rel(a.x0, b.x0)
    ad, rd = _rel(a.x_seq[:K], b.x_seq[:K])
    xa, xr = _rel(a.xbar_seq[:K + 1], b.xbar_seq[:K + 1])
    return DiffReport(np.concatenate([[ad0], ad]), np.concatenate([[rd0], rd]), xa, xr, tol)
