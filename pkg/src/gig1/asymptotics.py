"""Subexponential prefactors, hypothesis audit and empirical ratio series.

Five limit formulas are covered, tagged T1..T5:

    T1  xbar(k) / P(Y_e > k) -> (x(0)cB + xbar(0)cA) / (-sigma) * pi
    T2  xbar(k) / P(Y > k)   -> [x(0)CB + xbar(0)CA] (I - A)^{-1}
    T3  x(k) / P(Y_e = k)    -> (x(0)CBE e + xbar(0)CAE e) / (-sigma) * pi
    T4  x(k) / P(Y_e = k)    -> same prefactor as T1, monotone-block hypotheses
    T5  x(k) / P(Y = k)      -> same prefactor as T2, local hypotheses

T1, T3 and T4 need a stochastic A (sigma < 0); T2 and T5 a strictly
substochastic A.  The software reports finite-k ratios and their gap to
the prefactor; it never claims that a limit has been reached.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import STOCHASTIC_A, Kernel, RegimeAudit, audit_regime, perron_left
from .matan import MatanArtifacts
from .stationary import StationaryResult
from .tails import TailModel, equilibrium, tail_from_spec

THEOREMS = ("T1", "T2", "T3", "T4", "T5")

TAIL_OVER_CCDF = "TailOverCcdf"
TAIL_OVER_EQ_CCDF = "TailOverEqCcdf"
LOCAL_OVER_EQ_PMF = "LocalOverEqPmf"
LOCAL_OVER_PMF = "LocalOverPmf"
MODES = (TAIL_OVER_CCDF, TAIL_OVER_EQ_CCDF, LOCAL_OVER_EQ_PMF, LOCAL_OVER_PMF)

MODE_OF = {"T1": TAIL_OVER_EQ_CCDF, "T2": TAIL_OVER_CCDF, "T3": LOCAL_OVER_EQ_PMF,
           "T4": LOCAL_OVER_EQ_PMF, "T5": LOCAL_OVER_PMF}
REFERENCE = {TAIL_OVER_CCDF: "xbar(k) / P(Y > k)", TAIL_OVER_EQ_CCDF: "xbar(k) / P(Y_e > k)",
             LOCAL_OVER_EQ_PMF: "x(k) / P(Y_e = k)", LOCAL_OVER_PMF: "x(k) / P(Y = k)"}

HOLDS, FAILS, UNKNOWN, ASSERTED = "holds", "fails", "unknown", "family-asserted"

DECLARED, ESTIMATED = "Declared", "Estimated"
DISPERSION_FLAG = 0.05


# -- constants -----------------------------------------------------------

def _opt(x, ndim):
    if x is None:
        return None
    a = np.asarray(x, dtype=float)
    return a.reshape(-1) if ndim == 1 else np.atleast_2d(a)


@dataclass(frozen=True)
class TailConstants:
    cA: np.ndarray | None = None
    cB: np.ndarray | None = None
    CA: np.ndarray | None = None
    CB: np.ndarray | None = None
    CAE: np.ndarray | None = None
    CBE: np.ndarray | None = None
    source: str = DECLARED
    dispersion: dict = field(default_factory=dict)
    flagged: bool = False

    def __post_init__(self):
        for name, nd in (("cA", 1), ("cB", 1), ("CA", 2), ("CB", 2), ("CAE", 2), ("CBE", 2)):
            v = _opt(getattr(self, name), nd)
            if v is not None and (not np.all(np.isfinite(v)) or np.any(v < 0)):
                raise ValueError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, v)

    @classmethod
    def from_spec(cls, spec) -> "TailConstants":
        return cls(spec.cA, spec.cB, spec.CA, spec.CB, spec.CAE, spec.CBE, DECLARED)

    def has(self, *names) -> bool:
        return all(getattr(self, n) is not None for n in names)

    def to_dict(self) -> dict:
        d = {n: (None if getattr(self, n) is None else getattr(self, n).tolist())
             for n in ("cA", "cB", "CA", "CB", "CAE", "CBE")}
        d.update(source=self.source, dispersion=self.dispersion, flagged=self.flagged)
        return d


def _pair(a, b, shape_a, shape_b, what):
    if a is None and b is None:
        raise ValueError(f"missing {what} constants")
    a = np.zeros(shape_a) if a is None else np.asarray(a, dtype=float)
    b = np.zeros(shape_b) if b is None else np.asarray(b, dtype=float)
    if not (np.any(a > 0) or np.any(b > 0)):
        raise ValueError(f"{what} constants are both zero")
    return a, b


def _check_sigma(sigma):
    if sigma is None or not sigma < 0:
        raise ValueError(f"sigma must be negative, got {sigma}")


def constant_T1(x0, xbar0, cA, cB, sigma, pi) -> np.ndarray:
    """(x(0)cB + xbar(0)cA) / (-sigma) * pi."""
    _check_sigma(sigma)
    x0, xbar0, pi = (np.asarray(v, dtype=float) for v in (x0, xbar0, pi))
    cA, cB = _pair(cA, cB, len(xbar0), len(x0), "cA/cB")
    return float(x0 @ cB + xbar0 @ cA) / (-sigma) * pi


def constant_T2(x0, xbar0, CA, CB, A) -> np.ndarray:
    """[x(0)CB + xbar(0)CA] (I - A)^{-1}, asserted strictly positive."""
    x0, xbar0, A = (np.asarray(v, dtype=float) for v in (x0, xbar0, A))
    M, M0 = len(xbar0), len(x0)
    CA, CB = _pair(CA, CB, (M, M), (M0, M), "CA/CB")
    out = np.linalg.solve((np.eye(M) - A).T, (x0 @ CB + xbar0 @ CA))
    if not np.all(out > 0):
        raise ValueError(f"prefactor not strictly positive: {out}")
    return out


def constant_T2_factored(x0, xbar0, CA, CB, phi_down_sum, R) -> np.ndarray:
    """T2 through [x(0)CB + xbar(0)CA](I - sum_l Phi(-l))^{-1}(I - R)^{-1}."""
    x0, xbar0 = np.asarray(x0, dtype=float), np.asarray(xbar0, dtype=float)
    M, M0 = len(xbar0), len(x0)
    CA, CB = _pair(CA, CB, (M, M), (M0, M), "CA/CB")
    I = np.eye(M)
    v = np.linalg.solve((I - phi_down_sum).T, x0 @ CB + xbar0 @ CA)
    return np.linalg.solve((I - R).T, v)


def constant_T3(x0, xbar0, CAE, CBE, sigma, pi, tau: int | None = None) -> np.ndarray:
    """(x(0)CBE e + xbar(0)CAE e) / (-sigma) * pi."""
    _check_sigma(sigma)
    x0, xbar0, pi = (np.asarray(v, dtype=float) for v in (x0, xbar0, pi))
    cols = [np.asarray(c).shape[1] for c in (CAE, CBE) if c is not None]
    if tau is not None and any(c != tau for c in cols):
        raise ValueError(f"local constants have {cols} columns, period is {tau}")
    t = cols[0] if cols else 1
    CAE, CBE = _pair(CAE, CBE, (len(xbar0), t), (len(x0), t), "CAE/CBE")
    return float(x0 @ CBE.sum(axis=1) + xbar0 @ CAE.sum(axis=1)) / (-sigma) * pi


def constant_T4(x0, xbar0, cA, cB, sigma, pi) -> np.ndarray:
    return constant_T1(x0, xbar0, cA, cB, sigma, pi)


def constant_T5(x0, xbar0, CA, CB, A) -> np.ndarray:
    return constant_T2(x0, xbar0, CA, CB, A)


def predicted_R_tail(art: MatanArtifacts, consts: TailConstants, sigma=None, pi=None) -> np.ndarray:
    """Limit of Rbar(k) divided by P(Y_e > k) (stochastic A) or P(Y > k) (substochastic A)."""
    M = art.R.shape[0]
    I = np.eye(M)
    if sigma is not None:
        _check_sigma(sigma)
        cA = np.zeros(M) if consts.cA is None else consts.cA
        return np.outer(cA, pi @ (I - art.R)) / (-sigma)
    CA = np.zeros((M, M)) if consts.CA is None else consts.CA
    down = art.phi.window(art.phi.lo, 0).sum(axis=0)
    return CA @ np.linalg.inv(I - down)


def predicted_F_local(R: np.ndarray, C: np.ndarray) -> np.ndarray:
    """(I - R)^{-1} C (I - R)^{-1}: local limit of sum_n R^{*n}(k) given R(k) ~ C p(k)."""
    inv = np.linalg.inv(np.eye(R.shape[0]) - R)
    return inv @ C @ inv


# -- empirical ratios ----------------------------------------------------

def _reference(t: TailModel, mode: str, ks: np.ndarray) -> np.ndarray:
    if mode == TAIL_OVER_CCDF:
        return np.asarray(t.ccdf(ks), dtype=float)
    if mode == LOCAL_OVER_PMF:
        return np.asarray(t.pmf(ks), dtype=float)
    te = equilibrium(t)
    if mode == TAIL_OVER_EQ_CCDF:
        return np.asarray(te.ccdf(ks), dtype=float)
    if mode == LOCAL_OVER_EQ_PMF:
        return np.asarray(te.pmf(ks), dtype=float)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class RatioSeries:
    mode: str
    k: np.ndarray
    values: np.ndarray          # len(k) x M
    drift: float                # relative spread of r over the last decade
    monotone: bool              # every phase moves one way over the last decade

    def decade(self) -> np.ndarray:
        kh = self.k[-1]
        return self.k >= kh / 10

    def gap(self, prefactor) -> float:
        """Max relative gap between r(k_max) and the prefactor."""
        pf = np.asarray(prefactor, dtype=float)
        return float(np.max(np.abs(self.values[-1] - pf) / np.abs(pf)))

    def toward(self, prefactor) -> bool:
        """|r(k) - prefactor| nonincreasing over the last decade, per phase."""
        pf = np.asarray(prefactor, dtype=float)
        d = np.abs(self.values[self.decade()] - pf)
        return bool(np.all(np.diff(d, axis=0) <= 1e-12 * np.abs(pf)))

    def to_csv(self, path, prefactor=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "phase", "ratio", "prefactor"])
            for kk, row in zip(self.k, self.values):
                for i, v in enumerate(row):
                    pf = "" if prefactor is None else "%.17g" % prefactor[i]
                    w.writerow([int(kk), i, "%.17g" % v, pf])


def empirical_ratio(sr: StationaryResult, t: TailModel, mode: str, k_grid) -> RatioSeries:
    """r(k) per phase for the chosen normalization, with last-decade drift.

    Raises ValueError for grid points past the trusted horizon of ``sr``
    or where the reference probability vanishes.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    ks = np.array(sorted({int(v) for v in k_grid}), dtype=int)
    if len(ks) == 0 or ks[0] < 1:
        raise ValueError("k grid must be nonempty and positive")
    top = min(sr.K, sr.meta.get("trusted_K", sr.K))
    if ks[-1] > top:
        raise ValueError(f"grid reaches {ks[-1]} beyond the trusted horizon {top}")
    ref = _reference(t, mode, ks.astype(float))
    if np.any(ref <= 0):
        raise ValueError("reference probability vanishes on the grid")
    num = sr.xbar_seq[ks] if mode in (TAIL_OVER_CCDF, TAIL_OVER_EQ_CCDF) else sr.x_seq[ks - 1]
    vals = num / ref[:, None]
    sel = ks >= ks[-1] / 10
    dec = vals[sel]
    last = np.abs(dec[-1])
    drift = float(np.max((dec.max(axis=0) - dec.min(axis=0)) / np.where(last > 0, last, 1.0)))
    dif = np.diff(dec, axis=0)
    mono = bool(np.all((dif >= 0).all(axis=0) | (dif <= 0).all(axis=0)))
    return RatioSeries(mode, ks, vals, drift, mono)


def log_grid(k_lo: int, k_hi: int, per_decade: int = 10) -> np.ndarray:
    n = max(2, int(round(per_decade * math.log10(k_hi / k_lo))) + 1)
    return np.unique(np.round(np.geomspace(k_lo, k_hi, n)).astype(int))


# -- constant estimation -------------------------------------------------

def _fit(ks: np.ndarray, r: np.ndarray) -> tuple[float, float, bool]:
    """Fit log r = a + b log k; value at the window end, spread, periodic flag."""
    pos = r > 0
    if not pos.any():
        return 0.0, 0.0, False
    periodic = pos.sum() < len(r)
    x, y = np.log(ks[pos]), np.log(r[pos])
    if len(x) < 2:
        return float(r[pos][-1]), math.inf, periodic
    b, a = np.polyfit(x, y, 1)
    resid = y - (a + b * x)
    spread = abs(b) * math.log(10) + float(resid.std())
    return float(math.exp(a + b * math.log(ks[-1]))), spread, periodic


def estimate_tail_constants(k: Kernel, t: TailModel | None = None, force: bool = False,
                            tau: int | None = None, p=None) -> TailConstants:
    """Declared constants, or a log-log least-squares fit over the last decade.

    The fit runs over k in [K/10, K - 2], K the stored up window.  Tail
    sums come from the closed kernel, so the mass beyond the window counts;
    local blocks come from the stored kernel.
    Matrix constants CA, CB come from Abar(k)/P(Y > k); the vectors cA, cB
    and the local CAE, CBE carry the factor E[Y] of their definitions.
    """
    if k.tail is not None and not force and any(
            getattr(k.tail, n) is not None for n in ("cA", "cB", "CA", "CB", "CAE", "CBE")):
        return TailConstants.from_spec(k.tail)
    if t is None:
        if k.tail is None:
            raise ValueError("no reference distribution")
        t = tail_from_spec(k.tail)
    kc = k.closed()
    K = min(k.Ka_plus, k.Kb_plus)
    if K < 100:
        raise ValueError(f"stored window {K} shorter than two decades")
    ks = np.arange(max(K // 10, 1), K - 1)
    ccdf = np.asarray(t.ccdf(ks.astype(float)), dtype=float)
    pmf = np.asarray(t.pmf(ks.astype(float)), dtype=float)
    if np.any(ccdf <= 0) or np.any(pmf <= 0):
        raise ValueError("reference probability vanishes in the fit window")
    EY = t.mean
    M, M0 = kc.M, kc.M0
    Atail = kc.A_seq.tail_sums()[ks - kc.A_seq.lo]
    Btail = kc.B_up.tail_sums()[ks - kc.B_up.lo]
    Aloc = np.stack([k.A_block(int(v)) for v in ks])
    Bloc = np.stack([k.B_block(int(v)) for v in ks])
    if tau is None or p is None:
        from .period import detect_period
        try:
            info = detect_period(kc)
            tau, p = info.tau, info.p
        except ValueError:
            tau, p = 1, np.zeros(M, dtype=int)
    E = np.zeros((M, tau))
    E[np.arange(M), np.asarray(p) % tau] = 1.0
    disp, flagged = {}, False

    def fit_all(name, series, ref, scale):
        nonlocal flagged
        shape = series.shape[1:]
        out = np.zeros(shape)
        worst, per = 0.0, False
        for idx in np.ndindex(*shape):
            v, s, pr = _fit(ks.astype(float), series[(slice(None),) + idx] / ref)
            out[idx] = v * scale
            worst, per = max(worst, s), per or pr
        disp[name] = {"spread": worst, "support_periodic": per}
        flagged = flagged or worst > DISPERSION_FLAG
        return out

    stochastic = bool(np.all(np.abs(kc.A_sum().sum(axis=1) - 1) <= 1e-10))
    res = {}
    if stochastic and math.isfinite(EY):
        res["cA"] = fit_all("cA", Atail.sum(axis=2), ccdf, EY)
        res["cB"] = fit_all("cB", Btail.sum(axis=2), ccdf, EY)
        res["CAE"] = fit_all("CAE", Aloc @ E, pmf, EY)
        res["CBE"] = fit_all("CBE", Bloc @ E, pmf, EY)
    else:
        res["CA"] = fit_all("CA", Atail, ccdf, 1.0)
        res["CB"] = fit_all("CB", Btail, ccdf, 1.0)
    return TailConstants(**res, source=ESTIMATED, dispersion=disp, flagged=flagged)


# -- hypothesis audit ----------------------------------------------------

def _class(t: TailModel, cls: str) -> str:
    return ASSERTED if cls in t.claimed_classes else UNKNOWN


def _either(*vals) -> str:
    if ASSERTED in vals or HOLDS in vals:
        return ASSERTED if ASSERTED in vals else HOLDS
    if all(v == FAILS for v in vals):
        return FAILS
    return UNKNOWN


def eventually_nonincreasing(seq_blocks: np.ndarray, start: int) -> bool:
    """Every entry of blocks[start:] is nonincreasing along the index."""
    tail = seq_blocks[start:]
    if len(tail) < 2:
        return True
    return bool(np.all(np.diff(tail, axis=0) <= 1e-15))


def blocks_eventually_nonincreasing(k: Kernel) -> str:
    """Check A(k), B(k) for k in the upper half of the stored (unfolded) window."""
    out = []
    for seq in (k.A_seq, k.B_up):
        if seq.hi < 4:
            continue
        w = seq.window(max(seq.lo, 0), seq.hi)
        out.append(eventually_nonincreasing(w, len(w) // 2))
    if not out:
        return UNKNOWN
    return HOLDS if all(out) else FAILS


def audit_hypotheses(k: Kernel, theorem: str, t: TailModel, consts: TailConstants,
                     regime: RegimeAudit | None = None, tau: int | None = None) -> dict:
    """Status of every hypothesis of the chosen theorem.

    Class memberships are never inferred from data: they are either
    asserted for the family or reported as unknown.
    """
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}")
    regime = audit_regime(k) if regime is None else regime
    stoch = regime.regime == STOCHASTIC_A
    out = {}
    if theorem in ("T1", "T3", "T4"):
        out["A stochastic"] = HOLDS if stoch else FAILS
        out["sigma < 0"] = HOLDS if (regime.sigma is not None and regime.sigma < 0) else FAILS
        mean_ok = 0 < t.mean < math.inf
        out["Y has positive finite mean"] = HOLDS if mean_ok else FAILS
        te = equilibrium(t) if mean_ok else None
    else:
        out["A strictly substochastic"] = FAILS if stoch else HOLDS
        te = None
    if theorem in ("T1", "T4"):
        ok = consts.has("cA") or consts.has("cB")
        nz = ok and any(np.any(v > 0) for v in (consts.cA, consts.cB) if v is not None)
        out["cA, cB given and not both zero"] = HOLDS if nz else FAILS
    if theorem == "T1":
        out["Y_e in S"] = _class(te, "S") if te is not None else UNKNOWN
    if theorem == "T2":
        nz = any(v is not None and np.any(v > 0) for v in (consts.CA, consts.CB))
        out["CA, CB given and not both zero"] = HOLDS if nz else FAILS
        out["Y in S"] = _class(t, "S")
    if theorem == "T3":
        given = [v for v in (consts.CAE, consts.CBE) if v is not None]
        nz = any(np.any(v > 0) for v in given)
        out["CAE, CBE given and not both zero"] = HOLDS if nz else FAILS
        if tau is not None and given:
            out["CAE, CBE have tau columns"] = HOLDS if all(v.shape[1] == tau for v in given) else FAILS
    if theorem in ("T3", "T4"):
        out["Y_e in S_loc(1)"] = _class(te, "S_loc1") if te is not None else UNKNOWN
        eni = t.pmf_eventually_nonincreasing
        out["Y in L_loc(1) or P(Y = k) eventually nonincreasing"] = _either(
            _class(t, "L_loc1"), HOLDS if eni else (FAILS if eni is False else UNKNOWN))
    if theorem == "T4":
        out["A(k), B(k) eventually nonincreasing"] = blocks_eventually_nonincreasing(k)
    if theorem == "T5":
        nz = any(v is not None and np.any(v > 0) for v in (consts.CA, consts.CB))
        out["CA, CB given and not both zero"] = HOLDS if nz else FAILS
        out["Y in S_loc(1)"] = _class(t, "S_loc1")
        eni = t.pmf_eventually_nonincreasing
        # a finite down window gives an entire generating function of A(-k)
        out["r_A- > 1 or P(Y = k) eventually nonincreasing"] = _either(
            HOLDS, HOLDS if eni else UNKNOWN)
    return out


# -- report --------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticReport:
    theorem: str
    prefactor: np.ndarray
    reference_sequence: str
    empirical_ratios: RatioSeries | None
    hypothesis_audit: dict
    convergence_gap: float | None
    constants: TailConstants
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        r = self.empirical_ratios
        return {
            "theorem": self.theorem,
            "prefactor": self.prefactor.tolist(),
            "reference_sequence": self.reference_sequence,
            "hypothesis_audit": self.hypothesis_audit,
            "convergence_gap": self.convergence_gap,
            "constants": self.constants.to_dict(),
            "ratio_drift": None if r is None else r.drift,
            "ratio_monotone": None if r is None else r.monotone,
            "ratio_toward_prefactor": None if r is None else r.toward(self.prefactor),
            "ratio_k_max": None if r is None else int(r.k[-1]),
            **self.extra,
        }


def choose_theorem(regime: RegimeAudit, consts: TailConstants) -> str:
    if regime.regime == STOCHASTIC_A:
        if consts.has("CAE") or consts.has("CBE"):
            return "T3"
        return "T1"
    return "T5"


def prefactor(theorem: str, k: Kernel, art: MatanArtifacts, sr: StationaryResult,
              consts: TailConstants, regime: RegimeAudit, tau: int | None = None) -> np.ndarray:
    x0, xbar0 = sr.x0, sr.xbar_seq[0]
    kc = k.closed()
    if theorem in ("T1", "T3", "T4"):
        pi = perron_left(kc.A_sum()).pi
        if theorem == "T3":
            return constant_T3(x0, xbar0, consts.CAE, consts.CBE, regime.sigma, pi, tau)
        return constant_T1(x0, xbar0, consts.cA, consts.cB, regime.sigma, pi)
    return constant_T2(x0, xbar0, consts.CA, consts.CB, kc.A_sum())


def analyze(k: Kernel, art: MatanArtifacts, sr: StationaryResult, theorem: str = "auto",
            t: TailModel | None = None, k_grid=None, consts: TailConstants | None = None) -> AsymptoticReport:
    """Prefactor, hypothesis audit and ratio series for one theorem."""
    regime = audit_regime(k)
    if t is None:
        if k.tail is None:
            raise ValueError("kernel declares no tail: nothing to compare against")
        t = tail_from_spec(k.tail)
    consts = estimate_tail_constants(k, t) if consts is None else consts
    from .period import detect_period
    try:
        tau = detect_period(k).tau
    except ValueError:
        tau = None
    if theorem == "auto":
        theorem = choose_theorem(regime, consts)
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}")
    pf = prefactor(theorem, k, art, sr, consts, regime, tau)
    audit = audit_hypotheses(k, theorem, t, consts, regime, tau)
    mode = MODE_OF[theorem]
    ratios, gap = None, None
    top = min(sr.K, sr.meta.get("trusted_K", sr.K))
    if k_grid is None and top >= 10:
        k_grid = log_grid(1, top)
    if k_grid is not None and len(k_grid):
        ratios = empirical_ratio(sr, t, mode, k_grid)
        gap = ratios.gap(pf)
    extra = {}
    if theorem in ("T2", "T5") and consts.has("CA"):
        down = art.phi.window(art.phi.lo, 0).sum(axis=0)
        alt = constant_T2_factored(sr.x0, sr.xbar_seq[0], consts.CA, consts.CB, down, art.R)
        extra["factored_prefactor_diff"] = float(np.abs(alt - pf).max())
    return AsymptoticReport(theorem, pf, REFERENCE[mode], ratios, audit, gap, consts, extra)
