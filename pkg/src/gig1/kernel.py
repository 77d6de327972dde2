"""GI/G/1-type kernels: representation, validation, regime audit, Perron data.

A kernel is the block data of the transition matrix

    level 0 :  B(0)   B(1)   B(2)   ...
    level 1 :  B(-1)  A(0)   A(1)   ...
    level 2 :  B(-2)  A(-1)  A(0)   ...
    ...

Stored blocks are exact.  Mass beyond the stored window is described by
an optional :class:`TailSpec`; it is inferred from the row deficits of
the level rows and folded back into the blocks by :meth:`Kernel.closed`
before any numerics run.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .seq import MatrixSeq

ROW_TOL = 1e-10
TAIL_FAMILIES = ("pareto", "geometric", "table", "equilibrium")
_TAIL_KEYS = {"family", "params", "cA", "cB", "CA", "CB", "CAE", "CBE", "B_down"}
_TOP_KEYS = {"M0", "M", "A", "B", "tail"}


class KernelError(ValueError):
    """Raised with the full list of violated kernel invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class PerronError(ValueError):
    pass


def _arr(x, ndim):
    if x is None:
        return None
    a = np.asarray(x, dtype=float)
    if a.ndim != ndim:
        raise KernelError([f"expected a {ndim}-d array, got shape {a.shape}"])
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TailSpec:
    """Analytic description of the blocks beyond the stored window.

    ``family`` names the reference distribution Y (see :mod:`gig1.tails`).
    The constants are the tail limits used by the asymptotic formulas
    (see :mod:`gig1.asymptotics`); any subset may be given.  ``params`` may
    carry ``mass_A`` / ``mass_B`` (per-row mass beyond the window, checked
    against the row deficits) and ``mean_A`` / ``mean_B`` (per-row first
    moment of the omitted tail, used by :meth:`Kernel.closed` to keep the
    drift).
    ``B_down="repeat_last"`` means B(-l) equals the deepest stored down
    block for every deeper level.
    """

    family: str
    params: dict = field(default_factory=dict)
    cA: np.ndarray | None = None
    cB: np.ndarray | None = None
    CA: np.ndarray | None = None
    CB: np.ndarray | None = None
    CAE: np.ndarray | None = None
    CBE: np.ndarray | None = None
    B_down: str | None = None

    def __post_init__(self):
        for name, nd in (("cA", 1), ("cB", 1), ("CA", 2), ("CB", 2), ("CAE", 2), ("CBE", 2)):
            object.__setattr__(self, name, _arr(getattr(self, name), nd))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"family": self.family, "params": _jsonable(self.params)}
        for name in ("cA", "cB", "CA", "CB", "CAE", "CBE"):
            v = getattr(self, name)
            if v is not None:
                d[name] = v.tolist()
        if self.B_down is not None:
            d["B_down"] = self.B_down
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TailSpec":
        extra = set(d) - _TAIL_KEYS
        if extra:
            raise KernelError([f"unknown tail field(s): {sorted(extra)}"])
        if "family" not in d:
            raise KernelError(["tail.family missing"])
        return cls(family=d["family"], params=dict(d.get("params", {})),
                   **{k: d.get(k) for k in ("cA", "cB", "CA", "CB", "CAE", "CBE", "B_down")})

    def first_moment_finite(self) -> bool | None:
        """Whether a distribution of this family has a finite mean, or None if undecidable."""
        p = self.params
        if self.family == "pareto":
            return float(p.get("gamma", 0)) > 1
        if self.family == "geometric":
            return True
        if self.family == "table":
            if "tail_exponent" in p:
                return float(p["tail_exponent"]) > 1
            return None
        if self.family == "equilibrium":
            g = p.get("gamma")
            return None if g is None else float(g) > 2
        return None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass(frozen=True)
class Kernel:
    """Block data of a GI/G/1-type chain.

    ``A`` maps k to the M x M block A(k).  ``B`` maps k to B(k): M0 x M0 for
    k = 0, M0 x M for k >= 1 and M x M0 for k <= -1.  Construction does
    not validate; use :func:`validate_kernel` or :func:`load_kernel`.
    """

    M0: int
    M: int
    A: dict
    B: dict
    tail: TailSpec | None = None
    is_closed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "A", {int(k): _arr(v, 2) for k, v in sorted(self.A.items())})
        object.__setattr__(self, "B", {int(k): _arr(v, 2) for k, v in sorted(self.B.items())})

    # -- window geometry -------------------------------------------------
    @property
    def Ka_plus(self) -> int:
        return max([k for k in self.A if k > 0], default=0)

    @property
    def Ka_minus(self) -> int:
        return max([-k for k in self.A if k < 0], default=0)

    @property
    def Kb_plus(self) -> int:
        return max([k for k in self.B if k > 0], default=0)

    @property
    def Kb_minus(self) -> int:
        return max([-k for k in self.B if k < 0], default=0)

    @property
    def span(self) -> int:
        return max(self.Ka_plus, self.Ka_minus, self.Kb_plus, self.Kb_minus, 1)

    @property
    def repeat_last(self) -> bool:
        return self.tail is not None and self.tail.B_down == "repeat_last"

    # -- block access ----------------------------------------------------
    def A_block(self, k: int) -> np.ndarray:
        return self.A[k] if k in self.A else np.zeros((self.M, self.M))

    def B_block(self, k: int) -> np.ndarray:
        if k in self.B:
            return self.B[k]
        if k == 0:
            return np.zeros((self.M0, self.M0))
        if k > 0:
            return np.zeros((self.M0, self.M))
        if self.repeat_last and self.Kb_minus and -k > self.Kb_minus:
            return self.B[-self.Kb_minus]
        return np.zeros((self.M, self.M0))

    @cached_property
    def A_seq(self) -> MatrixSeq:
        return MatrixSeq.from_dict(self.A, (self.M, self.M), lo=-self.Ka_minus, hi=self.Ka_plus)

    @cached_property
    def B_up(self) -> MatrixSeq:
        """B(1..Kb+) as a sequence starting at index 1."""
        return MatrixSeq.from_dict({k: v for k, v in self.B.items() if k > 0},
                                   (self.M0, self.M), lo=1, hi=self.Kb_plus)

    @cached_property
    def B_down(self) -> MatrixSeq:
        """B(-1..-Kb-) stored at indices 1..Kb-."""
        return MatrixSeq.from_dict({-k: v for k, v in self.B.items() if k < 0},
                                   (self.M, self.M0), lo=1, hi=self.Kb_minus)

    def A_sum(self) -> np.ndarray:
        return self.A_seq.total()

    def A_sum_closed(self) -> np.ndarray:
        return self.closed().A_sum()

    # -- row sums of T ---------------------------------------------------
    def level_row_sums(self, level: int) -> np.ndarray:
        """Row sums of the stored blocks leaving ``level``."""
        if level == 0:
            s = self.B_block(0).sum(axis=1)
            for k, v in self.B.items():
                if k > 0:
                    s = s + v.sum(axis=1)
            return s
        s = self.B_block(-level).sum(axis=1)
        for k, v in self.A.items():
            if level + k >= 1:
                s = s + v.sum(axis=1)
        return s

    def deficits(self) -> tuple[np.ndarray, np.ndarray]:
        """Row deficits (level 0, deep levels) attributed to the declared tail."""
        deep = max(self.Ka_minus, self.Kb_minus) + 1
        return 1.0 - self.level_row_sums(0), 1.0 - self.level_row_sums(deep)

    # -- closure ---------------------------------------------------------
    def closed(self) -> "Kernel":
        """Kernel with the tail deficit folded into the stored blocks.

        The deficit of each row is placed in the deepest stored block with
        a nonzero entry in that row, proportionally to that row, so support
        patterns (and the period) are preserved.  When ``mean_A`` /
        ``mean_B`` are declared, the mass is split between two adjacent
        positions beyond the window so that the first moment is kept too.
        """
        if self.is_closed or self.tail is None:
            return self if self.is_closed else _replace(self, is_closed=True)
        defB, defA = self.deficits()
        p = self.tail.params
        A = _fold(dict(self.A), np.clip(defA, 0, None), p.get("mean_A"), self.Ka_plus, range(0, self.M))
        Bpos = {k: v for k, v in self.B.items() if k >= 0}
        Bpos = _fold(Bpos, np.clip(defB, 0, None), p.get("mean_B"), self.Kb_plus, range(0, self.M0))
        B = dict(self.B)
        B.update(Bpos)
        return Kernel(self.M0, self.M, A, B, self.tail, True)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "M0": self.M0, "M": self.M,
            "A": [{"k": k, "rows": v.tolist()} for k, v in self.A.items()],
            "B": [{"k": k, "rows": v.tolist()} for k, v in self.B.items()],
        }
        if self.tail is not None:
            d["tail"] = self.tail.to_dict()
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _replace(k: Kernel, **kw) -> Kernel:
    d = dict(M0=k.M0, M=k.M, A=k.A, B=k.B, tail=k.tail, is_closed=k.is_closed)
    d.update(kw)
    return Kernel(**d)


def _fold(blocks: dict, mass: np.ndarray, mean, kmax: int, rows) -> dict:
    if not np.any(mass > 0):
        return blocks
    blocks = {k: np.array(v) for k, v in blocks.items()}
    shape = next(iter(blocks.values())).shape
    for i in rows:
        if mass[i] <= 0:
            continue
        ks = [k for k in sorted(blocks, reverse=True) if blocks[k][i].sum() > 0]
        if not ks:
            raise KernelError([f"row {i}: tail mass but no stored block to carry it"])
        pattern = blocks[ks[0]][i] / blocks[ks[0]][i].sum()
        if mean is None:
            blocks[ks[0]][i] += mass[i] * pattern
            continue
        m = float(np.atleast_1d(mean)[i]) / mass[i]
        if m <= kmax:
            raise KernelError([f"row {i}: declared tail mean below the window edge"])
        lo = int(math.floor(m))
        w_hi = m - lo
        for k, w in ((lo, 1.0 - w_hi), (lo + 1, w_hi)):
            if w <= 0:
                continue
            blocks.setdefault(k, np.zeros(shape))
            blocks[k][i] += w * mass[i] * pattern
    return blocks


# -- loading and validation ----------------------------------------------

def parse_kernel(d: dict) -> Kernel:
    if not isinstance(d, dict):
        raise KernelError(["kernel file must hold a JSON object"])
    errs = []
    extra = set(d) - _TOP_KEYS
    if extra:
        errs.append(f"unknown field(s): {sorted(extra)}")
    for key in ("M0", "M", "A", "B"):
        if key not in d:
            errs.append(f"missing field {key}")
    if errs:
        raise KernelError(errs)
    M0, M = d["M0"], d["M"]
    if not (isinstance(M0, int) and isinstance(M, int) and M0 > 0 and M > 0):
        raise KernelError(["M0 and M must be positive integers"])

    def blocks(name):
        out = {}
        for entry in d[name]:
            if not isinstance(entry, dict) or set(entry) != {"k", "rows"}:
                errs.append(f"{name}: each block needs exactly the fields k and rows")
                continue
            k = entry["k"]
            if not isinstance(k, int):
                errs.append(f"{name}: block index {k!r} is not an integer")
                continue
            if k in out:
                errs.append(f"{name}({k}) given twice")
                continue
            try:
                arr = np.array(entry["rows"], dtype=float)
            except (TypeError, ValueError):
                errs.append(f"{name}({k}): rows are not a numeric matrix")
                continue
            if arr.ndim != 2:
                errs.append(f"{name}({k}): rows are not a matrix")
                continue
            out[k] = arr
        return out

    A, B = blocks("A"), blocks("B")
    tail = None
    if d.get("tail") is not None:
        try:
            tail = TailSpec.from_dict(d["tail"])
        except KernelError as e:
            errs.extend(e.violations)
    if errs:
        raise KernelError(errs)
    return Kernel(M0, M, A, B, tail)


def load_kernel(spec_text: str) -> Kernel:
    """Parse and validate a kernel from JSON text.

    Raises
    ------
    KernelError
        Listing every violated invariant.
    """
    try:
        d = json.loads(spec_text)
    except json.JSONDecodeError as e:
        raise KernelError([f"parse failure: {e}"]) from None
    k = parse_kernel(d)
    errs = validate_kernel(k)
    if errs:
        raise KernelError(errs)
    return k


def read_kernel(path) -> Kernel:
    with open(path) as fh:
        return load_kernel(fh.read())


def write_kernel(k: Kernel, path) -> None:
    with open(path, "w") as fh:
        fh.write(k.dumps())
        fh.write("\n")


def validate_kernel(k: Kernel) -> list[str]:
    """Return the list of violated invariants (empty when valid)."""
    errs = []
    M0, M = k.M0, k.M
    for kk, v in k.A.items():
        if v.shape != (M, M):
            errs.append(f"dimension mismatch: A({kk}) has shape {v.shape}, expected {(M, M)}")
    for kk, v in k.B.items():
        want = (M0, M0) if kk == 0 else (M0, M) if kk > 0 else (M, M0)
        if v.shape != want:
            errs.append(f"dimension mismatch: B({kk}) has shape {v.shape}, expected {want}")
    if errs:
        return errs
    for name, blocks in (("A", k.A), ("B", k.B)):
        for kk, v in blocks.items():
            if not np.all(np.isfinite(v)):
                errs.append(f"{name}({kk}) has non-finite entries")
            elif v.min() < 0:
                errs.append(f"negative entry in {name}({kk})")
            elif v.max() > 1:
                errs.append(f"entry above 1 in {name}({kk})")
    if not k.A:
        errs.append("no A blocks")
    if errs:
        return errs

    t = k.tail
    if t is not None:
        if t.family not in TAIL_FAMILIES:
            errs.append(f"unknown tail family {t.family!r}")
        if t.B_down not in (None, "repeat_last"):
            errs.append(f"unknown B_down mode {t.B_down!r}")
        for name, shape in (("cA", (M,)), ("cB", (M0,)), ("CA", (M, M)), ("CB", (M0, M))):
            v = getattr(t, name)
            if v is not None and v.shape != shape:
                errs.append(f"tail.{name} has shape {v.shape}, expected {shape}")
        for name, rows in (("CAE", M), ("CBE", M0)):
            v = getattr(t, name)
            if v is not None and v.shape[0] != rows:
                errs.append(f"tail.{name} has {v.shape[0]} rows, expected {rows}")
        for name in ("cA", "cB", "CA", "CB", "CAE", "CBE"):
            v = getattr(t, name)
            if v is not None and v.min() < 0:
                errs.append(f"tail.{name} has negative entries")

    deep = max(k.Ka_minus, k.Kb_minus) + 1
    levels = range(0, deep + 1)
    sums = {l: k.level_row_sums(l) for l in levels}
    for l, s in sums.items():
        for i, v in enumerate(s):
            if v > 1 + ROW_TOL:
                errs.append(f"row sum exceeds 1: level {l}, phase {i} sums to {v:.12g}")
    if errs:
        return errs
    if t is None:
        for l, s in sums.items():
            for i, v in enumerate(s):
                if abs(v - 1) > ROW_TOL:
                    errs.append(f"row sum below 1 without a tail: level {l}, phase {i} sums to {v:.12g}")
    else:
        ref = sums[deep]
        for l in range(1, deep):
            bad = np.abs(sums[l] - ref) > ROW_TOL
            for i in np.flatnonzero(bad):
                errs.append(f"level {l}, phase {i}: row deficit {1 - sums[l][i]:.3g} differs "
                            f"from the deep-level tail deficit {1 - ref[i]:.3g}")
        for key, n in (("mean_A", M), ("mean_B", M0), ("mass_A", M), ("mass_B", M0)):
            if key in t.params and len(np.atleast_1d(t.params[key])) != n:
                errs.append(f"tail.params.{key} must have {n} entries")
        defB, defA = 1 - sums[0], 1 - ref
        for key, got in (("mass_A", defA), ("mass_B", defB)):
            if key in t.params and len(np.atleast_1d(t.params[key])) == len(got):
                want = np.atleast_1d(np.asarray(t.params[key], dtype=float))
                for i in np.flatnonzero(np.abs(want - got) > ROW_TOL):
                    errs.append(f"row sum mismatch: declared tail.params.{key}[{i}] = {want[i]:.12g} "
                                f"but the stored blocks leave {got[i]:.12g}")

    comps = scc_classes(k.A_sum())
    if len(comps) > 1:
        errs.append(f"A is reducible on its support graph; classes {comps}")
    return errs


# -- graph helpers -------------------------------------------------------

def scc_classes(m: np.ndarray) -> list[list[int]]:
    """Strongly connected components of the support digraph of ``m``."""
    m = np.asarray(m)
    n, labels = connected_components(csr_matrix(m > 0), directed=True, connection="strong")
    return [sorted(np.flatnonzero(labels == c).tolist()) for c in range(n)]


def is_irreducible(m: np.ndarray) -> bool:
    return len(scc_classes(m)) == 1


# -- Perron data ---------------------------------------------------------

@dataclass(frozen=True)
class PerronData:
    pi: np.ndarray
    sp: float
    residual: float = 0.0


def _cw_power(m: np.ndarray, shift: float, cap: int, rtol: float) -> float | None:
    """Collatz-Wielandt bracketing of sp(m + shift*I) - shift; None on cap."""
    n = m.shape[0]
    mm = m + shift * np.eye(n)
    x = np.full(n, 1.0 / n)
    for _ in range(cap):
        y = mm @ x
        ratio = y / x
        lo, hi = ratio.min(), ratio.max()
        if hi - lo <= rtol * max(hi - shift, 1e-300) or hi == 0:
            return 0.5 * (lo + hi) - shift
        x = y / y.sum()
        if np.any(x <= 0):
            return None
    return None


def spectral_radius(m, cap: int = 200000, rtol: float = 1e-12) -> float:
    """Spectral radius of a nonnegative matrix.

    Reducible input is split into strongly connected classes (the
    spectrum of a reducible matrix is the union of the spectra of its
    diagonal class blocks).  Each class is bracketed by Collatz-Wielandt
    bounds from power iteration; a positive shift is used when the plain
    iteration stalls (periodic blocks).
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("square matrix required")
    if not np.all(np.isfinite(m)) or m.min() < 0:
        raise ValueError("finite nonnegative matrix required")
    best = 0.0
    for cls in scc_classes(m):
        blk = m[np.ix_(cls, cls)]
        if not blk.any():
            continue
        r = _cw_power(blk, 0.0, 2000, rtol)
        if r is None:
            r = _cw_power(blk, float(blk.sum(axis=1).max()), cap, rtol)
        if r is None:
            raise RuntimeError("spectral_radius: iteration cap exceeded")
        best = max(best, r)
    return best


def perron_left(m) -> PerronData:
    """Left Perron vector (normalized to sum 1) and spectral radius.

    Raises
    ------
    PerronError
        If ``m`` is reducible (the strongly connected classes are
        reported) or the eigenvector cannot be resolved to 1e-12.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    comps = scc_classes(m)
    if len(comps) > 1:
        raise PerronError(f"reducible matrix; strongly connected classes {comps}")
    sp = spectral_radius(m)
    # power iteration on the transpose, shifted so periodic matrices converge
    mm = (m + sp * np.eye(n)) / 2 if sp > 0 else m
    x = np.full(n, 1.0 / n)
    for _ in range(5000):
        y = x @ mm
        y /= y.sum()
        if np.abs(y - x).max() < 1e-15:
            x = y
            break
        x = y
    # polish: null vector of (m^T - sp I)
    _, _, vt = np.linalg.svd((m - sp * np.eye(n)).T)
    v = vt[-1]
    v = v * np.sign(v.sum())
    if v.min() >= -1e-12 * np.abs(v).max():
        x = np.clip(v, 0, None)
        x /= x.sum()
    res = float(np.abs(x @ m - sp * x).max())
    if res > 1e-12 * max(1.0, sp):
        raise PerronError(f"Perron vector residual {res:.3g} above 1e-12")
    return PerronData(pi=x, sp=sp, residual=res)


# -- regime audit --------------------------------------------------------

AUDIT_STATES = 3000
STOCHASTIC_A = "StochasticA"
SUBSTOCHASTIC_A = "SubstochasticA"


@dataclass(frozen=True)
class RegimeAudit:
    regime: str
    sigma: float | None
    first_moment_A_finite: bool | None
    first_moment_B_finite: bool | None
    positive_recurrent: bool
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "regime": self.regime, "sigma": self.sigma,
            "first_moment_A_finite": self.first_moment_A_finite,
            "first_moment_B_finite": self.first_moment_B_finite,
            "positive_recurrent": self.positive_recurrent,
            "notes": list(self.notes),
        }


def drift(k: Kernel, pi: np.ndarray | None = None) -> float:
    """pi * sum_k k A(k) * e on the closed kernel."""
    kc = k.closed()
    if pi is None:
        pi = perron_left(kc.A_sum()).pi
    seq = kc.A_seq
    mean_rows = np.einsum("k,kij->i", seq.indices().astype(float), seq.blocks)
    return float(pi @ mean_rows)


def level_matrix(k: Kernel, N: int, augment: bool = True) -> np.ndarray:
    """Dense transition matrix on levels 0..N of the closed kernel.

    With ``augment`` every jump beyond level N is redirected to level N
    (last-level augmentation), otherwise that mass is dropped.
    """
    kc = k.closed()
    M0, M = kc.M0, kc.M
    n = M0 + N * M
    T = np.zeros((n, n))

    def cols(level):
        return slice(0, M0) if level == 0 else slice(M0 + (level - 1) * M, M0 + level * M)

    T[cols(0), cols(0)] = kc.B_block(0)
    if N >= 1:
        up = kc.B_up.window(1, N - 1)
        if N > 1:
            T[cols(0), M0:M0 + (N - 1) * M] = up.transpose(1, 0, 2).reshape(M0, -1)
        if augment:
            T[cols(0), cols(N)] += kc.B_up.window(N, max(N, kc.B_up.hi)).sum(axis=0)
    Aseq = kc.A_seq
    tails = Aseq.tail_sums()
    for l in range(1, N + 1):
        r = cols(l)
        T[r, cols(0)] = kc.B_block(-l)
        blk = Aseq.window(1 - l, N - l)
        T[r, M0:] = blk.transpose(1, 0, 2).reshape(M, -1)
        if augment and Aseq.hi > N - l:
            # sum_{k > N-l} A(k)
            T[r, cols(N)] += tails[N - l - Aseq.lo] if N - l >= Aseq.lo else Aseq.total()
    return T


def audit_regime(k: Kernel) -> RegimeAudit:
    """Classify regime I/II and set the recurrence flags; never raises."""
    notes = []
    kc = k.closed()
    Asum = kc.A_sum()
    rows = Asum.sum(axis=1)
    stochastic = bool(np.all(np.abs(rows - 1) <= ROW_TOL))
    if not stochastic and np.any(rows > 1 + ROW_TOL):
        notes.append("A has a row sum above 1")
    if k.tail is None:
        fmA = fmB = True
    else:
        fm = k.tail.first_moment_finite()
        fmA = fmB = fm
        if fm is None:
            notes.append(f"first moments undecidable for tail family {k.tail.family!r}: unknown")
    sigma = None
    if stochastic:
        try:
            pd = perron_left(Asum)
            sigma = drift(kc, pd.pi)
        except PerronError as e:
            notes.append(f"Perron data unavailable: {e}")
        pr = bool(sigma is not None and sigma < 0 and fmB is True)
        if fmB is None:
            notes.append("positive recurrence not asserted: B first moment unknown")
        if fmA is False:
            notes.append("sum |k| A(k) diverges; regime I asymptotics do not apply")
    else:
        pr = True
    W = 3 * k.span
    cap = max(2, AUDIT_STATES // k.M)
    if W > cap:
        notes.append(f"irreducibility window capped at {cap} levels (3 x span = {W})")
        W = cap
    try:
        T = level_matrix(kc, W, augment=True)
        notes.append(f"T {'irreducible' if is_irreducible(T) else 'REDUCIBLE'} on levels 0..{W}")
    except MemoryError:
        notes.append("T window too large to audit irreducibility")
    return RegimeAudit(STOCHASTIC_A if stochastic else SUBSTOCHASTIC_A, sigma,
                       fmA, fmB, pr, tuple(notes))
