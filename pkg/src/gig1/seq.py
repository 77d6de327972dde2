"""Indexed sequences of equally shaped matrices.

Every block family in the package (the kernel blocks, Phi, G, L, R, R0
and F) is a :class:`MatrixSeq`: a dense stack of blocks for the integer
indices ``lo..hi`` together with a bound on the entrywise mass that lies
outside the stored range or was lost to iteration error.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class MatrixSeq:
    """Blocks ``X(lo), ..., X(hi)`` stored as an array of shape (n, rows, cols).

    Indices outside ``lo..hi`` read as zero blocks.
    """

    lo: int
    blocks: np.ndarray
    residual_bound: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=float)
        if b.ndim != 3:
            raise ValueError(f"blocks must be 3-d, got shape {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)
        if self.residual_bound < 0:
            raise ValueError("residual_bound must be nonnegative")

    @classmethod
    def empty(cls, shape: tuple[int, int], lo: int = 1) -> "MatrixSeq":
        return cls(lo, np.zeros((0, *shape)))

    @classmethod
    def from_dict(cls, blocks: dict[int, np.ndarray], shape: tuple[int, int],
                  lo: int | None = None, hi: int | None = None) -> "MatrixSeq":
        """Build a contiguous sequence from a sparse ``{k: block}`` map."""
        keys = list(blocks)
        if lo is None:
            lo = min(keys) if keys else 1
        if hi is None:
            hi = max(keys) if keys else lo - 1
        arr = np.zeros((max(hi - lo + 1, 0), *shape))
        for k, blk in blocks.items():
            if lo <= k <= hi:
                arr[k - lo] = blk
        return cls(lo, arr)

    @property
    def hi(self) -> int:
        return self.lo + self.blocks.shape[0] - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.blocks.shape[1], self.blocks.shape[2]

    def __len__(self) -> int:
        return self.blocks.shape[0]

    def __getitem__(self, k: int) -> np.ndarray:
        if self.lo <= k <= self.hi:
            return self.blocks[k - self.lo]
        return np.zeros(self.shape)

    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Dense copy of blocks ``lo..hi`` with zeros outside the stored range."""
        out = np.zeros((max(hi - lo + 1, 0), *self.shape))
        a, b = max(lo, self.lo), min(hi, self.hi)
        if a <= b:
            out[a - lo:b - lo + 1] = self.blocks[a - self.lo:b - self.lo + 1]
        return out

    def total(self) -> np.ndarray:
        return self.blocks.sum(axis=0) if len(self) else np.zeros(self.shape)

    def tail_sums(self) -> np.ndarray:
        """``out[i] = sum_{l > lo + i} X(l)`` for every stored index.

        Accumulated from the far end so that small tails keep their
        relative accuracy.
        """
        out = np.zeros_like(self.blocks)
        if len(self) > 1:
            out[:-1] = np.cumsum(self.blocks[:0:-1], axis=0)[::-1]
        return out

    def with_blocks(self, blocks: np.ndarray, **kw) -> "MatrixSeq":
        return MatrixSeq(kw.get("lo", self.lo), blocks,
                         kw.get("residual_bound", self.residual_bound),
                         kw.get("meta", dict(self.meta)))

    def rows(self) -> Iterable[tuple[int, int, int, float]]:
        for n, blk in enumerate(self.blocks):
            for (i, j), v in np.ndenumerate(blk):
                yield self.lo + n, i, j, float(v)

    def to_csv(self, path) -> None:
        """Write ``k,row,col,value`` records."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "row", "col", "value"])
            for k, i, j, v in self.rows():
                w.writerow([k, i, j, repr(v)])


def read_seq_csv(path) -> MatrixSeq:
    with open(path, newline="") as fh:
        recs = [(int(r["k"]), int(r["row"]), int(r["col"]), float(r["value"]))
                for r in csv.DictReader(fh)]
    if not recs:
        raise ValueError(f"{path}: no records")
    ks = [r[0] for r in recs]
    lo, hi = min(ks), max(ks)
    rows = max(r[1] for r in recs) + 1
    cols = max(r[2] for r in recs) + 1
    arr = np.zeros((hi - lo + 1, rows, cols))
    for k, i, j, v in recs:
        arr[k - lo, i, j] = v
    return MatrixSeq(lo, arr)


def cross_sum(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``C[k] = sum_{m>=1} X[k+m] @ Y[m]`` for ``k = 0..len(X)-1``.

    ``X`` holds blocks for indices ``0..n-1`` and ``Y`` for ``0..h-1``
    (``Y[0]`` is ignored).  Both are treated as zero beyond their ends.
    Evaluated entrywise with direct correlation, so there is no FFT
    round-off floor on small tail entries.
    """
    n, p, q = X.shape
    h, q2, r = Y.shape
    if q != q2:
        raise ValueError("inner block dimensions differ")
    out = np.zeros((n, p, r))
    if h <= 1 or n == 0:
        return out
    y0 = Y.copy()
    y0[0] = 0.0
    pad = np.zeros((n + h, p, q))
    pad[:n] = X
    for i in range(p):
        for l in range(q):
            x = pad[:, i, l]
            if not x.any():
                continue
            for j in range(r):
                y = y0[:, l, j]
                if y.any():
                    out[:, i, j] += np.correlate(x, y, mode="valid")[:n]
    return out
