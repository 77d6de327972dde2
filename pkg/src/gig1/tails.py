"""Discrete heavy-tail toolkit and the example kernel generators.

Distributions live on the nonnegative integers.  ``ccdf(k) = P(Y > k)``
with ``ccdf(-1) = 1``.  Class membership (long-tailed, subexponential,
S*, and their local span-one versions) is asserted analytically per
family; :func:`class_diagnostics` only illustrates it on finite grids.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import gammainc, gammaln, zeta

from .kernel import Kernel, TailSpec

CLASSES = ("L", "S", "S*", "L_loc1", "S_loc1")


def _k(k):
    return np.asarray(k, dtype=float)


class TailModel:
    """Base class; subclasses fill in the family-specific sums."""

    family: str = ""

    @property
    def params(self) -> dict:
        raise NotImplementedError

    def ccdf(self, k):
        raise NotImplementedError

    def pmf(self, k):
        k = _k(k)
        return self.ccdf(k - 1) - self.ccdf(k)

    @property
    def mean(self) -> float:
        """E[Y] = sum_{j>=0} P(Y > j)."""
        return self.ccdf_sum_from(0)

    def ccdf_sum_from(self, m: int) -> float:
        """sum_{j>=m} P(Y > j)."""
        raise NotImplementedError

    def weighted_ccdf_sum_from(self, m: int) -> float:
        """sum_{j>=m} (j+1) P(Y > j)."""
        raise NotImplementedError

    def ccdf_lattice(self, a: int, h: int, l0: int = 0) -> float:
        """sum_{l>=l0} P(Y > a + l h)."""
        raise NotImplementedError

    def pmf_lattice(self, k: int, h: int, nu: int = 0, l0: int = 0) -> float:
        """sum_{l>=l0} P(Y = k + l h + nu)."""
        a = k + nu
        return self.ccdf_lattice(a - 1, h, l0) - self.ccdf_lattice(a, h, l0)

    def partial_mean_above(self, n: int) -> float:
        """E[Y; Y > n] = (n+1) P(Y > n) + sum_{j>n} P(Y > j)."""
        return (n + 1) * float(self.ccdf(n)) + self.ccdf_sum_from(n + 1)

    @property
    def claimed_classes(self) -> frozenset:
        return frozenset()

    @property
    def pmf_eventually_nonincreasing(self) -> bool | None:
        return None

    def __repr__(self):
        return f"{type(self).__name__}({self.params})"


@dataclass(frozen=True, repr=False)
class DiscretePareto(TailModel):
    """pmf (k+1)^-g - (k+2)^-g, so P(Y > k) = (k+2)^-g."""

    gamma: float
    family = "pareto"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("DiscretePareto needs gamma > 0")

    @property
    def params(self):
        return {"gamma": self.gamma}

    def ccdf(self, k):
        k = _k(k)
        return np.where(k < -1, 1.0, np.power(np.maximum(k, -1) + 2, -self.gamma))

    def pmf(self, k):
        # (k+1)^-g (1 - ((k+1)/(k+2))^g) without cancellation
        k = _k(k)
        kk = np.maximum(k, 0)
        out = np.power(kk + 1, -self.gamma) * -np.expm1(self.gamma * np.log1p(-1.0 / (kk + 2)))
        return np.where(k < 0, 0.0, out)

    def ccdf_sum_from(self, m):
        if self.gamma <= 1:
            return math.inf
        return float(zeta(self.gamma, m + 2))

    def weighted_ccdf_sum_from(self, m):
        if self.gamma <= 2:
            return math.inf
        # (j+1)(j+2)^-g = (j+2)^(1-g) - (j+2)^-g
        return float(zeta(self.gamma - 1, m + 2) - zeta(self.gamma, m + 2))

    def ccdf_lattice(self, a, h, l0=0):
        if self.gamma <= 1:
            return math.inf
        return float(h ** -self.gamma * zeta(self.gamma, (a + 2) / h + l0))

    @property
    def claimed_classes(self):
        if self.gamma > 1:
            return frozenset(CLASSES)
        return frozenset({"L", "S", "L_loc1", "S_loc1"})

    @property
    def pmf_eventually_nonincreasing(self):
        return True


@dataclass(frozen=True, repr=False)
class Geometric(TailModel):
    """pmf p (1-p)^k, so P(Y > k) = (1-p)^(k+1)."""

    p: float
    family = "geometric"

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("Geometric needs 0 < p < 1")

    @property
    def params(self):
        return {"p": self.p}

    def ccdf(self, k):
        k = np.maximum(_k(k), -1)
        return np.power(1 - self.p, k + 1)

    def pmf(self, k):
        k = _k(k)
        return np.where(k < 0, 0.0, self.p * np.power(1 - self.p, np.maximum(k, 0)))

    def ccdf_sum_from(self, m):
        return float((1 - self.p) ** (m + 1) / self.p)

    def weighted_ccdf_sum_from(self, m):
        q = 1 - self.p
        # sum_{j>=m} (j+1) q^(j+1)
        return float(q ** (m + 1) * ((m + 1) / self.p + q / self.p ** 2))

    def ccdf_lattice(self, a, h, l0=0):
        q = 1 - self.p
        return float(q ** (a + l0 * h + 1) / (1 - q ** h))

    @property
    def pmf_eventually_nonincreasing(self):
        return True


@dataclass(frozen=True, repr=False)
class Table(TailModel):
    """Explicit pmf on 0..n-1 with a Pareto-shaped extension.

    Beyond the table, P(Y > k) = P(Y > n-1) ((n+1)/(k+2))^tail_exponent, so
    the leftover mass 1 - sum(pmf) is spread with a regularly varying tail.
    """

    pmf_table: tuple
    tail_exponent: float
    family = "table"
    _cc: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.asarray(self.pmf_table, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("Table needs a nonempty pmf list")
        if p.min() < 0:
            raise ValueError("Table pmf has negative entries")
        s = math.fsum(p)
        if s > 1 + 1e-12:
            raise ValueError("Table pmf sums above 1")
        if not self.tail_exponent > 0:
            raise ValueError("Table needs a positive tail exponent")
        object.__setattr__(self, "pmf_table", tuple(p.tolist()))
        # cc[j] = P(Y > j) for j = 0..n-1, accumulated from the far end
        tail = max(1.0 - s, 0.0)
        cc = tail + np.concatenate([np.cumsum(p[:0:-1])[::-1], [0.0]])
        object.__setattr__(self, "_cc", cc)

    @property
    def n(self):
        return len(self.pmf_table)

    @property
    def params(self):
        return {"pmf": list(self.pmf_table), "tail_exponent": self.tail_exponent}

    @property
    def _c(self):
        return self._cc[-1] * (self.n + 1) ** self.tail_exponent

    def ccdf(self, k):
        k = _k(k)
        n = self.n
        inside = np.clip(k, 0, n - 1).astype(int)
        ext = self._c * np.power(np.maximum(k, n - 1) + 2, -self.tail_exponent)
        return np.where(k < 0, 1.0, np.where(k <= n - 1, self._cc[inside], ext))

    def pmf(self, k):
        k = _k(k)
        n = self.n
        inside = np.asarray(self.pmf_table)[np.clip(k, 0, n - 1).astype(int)]
        return np.where(k < 0, 0.0, np.where(k <= n - 1, inside, self.ccdf(k - 1) - self.ccdf(k)))

    def ccdf_sum_from(self, m):
        n, g = self.n, self.tail_exponent
        head = math.fsum(self._cc[m:n - 1]) if m < n - 1 else 0.0
        if self._c == 0:
            return head
        if g <= 1:
            return math.inf
        return head + float(self._c * zeta(g, max(m, n - 1) + 2))

    def weighted_ccdf_sum_from(self, m):
        n, g = self.n, self.tail_exponent
        j = np.arange(m, n - 1)
        head = math.fsum((j + 1) * self._cc[m:n - 1]) if m < n - 1 else 0.0
        if self._c == 0:
            return head
        if g <= 2:
            return math.inf
        s = max(m, n - 1) + 2
        return head + float(self._c * (zeta(g - 1, s) - zeta(g, s)))

    def ccdf_lattice(self, a, h, l0=0):
        n, g = self.n, self.tail_exponent
        total = 0.0
        l = l0
        while a + l * h < n - 1:
            total += float(self.ccdf(a + l * h))
            l += 1
        if self._c == 0:
            return total
        if g <= 1:
            return math.inf
        return total + float(self._c * h ** -g * zeta(g, (a + 2) / h + l))

    @property
    def claimed_classes(self):
        if self._c == 0:
            return frozenset()
        if self.tail_exponent > 1:
            return frozenset(CLASSES)
        return frozenset({"L", "S", "L_loc1", "S_loc1"})


@dataclass(frozen=True, repr=False)
class Equilibrium(TailModel):
    """Y_e with P(Y_e = k) = P(Y > k) / E[Y]."""

    base: TailModel
    family = "equilibrium"

    def __post_init__(self):
        m = self.base.mean
        if not (0 < m < math.inf):
            raise ValueError(f"equilibrium needs 0 < E[Y] < inf, got {m}")

    @property
    def params(self):
        return {"base": self.base.family, **self.base.params}

    @property
    def base_mean(self):
        return self.base.mean

    def pmf(self, k):
        k = _k(k)
        return np.where(k < 0, 0.0, self.base.ccdf(k) / self.base_mean)

    def ccdf(self, k):
        k = _k(k)
        flat = np.atleast_1d(k).ravel()
        out = np.array([1.0 if x < 0 else self.base.ccdf_sum_from(int(x) + 1) / self.base_mean
                        for x in flat])
        return out.reshape(np.shape(k))

    def ccdf_sum_from(self, m):
        # sum_{j>=m} sum_{i>j} ccdf(i) = sum_{i>=m+1} (i - m) ccdf(i)
        b = self.base
        w = b.weighted_ccdf_sum_from(m + 1)
        s = b.ccdf_sum_from(m + 1)
        return (w - (m + 1) * s) / self.base_mean

    def pmf_lattice(self, k, h, nu=0, l0=0):
        return self.base.ccdf_lattice(k + nu, h, l0) / self.base_mean

    @property
    def claimed_classes(self):
        b = self.base
        if isinstance(b, (DiscretePareto, Table)) and "L" in b.claimed_classes:
            g = b.gamma if isinstance(b, DiscretePareto) else b.tail_exponent
            return frozenset(CLASSES) if g > 2 else frozenset({"L", "S", "L_loc1", "S_loc1"})
        return frozenset()

    @property
    def pmf_eventually_nonincreasing(self):
        return True


def make_tail(family: str, params: dict) -> TailModel:
    """Build a TailModel; ``family`` is pareto, geometric or table."""
    if family == "pareto":
        return DiscretePareto(float(params["gamma"]))
    if family == "geometric":
        return Geometric(float(params["p"]))
    if family == "table":
        return Table(tuple(params["pmf"]), float(params["tail_exponent"]))
    raise ValueError(f"unknown tail family {family!r}")


def tail_from_spec(spec: TailSpec) -> TailModel:
    """Reference distribution Y named by a kernel's TailSpec."""
    if spec.family == "equilibrium":
        return Equilibrium(make_tail(spec.params["base"], spec.params))
    return make_tail(spec.family, spec.params)


def equilibrium(t: TailModel) -> Equilibrium:
    return Equilibrium(t)


# -- class diagnostics ---------------------------------------------------

@dataclass(frozen=True)
class ClassDiagnostics:
    k_grid: np.ndarray
    series: dict  # name -> (values, theoretical limit)
    lattice_h: int = 2

    def gap(self, name: str) -> float:
        v, lim = self.series[name]
        return float(abs(v[-1] - lim))

    @property
    def long_tail_ratio(self):
        return self.series["long_tail_ratio"][0]

    @property
    def subexp_ratio(self):
        return self.series["subexp_ratio"][0]

    @property
    def sstar_sum(self):
        return self.series["sstar_sum"][0]

    @property
    def local_long_tail_ratio(self):
        return self.series["local_long_tail_ratio"][0]

    @property
    def local_subexp_ratio(self):
        return self.series["local_subexp_ratio"][0]

    @property
    def lattice_sums(self):
        return self.series["lattice_sums"][0]

    def summary(self) -> dict:
        return {name: {"limit": lim, "last": float(v[-1]), "gap": self.gap(name)}
                for name, (v, lim) in self.series.items()}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "series_name", "value", "theoretical_limit"])
            for name, (vals, lim) in self.series.items():
                for k, v in zip(self.k_grid, vals):
                    w.writerow([int(k), name, "%.17g" % v, "%.17g" % lim])


def class_diagnostics(t: TailModel, k_grid, h: int = 2, nu: int = 0, l0: int = 0) -> ClassDiagnostics:
    """Finite-grid illustrations of the heavy-tail class definitions.

    Every convolution is an exact finite sum.  The two-fold tail is
    formed as sum_{l<=k} pmf(l) P(Y > k-l) + P(Y > k), so no
    ``1 - cdf`` subtraction occurs.
    """
    grid = np.asarray(sorted(set(int(k) for k in k_grid)))
    if grid.size == 0 or grid[0] < 0:
        raise ValueError("k_grid must hold nonnegative integers")
    K = int(grid[-1])
    j = np.arange(K + 2)
    pmf = np.asarray(t.pmf(j), dtype=float)
    cc = np.asarray(t.ccdf(j), dtype=float)
    if cc[K] <= 0 or pmf[K] <= 0:
        raise ValueError("k_grid extends beyond the support")
    lt, sub, sst, llt, lsub, lat = [], [], [], [], [], []
    for k in grid:
        lt.append(cc[k + 1] / cc[k])
        sub.append((math.fsum(pmf[:k + 1] * cc[k::-1]) + cc[k]) / cc[k])
        sst.append(math.fsum(cc[:k + 1] * cc[k::-1]) / cc[k])
        llt.append(pmf[k + 1] / pmf[k])
        lsub.append(math.fsum(pmf[:k + 1] * pmf[k::-1]) / pmf[k])
        lat.append(t.pmf_lattice(int(k), h, nu, l0) / cc[k])
    mean = t.mean
    series = {
        "long_tail_ratio": (np.array(lt), 1.0),
        "subexp_ratio": (np.array(sub), 2.0),
        "sstar_sum": (np.array(sst), 2 * mean),
        "local_long_tail_ratio": (np.array(llt), 1.0),
        "local_subexp_ratio": (np.array(lsub), 2.0),
        "lattice_sums": (np.array(lat), 1.0 / h),
    }
    return ClassDiagnostics(grid, series, h)


# -- example kernels -----------------------------------------------------

def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _panel_integrate(f, a: np.ndarray, b: np.ndarray, panels: int = 24, order: int = 24):
    """Composite Gauss-Legendre of vectorized f(x, idx) over [a_i, b_i] for each i."""
    x, w = _gl(order)
    edges = a[:, None] + (b - a)[:, None] * np.linspace(0, 1, panels + 1)[None, :]
    lo, hi = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid[:, :, None] + half[:, :, None] * x[None, None, :]
    vals = f(nodes)
    return np.einsum("ipq,q,ip->i", vals, w, half)


def _windows(ks: np.ndarray, lam: float, width: float = 40.0):
    mu = ks / lam
    s = np.sqrt(ks + 1.0) / lam
    return np.maximum(mu - width * s, 0.0), mu + width * s + 30.0 / lam


def mg1_alpha(lam: float, gamma: float, kmax: int) -> np.ndarray:
    """alpha(k) = int e^{-lam x} (lam x)^k / k! dH(x), H(x) = 1 - (x+1)^-gamma, k = 0..kmax.

    Composite Gauss-Legendre on a window of +-40 standard deviations of
    the Poisson kernel around x = k/lam; outside it the integrand is
    below e^-800 relative.
    """
    ks = np.arange(kmax + 1, dtype=float)
    a, b = _windows(ks, lam)
    lg = gammaln(ks + 1)
    out = np.empty(kmax + 1)
    for s in range(0, kmax + 1, 512):
        sl = slice(s, min(s + 512, kmax + 1))
        ks_s = ks[sl]

        def fs(x, ks_s=ks_s, sl=sl):
            k = ks_s[:, None, None]
            lx = np.log(np.maximum(lam * x, 1e-300))
            logp = k * lx - lam * x - lg[sl][:, None, None]
            return np.exp(logp - (gamma + 1) * np.log1p(x)) * gamma

        out[sl] = _panel_integrate(fs, a[sl], b[sl])
    return out


def mg1_tail(lam: float, gamma: float, K: int) -> tuple[float, float]:
    """(P(N > K), E[N; N > K]) for N = arrivals during one service.

    P(N > K) = int P(Pois(lam x) >= K+1) dH(x) and
    E[N; N > K] = int lam x P(Pois(lam x) >= K) dH(x); the part of H beyond
    the quadrature window is integrated analytically.
    """
    _, b = _windows(np.array([float(K)]), lam)

    def dens(x):
        return gamma * (1 + x) ** (-gamma - 1)

    opts = dict(limit=800, epsabs=1e-17, epsrel=1e-13, points=[K / lam])
    mass = quad(lambda x: gammainc(K + 1, lam * x) * dens(x), 0, b[0], **opts)[0]
    mom = quad(lambda x: lam * x * gammainc(K, lam * x) * dens(x), 0, b[0], **opts)[0]
    B = b[0] + 1
    mass += B ** -gamma
    mom += lam * (gamma / (gamma - 1) * B ** (1 - gamma) - B ** -gamma)
    return float(mass), float(mom)


def mg1_pareto_kernel(lam: float, gamma: float, kmax: int) -> Kernel:
    """Embedded M/GI/1 queue-length chain with Pareto service H(x) = 1-(x+1)^-gamma.

    Level 0 and level 1 rows both are alpha(0), alpha(1), ...; deeper rows
    are the shifted alpha row.  The tail reference is DiscretePareto(gamma)
    with alpha(k) ~ gamma lam^gamma k^(-gamma-1), so every tail constant is
    lam^gamma E[Y].
    """
    if not (lam > 0 and gamma > 1):
        raise ValueError("need lam > 0 and gamma > 1")
    rho = lam / (gamma - 1)
    if rho >= 1:
        raise ValueError(f"rho = {rho} >= 1: queue unstable")
    if kmax < 2:
        raise ValueError("kmax must be at least 2")
    alpha = mg1_alpha(lam, gamma, kmax)
    mass, mom = mg1_tail(lam, gamma, kmax)
    A = {-1: [[alpha[0]]]}
    A.update({k - 1: [[alpha[k]]] for k in range(1, kmax + 1)})
    B = {0: [[alpha[0]]], -1: [[alpha[0]]]}
    B.update({k: [[alpha[k]]] for k in range(1, kmax + 1)})
    c = lam ** gamma * float(zeta(gamma, 2))
    tail = TailSpec(
        family="pareto",
        params={"gamma": gamma, "lambda": lam, "rho": rho,
                "mass_A": [mass], "mass_B": [mass],
                "mean_A": [mom - mass], "mean_B": [mom]},
        cA=[c], cB=[c], CAE=[[c]], CBE=[[c]])
    return Kernel(1, 1, A, B, tail)


def disaster_kernel(phi: float, q: float, gamma: float, kmax: int) -> Kernel:
    """Discrete-time queue with disasters and DiscretePareto(gamma) batches.

    Every level l >= 1 is emptied with probability phi per slot, so
    B(-l) = phi for l >= 2 (``B_down = "repeat_last"``) and the A blocks
    sum to 1 - phi.
    """
    if not (0 < phi < 1 and 0 < q < 1 and gamma > 1):
        raise ValueError("need 0 < phi < 1, 0 < q < 1, gamma > 1")
    if kmax < 2:
        raise ValueError("kmax must be at least 2")
    Y = DiscretePareto(gamma)
    beta = Y.pmf(np.arange(kmax + 1))
    a = np.empty(kmax + 1)
    a[0] = (1 - phi) * beta[0] * (1 - q)
    a[1:] = (1 - phi) * (beta[:-1] * q + beta[1:] * (1 - q))
    b = (1 - phi) * beta
    b[0] += phi
    A = {-1: [[a[0]]]}
    A.update({k - 1: [[a[k]]] for k in range(1, kmax + 1)})
    B = {0: [[b[0]]], -1: [[phi + a[0]]], -2: [[phi]]}
    B.update({k: [[b[k]]] for k in range(1, kmax + 1)})
    cc = Y.ccdf
    massA = (1 - phi) * (q * float(cc(kmax - 1)) + (1 - q) * float(cc(kmax)))
    massB = (1 - phi) * float(cc(kmax))
    tail = TailSpec(family="pareto",
                    params={"gamma": gamma, "phi": phi, "q": q,
                            "mass_A": [massA], "mass_B": [massB]},
                    CA=[[1 - phi]], CB=[[1 - phi]], B_down="repeat_last")
    return Kernel(1, 1, A, B, tail)
