"""Acceptance criteria 1-10.  The terminal summary prints one line per criterion."""
import math
import time

import numpy as np
import pytest

from gig1.asymptotics import LOCAL_OVER_PMF, empirical_ratio, log_grid
from gig1.kernel import audit_regime, drift, perron_left, spectral_radius
from gig1.matan import SolveOptions, factorization_residual, sigma_via_G, solve
from gig1.models import period_two_kernel
from gig1.period import (detect_period, l_limit_convergence, psi_vector,
                         spectral_period_check)
from gig1.stationary import compare, oracle_solve
from gig1.tails import DiscretePareto, Geometric, class_diagnostics

ALL = ["scalar", "period2_eps", "disaster", "mg1"]
REGIME_I = ["scalar", "period2", "period2_eps", "mg1"]


def test_criterion_01_period():
    t0 = time.perf_counter()
    k = period_two_kernel()
    info = detect_period(k)
    checks = {n: spectral_period_check(k, n) for n in range(1, 6)}
    elapsed = time.perf_counter() - t0
    assert info.tau == 2
    assert checks[1] and checks[2]
    assert not (checks[3] or checks[4] or checks[5])
    assert elapsed < 1.0


@pytest.mark.parametrize("name", ALL)
def test_criterion_02_factorization(name, request):
    s = request.getfixturevalue(name)
    t0 = time.perf_counter()
    art = solve(s.kernel, SolveOptions(kmax=s.art.F_seq.hi))
    res = factorization_residual(s.kernel, art, 1.0)
    assert time.perf_counter() - t0 < 10.0
    assert art.converged
    assert res < 1e-8


def test_criterion_03_oracle_disaster(disaster):
    t0 = time.perf_counter()
    orc = oracle_solve(disaster.kernel, 4000)
    d = compare(disaster.sr, orc, 200)
    assert d.max_rel < 1e-8
    assert time.perf_counter() - t0 < 60.0


def test_criterion_03_oracle_mg1(mg1):
    t0 = time.perf_counter()
    orc = oracle_solve(mg1.kernel, 4000)
    d = compare(mg1.sr, orc, 200)
    assert time.perf_counter() - t0 < 60.0
    assert d.max_rel < 1e-6, (
        f"max rel diff {d.max_rel:.3e}; mass above level 4000 is {mg1.sr.xbar_seq[4000].sum():.3e}")


def test_criterion_04_disaster_constant(disaster_long):
    sr = disaster_long.sr
    target = (1 - 0.2) / 0.2
    beta = DiscretePareto(2.0)
    r1000 = sr.x(1000)[0] / float(beta.pmf(1000))
    assert abs(r1000 - target) / target < 0.15
    top = sr.meta["trusted_K"]
    assert top >= 9900
    rs = empirical_ratio(sr, beta, LOCAL_OVER_PMF, log_grid(top // 10, top, 20))
    assert rs.drift < 0.03
    assert rs.monotone and rs.toward([target])


def test_criterion_05_mg1_constant(mg1):
    lam, g = 0.5, 2.0
    rho = lam / (g - 1)
    ks = log_grid(100, 1000, 20)
    vals = np.array([mg1.sr.x(k)[0] * k ** g * (1 - rho) / lam ** g for k in ks])
    assert abs(vals[-1] - 1) < 0.2
    d = np.diff(vals)
    assert np.all(d <= 0) or np.all(d >= 0)
    assert np.all(np.diff(np.abs(vals - 1)) <= 0)


@pytest.mark.parametrize("name", REGIME_I)
def test_criterion_06_drift(name, request):
    s = request.getfixturevalue(name)
    pi = perron_left(s.kernel.closed().A_sum()).pi
    assert abs(drift(s.kernel, pi) - sigma_via_G(s.art, pi)) < 1e-6


def test_criterion_07_l_limit(period2):
    k = period2.kernel
    info = detect_period(k)
    pd = perron_left(k.A_sum())
    sigma = audit_regime(k).sigma
    psi = psi_vector(k, period2.art, pd, sigma, info)
    rep = l_limit_convergence(period2.art.L_seq, info, psi, [50, 100, 200])
    assert rep.decreasing
    assert max(e[-1] for e in rep.errors.values()) < 1e-3
    assert all(f == 0.0 for f in rep.forbidden_max)


@pytest.mark.parametrize("name", REGIME_I)
def test_criterion_08_stochastic_G(name, request):
    s = request.getfixturevalue(name)
    assert np.abs(s.art.G.sum(axis=1) - 1).max() <= s.art.G_seq.residual_bound


def test_criterion_08_substochastic_spectra(disaster):
    art = disaster.art
    down = art.phi.window(art.phi.lo, 0).sum(axis=0)
    assert spectral_radius(art.G) < 1
    assert spectral_radius(art.R) < 1
    assert spectral_radius(down) < 1


def test_criterion_09_tail_toolkit():
    t0 = time.perf_counter()
    Y = DiscretePareto(2.0)
    d = class_diagnostics(Y, [10, 100, 1000, 10000])
    target = 2 * (math.pi ** 2 / 6 - 1)
    assert abs(d.sstar_sum[-1] - target) / target < 0.1
    g = class_diagnostics(Geometric(0.5), range(0, 200, 7))
    assert np.all(g.long_tail_ratio == 0.5)
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.parametrize("name", ["scalar", "period2", "period2_eps", "disaster", "mg1", "two_phase"])
def test_criterion_10_monotone_sweeps(name, request):
    s = request.getfixturevalue(name)
    incs = s.art.phi.meta["sweep_min_increments"]
    assert len(incs) == min(50, s.art.iterations)
    assert min(incs) >= 0.0
