import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gig1.asymptotics import (ASSERTED, ESTIMATED, FAILS, HOLDS, LOCAL_OVER_PMF, TAIL_OVER_CCDF,
                              TailConstants, analyze, audit_hypotheses,
                              blocks_eventually_nonincreasing, choose_theorem, constant_T1,
                              constant_T2, constant_T2_factored, constant_T3, constant_T4,
                              constant_T5, empirical_ratio, estimate_tail_constants, log_grid,
                              predicted_F_local, predicted_R_tail)
from gig1.kernel import Kernel, audit_regime, perron_left
from gig1.matan import SolveOptions, solve
from gig1.stationary import oracle_solve, stationary
from gig1.tails import DiscretePareto, Geometric, disaster_kernel, equilibrium

Y2 = DiscretePareto(2.0)


def test_T1_by_hand():
    # x(0) = 0.4, xbar(0) = 0.6, cA = 1, cB = 0, sigma = -0.75 -> 0.6 / 0.75
    assert constant_T1([0.4], [0.6], [1.0], [0.0], -0.75, [1.0])[0] == pytest.approx(0.8)


@given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0, 2), st.floats(0, 2),
       st.floats(-2, -0.01))
def test_T4_equals_T1(x0, xb, cA, cB, sigma):
    if cA == 0 and cB == 0:
        return
    a = constant_T1([x0], [xb], [cA], [cB], sigma, [1.0])
    assert np.array_equal(a, constant_T4([x0], [xb], [cA], [cB], sigma, [1.0]))


def test_T5_equals_T2():
    x0, xb = [0.3, 0.2], [0.3, 0.2]
    C = np.full((2, 2), 0.1)
    A = np.array([[0.4, 0.3], [0.2, 0.5]])
    assert np.array_equal(constant_T2(x0, xb, C, C, A), constant_T5(x0, xb, C, C, A))


def test_T3_with_period_one_is_T1():
    a = constant_T3([0.4], [0.6], [[1.0]], [[0.5]], -0.5, [1.0], tau=1)
    b = constant_T1([0.4], [0.6], [1.0], [0.5], -0.5, [1.0])
    assert np.allclose(a, b)


def test_T3_column_count_checked():
    with pytest.raises(ValueError, match="columns"):
        constant_T3([0.4], [0.6], [[1.0]], None, -0.5, [1.0], tau=2)


def test_zero_and_missing_constants_rejected():
    with pytest.raises(ValueError, match="both zero"):
        constant_T1([0.4], [0.6], [0.0], [0.0], -0.5, [1.0])
    with pytest.raises(ValueError, match="missing"):
        constant_T2([0.5], [0.5], None, None, [[0.5]])
    with pytest.raises(ValueError, match="sigma"):
        constant_T1([0.4], [0.6], [1.0], [0.0], 0.1, [1.0])
    with pytest.raises(ValueError):
        TailConstants(cA=[-1.0])


def test_disaster_half_prefactor_is_one():
    k = disaster_kernel(0.5, 0.5, 2.0, 1024)
    art = solve(k, SolveOptions(kmax=1024))
    rep = analyze(k, art, stationary(k, art))
    assert rep.theorem == "T5"
    assert rep.prefactor[0] == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("name", ["disaster", "two_phase"])
def test_T2_factored_agrees(name, request):
    s = request.getfixturevalue(name)
    c = TailConstants.from_spec(s.kernel.tail)
    art = s.art
    down = art.phi.window(art.phi.lo, 0).sum(axis=0)
    a = constant_T2(s.sr.x0, s.sr.xbar_seq[0], c.CA, c.CB, s.kernel.closed().A_sum())
    b = constant_T2_factored(s.sr.x0, s.sr.xbar_seq[0], c.CA, c.CB, down, art.R)
    assert np.allclose(a, b, rtol=1e-8)


def test_two_phase_against_oracle(two_phase):
    s = two_phase
    pf = analyze(s.kernel, s.art, s.sr, "T5", k_grid=[1000]).prefactor
    orc = oracle_solve(s.kernel, 4000)
    r = orc.x(1000) / float(Y2.pmf(1000))
    assert np.all(np.abs(r - pf) / pf < 0.2)


def test_mg1_local_prefactor(mg1):
    rep = analyze(mg1.kernel, mg1.art, mg1.sr)
    assert rep.theorem == "T3"
    assert rep.hypothesis_audit["A stochastic"] == HOLDS
    assert rep.convergence_gap < 0.02
    # x(k) ~ lam^g / (1 - rho) k^-g
    lam, g, rho = 0.5, 2.0, 0.5
    Ye = equilibrium(Y2)
    k = 1000
    assert rep.prefactor[0] * float(Ye.pmf(k)) * k ** g == pytest.approx(lam ** g / (1 - rho), rel=0.02)


def test_period2_eps_local_prefactor_positive(period2_eps):
    rep = analyze(period2_eps.kernel, period2_eps.art, period2_eps.sr)
    assert rep.theorem == "T3"
    assert np.all(rep.prefactor > 0)
    assert rep.hypothesis_audit["CAE, CBE have tau columns"] == HOLDS


def test_geometric_chain_over_geometric_tail(scalar):
    # x(k) = 0.4 * 0.6^k exactly, the pmf of Geometric(0.4)
    rs = empirical_ratio(scalar.sr, Geometric(0.4), LOCAL_OVER_PMF, range(1, 60))
    assert np.allclose(rs.values, 1.0, rtol=1e-8)
    assert rs.drift < 1e-8


def test_ratio_beyond_trusted_horizon_raises(disaster):
    with pytest.raises(ValueError, match="trusted"):
        empirical_ratio(disaster.sr, Y2, LOCAL_OVER_PMF, [disaster.sr.K])


def test_ratio_csv(tmp_path, disaster):
    rs = empirical_ratio(disaster.sr, Y2, TAIL_OVER_CCDF, log_grid(10, 1000))
    rs.to_csv(tmp_path / "r.csv", [4.0])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "k,phase,ratio,prefactor"
    assert len(lines) == 1 + len(rs.k)


def test_lemma_R_tail_substochastic(disaster):
    art = disaster.art
    pred = predicted_R_tail(art, TailConstants.from_spec(disaster.kernel.tail))
    Rb = art.R_seq.tail_sums()
    err = [abs(Rb[k - 1][0, 0] / float(Y2.ccdf(k)) - pred[0, 0]) for k in (10, 100, 1000)]
    assert err[-1] / pred[0, 0] < 0.01
    assert err[0] > err[1] > err[2]


def test_lemma_R_tail_stochastic(mg1):
    art, k = mg1.art, mg1.kernel
    reg = audit_regime(k)
    pi = perron_left(k.closed().A_sum()).pi
    pred = predicted_R_tail(art, TailConstants.from_spec(k.tail), reg.sigma, pi)
    Ye = equilibrium(Y2)
    Rb = art.R_seq.tail_sums()
    err = [abs(Rb[k - 1][0, 0] / float(Ye.ccdf(k)) - pred[0, 0]) for k in (10, 100, 1000)]
    assert err[-1] / pred[0, 0] < 0.01
    assert err[0] > err[1] > err[2]


def test_F_local_limit(disaster):
    art = disaster.art
    c = TailConstants.from_spec(disaster.kernel.tail)
    C = predicted_R_tail(art, c)
    pred = predicted_F_local(art.R, C)
    r = art.F_seq[1000] / float(Y2.pmf(1000))
    assert np.allclose(r, pred, rtol=0.01)


def test_estimated_constants_match_declared():
    k = disaster_kernel(0.2, 0.5, 2.0, 2048)
    est = estimate_tail_constants(k, force=True)
    assert est.source == ESTIMATED
    assert est.CA[0, 0] == pytest.approx(0.8, rel=0.01)
    assert est.CB[0, 0] == pytest.approx(0.8, rel=0.01)
    assert not est.flagged


def test_wrong_reference_is_flagged():
    k = disaster_kernel(0.2, 0.5, 2.0, 1024)
    assert estimate_tail_constants(k, Geometric(0.5), force=True).flagged


def test_declared_constants_pass_through(mg1):
    c = estimate_tail_constants(mg1.kernel)
    assert np.array_equal(c.cA, mg1.kernel.tail.cA)


def oscillating_kernel():
    beta = Y2.pmf(np.arange(400))
    a = beta * (1 + 0.5 * (-1) ** np.arange(400))
    a = 0.3 * a / a.sum()
    A = {k: np.array([[v]]) for k, v in enumerate(a, start=1)}
    A[-1] = np.array([[0.7]])
    B = {0: np.array([[0.7]]), -1: np.array([[0.7]]), **{k: A[k].copy() for k in range(1, 401)}}
    return Kernel(1, 1, A, B)


def test_oscillating_blocks_flagged(mg1):
    k = oscillating_kernel()
    assert blocks_eventually_nonincreasing(k) == FAILS
    assert blocks_eventually_nonincreasing(mg1.kernel) == HOLDS
    c = TailConstants(cA=[1.0])
    audit = audit_hypotheses(k, "T4", Y2, c, audit_regime(k))
    assert audit["A(k), B(k) eventually nonincreasing"] == FAILS


def test_class_claims_are_asserted_not_inferred(disaster):
    a = audit_hypotheses(disaster.kernel, "T2", Y2, TailConstants.from_spec(disaster.kernel.tail))
    assert a["Y in S"] == ASSERTED
    assert a["A strictly substochastic"] == HOLDS
    g = audit_hypotheses(disaster.kernel, "T2", Geometric(0.5), TailConstants.from_spec(disaster.kernel.tail))
    assert g["Y in S"] != ASSERTED


def test_choose_theorem(disaster, mg1, scalar):
    assert choose_theorem(audit_regime(disaster.kernel), TailConstants(CA=[[1.0]])) == "T5"
    assert choose_theorem(audit_regime(mg1.kernel), TailConstants(cA=[1.0], CAE=[[1.0]])) == "T3"
    assert choose_theorem(audit_regime(scalar.kernel), TailConstants(cA=[1.0])) == "T1"


def test_report_is_json(disaster):
    rep = analyze(disaster.kernel, disaster.art, disaster.sr, "T2")
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["theorem"] == "T2"
    assert d["factored_prefactor_diff"] < 1e-8
    assert d["reference_sequence"] == "xbar(k) / P(Y > k)"
