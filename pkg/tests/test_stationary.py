import numpy as np
import pytest
from hypothesis import given, strategies as st

from gig1.matan import SolveOptions, solve
from gig1.models import period_two_kernel, scalar_walk_kernel
from gig1.stationary import (StationaryResult, balance_residual, boundary_vector, compare,
                             gth_stationary, oracle_solve, read_stationary_csv, stationary)


def test_scalar_geometric(scalar):
    sr = scalar.sr
    for k in (0, 1, 10, 100):
        assert sr.x(k)[0] == pytest.approx(0.4 * 0.6 ** k, rel=1e-9)
    assert sr.xbar_seq[20][0] == pytest.approx(0.6 ** 21, rel=1e-9)
    assert sr.normalization_residual < 1e-12


def test_first_level_is_x0_R0(period2_eps):
    sr, art = period2_eps.sr, period2_eps.art
    assert np.allclose(sr.x(1), sr.x0 @ art.R0_seq[1], rtol=1e-12, atol=0)


def test_boundary_vector_recomputed(period2_eps):
    x0 = boundary_vector(period2_eps.kernel, period2_eps.art)
    assert np.allclose(x0, period2_eps.sr.x0, rtol=1e-12)


def test_mass_and_closure(disaster, mg1):
    for s in (disaster, mg1):
        sr = s.sr
        assert sr.x0.sum() + sr.xbar_seq[0].sum() == pytest.approx(1, abs=1e-10)
        assert np.all(np.diff(sr.xbar_seq.sum(axis=1)) <= 1e-15)
        assert sr.meta["xbar0_closure"] < 1e-8


@pytest.mark.parametrize("name", ["scalar", "period2", "period2_eps", "disaster", "two_phase"])
def test_balance(name, request):
    s = request.getfixturevalue(name)
    assert balance_residual(s.kernel, s.sr, 200) < 1e-8


def test_gth_two_state():
    a, b = 0.3, 0.1
    P = np.array([[1 - a, a], [b, 1 - b]])
    assert np.allclose(gth_stationary(P), [b / (a + b), a / (a + b)], atol=1e-15)


@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_gth_matches_linear_solve(n, seed):
    P = np.random.default_rng(seed).random((n, n)) + 1e-3
    P /= P.sum(axis=1, keepdims=True)
    w, v = np.linalg.eig(P.T)
    ref = np.real(v[:, np.argmin(abs(w - 1))])
    ref /= ref.sum()
    assert np.allclose(gth_stationary(P.copy()), ref, atol=1e-12)


def test_oracle_scalar(scalar):
    orc = oracle_solve(scalar.kernel, 150)
    assert compare(scalar.sr, orc, 60).max_rel < 1e-9


def test_oracle_period_two(period2):
    orc = oracle_solve(period2.kernel, 300)
    assert compare(period2.sr, orc, 50).max_rel < 1e-9


def test_oracle_two_phase(two_phase):
    orc = oracle_solve(two_phase.kernel, 1500)
    assert compare(two_phase.sr, orc, 300).max_rel < 1e-8


def test_oracle_stable_in_N(disaster):
    a = oracle_solve(disaster.kernel, 2000)
    b = oracle_solve(disaster.kernel, 4000)
    assert compare(a, b, 200).max_rel < 1e-9


def test_oracle_preconditions():
    with pytest.raises(ValueError, match="twice the down-jump"):
        oracle_solve(period_two_kernel(), 3)
    with pytest.raises(MemoryError):
        oracle_solve(period_two_kernel(), 5000)


def test_compare_flags_corrupted_boundary(scalar):
    sr = scalar.sr
    bad = StationaryResult(sr.x0 * 1.01, sr.x_seq, sr.xbar_seq, 0.0, "x", {})
    d = compare(sr, bad, 50)
    assert d.flagged_levels == [0]
    assert compare(sr, sr, 50).max_abs == 0


def test_trusted_horizon(disaster, scalar):
    assert scalar.sr.meta["trusted_K"] >= scalar.sr.K
    assert 0 < disaster.sr.meta["trusted_K"] < disaster.sr.K


def test_csv_roundtrip(tmp_path, period2_eps):
    sr = period2_eps.sr
    sr.to_csv(tmp_path / "s.csv")
    r = read_stationary_csv(tmp_path / "s.csv")
    assert np.array_equal(r.x0, sr.x0)
    assert np.array_equal(r.x_seq, sr.x_seq)


def test_shorter_horizon_is_a_prefix():
    k = scalar_walk_kernel()
    a = stationary(k, solve(k, SolveOptions(kmax=50)))
    b = stationary(k, solve(k, SolveOptions(kmax=100)))
    assert np.allclose(a.x_seq, b.x_seq[:50], rtol=1e-12)
