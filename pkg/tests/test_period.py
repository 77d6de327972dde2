import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gig1.kernel import Kernel, audit_regime, perron_left
from gig1.matan import mean_jump_G
from gig1.models import period_two_kernel, scalar_walk_kernel
from conftest import Solved
from gig1.period import (detect_period, l_limit_convergence, psi_vector, spectral_period_check,
                         support_violations)


def scalar_jumps(jumps):
    """Scalar kernel with uniform mass on the given jump sizes (only A matters here)."""
    w = 1 / len(jumps)
    A = {j: np.array([[w]]) for j in jumps}
    return Kernel(1, 1, A, {0: np.array([[1.0]])})


def test_period_two_labeling():
    info = detect_period(period_two_kernel())
    assert info.tau == 2
    assert list(info.p) == [0, 0, 1]
    assert np.array_equal(info.E.sum(axis=1), np.ones(3))
    assert info.classes == ((0, 1), (2,))


def test_scalar_even_jumps():
    assert detect_period(scalar_jumps([2, -2])).tau == 2
    assert detect_period(scalar_jumps([3, -3, 6])).tau == 3


def test_self_loop_gives_period_one():
    assert detect_period(scalar_walk_kernel()).tau == 1


@given(st.lists(st.integers(-12, 12).filter(bool), min_size=1, max_size=5, unique=True))
def test_scalar_period_is_gcd(jumps):
    assert detect_period(scalar_jumps(jumps)).tau == reduce(math.gcd, (abs(j) for j in jumps))


@given(st.lists(st.integers(-6, 6).filter(bool), min_size=2, max_size=4, unique=True))
def test_spectral_check_matches_divisibility(jumps):
    k = scalar_jumps(jumps)
    tau = detect_period(k).tau
    for n in range(1, 2 * tau + 3):
        assert spectral_period_check(k, n) == (tau % n == 0)


def test_zero_net_change_raises():
    with pytest.raises(ValueError, match="period undefined"):
        detect_period(scalar_jumps([0]))


def test_reducible_raises():
    A = {1: np.diag([0.5, 0.5]), -1: np.diag([0.5, 0.5])}
    with pytest.raises(ValueError, match="reducible"):
        detect_period(Kernel(2, 2, A, {0: np.eye(2)}))


def test_support_congruence(period2, period2_eps):
    for s in (period2, period2_eps):
        info = detect_period(s.kernel)
        assert support_violations(s.kernel.A_seq, info) == 0
        assert support_violations(s.art.phi, info) == 0
        assert support_violations(s.art.G_seq, info, sign=-1) == 0
        assert support_violations(s.art.L_seq, info, sign=-1) == 0


def _psi(s):
    k = s.kernel
    return psi_vector(k, s.art, perron_left(k.closed().A_sum()), audit_regime(k).sigma)


def test_psi_normalization(period2, mg1):
    for s in (period2, mg1):
        psi = _psi(s).psi
        assert np.all(psi > 0)
        assert psi @ mean_jump_G(s.art) == pytest.approx(1, abs=1e-8)


def test_scalar_L_limit():
    # down jumps of 1 and 2, so G(1) < 1 and L(n) genuinely converges
    A = {1: np.array([[0.3]]), -1: np.array([[0.4]]), -2: np.array([[0.3]])}
    B = {0: np.array([[0.7]]), 1: np.array([[0.3]]), -1: np.array([[0.7]]), -2: np.array([[0.3]])}
    s = Solved(Kernel(1, 1, A, B), 400)
    psi = _psi(s)
    assert psi.psi[0] == pytest.approx(1 / mean_jump_G(s.art)[0])
    rep = l_limit_convergence(s.art.L_seq, detect_period(s.kernel), psi, [5, 10, 20, 40])
    assert rep.errors[0][-1] < 1e-8
    assert rep.decreasing


def test_H_blocks(period2):
    d = _psi(period2)
    assert len(d.H) == 2
    assert np.allclose(sum(d.H), np.outer(np.ones(2), d.psi))


def test_psi_requires_negative_drift(disaster):
    with pytest.raises(ValueError):
        psi_vector(disaster.kernel, disaster.art, perron_left(np.eye(1)), None)
