import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blhedge import payoffs as P
from blhedge.measures import CorrelatedLognormal


def test_call_values_and_jumps():
    c = P.call(100.0)
    assert np.allclose(c(np.array([50.0, 100.0, 130.0])), [0.0, 0.0, 30.0])
    assert c.is_continuous
    assert c.deriv(np.array([120.0]))[0] == 1.0


def test_digital_jump_sides():
    ge, gt = P.digital_ge(100.0), P.digital_gt(100.0)
    assert ge(np.array(100.0)) == 1.0 and gt(np.array(100.0)) == 0.0
    assert ge.left_jumps() == [(100.0, 1.0)] and ge.right_jumps() == []
    assert gt.right_jumps() == [(100.0, 1.0)] and gt.left_jumps() == []


def test_piece_count_validation():
    with pytest.raises(ValueError):
        P.PiecewisePayoff1D([1.0], [P._const(0.0)], [0.0])
    with pytest.raises(ValueError):
        P.PiecewisePayoff1D([2.0, 1.0], [P._const(0.0)] * 3, [0.0, 0.0])


def test_wrong_derivative_detected():
    bad = P.Piece(lambda x: x * x, lambda x: x, "bad")
    with pytest.raises(ValueError):
        P.PiecewisePayoff1D([], [bad], [])


def test_power_below_one_rejected():
    with pytest.raises(ValueError):
        P.power(0.5)


def test_polynomial_pieces_with_jump():
    f = P.from_polynomial_pieces([1.0], [[0.0, 1.0], [5.0]], [3.0])
    # f = x on (0,1), 3 at 1, 5 beyond
    assert f.jump_atoms() == [(1.0, 2.0, 2.0)]


def test_product_payoff_evaluates_sum_of_products():
    h = P.ProductPayoff.single(P.call(1.0), P.power(1)) + P.ProductPayoff.single(P.constant(2.0), P.constant(1.0))
    x = np.array([[3.0, 4.0], [0.5, 1.0]])
    assert np.allclose(h(x), [2.0 * 4.0 + 2.0, 0.0 + 2.0])
    assert h.n == 2


@given(st.floats(0.0, 500.0), st.floats(0.01, 400.0))
def test_call_put_parity_pointwise(x, K):
    assert P.call(K)(np.array(x)) - P.put(K)(np.array(x)) == pytest.approx(x - K, abs=1e-9)


@given(st.floats(0.0, 300.0), st.floats(-3.0, 3.0))
def test_scaled_linear(x, c):
    f = P.call(80.0)
    assert f.scaled(c)(np.array(x)) == pytest.approx(c * f(np.array(x)), abs=1e-9)


def test_membership_accepts_call_refuses_exp_square():
    m = CorrelatedLognormal([100.0], [0.2], 1.0)
    assert P.check_pi_q_membership(P.call(100.0), m).member
    rep = P.check_pi_q_membership(P.exp_power(1.0, 2.0), m)
    assert not rep.member
    assert any("integrability" in f for f in rep.failing)


def test_product_membership():
    m = CorrelatedLognormal([100.0, 90.0], [0.2, 0.3], 1.0)
    ok = P.check_product_membership(P.ProductPayoff.single(P.call(90.0), P.call(80.0)), m)
    assert ok.member
    bad = P.check_product_membership(P.ProductPayoff.single(P.exp_power(1.0, 2.0), P.constant(1.0)), m)
    assert not bad.member


def test_blackbox_shape():
    b = P.BlackBoxPayoff(2, lambda x: x[:, 0] - x[:, 1])
    assert b(np.array([3.0, 1.0])).shape == (1,)
    assert math.isclose(float(b(np.array([3.0, 1.0]))[0]), 2.0)
