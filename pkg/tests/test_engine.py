import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blhedge import payoffs as P
from blhedge.engine import (
    DivergentFunctional,
    Split,
    enumerate_splits,
    eval_a_functional,
    expectation_with_weight,
    price_continuous,
    price_indicator_ge,
    price_product,
    price_rainbow_p1,
    price_spread,
    rainbow_p1_payoff,
    richardson,
)
from blhedge.mc import MCSpec, mc_price_terminal
from blhedge.measures import GE, CorrelatedLognormal, Discount, DiscreteMeasure, TailEvent
from blhedge.quadrature import QuadratureSpec


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_split_count(n):
    s = enumerate_splits(n)
    assert len(s) == 4**n
    assert len(set(s)) == 4**n


def test_split_validation():
    with pytest.raises(ValueError):
        Split((0,), (0,), (), ())
    with pytest.raises(ValueError):
        enumerate_splits(7)


@given(st.lists(st.sampled_from("zdrl"), min_size=1, max_size=5))
def test_split_roles_roundtrip(roles):
    s = Split.from_roles(roles)
    assert [s.role(i) for i in range(len(roles))] == roles


@pytest.mark.parametrize("K", [80.0, 100.0, 120.0])
def test_vanilla_call_matches_oracle(ln1, oracle, K):
    v = price_product(P.call(K), ln1).total
    assert v == pytest.approx(oracle["bs_call"][str(int(K))], rel=1e-6)


def test_discounting(ln1, oracle):
    v = price_product(P.call(100.0), ln1, disc=Discount(1.05))
    assert v.total == pytest.approx(oracle["bs_call"]["100"] / 1.05, rel=1e-6)
    assert v.discount == pytest.approx(1 / 1.05)


def test_binomial_digitals_exact(binom1, oracle):
    ge = price_product(P.digital_ge(100.0), binom1).total
    gt = price_product(P.digital_gt(100.0), binom1).total
    assert ge == pytest.approx(oracle["binomial_digital_ge_100"], abs=1e-12)
    assert gt == pytest.approx(oracle["binomial_digital_gt_100"], abs=1e-12)
    assert price_product(P.call(100.0), binom1).total == pytest.approx(oracle["binomial_call_100"], abs=1e-10)


def test_product_moment(oracle):
    m = CorrelatedLognormal([100.0, 100.0], [0.2, 0.3], 1.0, [[1, 0.5], [0.5, 1]])
    h = P.ProductPayoff.single(P.power(1), P.power(1))
    assert price_product(h, m).total == pytest.approx(oracle["product_moment_rho05"], rel=1e-8)


def test_continuous_product_has_no_jump_terms(ln2_rho05):
    h = P.ProductPayoff.single(P.call(90.0), P.call(80.0))
    bd = price_product(h, ln2_rho05, evaluate_all=True)
    for s in bd.splits:
        if s.split.r or s.split.l:
            assert abs(s.value) < 1e-12


@pytest.mark.parametrize("rho", [0.0, 0.5])
def test_bundled_products_against_quadrature_oracle(oracle, rho):
    m = CorrelatedLognormal([100.0, 90.0], [0.2, 0.3], 1.0, [[1, rho], [rho, 1]])
    one = P.constant(1.0)
    book = {
        "call90_call80": P.ProductPayoff.single(P.call(90.0), P.call(80.0)),
        "x1_x2": P.ProductPayoff.single(P.power(1), P.power(1)),
        "digge100_call100": P.ProductPayoff.single(P.digital_ge(100.0), P.call(100.0)),
        "put110_x2": P.ProductPayoff.single(P.put(110.0), P.power(1)),
        "call100_plus_put90": P.ProductPayoff.single(P.call(100.0), one) + P.ProductPayoff.single(one, P.put(90.0)),
    }
    for name, h in book.items():
        assert price_product(h, m).total == pytest.approx(oracle["products"][f"{name}|{rho}"], rel=2e-5), name


def test_a_functional_zero_split(ln2_rho05):
    h = P.ProductPayoff.single(P.affine(2.0, 1.0), P.affine(3.0, 0.0))
    assert eval_a_functional(Split((0, 1), (), (), ()), h, ln2_rho05) == pytest.approx(6.0)


def test_divergent_functional_raised():
    m = CorrelatedLognormal([100.0], [0.2], 1.0)
    with pytest.raises(DivergentFunctional):
        price_product(P.exp_power(1.0, 2.0), m, QuadratureSpec(upper=(2000.0,)))


def test_expectation_with_weight_factorizes(oracle):
    m = CorrelatedLognormal([100.0, 100.0], [0.2, 0.2], 1.0)
    ev = TailEvent.make([0.0, 110.0])
    val = expectation_with_weight(P.call(100.0), 0, ev, m)
    q2 = float(m.tail(np.array([0.0, 110.0])))
    assert val == pytest.approx(oracle["bs_call"]["100"] * q2, rel=1e-6)


def test_expectation_with_weight_identity(ln1, oracle):
    assert expectation_with_weight(P.power(1), 0, None, ln1) == pytest.approx(100.0, rel=1e-8)
    assert expectation_with_weight(P.digital_ge(100.0), 0, None, ln1) == pytest.approx(oracle["lognormal_tail_ge_100"], abs=1e-12)


def test_price_continuous_matches_product(ln2_rho05):
    h = P.ProductPayoff.single(P.power(1), P.power(1))
    bb = P.BlackBoxPayoff(2, lambda x: x[:, 0] * x[:, 1])
    a = price_product(h, ln2_rho05).total
    b = price_continuous(bb, ln2_rho05).total
    assert b == pytest.approx(a, rel=1e-5)


def test_spread_matches_margrabe(oracle):
    m0 = CorrelatedLognormal([100.0, 100.0], [0.2, 0.3], 1.0)
    m5 = CorrelatedLognormal([100.0, 100.0], [0.2, 0.3], 1.0, [[1, 0.5], [0.5, 1]])
    assert price_spread(m0) == pytest.approx(oracle["margrabe_rho0"], rel=1e-6)
    assert price_spread(m5) == pytest.approx(oracle["margrabe_rho05"], rel=1e-6)


def test_rainbow_three_integrals_vs_continuous():
    m = CorrelatedLognormal([100.0, 90.0], [0.2, 0.3], 1.0, [[1, 0.3], [0.3, 1]])
    a = price_rainbow_p1(m, 90.0, 80.0, 10.0)
    b = price_continuous(rainbow_p1_payoff(90.0, 80.0, 10.0), m, cuts=[[90.0, 100.0], [80.0, 90.0]]).total
    assert b == pytest.approx(a, rel=1e-4)
    mc = mc_price_terminal(m, rainbow_p1_payoff(90.0, 80.0, 10.0), MCSpec(400000, 2))
    assert abs(mc.estimate - a) < 3 * mc.standard_error


def test_indicator_price(oracle):
    m = CorrelatedLognormal([100.0, 100.0], [0.2, 0.3], 1.0, [[1, 0.5], [0.5, 1]])
    rep = price_indicator_ge(m)
    assert rep.value == pytest.approx(oracle["indicator_ge_rho05"], abs=2e-4)


def test_indicator_on_atoms():
    # X2 = 0 surely: 1{x1 >= 0} = 1
    m = DiscreteMeasure([[1.0, 0.0], [2.0, 0.0]], [0.5, 0.5])
    assert price_indicator_ge(m).value == pytest.approx(1.0, abs=1e-9)


def test_richardson_removes_linear_term():
    eps = [0.4, 0.2, 0.1, 0.05]
    vals = [3.0 + 2 * e + 5 * e * e for e in eps]
    v, table = richardson(eps, vals, order=1, levels=2)
    assert v == pytest.approx(3.0, abs=1e-12)
    assert len(table) == 3


def test_breakdown_json_roundtrip(ln1):
    import json

    bd = price_product(P.call(100.0), ln1)
    data = json.loads(bd.dumps())
    assert set(data) == {"total", "discount", "splits"}
    assert len(data["splits"]) == 4
    assert math.isclose(sum(s["value"] for s in data["splits"]), bd.undiscounted)


def test_threads_do_not_change_price(ln2_rho05):
    h = P.ProductPayoff.single(P.call(90.0), P.digital_gt(85.0))
    a = price_product(h, ln2_rho05, threads=1).dumps()
    b = price_product(h, ln2_rho05, threads=4).dumps()
    assert a == b


@given(st.floats(20.0, 200.0))
def test_call_put_parity_priced(K):
    m = CorrelatedLognormal([100.0], [0.25], 1.0)
    c = price_product(P.call(K), m).total
    p = price_product(P.put(K), m).total
    assert c - p == pytest.approx(100.0 - K, abs=1e-5)


def test_mixed_strictness_is_ge_flag():
    assert GE is False
