import numpy as np
import pytest
from hypothesis import given, strategies as st

from blhedge.engine import expectation_with_weight
from blhedge.hedge import (
    HedgePortfolio,
    MembershipRefusal,
    build_call_portfolio,
    build_digital_decomposition,
    read_portfolio_csv,
    replication_report,
)
from blhedge.measures import CorrelatedLognormal
from blhedge.payoffs import call, digital_ge, exp_power, from_polynomial_pieces, power

M_UNIT = CorrelatedLognormal([0.5], [0.3], 1.0)


def test_x_squared_sup_error_quarters():
    f = power(2)
    errs = [replication_report(build_call_portfolio(f, np.linspace(0, 1, n + 1)), f, M_UNIT, 20000).sup_error for n in (8, 16, 32)]
    for a, b in zip(errs, errs[1:]):
        assert 3.5 <= a / b <= 4.5


def test_call_on_node_partition_is_exact():
    f = call(100.0)
    hp = build_call_portfolio(f, [0.0, 50.0, 100.0, 150.0])
    x = np.linspace(0, 300, 601)
    assert np.allclose(hp.value(x), f(x))


@given(st.lists(st.floats(0.0, 10.0), min_size=2, max_size=8, unique=True))
def test_interpolant_hits_nodes(pts):
    a = np.sort(pts)
    if np.min(np.diff(a)) < 1e-6:
        return
    f = power(2)
    hp = build_call_portfolio(f, a)
    assert np.allclose(hp.value(a), f(a), rtol=1e-9, atol=1e-9)


def test_localized_vanishes_beyond_domain():
    hp = build_call_portfolio(power(2), np.linspace(1, 2, 5), localized=True)
    assert np.all(hp.value(np.array([0.5, 2.5, 10.0])) == 0.0)
    assert hp.value(np.array([2.0]))[0] == pytest.approx(4.0)


def test_partition_validation():
    with pytest.raises(ValueError):
        build_call_portfolio(power(2), [0.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        build_call_portfolio(power(2), [1.0, 0.0])
    with pytest.raises(ValueError):
        build_call_portfolio(power(2), [-1.0, 0.0])


def test_digital_decomposition_price_gap(ln1):
    f = from_polynomial_pieces([90.0, 110.0], [[0.0], [-90.0, 1.0], [5.0]], [0.0, 20.0])
    hp = build_digital_decomposition(f, ln1)
    assert abs(hp.price(ln1) - expectation_with_weight(f, 0, None, ln1)) <= 1e-8


def test_digital_decomposition_jumps_on_atoms(binom1, oracle):
    hp = build_digital_decomposition(digital_ge(100.0), binom1)
    assert hp.price(binom1) == pytest.approx(oracle["binomial_digital_ge_100"], abs=1e-12)


def test_refusal_names_probe(ln1):
    with pytest.raises(MembershipRefusal) as exc:
        build_digital_decomposition(exp_power(1.0, 2.0), ln1)
    assert exc.value.failing


def test_csv_roundtrip(tmp_path):
    hp = HedgePortfolio(1.5, [(10.0, 2.0)], [(20.0, -1.0, True)], [(5.0, 0.25, False)])
    p = tmp_path / "hp.csv"
    hp.to_csv(p)
    back = read_portfolio_csv(p)
    x = np.linspace(0, 30, 301)
    assert np.array_equal(back.value(x), hp.value(x))
    assert p.read_text().splitlines()[0] == "instrument,strike,strictness,weight"
