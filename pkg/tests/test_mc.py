import numpy as np
import pytest

from blhedge import closed_forms as cf
from blhedge.mc import (
    MCSpec,
    PathModel,
    PathOption,
    crn_derivative,
    mc_price_path,
    mc_price_terminal,
    simulate,
    trapezoid_weights,
)
from blhedge.measures import CorrelatedLognormal, TailEvent, joint_tail_prob


def test_constant_payoff_exact(ln1):
    r = mc_price_terminal(ln1, lambda x: np.ones(x.shape[0]), MCSpec(1000, 1))
    assert r.estimate == 1.0 and r.standard_error == 0.0


def test_call_within_three_se(ln1):
    r = mc_price_terminal(ln1, lambda x: np.maximum(x[:, 0] - 100, 0), MCSpec(1_000_000, 3))
    assert abs(r.estimate - cf.bs_call(100.0, 100.0, 0.2, 1.0)) < 3 * r.standard_error


def test_se_halves_when_paths_quadruple(ln1):
    f = lambda x: np.maximum(x[:, 0] - 100, 0)
    a = mc_price_terminal(ln1, f, MCSpec(50_000, 5)).standard_error
    b = mc_price_terminal(ln1, f, MCSpec(200_000, 5)).standard_error
    assert 0.8 <= 2 * b / a <= 1.2


def test_non_finite_payoff_named(ln1):
    with pytest.raises(FloatingPointError, match="sample"):
        mc_price_terminal(ln1, lambda x: np.exp(x[:, 0] ** 2), MCSpec(100, 1))


def test_terminal_tail_consistency(ln2_rho05):
    e = TailEvent.make([100.0, 90.0])
    p = joint_tail_prob(ln2_rho05, e)
    r = mc_price_terminal(ln2_rho05, lambda x: ((x[:, 0] > 100) & (x[:, 1] > 90)).astype(float), MCSpec(200_000, 6))
    assert abs(r.estimate - p) < 3 * np.sqrt(p * (1 - p) / 200_000)


def test_antithetic_majority_reduces_se(ln1):
    f = lambda x: np.maximum(x[:, 0] - 100, 0)
    wins = 0
    for seed in range(5):
        plain = mc_price_terminal(ln1, f, MCSpec(100_000, seed)).standard_error
        anti = mc_price_terminal(ln1, f, MCSpec(100_000, seed, antithetic=True)).standard_error
        wins += anti <= plain
    assert wins >= 3


def test_thread_invariance_bitwise():
    pm = PathModel((100.0,), (0.2,), 1.0, 50)
    opt = PathOption("asian", K=100.0)
    a = mc_price_path(pm, opt, MCSpec(20000, 9, threads=1))
    b = mc_price_path(pm, opt, MCSpec(20000, 9, threads=4))
    assert a.to_json() == b.to_json()


def test_barrier_zero_equals_vanilla():
    pm = PathModel((100.0,), (0.2,), 1.0, 50)
    spec = MCSpec(20000, 2)
    a = mc_price_path(pm, PathOption("barrier_up_in", K=100.0, H=0.0), spec)
    b = mc_price_path(pm, PathOption("call", K=100.0), spec)
    assert a.estimate == b.estimate


def test_asian_zero_strike_is_mean_average():
    pm = PathModel((100.0,), (0.2,), 1.0, 50)
    r = mc_price_path(pm, PathOption("asian", K=0.0), MCSpec(50000, 2))
    assert abs(r.estimate - 100.0) < 3 * r.standard_error


def test_lookback_dominates_call_pathwise():
    pm = PathModel((100.0,), (0.3,), 1.0, 50)
    for seed in range(3):
        red = lambda ch: {"lb": np.maximum(ch.paths[:, :, 0].max(axis=1) - 100, 0), "c": np.maximum(ch.paths[:, -1, 0] - 100, 0)}
        f = simulate(pm, MCSpec(5000, seed), red)
        assert np.all(f["lb"] >= f["c"])


def test_crn_call_derivative_is_minus_tail(ln1):
    x = ln1.sample(200_000, 12)[:, 0]
    spec = MCSpec(200_000, 12)
    res = crn_derivative(lambda k: np.maximum(x - k, 0.0), 100.0, [4.0, 2.0, 1.0], "central", spec)
    exact = -float(ln1.tail(np.array([100.0])))
    assert abs(res.estimate - exact) < 3 * res.standard_error + 1e-3


def test_crn_constant_in_parameter():
    x = np.random.default_rng(0).uniform(size=1000)
    res = crn_derivative(lambda k: x, 1.0, [0.5, 0.25, 0.125], "forward", MCSpec(1000, 0))
    assert res.estimate == 0.0 and res.standard_error == 0.0


def test_crn_rejects_bad_steps():
    with pytest.raises(ValueError):
        crn_derivative(lambda k: np.zeros(3), 0.0, [1.0, 2.0])


def test_trapezoid_weights_sum():
    t = np.linspace(0, 2.0, 11)
    assert trapezoid_weights(t).sum() == pytest.approx(2.0)


def test_path_terminal_law_unbiased():
    pm = PathModel((100.0, 90.0), (0.2, 0.3), 1.0, 4, ((1.0, 0.5), (0.5, 1.0)))
    red = lambda ch: {"x": ch.paths[:, -1, 0] * ch.paths[:, -1, 1]}
    spec = MCSpec(200000, 3)
    f = simulate(pm, spec, red)
    exact = cf.product_moment(100.0, 90.0, 0.2, 0.3, 0.5, 1.0)
    se = f["x"].std() / np.sqrt(f["x"].size)
    assert abs(f["x"].mean() - exact) < 3 * se


def test_mcspec_validation():
    with pytest.raises(ValueError):
        MCSpec(0)
    with pytest.raises(ValueError):
        MCSpec(10, antithetic=True, chunk_size=7)
