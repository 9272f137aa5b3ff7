import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blhedge import closed_forms as cf
from blhedge.density import (
    CallSurface,
    SurfaceError,
    bl_density_1d,
    call_surface_from_measure,
    digital_from_call_spread,
    joint_density_nd,
    multi_lookback_surface,
    multi_lookback_value,
    read_surface_csv,
    rectangle_prob_direct,
    rectangle_prob_recovery,
    second_derivative,
    write_density_csv,
    write_surface_csv,
)
from blhedge.measures import CorrelatedLognormal
from blhedge.mc import MCSpec, mc_price_terminal


def bs_surface(step, lo=40.0, hi=250.0):
    K = np.arange(lo, hi + step / 2, step)
    return CallSurface([K], cf.bs_call(100.0, K, 0.2, 1.0))


def test_bl_density_matches_pdf():
    s = bs_surface(0.5)
    d = bl_density_1d(s)
    err = np.max(np.abs(d.density - cf.lognormal_pdf(s.strikes[0], 100.0, 0.2, 1.0)))
    assert err < 2e-5
    assert d.mass == pytest.approx(1.0, abs=1e-4)


def test_second_derivative_exact_on_quadratics():
    x = np.sort(np.random.default_rng(0).uniform(0, 10, 30))
    y = 3 * x**2 - x + 1
    assert np.allclose(second_derivative(x, y), 6.0, atol=1e-8)


def test_arbitrage_flags_detect_nonconvexity():
    K = np.array([90.0, 100.0, 110.0, 120.0])
    s = CallSurface([K], np.array([12.0, 5.0, 4.0, 0.5]))
    assert not s.diagnostics["arbitrage_free"]
    assert s.diagnostics["nonconvex_points"] == [110.0]


def test_surface_validation():
    with pytest.raises(SurfaceError):
        CallSurface([np.array([2.0, 1.0])], np.array([1.0, 2.0]))
    with pytest.raises(SurfaceError):
        CallSurface([np.array([1.0, 2.0])], np.array([1.0]))


def test_digital_lognormal(oracle):
    s = bs_surface(0.5)
    d = digital_from_call_spread(s, 100.0)
    assert d.value == pytest.approx(oracle["lognormal_tail_ge_100"], abs=1e-4)


def test_digital_binomial_atom_gap(binom1, oracle):
    K = np.unique(np.concatenate([binom1.atom_matrix[:, 0], np.linspace(40.0, 200.0, 161)]))
    s = call_surface_from_measure(binom1, K)
    ge = digital_from_call_spread(s, 100.0, side="ge").value
    gt = digital_from_call_spread(s, 100.0, side="gt").value
    assert ge == pytest.approx(oracle["binomial_digital_ge_100"], abs=1e-12)
    assert gt == pytest.approx(oracle["binomial_digital_gt_100"], abs=1e-12)
    w100 = [w for a, w in oracle["binomial_atoms"] if abs(a - 100) < 1e-9][0]
    assert ge - gt == pytest.approx(w100, abs=1e-12)


def test_multi_lookback_one_dim_is_call():
    m = CorrelatedLognormal([100.0], [0.2], 1.0)
    v = multi_lookback_value(m, np.array([[100.0]]))
    assert v[0] == pytest.approx(cf.bs_call(100.0, 100.0, 0.2, 1.0), rel=1e-9)


def test_multi_lookback_against_mc():
    m = CorrelatedLognormal([100.0, 90.0], [0.2, 0.3], 1.0, [[1, 0.4], [0.4, 1]])
    K = np.array([[105.0, 95.0]])
    v = multi_lookback_value(m, K)[0]
    mc = mc_price_terminal(m, lambda x: np.maximum(np.max(x - K, axis=1), 0.0), MCSpec(400000, 8))
    assert abs(v - mc.estimate) < 3 * mc.standard_error


def test_joint_density_mass():
    m = CorrelatedLognormal([100.0, 90.0], [0.2, 0.3], 0.5, [[1, 0.4], [0.4, 1]])
    sd = np.array([0.2, 0.3]) * np.sqrt(0.5)
    grids = [np.linspace(s * np.exp(-5 * v), s * np.exp(5 * v), 61) for s, v in zip([100.0, 90.0], sd)]
    d = joint_density_nd(multi_lookback_surface(m, grids))
    assert d.mass == pytest.approx(1.0, abs=0.01)
    assert d.diagnostics["negative_mass_fraction"] < 0.02


def test_rectangle_recovery_exact(binom2):
    rng = np.random.default_rng(5)
    for _ in range(5):
        M = np.sort(rng.uniform(40, 200, 2))
        K = M + rng.uniform(5, 60, 2)
        rec = rectangle_prob_recovery(binom2, None, list(M), list(K), 1e-6)
        assert rec.terms == 16
        assert rec.value == pytest.approx(rectangle_prob_direct(binom2, M, K), abs=1e-12)


def test_surface_csv_roundtrip_and_shuffle(tmp_path):
    m = CorrelatedLognormal([100.0, 90.0], [0.2, 0.3], 1.0)
    s = multi_lookback_surface(m, [np.linspace(80, 120, 5), np.linspace(70, 110, 4)])
    p = tmp_path / "s.csv"
    write_surface_csv(s, p)
    lines = p.read_text().splitlines()
    rng = np.random.default_rng(1)
    body = lines[1:]
    rng.shuffle(body)
    q = tmp_path / "shuffled.csv"
    q.write_text("\n".join([lines[0]] + body) + "\n")
    a, b = read_surface_csv(p), read_surface_csv(q)
    assert np.array_equal(a.prices, b.prices)
    assert np.allclose(a.prices, s.prices)


def test_incomplete_grid_names_missing(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("k1,k2,price\n1,1,5\n1,2,4\n2,1,3\n")
    with pytest.raises(SurfaceError, match=r"missing points.*\[2\.0, 2\.0\]"):
        read_surface_csv(p)


def test_density_csv_writer():
    d = bl_density_1d(bs_surface(5.0))
    buf = io.StringIO()
    write_density_csv(d, buf)
    assert buf.getvalue().splitlines()[0] == "x1,density"


@given(st.floats(60.0, 160.0))
def test_digital_between_zero_and_one(K):
    d = digital_from_call_spread(bs_surface(1.0), K)
    assert -1e-6 <= d.value <= 1 + 1e-6
