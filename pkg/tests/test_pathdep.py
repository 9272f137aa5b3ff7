import json

import numpy as np
import pytest

from blhedge import pathdep
from blhedge.mc import MCSpec, PathModel
from blhedge.payoffs import BlackBoxPayoff

PM = PathModel((100.0,), (0.2,), 1.0, 100)


def test_thm22_matches_exactly():
    rep = pathdep.lookback_from_barrier_integral(PM, 110.0, MCSpec(20000, 1))
    assert rep.passed
    assert rep.lhs == pytest.approx(rep.rhs, rel=1e-12)


def test_thm21_small_run():
    rep = pathdep.verify_barrier_lookback_strike(PM, 120.0, MCSpec(40000, 2))
    assert rep.passed or rep.inconclusive
    assert 0 < rep.details["tail_max_ge_H"] < 1


def test_prop_fA_reports():
    r1, r2, r3 = pathdep.asian_sensitivities(PM, 100.0, MCSpec(40000, 3))
    assert r1.passed or r1.inconclusive
    assert r2.inconclusive and "ill-posed" in r2.details["reason"]
    assert r3.passed or r3.inconclusive


def test_prop_fA_rare_condition_inconclusive():
    reps = pathdep.asian_sensitivities(PM, 400.0, MCSpec(5000, 3))
    assert reps[2].inconclusive


def test_parisian_grid_lower_bound():
    reps = pathdep.asian_from_parisian_grid(PM, 90.0, (5, 10, 20), MCSpec(20000, 4))
    assert all(r.violations == 0 for r in reps)
    gaps = [r.gap.estimate for r in reps]
    assert gaps[0] >= gaps[-1]


def test_parisian_grid_rejects_many_levels():
    with pytest.raises(ValueError):
        pathdep.asian_from_parisian_grid(PM, 90.0, (25,), MCSpec(100, 0))


def test_barrier_density_mass():
    d = pathdep.barrier_density(PM, cells=200)
    assert d.mass == pytest.approx(1.0, abs=0.01)


def test_price_h_of_max_small():
    h = BlackBoxPayoff(2, lambda x: x[:, 1], name="max")
    rep = pathdep.price_h_of_terminal_and_max(PathModel((100.0,), (0.2,), 1.0, 50), h, MCSpec(50000, 5), cells=200)
    assert rep.passed
    assert 0.99 <= rep.details["mass"] <= 1.01


def test_report_json_nan_becomes_null():
    rep = pathdep.IdentityReport("x", float("nan"), 1.0, 0.0, 0.1)
    text = json.dumps(rep.to_json())
    assert "NaN" not in text and '"lhs": null' in text


def test_negative_se_rejected():
    with pytest.raises(ValueError):
        pathdep.IdentityReport("x", 0.0, 0.0, -1.0, 0.0)
