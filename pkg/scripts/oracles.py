"""Independent oracle values frozen into the test-suite.

Everything here uses scipy/numpy directly (adaptive quadrature, normal CDFs,
exact enumeration) and never imports ``blhedge``, so the frozen numbers are
independent of the code under test.  Run:

    python scripts/oracles.py > tests/oracle_values.json
"""

from __future__ import annotations

import json
import math
from math import comb

import numpy as np
from scipy import integrate, stats

S0, SIG, T = 100.0, 0.2, 1.0


def lognormal_pdf(x, s0=S0, sig=SIG, t=T):
    sd = sig * math.sqrt(t)
    mu = math.log(s0) - 0.5 * sd * sd
    return stats.lognorm.pdf(x, s=sd, scale=math.exp(mu))


def call_by_quad(K, s0=S0, sig=SIG, t=T):
    val, _ = integrate.quad(lambda x: (x - K) * lognormal_pdf(x, s0, sig, t), K, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


def tail_by_quad(K, s0=S0, sig=SIG, t=T):
    val, _ = integrate.quad(lambda x: lognormal_pdf(x, s0, sig, t), K, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    return val


def bivariate_expectation(f, s, v, rho, kinks=((), ()), t=T):
    """``E f(X1, X2)`` for correlated lognormals by nested adaptive quadrature
    in the driving normals, with the payoff kinks passed as break points."""
    r = math.sqrt(1 - rho * rho)

    def x_of(i, e):
        return s[i] * math.exp(v[i] * math.sqrt(t) * e - 0.5 * v[i] ** 2 * t)

    def e_of(i, k):
        return (math.log(k / s[i]) + 0.5 * v[i] ** 2 * t) / (v[i] * math.sqrt(t))

    def inner(z1):
        x1 = x_of(0, z1)
        pts = [(e_of(1, k) - rho * z1) / r for k in kinks[1]]
        pts = [p for p in pts if -10 < p < 10] or None
        val, _ = integrate.quad(
            lambda z2: f(x1, x_of(1, rho * z1 + r * z2)) * stats.norm.pdf(z2), -10, 10, points=pts, epsabs=1e-12, epsrel=1e-11, limit=400
        )
        return val * stats.norm.pdf(z1)

    pts = [e_of(0, k) for k in kinks[0]] or None
    val, _ = integrate.quad(inner, -10, 10, points=pts, epsabs=1e-11, epsrel=1e-10, limit=400)
    return val


def margrabe_by_quad(s, v, rho, t=T):
    """``E (X1 - X2)^+``: condition on X2 and integrate a Black-Scholes call in X1."""
    def inner(z2):
        x2 = s[1] * math.exp(v[1] * math.sqrt(t) * z2 - 0.5 * v[1] ** 2 * t)
        # X1 | z2 is lognormal with log-sd v1 sqrt(t(1-rho^2))
        sd = v[0] * math.sqrt(t * (1 - rho * rho))
        m = math.log(s[0]) - 0.5 * v[0] ** 2 * t + v[0] * math.sqrt(t) * rho * z2
        fwd = math.exp(m + 0.5 * sd * sd)
        d1 = (math.log(fwd / x2) + 0.5 * sd * sd) / sd
        return (fwd * stats.norm.cdf(d1) - x2 * stats.norm.cdf(d1 - sd)) * stats.norm.pdf(z2)

    val, _ = integrate.quad(inner, -12, 12, epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


def expected_max_gbm(s0=S0, sig=SIG, t=T):
    """``E max_{[0,t]} S`` for driftless GBM from the reflection law of the log-max."""
    nu = -0.5 * sig * sig
    sd = sig * math.sqrt(t)

    def tail(m):  # P(max log-return >= m)
        return stats.norm.sf((m - nu * t) / sd) + math.exp(2 * nu * m / (sig * sig)) * stats.norm.sf((m + nu * t) / sd)

    val, _ = integrate.quad(lambda m: s0 * math.exp(m) * tail(m), 0, 20 * sd, epsabs=1e-12, epsrel=1e-12, limit=400)
    return s0 + val


def binomial_atoms(spot, up, down, steps):
    # zero-rate risk-neutral up probability
    pu = (1 - down) / (up - down)
    pd = 1 - pu
    return [(spot * up**k * down ** (steps - k), comb(steps, k) * pu**k * pd ** (steps - k)) for k in range(steps + 1)]


def main():
    out = {}
    out["bs_call"] = {str(k): call_by_quad(k) for k in (80, 100, 120)}
    out["lognormal_tail_ge_100"] = tail_by_quad(100.0)
    # binomial: 100, up 1.1, down 1/1.1, 6 steps
    atoms = binomial_atoms(100.0, 1.1, 1 / 1.1, 6)
    out["binomial_atoms"] = [[a, w] for a, w in atoms]
    out["binomial_digital_ge_100"] = sum(w for a, w in atoms if a >= 100 - 1e-9)
    out["binomial_digital_gt_100"] = sum(w for a, w in atoms if a > 100 + 1e-9)
    out["binomial_call_100"] = sum(w * max(a - 100, 0) for a, w in atoms)
    s, v = (100.0, 100.0), (0.2, 0.3)
    out["product_moment_rho05"] = 100.0 * 100.0 * math.exp(0.5 * 0.2 * 0.3)
    out["margrabe_rho0"] = margrabe_by_quad(s, v, 0.0)
    out["margrabe_rho05"] = margrabe_by_quad(s, v, 0.5)
    sd = math.sqrt(0.2**2 + 0.3**2 - 2 * 0.5 * 0.2 * 0.3)
    out["indicator_ge_rho05"] = float(stats.norm.cdf((0.5 * 0.3**2 - 0.5 * 0.2**2) / sd))
    products = {
        "call90_call80": (lambda a, b: max(a - 90, 0) * max(b - 80, 0), ((90,), (80,))),
        "x1_x2": (lambda a, b: a * b, ((), ())),
        "digge100_call100": (lambda a, b: (a >= 100) * max(b - 100, 0), ((100,), (100,))),
        "put110_x2": (lambda a, b: max(110 - a, 0) * b, ((110,), ())),
        "call100_plus_put90": (lambda a, b: max(a - 100, 0) + max(90 - b, 0), ((100,), (90,))),
    }
    out["products"] = {}
    for rho in (0.0, 0.5):
        for name, (f, kinks) in products.items():
            out["products"][f"{name}|{rho}"] = bivariate_expectation(f, (100.0, 90.0), (0.2, 0.3), rho, kinks)
    out["expected_max"] = expected_max_gbm()
    out["lognormal_pdf_at_100"] = float(lognormal_pdf(100.0))
    out["mollifier_mass_1d"], _ = integrate.quad(lambda x: math.exp(-1 / (1 - x * x)), -1, 1, epsabs=1e-14, epsrel=1e-12)
    out["mollifier_mass_2d"], _ = integrate.dblquad(
        lambda y, x: math.exp(-1 / (1 - x * x - y * y)) if x * x + y * y < 1 else 0.0,
        -1, 1, lambda x: -math.sqrt(1 - x * x), lambda x: math.sqrt(1 - x * x), epsabs=1e-13, epsrel=1e-12,
    )
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
