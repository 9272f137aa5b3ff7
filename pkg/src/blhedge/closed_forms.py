"""Closed-form prices under zero-rate geometric Brownian motion, used as oracles."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr


def _d12(spot, strike, vol, maturity):
    sd = vol * np.sqrt(maturity)
    with np.errstate(divide="ignore"):
        d1 = (np.log(spot / np.asarray(strike, dtype=float)) + 0.5 * sd * sd) / sd
    return d1, d1 - sd


def bs_call(spot: float, strike, vol: float, maturity: float, bond: float = 1.0):
    """Black-Scholes call on an asset with zero rate, discounted by ``1/bond``.

    The forward is ``spot`` (zero rate); ``bond`` only scales the payoff value.
    """
    strike = np.asarray(strike, dtype=float)
    d1, d2 = _d12(spot, np.maximum(strike, 1e-300), vol, maturity)
    price = spot * ndtr(d1) - strike * ndtr(d2)
    price = np.where(strike <= 0, spot - strike, price)
    return price / bond


def bs_put(spot, strike, vol, maturity, bond: float = 1.0):
    return bs_call(spot, strike, vol, maturity) / bond - (spot - np.asarray(strike, dtype=float)) / bond


def lognormal_tail(spot, level, vol, maturity):
    """``Q(S_T > level)``."""
    _, d2 = _d12(spot, level, vol, maturity)
    return ndtr(d2)


def lognormal_pdf(x, spot, vol, maturity):
    x = np.asarray(x, dtype=float)
    sd = vol * math.sqrt(maturity)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (np.log(x / spot) + 0.5 * sd * sd) / sd
        out = np.exp(-0.5 * z * z) / (x * sd * math.sqrt(2 * math.pi))
    return np.where(x > 0, out, 0.0)


def margrabe(s1: float, s2: float, vol1: float, vol2: float, rho: float, maturity: float) -> float:
    """``E (X1 - X2)^+`` for zero-rate correlated GBMs."""
    sig = math.sqrt(vol1 * vol1 + vol2 * vol2 - 2 * rho * vol1 * vol2)
    if sig == 0:
        return max(s1 - s2, 0.0)
    sd = sig * math.sqrt(maturity)
    d1 = (math.log(s1 / s2) + 0.5 * sd * sd) / sd
    return float(s1 * ndtr(d1) - s2 * ndtr(d1 - sd))


def product_moment(s1, s2, vol1, vol2, rho, maturity) -> float:
    """``E[X1 X2] = S01 S02 exp(rho sigma1 sigma2 T)``."""
    return float(s1 * s2 * math.exp(rho * vol1 * vol2 * maturity))


def up_and_in_call(spot: float, strike: float, barrier: float, vol: float, maturity: float) -> float:
    """``E[1{max S >= H} (S_T - K)^+]`` for zero-rate GBM, continuous monitoring."""
    return float(barrier_surface(spot, vol, maturity, np.array([barrier]), np.array([strike]))[0, 0])


def barrier_surface(spot: float, vol: float, maturity: float, H, K) -> np.ndarray:
    """``V_B(H, K) = E[1{max S >= H}(S_T - K)^+]`` on the tensor grid ``H x K``.

    Continuous monitoring, zero rate.  For ``H <= S0`` the barrier is already
    hit and the price is the call ``C(K)``.
    """
    H = np.atleast_1d(np.asarray(H, dtype=float))[:, None]
    K = np.atleast_1d(np.asarray(K, dtype=float))[None, :]
    H, K = np.broadcast_arrays(H, K)
    out = np.empty(H.shape)
    hit = H <= spot
    out[hit] = bs_call(spot, K[hit], vol, maturity)
    live = ~hit
    if live.any():
        h = H[live]
        k = K[live]
        out[live] = _up_in_live(spot, h, k, vol, maturity)
    return out


def _up_in_live(s0, h, k, vol, T):
    """Up-and-in call with ``h > s0`` by the reflection principle.

    ``k >= h``: ending above ``h`` implies a hit, so the price is ``C(k)``.
    ``k < h``, with ``A = h^2 / k`` and ``P`` the put:
    ``C(h) + (h - k) N(d2(h)) + (k/h) [P(A) - P(h) - (A - h) N(-d2(h))]``.
    """
    sd = vol * math.sqrt(T)

    def d2(x):
        return (np.log(s0 / x) - 0.5 * sd * sd) / sd

    def call(x):
        return bs_call(s0, x, vol, T)

    def put(x):
        return bs_put(s0, x, vol, T)

    out = np.empty(h.shape)
    above = k >= h
    out[above] = call(k[above])
    b = ~above
    if b.any():
        hh, kk = h[b], k[b]
        A = hh * hh / kk
        term = call(hh) + (hh - kk) * ndtr(d2(hh)) + (kk / hh) * (put(A) - put(hh) - (A - hh) * ndtr(-d2(hh)))
        out[b] = term
    return out


def max_tail(spot: float, level, vol: float, maturity: float):
    """``Q(max_{t<=T} S_t >= level)`` for zero-rate GBM."""
    level = np.asarray(level, dtype=float)
    sd = vol * math.sqrt(maturity)
    with np.errstate(divide="ignore"):
        m = np.log(level / spot)
    # log S is BM with drift -sd^2/2 per unit variance time
    mu = -0.5 * sd * sd
    p = ndtr((-m + mu) / sd) + np.exp(2 * mu * m / (sd * sd)) * ndtr((-m - mu) / sd)
    return np.where(level <= spot, 1.0, p)


def expected_max(spot: float, vol: float, maturity: float) -> float:
    """``E[max_{t<=T} S_t]`` for zero-rate GBM: ``S0 (1 + ...)`` by integrating the max tail."""
    from scipy.integrate import quad

    val, _ = quad(lambda x: float(max_tail(spot, x, vol, maturity)), spot, spot * math.exp(12 * vol * math.sqrt(maturity)), limit=200)
    return spot + val
