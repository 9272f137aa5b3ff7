"""Upper orthant probabilities of standard multivariate normal vectors.

``P(Z_1 > a_1, ..., Z_n > a_n)`` for unit-variance normals with correlation
matrix ``R``.  All routines are vectorised over the threshold points.

* n = 1: ``norm.sf``.
* n = 2: Genz's Gauss-Legendre rule on the Drezner-Wesolowsky transformed
  integrand (double precision accuracy).
* n = 3: one-dimensional conditioning on a pivot coordinate, integrated by
  composite Gauss-Legendre with panel doubling until the change is below the
  requested absolute tolerance.
* n >= 4: randomised rank-1 lattice rule on Genz's separation-of-variables
  integrand, with an error estimate from the spread of the random shifts.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

_TWO_PI = 2.0 * math.pi
_GL_T, _GL_W = np.polynomial.legendre.leggauss(20)
# nodes on (0, 2), weights summing to 2
_X2 = 1.0 + _GL_T
_W2 = _GL_W

_ZCLIP = 9.0


def _sf(x):
    return ndtr(-x)


def bvn_upper(h, k, r: float) -> np.ndarray:
    """``P(Z1 > h, Z2 > k)`` for a standard bivariate normal with correlation ``r``.

    ``h`` and ``k`` broadcast against each other and may contain infinities.
    """
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    shape = h.shape
    h = h.ravel()
    k = k.ravel()
    r = float(np.clip(r, -1.0, 1.0))
    out = np.zeros(h.size)

    pos_inf = (h == np.inf) | (k == np.inf)
    h_neg = (h == -np.inf) & ~pos_inf
    k_neg = (k == -np.inf) & ~pos_inf & ~h_neg
    out[h_neg] = _sf(k[h_neg])
    out[k_neg] = _sf(h[k_neg])
    fin = ~(pos_inf | h_neg | k_neg)
    if fin.any():
        out[fin] = _bvn_finite(h[fin], k[fin], r)
    return out.reshape(shape)


def _bvn_finite(h: np.ndarray, k: np.ndarray, r: float) -> np.ndarray:
    if r == 0.0:
        return _sf(h) * _sf(k)
    hk = h * k
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        if abs(r) < 0.925:
            hs = 0.5 * (h * h + k * k)
            asr = 0.5 * math.asin(r)
            sn = np.sin(asr * _X2)
            expo = (np.multiply.outer(hk, sn) - hs[:, None]) / (1.0 - sn * sn)
            bvn = np.exp(expo) @ _W2
            bvn = bvn * asr / _TWO_PI + _sf(h) * _sf(k)
            return np.clip(bvn, 0.0, 1.0)

        if r < 0:
            k = -k
            hk = -hk
        bvn = np.zeros(h.size)
        if abs(r) < 1.0:
            a_s = 1.0 - r * r
            a = math.sqrt(a_s)
            bs = (h - k) ** 2
            asr = -0.5 * (bs / a_s + hk)
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 80.0
            term = a * np.exp(asr) * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s)
            bvn = np.where(asr > -100.0, term, 0.0)
            b = np.sqrt(bs)
            sp = math.sqrt(_TWO_PI) * _sf(b / a)
            corr = np.exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            bvn = bvn - np.where(hk > -100.0, corr, 0.0)
            a2 = 0.5 * a
            xs = (a2 * _X2) ** 2  # (m,)
            asr2 = -0.5 * (bs[:, None] / xs[None, :] + hk[:, None])
            sp2 = 1.0 + c[:, None] * xs[None, :] * (1.0 + 5.0 * d[:, None] * xs[None, :])
            rs = np.sqrt(1.0 - xs)
            ep = np.exp(-(hk[:, None] / 2.0) * xs[None, :] / (1.0 + rs[None, :]) ** 2) / rs[None, :]
            vals = np.where(asr2 > -100.0, np.exp(asr2) * (sp2 - ep), 0.0)
            bvn = (a2 * (vals @ _W2) - bvn) / _TWO_PI
        if r > 0:
            bvn = bvn + _sf(np.maximum(h, k))
        else:
            lower = np.where(h < 0, ndtr(k) - ndtr(h), _sf(h) - _sf(k))
            bvn = np.where(h >= k, -bvn, lower - bvn)
        return np.clip(bvn, 0.0, 1.0)


def _panel_nodes(panels: int, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    width = np.diff(edges)
    nodes = (edges[:-1, None] + 0.5 * width[:, None] * (t[None, :] + 1.0)).ravel()
    weights = (0.5 * width[:, None] * w[None, :]).ravel()
    return nodes, weights


def _tvn_eval(a: np.ndarray, corr: np.ndarray, pivot: int, panels: int) -> np.ndarray:
    others = [i for i in range(3) if i != pivot]
    q1, q2 = others
    r1, r2 = corr[pivot, q1], corr[pivot, q2]
    s1 = math.sqrt(max(1.0 - r1 * r1, 0.0))
    s2 = math.sqrt(max(1.0 - r2 * r2, 0.0))
    rc = (corr[q1, q2] - r1 * r2) / (s1 * s2)
    lo = np.clip(a[:, pivot], -_ZCLIP, None)
    hi = np.maximum(_ZCLIP, lo)
    t, w = _panel_nodes(panels)
    z = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    cond = bvn_upper((a[:, q1, None] - r1 * z) / s1, (a[:, q2, None] - r2 * z) / s2, rc)
    dens = np.exp(-0.5 * z * z) / math.sqrt(_TWO_PI)
    return (hi - lo) * ((cond * dens) @ w)


def tvn_upper(a, corr, tol: float = 1e-10, max_panels: int = 512) -> np.ndarray:
    """``P(Z > a)`` componentwise for a trivariate standard normal.

    ``a`` has shape ``(P, 3)``; infinite entries are allowed.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    corr = np.asarray(corr, dtype=float)
    out = np.zeros(a.shape[0])
    empty = np.any(a == np.inf, axis=1) | np.any(a >= 40.0, axis=1)
    live = ~empty
    if not live.any():
        return out
    aa = np.clip(a[live], -40.0, 40.0)
    off = np.abs(corr - np.eye(3))
    pivot = int(np.argmin(off.max(axis=1)))
    if off[pivot].max() >= 1.0 - 1e-12:
        p, _ = mvn_upper_qmc(aa, corr)
        out[live] = p
        return out
    panels = 32
    prev = _tvn_eval(aa, corr, pivot, panels)
    while panels < max_panels:
        panels *= 2
        cur = _tvn_eval(aa, corr, pivot, panels)
        if np.max(np.abs(cur - prev)) < tol:
            prev = cur
            break
        prev = cur
    out[live] = np.clip(prev, 0.0, 1.0)
    return out


_PRIMES = np.array([2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71], dtype=float)


def mvn_upper_qmc(a, corr, points: int = 4096, shifts: int = 10, seed: int = 12345) -> tuple[np.ndarray, np.ndarray]:
    """Randomised lattice estimate of ``P(Z > a)`` with a 3-sigma error estimate.

    Uses the Richtmyer lattice with baker's transform on Genz's sequential
    conditioning integrand.  The correlation matrix may be singular; its
    factor is then taken from a clipped eigendecomposition.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[1]
    if n > len(_PRIMES) + 1:
        raise ValueError("dimension too large for the lattice rule")
    corr = np.asarray(corr, dtype=float)
    chol = _psd_factor(corr)
    # upper orthant of Z equals lower orthant of -Z at -a
    b = -np.clip(a, -40.0, 40.0)
    gen = np.sqrt(_PRIMES[: max(n - 1, 1)])
    rng = np.random.Generator(np.random.Philox(key=seed))
    k = np.arange(1, points + 1)[:, None]
    estimates = np.zeros((shifts, a.shape[0]))
    for s in range(shifts):
        shift = rng.random(gen.size)
        u = np.abs(2.0 * np.mod(k * gen + shift, 1.0) - 1.0)  # (points, n-1)
        estimates[s] = _genz_integrand(b, chol, u).mean(axis=1)
    mean = estimates.mean(axis=0)
    err = 3.0 * estimates.std(axis=0, ddof=1) / math.sqrt(shifts)
    return np.clip(mean, 0.0, 1.0), err


def _genz_integrand(b: np.ndarray, chol: np.ndarray, u: np.ndarray) -> np.ndarray:
    n = b.shape[1]
    npts = u.shape[0]
    P = b.shape[0]
    y = np.zeros((P, npts, n))
    diag = np.diag(chol)
    f = np.ones((P, npts))
    for i in range(n):
        shift = y[:, :, :i] @ chol[i, :i] if i else np.zeros((P, npts))
        if diag[i] > 1e-14:
            e = ndtr((b[:, i, None] - shift) / diag[i])
        else:
            e = (shift <= b[:, i, None]).astype(float)
        f = f * e
        if i < n - 1 and diag[i] > 1e-14:
            y[:, :, i] = ndtri(np.clip(u[None, :, i] * e, 1e-300, 1 - 1e-16))
    return f


def _psd_factor(corr: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(corr)
        vals = np.clip(vals, 0.0, None)
        # lower-triangular factor of the clipped matrix via QR of (V sqrt(L))^T
        m = vecs * np.sqrt(vals)
        _, r = np.linalg.qr(m.T)
        lower = r.T
        sign = np.sign(np.diag(lower))
        sign[sign == 0] = 1.0
        return lower * sign


def orthant_upper(a, corr) -> np.ndarray:
    """Dispatch on dimension; ``a`` has shape ``(P, n)``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[1]
    if n == 1:
        return _sf(a[:, 0])
    if n == 2:
        return bvn_upper(a[:, 0], a[:, 1], float(corr[0, 1]))
    if n == 3:
        return tvn_upper(a, corr)
    return mvn_upper_qmc(a, corr)[0]
