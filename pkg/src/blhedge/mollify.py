"""Payoff smoothing with the standard mollifier and empirical convergence checks.

``h_eps(x) = int rho(y) h(x - eps y) dy`` is evaluated by tensor
Gauss-Legendre quadrature over the unit cube (``rho`` vanishes outside the
ball).  Arguments that leave the positive orthant are clamped to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .mc import MCSpec, summarize
from .measures import CorrelatedLognormal, PricingMeasure
from .payoffs import BlackBoxPayoff, PiecewisePayoff1D

MAX_DIM = 3


def _radial_integral(n: int) -> float:
    """``int_{|x|<1} exp(-1/(1-|x|^2)) dx`` via its radial form."""
    sphere = 2.0 * math.pi ** (n / 2) / special.gamma(n / 2)
    val, _ = integrate.quad(lambda r: r ** (n - 1) * math.exp(-1.0 / (1.0 - r * r)) if r < 1 else 0.0, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    return sphere * val


@dataclass(frozen=True)
class MollifierSpec:
    n: int
    eps: float
    c: float = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "c", 1.0 / _radial_integral(self.n))


def rho_eval(spec: MollifierSpec, x) -> np.ndarray:
    """``c exp(-1/(1-|x|^2))`` inside the unit ball, 0 outside.  ``x`` has shape ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    if spec.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != spec.n:
        raise ValueError(f"points must have {spec.n} coordinates")
    r2 = np.sum(x * x, axis=-1)
    out = np.zeros(r2.shape)
    inside = r2 < 1.0
    out[inside] = spec.c * np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def kernel_nodes(spec: MollifierSpec, nodes: int = 21) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre nodes in the unit ball with weights ``w rho``, renormalised to sum 1."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    grids = np.meshgrid(*([t] * spec.n), indexing="ij")
    y = np.stack([g.ravel() for g in grids], axis=1)
    wt = np.prod(np.meshgrid(*([w] * spec.n), indexing="ij"), axis=0).ravel()
    wt = wt * rho_eval(spec, y)
    keep = wt > 0
    y, wt = y[keep], wt[keep]
    return y, wt / wt.sum()


def _points_func(h, n: int):
    if isinstance(h, PiecewisePayoff1D):
        if n != 1:
            raise ValueError("one-dimensional payoff needs n = 1")
        return lambda pts: h(pts[:, 0])
    return lambda pts: np.asarray(h(pts), dtype=float)


def mollify_payoff(h, spec: MollifierSpec, nodes: int = 21, block: int = 2_000_000) -> BlackBoxPayoff:
    """The smoothed payoff ``h_eps`` as a black box (``n <= 3``)."""
    if spec.n > MAX_DIM:
        raise ValueError(f"mollification is limited to n <= {MAX_DIM} (cost grows as nodes**n)")
    func = _points_func(h, spec.n)
    y, w = kernel_nodes(spec, nodes)
    shift = spec.eps * y

    def smoothed(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != spec.n:
            x = x.reshape(-1, spec.n)
        out = np.empty(x.shape[0])
        rows = max(1, block // w.size)
        for s in range(0, x.shape[0], rows):
            xs = x[s : s + rows]
            pts = np.maximum(xs[:, None, :] - shift[None, :, :], 0.0).reshape(-1, spec.n)
            out[s : s + rows] = func(pts).reshape(xs.shape[0], w.size) @ w
        return out

    name = getattr(h, "name", "h")
    return BlackBoxPayoff(spec.n, smoothed, None, f"mollified({name},eps={spec.eps:g})")


# -- convergence study -------------------------------------------------------------


@dataclass
class EpsRow:
    eps: float
    price_gap: float
    price_gap_se: float
    l1_gap: float
    l1_gap_se: float
    tail_bound: float
    tail_bound_se: float

    @property
    def dominance_ok(self) -> bool:
        # |E(h_eps - h)| <= E|h_eps - h| holds sample by sample
        return abs(self.price_gap) <= self.l1_gap + 1e-15


@dataclass
class ConvergenceReport:
    rows: list[EpsRow]
    box: list[tuple[float, float]]
    l1_monotone: bool
    price_monotone: bool
    plateau: bool
    paths: int

    def to_json(self) -> dict:
        return {
            "rows": [dict(r.__dict__, dominance_ok=r.dominance_ok) for r in self.rows],
            "box": [list(b) for b in self.box],
            "l1_monotone": self.l1_monotone,
            "price_monotone": self.price_monotone,
            "plateau": self.plateau,
            "paths": self.paths,
        }


def _monotone(values: Sequence[float], ses: Sequence[float], k: float = 3.0) -> bool:
    """Non-increasing along the sequence up to ``k`` combined SE."""
    return all(b <= a + k * math.hypot(sa, sb) for a, b, sa, sb in zip(values, values[1:], ses, ses[1:]))


def default_box(m: PricingMeasure, width_sd: float = 6.0) -> list[tuple[float, float]]:
    """A ``width_sd`` log box for lognormals, else ``[0, U_i]``."""
    if isinstance(m, CorrelatedLognormal):
        sd = m.log_sd
        mu = np.log(m.spot) - 0.5 * sd * sd
        return [(float(math.exp(a - width_sd * s)), float(math.exp(a + width_sd * s))) for a, s in zip(mu, sd)]
    return [(0.0, float(m.upper_bound(i))) for i in range(m.dimension)]


def convergence_check(
    h,
    m: PricingMeasure,
    eps_sequence: Sequence[float],
    mc: MCSpec,
    nodes: int = 21,
    box: list[tuple[float, float]] | None = None,
) -> ConvergenceReport:
    """Shared-sample estimates of ``E(h_eps - h)``, ``E|h_eps - h|`` and
    ``E[h_eps 1{X outside box}]`` for each ``eps``.

    ``plateau`` flags an ``L1`` gap that stays above 3 SE and shrinks by less
    than a quarter over the whole sequence, the signature of an atom sitting
    on a discontinuity of ``h``.
    """
    eps = [float(e) for e in eps_sequence]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps sequence must be strictly decreasing")
    n = m.dimension
    func = _points_func(h, n)
    x = m.sample(mc.paths, mc.seed, mc.antithetic, mc.chunk_size, mc.threads)
    base = func(x)
    box = box or default_box(m)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    outside = np.any((x < lo) | (x > hi), axis=1)
    rows = []
    for e in eps:
        he = mollify_payoff(h, MollifierSpec(n, e), nodes)(x)
        diff = he - base
        pg = summarize(diff, mc)
        l1 = summarize(np.abs(diff), mc)
        tb = summarize(he * outside, mc)
        rows.append(EpsRow(e, pg.estimate, pg.standard_error, l1.estimate, l1.standard_error, abs(tb.estimate), tb.standard_error))
    l1v = [r.l1_gap for r in rows]
    l1s = [r.l1_gap_se for r in rows]
    pv = [abs(r.price_gap) for r in rows]
    ps = [r.price_gap_se for r in rows]
    last = rows[-1]
    plateau = len(rows) > 1 and last.l1_gap > 3 * last.l1_gap_se and last.l1_gap > 0.75 * rows[0].l1_gap
    return ConvergenceReport(rows, [tuple(b) for b in box], _monotone(l1v, l1s), _monotone(pv, ps), bool(plateau), mc.paths)
