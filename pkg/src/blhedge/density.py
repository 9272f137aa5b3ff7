"""State-price densities and probabilities recovered from option price surfaces.

Every transform is a plain finite difference on the given grid.  Nothing is
smoothed; suspicious inputs (non-convex surfaces, negative cells) are reported
in the diagnostics instead.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .measures import CorrelatedLognormal, DiscreteMeasure, PricingMeasure
from .mc import MCResult, MCSpec, mc_price_terminal

log = logging.getLogger(__name__)

SURFACE_KINDS = ("call_1d", "multi_lookback", "pyramid")


class SurfaceError(ValueError):
    pass


@dataclass
class CallSurface:
    strikes: list[np.ndarray]
    prices: np.ndarray
    kind: str = "call_1d"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise SurfaceError(f"unknown surface kind {self.kind!r}")
        self.strikes = [np.asarray(k, dtype=float) for k in self.strikes]
        self.prices = np.asarray(self.prices, dtype=float)
        shape = tuple(k.size for k in self.strikes)
        if self.prices.shape != shape:
            raise SurfaceError(f"price tensor shape {self.prices.shape} does not match strike grids {shape}")
        for k in self.strikes:
            if np.any(np.diff(k) <= 0):
                raise SurfaceError("strikes must be strictly increasing")
        if np.any(self.prices < -1e-12):
            raise SurfaceError("prices must be non-negative")
        if self.kind == "call_1d":
            self.diagnostics.update(arbitrage_flags(self.strikes[0], self.prices))

    @property
    def n(self) -> int:
        return len(self.strikes)


def arbitrage_flags(strikes: np.ndarray, prices: np.ndarray, tol: float = 1e-8) -> dict:
    """Monotonicity and convexity violations of a call curve."""
    slopes = np.diff(prices) / np.diff(strikes)
    increasing = np.nonzero(slopes > tol)[0]
    nonconvex = np.nonzero(np.diff(slopes) < -tol)[0]
    return {
        "increasing_segments": [float(strikes[i]) for i in increasing],
        "nonconvex_points": [float(strikes[i + 1]) for i in nonconvex],
        "arbitrage_free": bool(increasing.size == 0 and nonconvex.size == 0),
    }


@dataclass
class DensityGrid:
    coords: list[np.ndarray]
    density: np.ndarray
    mass: float
    diagnostics: dict = field(default_factory=dict)
    cell_mass: np.ndarray | None = None


# -- 1-D ---------------------------------------------------------------------------------


def second_derivative(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Second derivative on a possibly non-uniform grid.

    Interior points use the three-point formula; the endpoints use the
    four-point one-sided formula (second order on uniform grids).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 5:
        raise SurfaceError("need at least 5 strikes")
    h0 = x[1:-1] - x[:-2]
    h1 = x[2:] - x[1:-1]
    out = np.empty_like(y)
    out[1:-1] = 2.0 * (h0 * y[2:] - (h0 + h1) * y[1:-1] + h1 * y[:-2]) / (h0 * h1 * (h0 + h1))
    out[0] = _one_sided(x[:4], y[:4])
    out[-1] = _one_sided(x[-4:][::-1], y[-4:][::-1])
    return out


def _one_sided(x: np.ndarray, y: np.ndarray) -> float:
    # exact second derivative at x[0] of the cubic through four points
    d = x - x[0]
    A = np.vander(d, 4, increasing=True)
    coef = np.linalg.solve(A, y)
    return float(2.0 * coef[2])


def bl_density_1d(s: CallSurface) -> DensityGrid:
    """``q(K) = d^2 C / dK^2`` with trapezoid mass and negativity diagnostics."""
    if s.kind != "call_1d" or s.n != 1:
        raise SurfaceError("bl_density_1d needs a call_1d surface")
    k = s.strikes[0]
    q = second_derivative(k, s.prices)
    mass = float(np.trapezoid(q, k))
    neg = q < -1e-6
    diag = dict(s.diagnostics)
    diag.update({"negative_points": int(neg.sum()), "min_density": float(q.min()), "mass": mass})
    if neg.any():
        warnings.warn(f"{int(neg.sum())} strikes with negative density", RuntimeWarning, stacklevel=2)
    return DensityGrid([k], q, mass, diag)


def _interp(s: CallSurface, K: float) -> float:
    k = s.strikes[0]
    if not k[0] <= K <= k[-1]:
        raise SurfaceError(f"strike {K} outside the surface grid [{k[0]}, {k[-1]}]")
    return float(np.interp(K, k, s.prices))


@dataclass
class DigitalEstimate:
    value: float
    raw: list[float]
    steps: list[float]
    table: list[list[float]]


def digital_from_call_spread(
    s: CallSurface, K: float, dK_sequence: Sequence[float] | None = None, side: str = "ge"
) -> DigitalEstimate:
    """``Q(X >= K)`` as the limit of ``(C(K - dK) - C(K)) / dK`` (``side='ge'``)
    or ``Q(X > K)`` from ``(C(K) - C(K + dK)) / dK`` (``side='gt'``).

    Prices between strikes are interpolated linearly; the default steps are
    ``{8, 4, 2, 1}`` times the local grid spacing, followed by Richardson
    extrapolation in ``dK``.
    """
    from .engine import richardson

    k = s.strikes[0]
    if dK_sequence is None:
        # local spacing on the requested side, ignoring near-duplicate strikes
        tiny = 1e-9 * max(1.0, abs(K))
        if side == "ge":
            below = k[k < K - tiny]
            spacing = K - below[-1] if below.size else k[1] - k[0]
        else:
            above = k[k > K + tiny]
            spacing = above[0] - K if above.size else k[-1] - k[-2]
        dK_sequence = [spacing * f for f in (8, 4, 2, 1)]
    steps = [float(d) for d in dK_sequence]
    if len(steps) < 2 or any(not b < a for a, b in zip(steps, steps[1:])):
        raise ValueError("dK sequence must be strictly decreasing")
    gaps = np.diff(k)
    spacing_min = float(np.min(gaps[gaps > 1e-9 * max(1.0, abs(K))], initial=np.inf))
    if steps[-1] < 0.999 * spacing_min:
        warnings.warn("dK below the strike spacing: interpolation dominates", RuntimeWarning, stacklevel=2)
    c0 = _interp(s, K)
    if side == "ge":
        raw = [(_interp(s, K - d) - c0) / d for d in steps]
    elif side == "gt":
        raw = [(c0 - _interp(s, K + d)) / d for d in steps]
    else:
        raise ValueError("side must be 'ge' or 'gt'")
    geometric = len({round(a / b, 12) for a, b in zip(steps, steps[1:])}) == 1
    if geometric:
        value, table = richardson(steps, raw)
    else:
        value, table = raw[-1], [raw]
    return DigitalEstimate(value, raw, steps, table)


# -- surfaces ---------------------------------------------------------------------------------


def call_surface_from_measure(m: PricingMeasure, strikes: np.ndarray, coordinate: int = 0) -> CallSurface:
    """Exact call prices ``E(X - K)^+`` from a lognormal or discrete law."""
    strikes = np.asarray(strikes, dtype=float)
    if isinstance(m, CorrelatedLognormal):
        from .closed_forms import bs_call

        prices = bs_call(m.spot[coordinate], strikes, m.vol[coordinate], m.maturity)
    elif isinstance(m, DiscreteMeasure):
        x = m.atom_matrix[:, coordinate]
        prices = np.array([math.fsum(m.weights * np.maximum(x - k, 0.0)) for k in strikes])
    else:
        raise TypeError("need a lognormal or discrete measure")
    return CallSurface([strikes], np.maximum(prices, 0.0), "call_1d")


def _ray_min_integral(m: PricingMeasure, pts: np.ndarray, panels: int = 40, order: int = 8) -> np.ndarray:
    """``E min_i (X_i - x_i)^+ = int_0^inf Q(X_i > x_i + u for all i) du``."""
    upper = np.array([m.upper_bound(i) for i in range(m.dimension)])
    length = np.maximum((upper[None, :] - pts).min(axis=1), 0.0)
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    nodes = (edges[:-1, None] + 0.5 * np.diff(edges)[:, None] * (t[None, :] + 1.0)).ravel()
    weights = (0.5 * np.diff(edges)[:, None] * w[None, :]).ravel()
    out = np.zeros(pts.shape[0])
    block = max(1, 2_000_000 // nodes.size)
    for s in range(0, pts.shape[0], block):
        p = pts[s : s + block]
        L = length[s : s + block]
        u = L[:, None] * nodes[None, :]
        thr = (p[:, None, :] + u[:, :, None]).reshape(-1, m.dimension)
        q = m.tail(thr).reshape(p.shape[0], nodes.size)
        out[s : s + block] = L * (q @ weights)
    return out


def multi_lookback_value(m: CorrelatedLognormal, pts: np.ndarray) -> np.ndarray:
    """``E max_i (X_i - x_i)^+`` by inclusion-exclusion over minima.

    ``max(a_1^+, ..., a_n^+) = sum over non-empty subsets S of
    (-1)^(|S|+1) min_{i in S} a_i^+``, and each minimum is a ray integral of
    the joint tail of the sub-vector.
    """
    from .closed_forms import bs_call

    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = m.dimension
    if n not in (1, 2, 3):
        raise ValueError("multi-lookback surfaces are implemented for n <= 3")
    total = np.zeros(pts.shape[0])
    for i in range(n):
        total += bs_call(m.spot[i], pts[:, i], m.vol[i], m.maturity)
    for size in range(2, n + 1):
        for subset in itertools.combinations(range(n), size):
            idx = list(subset)
            sub = CorrelatedLognormal(m.spot[idx], m.vol[idx], m.maturity, m.corr[np.ix_(idx, idx)])
            total += (-1) ** (size + 1) * _ray_min_integral(sub, pts[:, idx])
    return total


def multi_lookback_surface(m: CorrelatedLognormal, grids: Sequence[np.ndarray]) -> CallSurface:
    """Short-window multi-asset lookback prices ``E max_i (X_i - K_i)^+`` on a tensor grid."""
    grids = [np.asarray(g, dtype=float) for g in grids]
    mesh = np.meshgrid(*grids, indexing="ij")
    pts = np.column_stack([g.ravel() for g in mesh])
    values = multi_lookback_value(m, pts).reshape([g.size for g in grids])
    return CallSurface(grids, np.maximum(values, 0.0), "multi_lookback")


def joint_density_nd(s: CallSurface) -> DensityGrid:
    """Joint density from a multi-asset lookback surface.

    ``G = sum_i dV/dK_i`` (central differences, second-order one-sided at the
    edges) equals ``Q(all X_i <= K_i) - 1``; the mixed difference of ``G``
    over each grid cell is that cell's probability mass.
    """
    if s.kind != "multi_lookback":
        raise SurfaceError("joint_density_nd needs a multi_lookback surface")
    if s.n not in (2, 3):
        raise SurfaceError("joint_density_nd supports n in {2, 3}")
    V = s.prices
    G = np.zeros_like(V)
    for ax, k in enumerate(s.strikes):
        G = G + np.gradient(V, k, axis=ax, edge_order=2)
    mass = G
    for ax in range(s.n):
        mass = np.diff(mass, axis=ax)
    widths = np.meshgrid(*[np.diff(k) for k in s.strikes], indexing="ij")
    area = np.prod(widths, axis=0)
    density = mass / area
    mids = [0.5 * (k[1:] + k[:-1]) for k in s.strikes]
    total = float(mass.sum())
    neg = mass < -1e-9
    negative_fraction = float(-mass[neg].sum() / max(abs(total), 1e-300))
    diag = {"mass": total, "negative_cells": int(neg.sum()), "negative_mass_fraction": negative_fraction}
    if negative_fraction > 0.05:
        warnings.warn(
            f"negative mass fraction {negative_fraction:.3f} > 5%: finite differences amplify noise; consider a smoother surface",
            RuntimeWarning,
            stacklevel=2,
        )
    return DensityGrid(mids, density, total, diag, cell_mass=mass)


# -- finite-state recovery ------------------------------------------------------------------------


def pyramid_price(m: PricingMeasure, K_vector: Sequence[float], K: float, spec: MCSpec | None = None) -> MCResult:
    """MC price of ``(sum_i (X_i - K_i)^+ - K)^+``."""
    kv = np.asarray(K_vector, dtype=float)
    if kv.size != m.dimension:
        raise ValueError("strike vector length must equal the measure dimension")

    def payoff(x):
        return np.maximum(np.maximum(x - kv, 0.0).sum(axis=1) - K, 0.0)

    return mc_price_terminal(m, payoff, spec or MCSpec())


@dataclass
class RectangleRecovery:
    value: float
    exact: bool
    terms: int
    gap_diagnostic: dict


def _fraction_product_call(values: list[list[Fraction]], weights: list[Fraction], strikes: Sequence[Fraction]) -> Fraction:
    total = Fraction(0)
    for row, w in zip(values, weights):
        prod = w
        for v, k in zip(row, strikes):
            d = v - k
            if d <= 0:
                prod = Fraction(0)
                break
            prod *= d
        total += prod
    return total


def rectangle_prob_recovery(
    m: DiscreteMeasure,
    payoff_functions: Sequence[Callable[[np.ndarray], np.ndarray]] | None,
    M_vector: Sequence[float],
    K_vector: Sequence[float],
    eps: float,
) -> RectangleRecovery:
    """``E[g_eps]`` built only from product-call prices ``E prod_i (f_i - k_i)^+``.

    Each factor of ``g_eps`` is a combination of four calls on ``f_i`` with
    strikes ``M_i - eps, M_i, K_i - eps, K_i``; expanding the product gives
    ``4**n`` product-call prices, each evaluated in exact rational arithmetic
    so that the result equals ``Q(M_i <= f_i < K_i for all i)`` exactly when
    no value of ``f_i`` lies in ``[M_i - eps, M_i)`` or ``[K_i - eps, K_i)``.
    """
    n = m.dimension
    fs = payoff_functions or [lambda x, i=i: x[:, i] for i in range(n)]
    if len(fs) != len(M_vector) or len(fs) != len(K_vector):
        raise ValueError("need one payoff function, M and K per factor")
    vals = np.column_stack([np.asarray(f(m.atom_matrix), dtype=float) for f in fs])
    e = Fraction(float(eps))
    Ms = [Fraction(float(v)) for v in M_vector]
    Ks = [Fraction(float(v)) for v in K_vector]
    fvals = [[Fraction(float(v)) for v in row] for row in vals]
    fw = [Fraction(float(w)) for w in m.weights]
    wsum = sum(fw)
    fw = [w / wsum for w in fw]
    legs = [[(Ms[i] - e, 1), (Ms[i], -1), (Ks[i] - e, -1), (Ks[i], 1)] for i in range(len(fs))]
    total = Fraction(0)
    terms = 0
    for combo in itertools.product(*legs):
        sign = 1
        strikes = []
        for k, sg in combo:
            strikes.append(k)
            sign *= sg
        total += sign * _fraction_product_call(fvals, fw, strikes)
        terms += 1
    total /= e ** len(fs)
    problems = {}
    for i in range(len(fs)):
        distinct = np.unique(vals[:, i])
        gap = float(np.min(np.diff(distinct))) if distinct.size > 1 else math.inf
        bad = [
            float(v)
            for v in distinct
            if (M_vector[i] - eps <= v < M_vector[i]) or (K_vector[i] - eps <= v < K_vector[i])
        ]
        if bad or not eps < 0.5 * gap:
            problems[i] = {"min_gap": gap, "values_in_eps_windows": bad}
    exact = not any(p["values_in_eps_windows"] for p in problems.values())
    if problems:
        log.warning("rectangle recovery eps diagnostic: %s", problems)
    return RectangleRecovery(float(total), exact, terms, problems)


def rectangle_prob_direct(m: DiscreteMeasure, M_vector, K_vector, payoff_functions=None) -> float:
    n = m.dimension
    fs = payoff_functions or [lambda x, i=i: x[:, i] for i in range(n)]
    inside = np.ones(m.weights.size, dtype=bool)
    for f, lo, hi in zip(fs, M_vector, K_vector):
        v = np.asarray(f(m.atom_matrix), dtype=float)
        inside &= (lo <= v) & (v < hi)
    return float(math.fsum(m.weights[inside]))


# -- CSV --------------------------------------------------------------------------------------


def read_surface_csv(path: str | Path, kind: str | None = None) -> CallSurface:
    """``strike,price`` (1-D) or ``k1,...,kn,price`` (complete tensor grid, any row order)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise SurfaceError("surface CSV has no rows")
    if header == ["strike", "price"]:
        data = np.array(rows)
        order = np.argsort(data[:, 0])
        return CallSurface([data[order, 0]], data[order, 1], kind or "call_1d")
    n = len(header) - 1
    if header != [f"k{i + 1}" for i in range(n)] + ["price"] or n < 1:
        raise SurfaceError(f"unexpected CSV header {','.join(header)}")
    data = np.array(rows)
    grids = [np.unique(data[:, i]) for i in range(n)]
    shape = tuple(g.size for g in grids)
    prices = np.full(shape, np.nan)
    idx = tuple(np.searchsorted(g, data[:, i]) for i, g in enumerate(grids))
    seen = np.zeros(shape, dtype=int)
    np.add.at(seen, idx, 1)
    if np.any(seen > 1):
        raise SurfaceError("duplicate grid points in surface CSV")
    prices[idx] = data[:, n]
    if np.isnan(prices).any():
        missing = np.argwhere(np.isnan(prices))[:5]
        pts = [[float(grids[i][j]) for i, j in enumerate(row)] for row in missing]
        raise SurfaceError(f"incomplete tensor grid: {int(np.isnan(prices).sum())} missing points, e.g. {pts}")
    return CallSurface(grids, prices, kind or ("call_1d" if n == 1 else "multi_lookback"))


def write_surface_csv(s: CallSurface, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if s.n == 1:
            w.writerow(["strike", "price"])
            for k, p in zip(s.strikes[0], s.prices):
                w.writerow([repr(float(k)), repr(float(p))])
            return
        w.writerow([f"k{i + 1}" for i in range(s.n)] + ["price"])
        for idx in itertools.product(*[range(k.size) for k in s.strikes]):
            w.writerow([repr(float(s.strikes[i][j])) for i, j in enumerate(idx)] + [repr(float(s.prices[idx]))])


def write_density_csv(d: DensityGrid, fh) -> None:
    w = csv.writer(fh)
    n = len(d.coords)
    w.writerow([f"x{i + 1}" for i in range(n)] + ["density"])
    for idx in itertools.product(*[range(c.size) for c in d.coords]):
        w.writerow([repr(float(d.coords[i][j])) for i, j in enumerate(idx)] + [repr(float(d.density[idx]))])
