"""Multidimensional Breeden-Litzenberger / Bick pricing from joint tail probabilities.

A product payoff ``h = sum_k prod_j f_{k,j}(x_j)`` is priced by summing one
functional per split ``(z, d, r, l)`` of the coordinates:

* ``z``: the factor is frozen at 0 and contributes ``f(0)``;
* ``d``: integrate ``f'(y) Q(X > y, ...)`` over ``y``;
* ``r``: sum right jumps ``f(s+) - f(s)`` against ``Q(X > s, ...)``;
* ``l``: sum left jumps ``f(s) - f(s-)`` against ``Q(X >= s, ...)``.

All four roles reduce to a list of ``(threshold, weight, strictness)`` legs per
coordinate, so each split is one vectorised joint-tail call on the tensor
product of its legs.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .measures import GE, GT, CorrelatedLognormal, Discount, PricingMeasure, TailEvent
from .payoffs import BlackBoxPayoff, PiecewisePayoff1D, ProductPayoff
from .quadrature import QuadratureSpec, adaptive, axis_rule, cuts_for, uniform_cells

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12
MAX_DIMENSION = 6


class DivergentFunctional(ArithmeticError):
    pass


@dataclass(frozen=True)
class Split:
    """Disjoint 0-based index sets whose union is ``{0, ..., n-1}``."""

    z: tuple[int, ...]
    d: tuple[int, ...]
    r: tuple[int, ...]
    l: tuple[int, ...]

    def __post_init__(self):
        allidx = self.z + self.d + self.r + self.l
        if len(set(allidx)) != len(allidx):
            raise ValueError("split index sets must be disjoint")
        if sorted(allidx) != list(range(len(allidx))):
            raise ValueError("split must cover every coordinate exactly once")

    @property
    def n(self) -> int:
        return len(self.z) + len(self.d) + len(self.r) + len(self.l)

    def role(self, i: int) -> str:
        for name in "zdrl":
            if i in getattr(self, name):
                return name
        raise IndexError(i)

    def as_dict(self) -> dict:
        return {"z": list(self.z), "d": list(self.d), "r": list(self.r), "l": list(self.l)}

    @classmethod
    def from_roles(cls, roles: Sequence[str]) -> "Split":
        return cls(*(tuple(i for i, ch in enumerate(roles) if ch == name) for name in "zdrl"))


def enumerate_splits(n: int) -> list[Split]:
    """All ``4**n`` splits in lexicographic order of the role string (z < d < r < l)."""
    if not 1 <= n <= MAX_DIMENSION:
        raise ValueError(f"n must be in 1..{MAX_DIMENSION}, got {n}")
    return [Split.from_roles(roles) for roles in itertools.product("zdrl", repeat=n)]


@dataclass
class SplitValue:
    split: Split
    value: float
    abs_value: float
    skipped: bool = False


@dataclass
class PriceBreakdown:
    total: float
    discount: float
    splits: list[SplitValue] = field(default_factory=list)
    skipped_reason: dict = field(default_factory=dict)
    nodes: int = 0

    @property
    def undiscounted(self) -> float:
        return math.fsum(s.value for s in self.splits)

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "discount": self.discount,
            "splits": [dict(s.split.as_dict(), value=s.value, skipped=s.skipped) for s in self.splits],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# -- legs ---------------------------------------------------------------------


@dataclass(frozen=True)
class Legs:
    """Thresholds, per-term weights ``(m_terms, k)`` and strictness for one coordinate."""

    x: np.ndarray
    w: np.ndarray
    strict: np.ndarray


def _coordinate_cuts(h: ProductPayoff, m: PricingMeasure, i: int) -> list[float]:
    bps = [b for term in h.terms for b in term[i].breakpoints]
    return cuts_for(bps, m.atoms(i))


def coordinate_legs(factors: Sequence[PiecewisePayoff1D], role: str, upper: float, cuts, nodes: int) -> Legs:
    """Legs of one coordinate for every term's factor in the given role."""
    if role == "z":
        w = np.array([[f.at_zero()] for f in factors])
        return Legs(np.zeros(1), w, np.array([GE]))
    if role == "d":
        rule = axis_rule(0.0, upper, cuts, nodes)
        w = np.stack([rule.w * f.deriv(rule.x, f.piece_index(rule.mid)) for f in factors])
        return Legs(rule.x, w, rule.strict)
    jumps = [dict(f.right_jumps() if role == "r" else f.left_jumps()) for f in factors]
    locs = sorted(set().union(*[j.keys() for j in jumps]))
    x = np.array(locs, dtype=float)
    w = np.array([[j.get(s, 0.0) for s in locs] for j in jumps]).reshape(len(factors), len(locs))
    flag = GT if role == "r" else GE
    return Legs(x, w, np.full(x.size, flag, dtype=bool))


def _tensor_sum(legs: list[Legs], m: PricingMeasure, block: int = 250_000) -> tuple[float, float]:
    """``sum over grid of (sum_k prod_j w_kj) * Q(...)`` and its absolute counterpart."""
    n = len(legs)
    sizes = [lg.x.size for lg in legs]
    if any(s == 0 for s in sizes):
        return 0.0, 0.0
    # weights over the flattened grid
    w = legs[0].w
    wabs = np.abs(legs[0].w)
    for lg in legs[1:]:
        w = (w[:, :, None] * lg.w[:, None, :]).reshape(w.shape[0], -1)
        wabs = (wabs[:, :, None] * np.abs(lg.w)[:, None, :]).reshape(w.shape[0], -1)
    wsum = w.sum(axis=0)
    wabs = wabs.sum(axis=0)
    live = np.nonzero(wabs)[0]
    if live.size == 0:
        return 0.0, 0.0
    value_parts, abs_parts = [], []
    for s in range(0, live.size, block):
        idx = live[s : s + block]
        multi = np.unravel_index(idx, sizes)
        thr = np.empty((idx.size, n))
        strict = np.empty((idx.size, n), dtype=bool)
        for j, lg in enumerate(legs):
            thr[:, j] = lg.x[multi[j]]
            strict[:, j] = lg.strict[multi[j]]
        q = m.tail(thr, strict)
        value_parts.append(float(np.dot(wsum[idx], q)))
        abs_parts.append(float(np.dot(wabs[idx], q)))
    return math.fsum(value_parts), math.fsum(abs_parts)


def _split_has_jumps(h: ProductPayoff, s: Split) -> bool:
    for i in s.r:
        if not any(term[i].right_jumps() for term in h.terms):
            return False
    for i in s.l:
        if not any(term[i].left_jumps() for term in h.terms):
            return False
    return True


def _functionals(s: Split, h: ProductPayoff, m: PricingMeasure, q: QuadratureSpec) -> tuple[float, float]:
    if h.n != m.dimension:
        raise ValueError(f"payoff dimension {h.n} != measure dimension {m.dimension}")
    legs = []
    for i in range(h.n):
        factors = [term[i] for term in h.terms]
        legs.append(coordinate_legs(factors, s.role(i), q.upper_for(m, i), _coordinate_cuts(h, m, i), q.nodes))
    with np.errstate(over="ignore", invalid="ignore"):
        value, absval = _tensor_sum(legs, m)
    if not math.isfinite(absval) or absval > DIVERGENCE_LIMIT:
        raise DivergentFunctional(f"|A| for split {s.as_dict()} is {absval:g} (presumed divergent)")
    return value, absval


def eval_a_functional(s: Split, h: ProductPayoff, m: PricingMeasure, q: QuadratureSpec | None = None) -> float:
    """The signed split functional ``A_{z,d,r,l}``."""
    return _functionals(s, _as_product(h), m, q or QuadratureSpec())[0]


def eval_abs_a_functional(s: Split, h: ProductPayoff, m: PricingMeasure, q: QuadratureSpec | None = None) -> float:
    """``|A|_{z,d,r,l}``: absolute factors and counting measures; a finiteness certificate."""
    return _functionals(s, _as_product(h), m, q or QuadratureSpec())[1]


def _as_product(h) -> ProductPayoff:
    if isinstance(h, PiecewisePayoff1D):
        return ProductPayoff.single(h)
    return h


def price_product(
    h: ProductPayoff | PiecewisePayoff1D,
    m: PricingMeasure,
    q: QuadratureSpec | None = None,
    disc: Discount | None = None,
    threads: int | None = None,
    evaluate_all: bool = False,
) -> PriceBreakdown:
    """``V^h = B_T^{-1} sum_splits A``.

    Splits whose ``r``/``l`` coordinates carry no jumps contribute an empty sum
    and are skipped (recorded) unless ``evaluate_all`` is set.
    """
    h = _as_product(h)
    q = q or QuadratureSpec()
    disc = disc or Discount()
    splits = enumerate_splits(h.n)

    def compute(spec: QuadratureSpec) -> PriceBreakdown:
        def work(s: Split) -> SplitValue:
            if not evaluate_all and not _split_has_jumps(h, s):
                return SplitValue(s, 0.0, 0.0, skipped=True)
            v, a = _functionals(s, h, m, spec)
            return SplitValue(s, v, a)

        values = rng.map_ordered(work, splits, threads)
        total = disc.factor * math.fsum(v.value for v in values)
        return PriceBreakdown(total, disc.factor, values, nodes=spec.nodes)

    result, used, converged = adaptive(compute, q)
    if not converged:
        log.warning("adaptive quadrature stopped at %d nodes without meeting tol %g", used.nodes, q.tol)
    return result


def expectation_with_weight(
    f: PiecewisePayoff1D,
    coordinate: int,
    weight_event: TailEvent | None,
    m: PricingMeasure,
    q: QuadratureSpec | None = None,
) -> float:
    """``E[f(X_c) Y]`` with ``Y = 1{weight_event}`` (or 1).

    The event's own entry for ``coordinate`` is ignored.  Evaluated as
    ``f(0) E[Y] + int f'(a) E[1{X>a} Y] da + sum right jumps E[1{X>s} Y]
    + sum left jumps E[1{X>=s} Y]``.
    """
    q = q or QuadratureSpec()
    n = m.dimension
    if weight_event is not None and weight_event.dimension != n:
        raise ValueError("weight event must have the measure's dimension")
    cuts = cuts_for(f.breakpoints, m.atoms(coordinate))
    parts = [coordinate_legs([f], role, q.upper_for(m, coordinate), cuts, q.nodes) for role in "zdrl"]
    x = np.concatenate([p.x for p in parts])
    w = np.concatenate([p.w[0] for p in parts])
    strict = np.concatenate([p.strict for p in parts])
    thr = np.zeros((x.size, n))
    flags = np.full((x.size, n), GE, dtype=bool)
    if weight_event is not None:
        thr[:] = weight_event.thresholds
        flags[:] = weight_event.strict
    thr[:, coordinate] = x
    flags[:, coordinate] = strict
    keep = w != 0
    if not keep.any():
        return 0.0
    return float(np.dot(w[keep], m.tail(thr[keep], flags[keep])))


# -- continuous payoffs ----------------------------------------------------------


def _mixed_difference(values: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    for ax in axes:
        values = np.diff(values, axis=ax)
    return values


def price_continuous(
    h: BlackBoxPayoff,
    m: PricingMeasure,
    q: QuadratureSpec | None = None,
    disc: Discount | None = None,
    cuts: Sequence[Sequence[float]] | None = None,
) -> PriceBreakdown:
    """``V^h = B_T^{-1} sum_{z+d} A_{z,d,0,0}`` (2**n splits) for continuous ``h``.

    With an analytic partial provider the ``d`` integrals use the Simpson rule.
    Otherwise each integral is a sum over grid cells of the exact cell mass of
    ``d^d h`` (the mixed difference of ``h`` over the cell corners) times the
    tail at the cell midpoint, on ``nodes - 1`` and twice as many cells per
    axis, combined by one Richardson step.  ``cuts`` optionally aligns cell
    edges with known kink locations per coordinate.
    """
    q = q or QuadratureSpec()
    disc = disc or Discount()
    n = h.n
    if n != m.dimension:
        raise ValueError("payoff and measure dimensions differ")
    if n > 3 and h.partial is None:
        raise ValueError("finite-difference partials are limited to n <= 3")
    cuts = cuts or [()] * n
    values = []
    oscillating = []
    for roles in itertools.product("zd", repeat=n):
        s = Split.from_roles(roles)
        if not s.d:
            val = float(h(np.zeros((1, n)))[0])
            values.append(SplitValue(s, val, abs(val)))
            continue
        if h.partial is not None:
            rules = [axis_rule(0.0, q.upper_for(m, i), cuts[i], q.nodes) for i in s.d]
            idx = np.meshgrid(*[np.arange(r.size) for r in rules], indexing="ij")
            tail_pts = np.zeros((idx[0].size, n))
            flags = np.full(tail_pts.shape, GE, dtype=bool)
            weight = np.ones(idx[0].size)
            for j, (i, r) in enumerate(zip(s.d, rules)):
                k = idx[j].ravel()
                tail_pts[:, i] = r.x[k]
                flags[:, i] = r.strict[k]
                weight = weight * r.w[k]
            dens = np.asarray(h.partial(s.d, tail_pts), dtype=float)
        else:
            coarse, osc = _cell_integral(h, m, q, s, cuts, q.nodes - 1)
            fine, osc2 = _cell_integral(h, m, q, s, cuts, 2 * (q.nodes - 1))
            if osc or osc2:
                oscillating.append(s.as_dict())
            # midpoint cells are second order; one Richardson step
            val = (4.0 * fine[0] - coarse[0]) / 3.0
            absval = fine[1]
            if not math.isfinite(absval) or absval > DIVERGENCE_LIMIT:
                raise DivergentFunctional(f"|A| for split {s.as_dict()} is {absval:g}")
            values.append(SplitValue(s, val, absval))
            continue
        wd = weight * dens
        live = wd != 0
        tail = m.tail(tail_pts[live], flags[live]) if live.any() else np.empty(0)
        val = float(np.dot(wd[live], tail))
        absval = float(np.dot(np.abs(wd[live]), tail))
        if not math.isfinite(absval) or absval > DIVERGENCE_LIMIT:
            raise DivergentFunctional(f"|A| for split {s.as_dict()} is {absval:g}")
        values.append(SplitValue(s, val, absval))
    for s in oscillating:
        warnings.warn(f"finite-difference partials oscillate for split {s}", RuntimeWarning, stacklevel=2)
    total = disc.factor * math.fsum(v.value for v in values)
    return PriceBreakdown(total, disc.factor, values, nodes=q.nodes)


def _cell_integral(h, m, q, s: Split, cuts, cells: int) -> tuple[tuple[float, float], bool]:
    """Sum over cells of the exact cell mass of the mixed partial times the tail
    at the cell midpoint; also flags sign-oscillating cell masses."""
    n = h.n
    edges = [_cell_edges(q.upper_for(m, i), cuts[i], cells) for i in s.d]
    corner = np.meshgrid(*edges, indexing="ij")
    cpts = np.zeros((corner[0].size, n))
    for j, i in enumerate(s.d):
        cpts[:, i] = corner[j].ravel()
    hv = h(cpts).reshape([e.size for e in edges])
    dens = _mixed_difference(hv, range(len(s.d))).ravel()
    mids = np.meshgrid(*[0.5 * (e[1:] + e[:-1]) for e in edges], indexing="ij")
    live = dens != 0
    pts = np.zeros((int(live.sum()), n))
    for j, i in enumerate(s.d):
        pts[:, i] = mids[j].ravel()[live]
    tail = m.tail(pts, GT) if pts.shape[0] else np.empty(0)
    d = dens[live]
    big = d[np.abs(d) > 1e-9 * max(1.0, np.abs(d).max(initial=0.0))]
    signs = np.sign(big)
    osc = signs.size > 2 and np.mean(signs[1:] != signs[:-1]) > 0.5
    return (float(np.dot(d, tail)), float(np.dot(np.abs(d), tail))), bool(osc)


def _cell_edges(upper: float, cuts: Sequence[float], cells: int) -> np.ndarray:
    inner = sorted(c for c in cuts if 0 < c < upper)
    if not inner:
        return uniform_cells(0.0, upper, cells)
    edges = np.unique(np.array([0.0] + inner + [upper]))
    parts = []
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(1, int(round(cells * (b - a) / upper)))
        parts.append(np.linspace(a, b, k + 1)[:-1])
    return np.concatenate(parts + [np.array([upper])])


# -- worked closed forms --------------------------------------------------------------


def _simpson(func, lo: float, hi: float, cuts, nodes: int) -> float:
    rule = axis_rule(lo, hi, cuts, nodes)
    if rule.size == 0:
        return 0.0
    return float(np.dot(rule.w, func(rule.x, rule.strict)))


def _require_2d(m: PricingMeasure):
    if m.dimension != 2:
        raise ValueError("this closed form needs a 2-dimensional measure")


def price_rainbow_p1(
    m: PricingMeasure, K1: float, K2: float, K: float, q: QuadratureSpec | None = None, disc: Discount | None = None
) -> float:
    """Price of ``((x - K1)^+ + (y - K2)^+ - K)^+`` from three one-dimensional integrals."""
    _require_2d(m)
    q = q or QuadratureSpec()
    disc = disc or Discount()
    U1, U2 = q.upper_for(m, 0), q.upper_for(m, 1)
    a0, a1 = m.atoms(0), m.atoms(1)

    def tail_x(z, strict):
        thr = np.column_stack([z, np.zeros_like(z)])
        return m.tail(thr, np.column_stack([strict, np.full(z.size, GE)]))

    def tail_y(z, strict):
        thr = np.column_stack([np.zeros_like(z), z])
        return m.tail(thr, np.column_stack([np.full(z.size, GE), strict]))

    c = K1 + K2 + K
    i1 = _simpson(tail_x, K1 + K, max(U1, K1 + K), cuts_for(a0), q.nodes)
    i2 = _simpson(tail_y, K2 + K, max(U2, K2 + K), cuts_for(a1), q.nodes)
    i3 = 0.0
    if K > 0:
        # y > z and x > c - z: the x threshold falls as z rises, so its one-sided
        # limit is non-strict at segment starts instead of segment ends
        rule = axis_rule(K2, K2 + K, cuts_for(a1, [c - a for a in a0]), q.nodes)
        thr = np.column_stack([c - rule.x, rule.x])
        flags = np.column_stack([~rule.start, rule.strict])
        i3 = float(np.dot(rule.w, m.tail(thr, flags)))
    return disc.factor * (i1 + i2 + i3)


def rainbow_p1_payoff(K1: float, K2: float, K: float) -> BlackBoxPayoff:
    def f(x):
        return np.maximum(np.maximum(x[:, 0] - K1, 0.0) + np.maximum(x[:, 1] - K2, 0.0) - K, 0.0)

    return BlackBoxPayoff(2, f, name=f"rainbow_p1({K1:g},{K2:g},{K:g})")


def price_spread(m: PricingMeasure, q: QuadratureSpec | None = None, disc: Discount | None = None) -> float:
    """Price of ``(x1 - x2)^+`` as ``B_T^{-1}(E X1 - int_0^U Q(X1 > y, X2 > y) dy)``."""
    _require_2d(m)
    q = q or QuadratureSpec()
    disc = disc or Discount()
    U = min(q.upper_for(m, 0), q.upper_for(m, 1))

    def diag(y, strict):
        return m.tail(np.column_stack([y, y]), np.column_stack([strict, strict]))

    integral = _simpson(diag, 0.0, U, cuts_for(m.atoms(0), m.atoms(1)), q.nodes)
    return disc.factor * (m.marginal_expectation(0) - integral)


@dataclass
class ExtrapolationReport:
    value: float
    eps: list[float]
    raw: list[float]
    table: list[list[float]]


def default_eps_sequence(m: PricingMeasure) -> list[float]:
    if isinstance(m, CorrelatedLognormal):
        scale = float(np.exp(np.mean(np.log(m.spot))))
    else:
        means = np.array([max(m.marginal_expectation(i), 1e-12) for i in range(m.dimension)])
        scale = float(np.exp(np.mean(np.log(means))))
    return [scale * 2.0**-k for k in range(3, 11)]


def richardson(eps: Sequence[float], values: Sequence[float], order: int = 1, levels: int = 3) -> tuple[float, list[list[float]]]:
    """Richardson table for ``D(eps) = L + c1 eps^order + c2 eps^(order+1) + ...``.

    ``eps`` must be a geometric sequence; returns the deepest entry using at
    most ``levels`` eliminations and the full table.
    """
    eps = list(eps)
    ratio = eps[0] / eps[1]
    table = [list(values)]
    for j in range(1, min(levels, len(values) - 1) + 1):
        f = ratio ** (order + j - 1)
        prev = table[-1]
        table.append([(f * prev[i + 1] - prev[i]) / (f - 1.0) for i in range(len(prev) - 1)])
    return table[-1][-1], table


def price_indicator_ge(
    m: PricingMeasure,
    eps_sequence: Sequence[float] | None = None,
    q: QuadratureSpec | None = None,
    disc: Discount | None = None,
) -> ExtrapolationReport:
    """Price of ``1{x1 >= x2}`` by a one-sided limit in the second threshold.

    ``D(eps) = 1 - (1/eps) int_0^eps Q(X2 > u) du
               - (1/eps) int_0^U [Q(X1 > y, X2 > y + eps) - Q(X1 > y, X2 > y)] dy``
    tends to ``Q(X1 >= X2)``.  The first two terms restore the mass of
    ``{X2 = 0}`` that the bare difference quotient misses.
    """
    _require_2d(m)
    q = q or QuadratureSpec()
    disc = disc or Discount()
    eps = list(eps_sequence) if eps_sequence is not None else default_eps_sequence(m)
    if len(eps) < 2 or any(not b < a for a, b in zip(eps, eps[1:])) or eps[-1] <= 0:
        raise ValueError("eps sequence must be positive and strictly decreasing")
    ratios = {round(a / b, 12) for a, b in zip(eps, eps[1:])}
    U = max(q.upper_for(m, 0), q.upper_for(m, 1))
    a0, a1 = m.atoms(0), m.atoms(1)
    raw = []
    for e in eps:
        def diff(y, strict, e=e):
            base = m.tail(np.column_stack([y, y]), np.column_stack([strict, strict]))
            shifted = m.tail(np.column_stack([y, y + e]), np.column_stack([strict, strict]))
            return shifted - base

        cuts = cuts_for(a0, a1, [a - e for a in a1])
        inner = _simpson(diff, 0.0, U, cuts, q.nodes)

        def t2(u, strict):
            return m.tail(np.column_stack([np.zeros_like(u), u]), np.column_stack([np.full(u.size, GE), strict]))

        head = _simpson(t2, 0.0, e, cuts_for(a1), q.nodes)
        raw.append(1.0 - head / e - inner / e)
    if len(ratios) == 1:
        value, table = richardson(eps, raw)
    else:
        value, table = raw[-1], [raw]
    return ExtrapolationReport(disc.factor * value, eps, raw, table)
