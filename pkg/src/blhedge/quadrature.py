"""Breakpoint-aware composite Simpson rules on [0, U].

The interval is cut at every payoff breakpoint and measure atom, and each
segment gets its own Simpson rule.  Tail integrands ``Q(X > a)`` are
right-continuous in ``a`` with left limits ``Q(X >= a)``, so the node sitting
at the right end of a segment is evaluated with the non-strict flag; this
makes piecewise-constant tails (discrete laws) integrate exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measures import GE, GT


@dataclass(frozen=True)
class QuadratureSpec:
    """Per-coordinate truncation and node budget.

    ``upper`` of ``None`` means "ask the measure" (tail mass beyond U below 1e-10).
    """

    upper: tuple[float, ...] | None = None
    nodes: int = 401
    adaptive: bool = False
    tol: float = 1e-7
    max_nodes: int = 12801

    def __post_init__(self):
        if self.nodes < 3 or self.nodes % 2 == 0:
            raise ValueError("node count must be odd and >= 3")
        if self.upper is not None and any(not u > 0 for u in self.upper):
            raise ValueError("truncation U must be > 0")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")

    def upper_for(self, m, coordinate: int) -> float:
        if self.upper is None:
            return m.upper_bound(coordinate)
        return float(self.upper[coordinate] if len(self.upper) > 1 else self.upper[0])

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(self.upper, 2 * self.nodes - 1, self.adaptive, self.tol, self.max_nodes)


@dataclass(frozen=True)
class AxisRule:
    """Nodes ``x``, weights ``w``, tail strictness per node, a point ``mid``
    strictly inside the node's segment (used to pick payoff pieces) and a mask
    ``start`` marking segment left endpoints."""

    x: np.ndarray
    w: np.ndarray
    strict: np.ndarray
    mid: np.ndarray
    start: np.ndarray

    @property
    def size(self) -> int:
        return self.x.size


def segment_edges(lo: float, hi: float, cuts: Sequence[float]) -> np.ndarray:
    inner = [float(c) for c in cuts if lo < c < hi]
    return np.unique(np.array([lo, hi] + inner))


def axis_rule(lo: float, hi: float, cuts: Sequence[float] = (), nodes: int = 401) -> AxisRule:
    """Composite Simpson rule on ``[lo, hi]`` cut at ``cuts``.

    About ``nodes`` points are spread over segments in proportion to their
    length; each segment gets an even number (>= 2) of intervals.
    """
    if not hi > lo:
        return AxisRule(np.empty(0), np.empty(0), np.empty(0, dtype=bool), np.empty(0), np.empty(0, dtype=bool))
    edges = segment_edges(lo, hi, cuts)
    lengths = np.diff(edges)
    budget = max(nodes - 1, 2)
    xs, ws, ss, ms, st = [], [], [], [], []
    for a, b, length in zip(edges[:-1], edges[1:], lengths):
        k = int(round(budget * length / (hi - lo) / 2.0)) * 2
        k = max(k, 2)
        t = np.linspace(a, b, k + 1)
        h = (b - a) / k
        w = np.full(k + 1, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= h / 3.0
        strict = np.full(k + 1, GT, dtype=bool)
        strict[-1] = GE
        xs.append(t)
        ws.append(w)
        ss.append(strict)
        ms.append(np.full(k + 1, 0.5 * (a + b)))
        first = np.zeros(k + 1, dtype=bool)
        first[0] = True
        st.append(first)
    return AxisRule(*(np.concatenate(v) for v in (xs, ws, ss, ms, st)))


def integrate_1d(func, lo: float, hi: float, cuts: Sequence[float] = (), nodes: int = 401) -> float:
    """Simpson integral of ``func(x, strict, mid)`` over ``[lo, hi]``."""
    rule = axis_rule(lo, hi, cuts, nodes)
    if rule.size == 0:
        return 0.0
    return float(np.dot(rule.w, func(rule.x, rule.strict, rule.mid)))


def adaptive(compute, spec: QuadratureSpec):
    """Repeat ``compute(spec)`` with doubled node counts until two successive
    values agree to ``spec.tol``.  Returns ``(value, spec_used, converged)``."""
    value = compute(spec)
    if not spec.adaptive:
        return value, spec, True
    while spec.nodes * 2 - 1 <= spec.max_nodes:
        finer = spec.refined()
        new = compute(finer)
        diff = abs(_scalar(new) - _scalar(value))
        value, spec = new, finer
        if diff < spec.tol:
            return value, spec, True
    return value, spec, False


def _scalar(v) -> float:
    return float(getattr(v, "total", v))


def gauss_legendre(lo: float, hi: float, order: int = 64) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w


def uniform_cells(lo: float, hi: float, cells: int) -> np.ndarray:
    """Cell edges of a uniform grid."""
    if cells < 1:
        raise ValueError("need at least one cell")
    return np.linspace(lo, hi, cells + 1)


def cuts_for(*groups) -> list[float]:
    out = set()
    for g in groups:
        for c in g:
            if math.isfinite(c):
                out.add(float(c))
    return sorted(out)
