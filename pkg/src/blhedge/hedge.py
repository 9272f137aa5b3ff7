"""Static replication portfolios of bonds, calls and digitals.

Two constructions are provided: the call-spread interpolant of a continuous
payoff on a partition, and the digital decomposition ``f(0) + int f'(a)
1{X>a} da + jump digitals`` discretised on the pricing engine's own nodes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import coordinate_legs, expectation_with_weight
from .measures import GE, GT, PricingMeasure
from .payoffs import PiecewisePayoff1D, Piece, call, check_pi_q_membership
from .quadrature import QuadratureSpec, cuts_for

INSTRUMENTS = ("bond", "call", "digital", "digital_strip")


class MembershipRefusal(ValueError):
    """Raised when a payoff fails the membership probes."""

    def __init__(self, failing: list[str]):
        super().__init__("; ".join(failing))
        self.failing = failing


@dataclass
class HedgePortfolio:
    """Static portfolio on one underlying.

    ``digitals`` and ``strip`` hold ``(strike, weight, strict)``; a strict
    digital pays ``1{x > K}``, a non-strict one ``1{x >= K}``.  ``strip`` is
    the discretised continuum leg.  ``domain`` is the interval on which the
    portfolio is meant to replicate its target.
    """

    bond_units: float = 0.0
    calls: list[tuple[float, float]] = field(default_factory=list)
    digitals: list[tuple[float, float, bool]] = field(default_factory=list)
    strip: list[tuple[float, float, bool]] = field(default_factory=list)
    domain: tuple[float, float] = (0.0, math.inf)
    localized: bool = False

    def __post_init__(self):
        for k, *_ in self.calls + self.digitals + self.strip:
            if k < 0:
                raise ValueError("strikes must be >= 0")

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, float(self.bond_units))
        for k, w in self.calls:
            out = out + w * np.maximum(x - k, 0.0)
        for k, w, strict in self.digitals + self.strip:
            out = out + w * ((x > k) if strict else (x >= k))
        return out

    def price(self, m: PricingMeasure, coordinate: int = 0, q: QuadratureSpec | None = None) -> float:
        """Undiscounted ``Q``-price, leg by leg."""
        q = q or QuadratureSpec()
        total = float(self.bond_units)
        for k, w in self.calls:
            total += w * expectation_with_weight(call(k), coordinate, None, m, q)
        legs = self.digitals + self.strip
        if legs:
            thr = np.zeros((len(legs), m.dimension))
            thr[:, coordinate] = [k for k, _, _ in legs]
            flags = np.full((len(legs), m.dimension), GE, dtype=bool)
            flags[:, coordinate] = [s for _, _, s in legs]
            w = np.array([w for _, w, _ in legs])
            total += float(np.dot(w, m.tail(thr, flags)))
        return total

    def rows(self) -> list[tuple[str, float, str, float]]:
        out = []
        if self.bond_units:
            out.append(("bond", 0.0, "", self.bond_units))
        out += [("call", k, "", w) for k, w in self.calls]
        out += [("digital", k, "gt" if s else "ge", w) for k, w, s in self.digitals]
        out += [("digital_strip", k, "gt" if s else "ge", w) for k, w, s in self.strip]
        return out

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["instrument", "strike", "strictness", "weight"])
        for inst, k, s, w in self.rows():
            wr.writerow([inst, repr(float(k)), s, repr(float(w))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def read_portfolio_csv(path: str | Path) -> HedgePortfolio:
    hp = HedgePortfolio()
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != ["instrument", "strike", "strictness", "weight"]:
            raise ValueError(f"unexpected portfolio header {rd.fieldnames}")
        for row in rd:
            inst, k, w = row["instrument"], float(row["strike"]), float(row["weight"])
            strict = row["strictness"] == "gt"
            if inst == "bond":
                hp.bond_units += w
            elif inst == "call":
                hp.calls.append((k, w))
            elif inst == "digital":
                hp.digitals.append((k, w, strict))
            elif inst == "digital_strip":
                hp.strip.append((k, w, strict))
            else:
                raise ValueError(f"unknown instrument {inst!r}")
    return hp


# -- call-spread interpolant ------------------------------------------------------------


def build_call_portfolio(f, partition: Sequence[float], localized: bool = False) -> HedgePortfolio:
    """Calls replicating the piecewise-linear interpolant of ``f`` on ``partition``.

    With ``c_k`` the slope on ``[a_k, a_{k+1}]`` the portfolio holds
    ``f(a_1)`` non-strict digitals at ``a_1`` (bonds when ``a_1 = 0``), ``c_1``
    calls at ``a_1`` and ``c_k - c_{k-1}`` calls at each inner node.  Beyond
    ``a_{n+1}`` the value continues linearly unless ``localized``, in which
    case ``-c_n`` calls and ``-f(a_{n+1})`` strict digitals at ``a_{n+1}``
    switch it off.
    """
    a = np.asarray(partition, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise ValueError("partition needs at least two points")
    if np.any(np.diff(a) == 0):
        raise ValueError("partition has duplicate points")
    if np.any(np.diff(a) < 0):
        raise ValueError("partition must be sorted")
    if a[0] < 0:
        raise ValueError("partition must lie in [0, inf)")
    fa = np.asarray(f(a), dtype=float)
    if not np.all(np.isfinite(fa)):
        raise ValueError("f is not finite on the partition")
    c = np.diff(fa) / np.diff(a)
    hp = HedgePortfolio(domain=(float(a[0]), float(a[-1])), localized=localized)
    if a[0] == 0.0:
        hp.bond_units = float(fa[0])
    elif fa[0] != 0.0:
        hp.digitals.append((float(a[0]), float(fa[0]), GE))
    weights = np.concatenate([[c[0]], np.diff(c)])
    for k, w in zip(a[:-1], weights):
        if w != 0.0:
            hp.calls.append((float(k), float(w)))
    if localized:
        if c[-1] != 0.0:
            hp.calls.append((float(a[-1]), float(-c[-1])))
        if fa[-1] != 0.0:
            hp.digitals.append((float(a[-1]), float(-fa[-1]), GT))
    return hp


# -- digital decomposition ---------------------------------------------------------------


def build_digital_decomposition(
    f: PiecewisePayoff1D,
    m: PricingMeasure,
    q: QuadratureSpec | None = None,
    coordinate: int = 0,
    check: bool = True,
) -> HedgePortfolio:
    """Bond, jump digitals and a digital strip on the engine's quadrature nodes.

    The strip puts weight ``w_j f'(x_j)`` on a digital at every node ``x_j``
    of the rule used by :func:`expectation_with_weight`, with the same tail
    strictness, so the leg-by-leg price equals the engine value on that grid.
    """
    q = q or QuadratureSpec()
    U = q.upper_for(m, coordinate)
    if check:
        rep = check_pi_q_membership(f, m, U, coordinate)
        if not rep.member:
            raise MembershipRefusal(rep.failing)
    cuts = cuts_for(f.breakpoints, m.atoms(coordinate))
    d = coordinate_legs([f], "d", U, cuts, q.nodes)
    hp = HedgePortfolio(bond_units=f.at_zero(), domain=(0.0, U))
    hp.strip = [(float(x), float(w), bool(s)) for x, w, s in zip(d.x, d.w[0], d.strict) if w != 0.0]
    hp.digitals = [(s, v, GT) for s, v in f.right_jumps()] + [(s, v, GE) for s, v in f.left_jumps()]
    return hp


# -- replication error ---------------------------------------------------------------------


@dataclass
class ReplicationReport:
    sup_error: float
    l1_error: float
    price_gap: float
    portfolio_price: float
    direct_price: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def restrict(f: PiecewisePayoff1D, lo: float, hi: float) -> PiecewisePayoff1D:
    """``f(x) 1{lo <= x <= hi}`` as a piecewise payoff."""
    zero = Piece(lambda x: np.zeros(np.shape(x)), lambda x: np.zeros(np.shape(x)), "0")
    bps = [b for b in f.breakpoints if lo < b < hi]
    edges = ([lo] if lo > 0 else []) + bps + [hi]
    pieces = [zero] if lo > 0 else []
    for a, b in zip([lo] + bps, bps + [hi]):
        i = int(f.piece_index(np.array(0.5 * (a + b))))
        p = f.pieces[i]
        pieces.append(Piece(p.value, p.deriv, p.label))
    pieces.append(zero)
    values = [float(f(np.array(e))) for e in edges]
    return PiecewisePayoff1D(edges, pieces, values, f"{f.name}|[{lo:g},{hi:g}]", validate=False)


def replication_report(
    hp: HedgePortfolio,
    f: PiecewisePayoff1D,
    m: PricingMeasure,
    samples: int = 100_000,
    seed: int = 0,
    grid_points: int = 4001,
    q: QuadratureSpec | None = None,
    coordinate: int = 0,
) -> ReplicationReport:
    """Sup error on a grid over the portfolio's domain, ``L1(Q)`` error over
    in-domain samples, and the gap between portfolio and engine prices.

    A localized portfolio is compared against ``f`` restricted to its domain.
    """
    q = q or QuadratureSpec()
    lo, hi = hp.domain
    if not math.isfinite(hi):
        hi = q.upper_for(m, coordinate)
    grid = np.union1d(np.linspace(lo, hi, grid_points), [b for b in f.breakpoints if lo <= b <= hi])
    sup = float(np.max(np.abs(hp.value(grid) - f(grid))))
    x = m.sample(samples, seed)[:, coordinate]
    inside = (x >= lo) & (x <= hi)
    l1 = float(np.sum(np.abs(hp.value(x[inside]) - f(x[inside]))) / samples)
    target = restrict(f, *hp.domain) if hp.localized else f
    direct = expectation_with_weight(target, coordinate, None, m, q)
    port = hp.price(m, coordinate, q)
    return ReplicationReport(sup, l1, abs(port - direct), port, direct)
