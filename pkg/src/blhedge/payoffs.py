"""Payoff classes: piecewise C^1 one-dimensional payoffs with jumps, sums of
products of those, and black-box multi-asset payoffs.

A :class:`PiecewisePayoff1D` is cut at finitely many breakpoints
``0 <= s_0 < ... < s_N``.  Between breakpoints it is a smooth piece carrying
its value and derivative; at each breakpoint it stores the value ``f(s_k)``
itself, so left/right jumps ``f(s) - f(s-)`` and ``f(s+) - f(s)`` are explicit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .measures import GE, PricingMeasure

Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Piece:
    value: Func
    deriv: Func
    label: str = ""


def _const(c: float) -> Piece:
    return Piece(lambda x, c=c: np.full(np.shape(x), c, dtype=float), lambda x: np.zeros(np.shape(x)), f"{c:g}")


def _poly(coeffs: Sequence[float]) -> Piece:
    p = np.polynomial.Polynomial(coeffs)
    dp = p.deriv()
    return Piece(lambda x: p(np.asarray(x, dtype=float)), lambda x: dp(np.asarray(x, dtype=float)), f"poly{list(coeffs)}")


class PiecewisePayoff1D:
    """``f : R_+ -> R`` smooth between breakpoints, with explicit values at them.

    ``pieces[i]`` lives on the open interval ``(edges[i], edges[i+1])`` where
    ``edges = [0] + breakpoints (without a duplicate 0) + [inf]``.
    """

    def __init__(
        self,
        breakpoints: Sequence[float],
        pieces: Sequence[Piece],
        values_at_breakpoints: Sequence[float],
        name: str = "",
        validate: bool = True,
    ):
        bp = tuple(float(b) for b in breakpoints)
        if any(b < 0 or not math.isfinite(b) for b in bp):
            raise ValueError("breakpoints must be finite and >= 0")
        if any(b1 >= b2 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        edges = [0.0] + [b for b in bp if b > 0.0] + [math.inf]
        if len(pieces) != len(edges) - 1:
            raise ValueError(f"need {len(edges) - 1} pieces for breakpoints {bp}, got {len(pieces)}")
        if len(values_at_breakpoints) != len(bp):
            raise ValueError("need one value per breakpoint")
        self.breakpoints = bp
        self.edges = np.array(edges)
        self.pieces = tuple(pieces)
        self.point_values = tuple(float(v) for v in values_at_breakpoints)
        self.name = name or "pieces"
        if validate:
            self.check_derivatives()

    def __repr__(self):
        return f"PiecewisePayoff1D({self.name})"

    # -- evaluation ------------------------------------------------------
    def piece_index(self, x) -> np.ndarray:
        """Index of the open interval containing each ``x`` (breakpoints map right)."""
        idx = np.searchsorted(self.edges, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def _apply(self, x: np.ndarray, which: str, idx: np.ndarray | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = self.piece_index(x) if idx is None else idx
        out = np.zeros(x.shape)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if mask.any():
                out[mask] = getattr(piece, which)(x[mask])
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self._apply(x, "value")
        for b, v in zip(self.breakpoints, self.point_values):
            out = np.where(x == b, v, out)
        return out

    def deriv(self, x, idx: np.ndarray | None = None) -> np.ndarray:
        """Derivative of the smooth piece (``idx`` selects the piece explicitly)."""
        return self._apply(np.asarray(x, dtype=float), "deriv", idx)

    def value_on_piece(self, x, idx) -> np.ndarray:
        return self._apply(np.asarray(x, dtype=float), "value", idx)

    def at_zero(self) -> float:
        return float(self(np.array(0.0)))

    def left_limit(self, b: float) -> float:
        if b <= 0.0:
            return self.at_zero()
        i = int(np.searchsorted(self.edges, b, side="left")) - 1
        return float(self.pieces[i].value(np.array([b]))[0])

    def right_limit(self, b: float) -> float:
        i = int(np.searchsorted(self.edges, b, side="right")) - 1
        return float(self.pieces[min(i, len(self.pieces) - 1)].value(np.array([b]))[0])

    # -- jump structure ---------------------------------------------------
    def jump_atoms(self) -> list[tuple[float, float, float]]:
        """``(s, f(s) - f(s-), f(s+) - f(s))`` for breakpoints with a nonzero jump."""
        out = []
        for b, v in zip(self.breakpoints, self.point_values):
            left = 0.0 if b == 0.0 else v - self.left_limit(b)
            right = self.right_limit(b) - v
            if left != 0.0 or right != 0.0:
                out.append((b, left, right))
        return out

    def left_jumps(self) -> list[tuple[float, float]]:
        return [(s, l) for s, l, _ in self.jump_atoms() if l != 0.0]

    def right_jumps(self) -> list[tuple[float, float]]:
        return [(s, r) for s, _, r in self.jump_atoms() if r != 0.0]

    @property
    def is_continuous(self) -> bool:
        return not self.jump_atoms()

    def check_derivatives(self, rtol: float = 1e-6, probes: int = 11) -> None:
        """Stored derivative must match a central difference of the stored value."""
        for i, piece in enumerate(self.pieces):
            lo, hi = self.edges[i], self.edges[i + 1]
            if not math.isfinite(hi):
                hi = lo + max(1.0, lo)
            xs = lo + (hi - lo) * np.linspace(0.05, 0.95, probes)
            h = 1e-5 * np.maximum(1.0, np.abs(xs))
            fd = (piece.value(xs + h) - piece.value(xs - h)) / (2 * h)
            d = piece.deriv(xs)
            bad = np.abs(fd - d) > rtol * np.maximum(1.0, np.abs(d)) + 1e-7 * np.maximum(1.0, np.abs(piece.value(xs)))
            if np.any(bad):
                raise ValueError(f"derivative of piece {i} of {self.name} disagrees with finite differences at {xs[bad][0]:g}")

    # -- algebra ------------------------------------------------------------
    def scaled(self, c: float) -> "PiecewisePayoff1D":
        pieces = [
            Piece(lambda x, p=p: c * p.value(x), lambda x, p=p: c * p.deriv(x), f"{c:g}*{p.label}") for p in self.pieces
        ]
        return PiecewisePayoff1D(self.breakpoints, pieces, [c * v for v in self.point_values], f"{c:g}*{self.name}", validate=False)


# -- constructors -----------------------------------------------------------


def constant(c: float) -> PiecewisePayoff1D:
    return PiecewisePayoff1D([], [_const(c)], [], f"const({c:g})", validate=False)


def call(K: float) -> PiecewisePayoff1D:
    if K <= 0:
        return affine(-K, 1.0)
    return PiecewisePayoff1D([K], [_const(0.0), _poly([-K, 1.0])], [0.0], f"call({K:g})", validate=False)


def put(K: float) -> PiecewisePayoff1D:
    if K <= 0:
        return constant(0.0)
    return PiecewisePayoff1D([K], [_poly([K, -1.0]), _const(0.0)], [0.0], f"put({K:g})", validate=False)


def digital_ge(K: float) -> PiecewisePayoff1D:
    """``1{x >= K}``."""
    if K <= 0:
        return constant(1.0)
    return PiecewisePayoff1D([K], [_const(0.0), _const(1.0)], [1.0], f"digital_ge({K:g})", validate=False)


def digital_gt(K: float) -> PiecewisePayoff1D:
    """``1{x > K}``."""
    if K < 0:
        return constant(1.0)
    return PiecewisePayoff1D([K], [_const(0.0), _const(1.0)], [0.0], f"digital_gt({K:g})", validate=False)


def affine(a: float, b: float) -> PiecewisePayoff1D:
    """``a + b x``."""
    return PiecewisePayoff1D([], [_poly([a, b])], [], f"affine({a:g},{b:g})", validate=False)


def power(p: float) -> PiecewisePayoff1D:
    """``x ** p`` for ``p == 0`` or ``p >= 1``."""
    if p == 0:
        return constant(1.0)
    if p < 1:
        raise ValueError("power payoffs need p >= 1 (derivative must be finite at 0)")
    piece = Piece(lambda x: np.power(x, p), lambda x: p * np.power(x, p - 1), f"x^{p:g}")
    return PiecewisePayoff1D([], [piece], [], f"power({p:g})", validate=False)


def exp_power(a: float, p: float = 1.0) -> PiecewisePayoff1D:
    """``exp(a x^p)``; with ``a = p = ... = (1, 2)`` this is the non-member ``e^{x^2}``."""
    if p < 1:
        raise ValueError("need p >= 1")

    def value(x):
        with np.errstate(over="ignore"):
            return np.exp(a * np.power(x, p))

    def deriv(x):
        with np.errstate(over="ignore", invalid="ignore"):
            return a * p * np.power(x, p - 1) * np.exp(a * np.power(x, p))

    return PiecewisePayoff1D([], [Piece(value, deriv, "exp")], [], f"exp({a:g}x^{p:g})", validate=False)


def from_polynomial_pieces(breakpoints: Sequence[float], polys: Sequence[Sequence[float]], values: Sequence[float]) -> PiecewisePayoff1D:
    """Payoff whose pieces are polynomials given by ascending coefficients."""
    return PiecewisePayoff1D(breakpoints, [_poly(c) for c in polys], values, "pieces")


# -- multi-asset payoffs ----------------------------------------------------


@dataclass(frozen=True)
class ProductPayoff:
    """``h(x) = sum_k prod_j f_{k,j}(x_j)``."""

    terms: tuple[tuple[PiecewisePayoff1D, ...], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("product payoff needs at least one term")
        n = len(self.terms[0])
        if n < 1 or any(len(t) != n for t in self.terms):
            raise ValueError("every term needs one factor per coordinate")

    @classmethod
    def single(cls, *factors: PiecewisePayoff1D) -> "ProductPayoff":
        return cls((tuple(factors),))

    @property
    def n(self) -> int:
        return len(self.terms[0])

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for term in self.terms:
            v = np.ones(x.shape[0])
            for j, f in enumerate(term):
                v = v * f(x[:, j])
            out = out + v
        return out

    def __add__(self, other: "ProductPayoff") -> "ProductPayoff":
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        return ProductPayoff(self.terms + other.terms)

    def scaled(self, c: float) -> "ProductPayoff":
        return ProductPayoff(tuple((t[0].scaled(c),) + t[1:] for t in self.terms))

    @property
    def is_continuous(self) -> bool:
        return all(f.is_continuous for t in self.terms for f in t)


@dataclass(frozen=True)
class BlackBoxPayoff:
    """Arbitrary payoff on R_+^n, optionally with analytic mixed partials.

    ``partial(d, x)`` returns the mixed partial over the coordinate subset
    ``d`` (a sorted tuple) at points ``x`` of shape ``(P, n)``.
    """

    n: int
    func: Callable[[np.ndarray], np.ndarray]
    partial: Callable[[tuple[int, ...], np.ndarray], np.ndarray] | None = None
    name: str = "blackbox"

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.func(x), dtype=float)


def evaluate(p, x) -> np.ndarray:
    """Evaluate any payoff kind at point(s) ``x``."""
    if isinstance(p, PiecewisePayoff1D):
        return p(x)
    return p(x)


# -- membership probes ------------------------------------------------------


@dataclass
class MembershipReport:
    integrable: bool
    tail_limit_ok: bool
    derivative_integral: float
    derivative_integral_converged: bool
    failing: list[str] = field(default_factory=list)

    @property
    def member(self) -> bool:
        return not self.failing


def check_pi_q_membership(
    p: PiecewisePayoff1D,
    m: PricingMeasure,
    upper: float | None = None,
    coordinate: int = 0,
    samples: int = 100_000,
    seed: int = 0,
    tol: float = 1e-6,
) -> MembershipReport:
    """Numerical necessary-condition probes for a one-dimensional payoff.

    * integrability: sample mean of ``|f(X)|`` is finite;
    * tail condition: ``|f(x-)| Q(X >= x)`` at ``U/4, U/2, U`` is finite,
      non-increasing and below ``tol`` at ``U``;
    * ``int_0^U |f'(a)| Q(X > a) da`` is finite and stable between ``U/2``
      and ``U`` (relative change below 1e-3).
    """
    from .quadrature import axis_rule

    U = m.upper_bound(coordinate) if upper is None else float(upper)
    failing = []
    x = m.sample(samples, seed)[:, coordinate]
    with np.errstate(over="ignore", invalid="ignore"):
        mean_abs = float(np.mean(np.abs(p(x))))
    integrable = math.isfinite(mean_abs)
    if not integrable:
        failing.append("integrability: E|f(X)| is not finite")

    def tail_term(b):
        e = np.zeros((1, m.dimension))
        e[0, coordinate] = b
        with np.errstate(over="ignore", invalid="ignore"):
            return abs(p.left_limit(b)) * float(m.tail(e, GE)[0])

    probes = [tail_term(U / 4), tail_term(U / 2), tail_term(U)]
    tail_ok = all(math.isfinite(v) for v in probes) and probes[2] <= probes[1] + 1e-15 and probes[2] < tol
    if not tail_ok:
        failing.append(f"tail limit: |f(x-)|Q(X>=x) at U/4,U/2,U = {probes}")

    def deriv_integral(upper_):
        rule = axis_rule(0.0, upper_, list(p.breakpoints) + list(m.atoms(coordinate)), 401)
        thr = np.zeros((rule.x.size, m.dimension))
        thr[:, coordinate] = rule.x
        flags = np.full(thr.shape, GE, dtype=bool)
        flags[:, coordinate] = rule.strict
        q = m.tail(thr, flags)
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.sum(rule.w * np.abs(p.deriv(rule.x, p.piece_index(rule.mid))) * q))

    half, full = deriv_integral(U / 2), deriv_integral(U)
    converged = math.isfinite(full) and math.isfinite(half) and abs(full - half) <= 1e-3 * max(1.0, abs(full))
    if not converged:
        failing.append(f"derivative integral: int |f'| Q(X>a) da grows from {half:g} (U/2) to {full:g} (U)")
    return MembershipReport(integrable, tail_ok, full, converged, failing)


@dataclass
class ProductMembershipReport:
    moments: dict[tuple[int, tuple[int, ...]], float]
    decay: dict[tuple[int, int], list[float]]
    failing: list[str] = field(default_factory=list)

    @property
    def member(self) -> bool:
        return not self.failing


def check_product_membership(
    h: ProductPayoff,
    m: PricingMeasure,
    samples: int = 100_000,
    seed: int = 0,
    tol: float = 1e-6,
) -> ProductMembershipReport:
    """Monte Carlo probes of the product-class integrability and decay conditions.

    Every prefix product over every permutation is a product over a subset, so
    the moment probe runs over all non-empty coordinate subsets of each term.
    """
    if h.n != m.dimension:
        raise ValueError("payoff and measure dimensions differ")
    x = m.sample(samples, seed)
    moments: dict = {}
    decay: dict = {}
    failing = []
    with np.errstate(over="ignore", invalid="ignore"):
        absvals = [[np.abs(f(x[:, j])) for j, f in enumerate(term)] for term in h.terms]
        for k, vals in enumerate(absvals):
            for size in range(1, h.n + 1):
                for subset in itertools.combinations(range(h.n), size):
                    prod = np.prod([vals[j] for j in subset], axis=0)
                    mean = float(np.mean(prod))
                    moments[(k, subset)] = mean
                    if not math.isfinite(mean):
                        failing.append(f"term {k}: E prod |f| over {subset} is not finite")
            for i, f in enumerate(h.terms[k]):
                prev = np.prod([vals[j] for j in range(i)], axis=0) if i else np.ones(samples)
                U = m.upper_bound(i)
                seq = []
                for b in (U / 4, U / 2, U):
                    seq.append(abs(f.left_limit(b)) * float(np.mean((x[:, i] >= b) * prev)))
                decay[(k, i)] = seq
                if not all(math.isfinite(v) for v in seq) or seq[2] > seq[1] + 1e-15 or seq[2] > tol:
                    failing.append(f"term {k}, coordinate {i}: tail product does not decay: {seq}")
    return ProductMembershipReport(moments, decay, failing)
