"""Pricing measures on terminal states in R_+^n.

Each measure answers joint tail queries ``Q(X_i > y_i or X_i >= y_i for all i)``
with a per-coordinate strictness flag, samples terminal states reproducibly,
and reports marginal means.  Three laws are provided: a correlated lognormal
(absolutely continuous, zero-rate risk-neutral), a finite discrete law
(purely atomic, where strict and non-strict tails differ) and an empirical
law built from samples.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import binom

from . import orthant, rng

log = logging.getLogger(__name__)

GT = True  # strict tail X > y
GE = False  # non-strict tail X >= y


@dataclass(frozen=True)
class TailEvent:
    """The event ``AND_i X_i (> or >=) y_i``; ``strict[i]`` is True for ``>``."""

    thresholds: tuple[float, ...]
    strict: tuple[bool, ...]

    def __post_init__(self):
        if len(self.thresholds) != len(self.strict) or len(self.thresholds) < 1:
            raise ValueError("thresholds and strictness must have equal length >= 1")
        for y in self.thresholds:
            if not math.isfinite(y) or y < 0:
                raise ValueError(f"thresholds must be finite and >= 0, got {y}")

    @classmethod
    def make(cls, thresholds: Sequence[float], strict: bool | Sequence[bool] = GT) -> "TailEvent":
        thresholds = tuple(float(y) for y in thresholds)
        if isinstance(strict, (bool, np.bool_)):
            flags = (bool(strict),) * len(thresholds)
        else:
            flags = tuple(bool(s) for s in strict)
        return cls(thresholds, flags)

    @property
    def dimension(self) -> int:
        return len(self.thresholds)


@dataclass(frozen=True)
class Discount:
    """Deterministic bond value at maturity, ``B_0 = 1``."""

    bond: float = 1.0

    def __post_init__(self):
        if not self.bond >= 1.0:
            raise ValueError("bond value B_T must be >= 1")

    @property
    def factor(self) -> float:
        return 1.0 / self.bond


class DimensionError(ValueError):
    pass


class PricingMeasure:
    """Common interface; subclasses implement ``_tail`` and ``_sample_chunk``."""

    dimension: int
    absolutely_continuous: bool = False

    def tail(self, thresholds, strict=GT) -> np.ndarray:
        """Vectorised joint tail.

        ``thresholds`` has shape ``(P, n)`` (or ``(n,)``); ``strict`` is a bool
        or an array broadcastable to it.  Returns shape ``(P,)``.
        """
        y = np.asarray(thresholds, dtype=float)
        single = y.ndim == 1
        y = np.atleast_2d(y)
        if y.shape[1] != self.dimension:
            raise DimensionError(f"threshold dimension {y.shape[1]} != measure dimension {self.dimension}")
        s = np.broadcast_to(np.asarray(strict, dtype=bool), y.shape)
        out = self._tail(y, s)
        return out[0] if single else out

    def _tail(self, y: np.ndarray, strict: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def upper_bound(self, coordinate: int) -> float:
        """Truncation point with tail mass beyond it below 1e-10."""
        raise NotImplementedError

    def atoms(self, coordinate: int) -> np.ndarray:
        """Coordinate values carrying point mass (empty for continuous laws)."""
        return np.empty(0)

    def marginal_expectation(self, coordinate: int) -> float:
        raise NotImplementedError

    def _sample_chunk(self, gen: np.random.Generator, rows: int, antithetic: bool) -> np.ndarray:
        raise NotImplementedError

    def sample(
        self,
        count: int,
        seed: int,
        antithetic: bool = False,
        chunk_size: int = rng.DEFAULT_CHUNK,
        threads: int | None = None,
    ) -> np.ndarray:
        """``count x n`` terminal states; identical for any thread count.

        With ``antithetic`` each chunk holds pairs: row ``i`` and row
        ``i + rows // 2`` of the chunk are mirror draws.
        """
        if count < 1:
            raise ValueError("count must be >= 1")
        if antithetic and chunk_size % 2:
            raise ValueError("antithetic sampling needs an even chunk size")
        bounds = rng.chunk_bounds(count, chunk_size)

        def work(b):
            idx, start, stop = b
            gen = rng.chunk_generator(seed, idx, rng.TERMINAL)
            return self._sample_chunk(gen, stop - start, antithetic)

        return np.concatenate(rng.map_ordered(work, bounds, threads), axis=0)


def _validate_corr(corr: np.ndarray, n: int) -> np.ndarray:
    corr = np.asarray(corr, dtype=float)
    if corr.shape != (n, n):
        raise ValueError(f"correlation must be {n}x{n}")
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise ValueError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise ValueError("correlation matrix must have unit diagonal")
    if np.min(np.linalg.eigvalsh(corr)) < -1e-10:
        raise ValueError("correlation matrix is not positive semi-definite")
    return corr


class CorrelatedLognormal(PricingMeasure):
    """Zero-rate risk-neutral law of correlated geometric Brownian motions at T."""

    absolutely_continuous = True

    def __init__(self, spot, vol, maturity: float, corr=None):
        self.spot = np.atleast_1d(np.asarray(spot, dtype=float))
        self.vol = np.atleast_1d(np.asarray(vol, dtype=float))
        n = self.spot.size
        if self.vol.size != n:
            raise ValueError("spot and vol must have the same length")
        if np.any(self.spot <= 0) or np.any(self.vol <= 0) or maturity <= 0:
            raise ValueError("spot, vol and maturity must be positive")
        self.dimension = n
        self.maturity = float(maturity)
        self.corr = _validate_corr(np.eye(n) if corr is None else corr, n)
        self.log_sd = self.vol * math.sqrt(self.maturity)
        try:
            self.factor = np.linalg.cholesky(self.corr)
            self.singular_factor = False
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(self.corr)
            self.factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
            self.singular_factor = True
            log.warning("correlation is singular; sampling via clipped eigendecomposition")

    def __repr__(self):
        return f"CorrelatedLognormal(spot={self.spot.tolist()}, vol={self.vol.tolist()}, T={self.maturity})"

    def standardized(self, y: np.ndarray) -> np.ndarray:
        """Map thresholds to standard-normal thresholds ``d_i``; y <= 0 maps to -inf."""
        with np.errstate(divide="ignore"):
            logs = np.log(np.maximum(y, 0.0) / self.spot)
        return (logs + 0.5 * self.log_sd**2) / self.log_sd

    def _tail(self, y, strict):
        d = self.standardized(y)
        return orthant.orthant_upper(d, self.corr)

    def pdf(self, x, coordinate: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s0, sd = self.spot[coordinate], self.log_sd[coordinate]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(x / s0) + 0.5 * sd * sd) / sd
            out = np.exp(-0.5 * z * z) / (x * sd * math.sqrt(2 * math.pi))
        return np.where(x > 0, out, 0.0)

    def upper_bound(self, coordinate: int) -> float:
        sd = self.log_sd[coordinate]
        return float(self.spot[coordinate] * math.exp(-0.5 * sd * sd + 10.0 * sd))

    def marginal_expectation(self, coordinate: int) -> float:
        return float(self.spot[coordinate])

    def _sample_chunk(self, gen, rows, antithetic):
        n = self.dimension
        if antithetic:
            half = rows // 2
            z = gen.standard_normal((half, n))
            z = np.concatenate([z, -z, gen.standard_normal((rows - 2 * half, n))], axis=0)
        else:
            z = gen.standard_normal((rows, n))
        w = z @ self.factor.T
        return self.spot * np.exp(self.log_sd * w - 0.5 * self.log_sd**2)


class DiscreteMeasure(PricingMeasure):
    """Finitely many atoms with probabilities; tails honour strictness exactly."""

    def __init__(self, atoms, weights):
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.asarray(weights, dtype=float)
        if atoms.shape[0] != weights.size or weights.size == 0:
            raise ValueError("need one weight per atom")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        if np.any(atoms < 0) or not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite and >= 0")
        self.atom_matrix = atoms
        self.weights = weights
        self.dimension = atoms.shape[1]

    def __repr__(self):
        return f"DiscreteMeasure({self.atom_matrix.shape[0]} atoms, n={self.dimension})"

    def _tail(self, y, strict):
        out = np.empty(y.shape[0])
        k = self.atom_matrix.shape[0]
        step = max(1, 2_000_000 // max(1, k * self.dimension))
        for s in range(0, y.shape[0], step):
            yy = y[s : s + step, None, :]
            ss = strict[s : s + step, None, :]
            hit = np.where(ss, self.atom_matrix[None] > yy, self.atom_matrix[None] >= yy).all(axis=2)
            out[s : s + step] = hit @ self.weights
        return np.clip(out, 0.0, 1.0)

    def upper_bound(self, coordinate: int) -> float:
        return float(self.atom_matrix[:, coordinate].max() + 1.0)

    def atoms(self, coordinate: int) -> np.ndarray:
        return np.unique(self.atom_matrix[:, coordinate])

    def marginal_expectation(self, coordinate: int) -> float:
        return float(math.fsum(self.weights * self.atom_matrix[:, coordinate]))

    def expectation(self, func) -> float:
        """Exact weighted sum of ``func`` over atoms (``func`` maps (k, n) -> (k,))."""
        return float(math.fsum(self.weights * np.asarray(func(self.atom_matrix), dtype=float)))

    def _sample_chunk(self, gen, rows, antithetic):
        if antithetic:
            half = rows // 2
            u = gen.random(half)
            u = np.concatenate([u, 1.0 - u, gen.random(rows - 2 * half)])
        else:
            u = gen.random(rows)
        cdf = np.cumsum(self.weights)
        idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), cdf.size - 1)
        return self.atom_matrix[idx]


class EmpiricalMeasure(DiscreteMeasure):
    """Uniform weights on observed samples; tails are counting estimates."""

    def __init__(self, samples):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        super().__init__(samples, np.full(samples.shape[0], 1.0 / samples.shape[0]))

    def __repr__(self):
        return f"EmpiricalMeasure({self.atom_matrix.shape[0]} samples, n={self.dimension})"

    def atoms(self, coordinate: int) -> np.ndarray:
        # too many to use as quadrature nodes
        return np.empty(0)

    def marginal_expectation(self, coordinate: int) -> float:
        return float(self.atom_matrix[:, coordinate].mean())

    @classmethod
    def from_csv(cls, path: str | Path) -> "EmpiricalMeasure":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            expected = [f"x{i + 1}" for i in range(len(header))]
            if header != expected:
                raise ValueError(f"empirical CSV header must be {','.join(expected)}, got {','.join(header)}")
            rows = [[float(v) for v in row] for row in reader if row]
        return cls(np.array(rows))


def binomial_measure(spot: float, up: float, down: float, steps: int) -> DiscreteMeasure:
    """Terminal law of a recombining zero-rate binomial tree (one asset)."""
    if not down < 1.0 < up:
        raise ValueError("need down < 1 < up for a zero-rate tree")
    p = (1.0 - down) / (up - down)
    j = np.arange(steps + 1)
    atoms = spot * up**j * down ** (steps - j)
    # snap away multiplication-order noise so e.g. u*d = 1 trees revisit the spot exactly
    atoms = np.array([float(f"{a:.13g}") for a in atoms])
    weights = binom.pmf(j, steps, p)
    weights = weights / weights.sum()
    return DiscreteMeasure(atoms[:, None], weights)


def product_measure(*parts: DiscreteMeasure) -> DiscreteMeasure:
    """Independent product of discrete measures."""
    atoms = parts[0].atom_matrix
    weights = parts[0].weights
    for m in parts[1:]:
        ka, kb = atoms.shape[0], m.atom_matrix.shape[0]
        atoms = np.concatenate(
            [np.repeat(atoms, kb, axis=0), np.tile(m.atom_matrix, (ka, 1))], axis=1
        )
        weights = np.outer(weights, m.weights).ravel()
    return DiscreteMeasure(atoms, weights / weights.sum())


def binomial_fixture_2d(steps: int = 6) -> DiscreteMeasure:
    """Two independent binomial trees; the bundled finite-state fixture."""
    return product_measure(
        binomial_measure(100.0, 1.1, 1 / 1.1, steps),
        binomial_measure(90.0, 1.15, 1 / 1.15, steps),
    )


def joint_tail_prob(m: PricingMeasure, e: TailEvent) -> float:
    if e.dimension != m.dimension:
        raise DimensionError(f"event dimension {e.dimension} != measure dimension {m.dimension}")
    return float(m.tail(np.array(e.thresholds), np.array(e.strict)))


def sample_terminal(m: PricingMeasure, count: int, seed: int, **kw) -> np.ndarray:
    return m.sample(count, seed, **kw)


def marginal_expectation(m: PricingMeasure, coordinate: int) -> float:
    if not 0 <= coordinate < m.dimension:
        raise IndexError(f"coordinate {coordinate} out of range")
    return m.marginal_expectation(coordinate)
