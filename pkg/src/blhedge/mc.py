"""Monte Carlo oracle: terminal and path simulation of zero-rate correlated GBM,
payoff pricing with standard errors, and common-random-number differences.

Paths are generated chunk by chunk from keyed generators (see :mod:`rng`) and
reduced to per-path functionals inside each chunk, so memory stays bounded and
the concatenated functionals are identical for any thread count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng
from .measures import Discount, PricingMeasure, _validate_corr


@dataclass(frozen=True)
class MCSpec:
    paths: int = 100_000
    seed: int = 0
    antithetic: bool = False
    chunk_size: int = rng.DEFAULT_CHUNK
    threads: int | None = None
    steps: int | None = None  # overrides PathModel.steps when set

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.antithetic and self.chunk_size % 2:
            raise ValueError("antithetic sampling needs an even chunk size")


@dataclass
class MCResult:
    estimate: float
    standard_error: float
    paths_used: int
    elapsed: float = 0.0

    def to_json(self) -> dict:
        # elapsed is wall-clock and deliberately left out of machine output
        return {"estimate": self.estimate, "standard_error": self.standard_error, "paths_used": self.paths_used}


def _pair_rows(values: np.ndarray, spec: MCSpec) -> np.ndarray:
    """Average antithetic partners (rows ``i`` and ``i + rows//2`` of each chunk)."""
    if not spec.antithetic:
        return values
    out = []
    for _, start, stop in rng.chunk_bounds(values.shape[0], spec.chunk_size):
        block = values[start:stop]
        half = (stop - start) // 2
        out.append(0.5 * (block[:half] + block[half : 2 * half]))
        if (stop - start) % 2:
            out.append(block[2 * half :])
    return np.concatenate(out)


def summarize(values: np.ndarray, spec: MCSpec, scale: float = 1.0, start_time: float | None = None) -> MCResult:
    """Mean and SE of per-path values (pairs averaged first when antithetic)."""
    v = _pair_rows(np.asarray(values, dtype=float), spec)
    est = float(np.sum(v) / v.size) * scale
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) * abs(scale) if v.size > 1 else 0.0
    elapsed = time.perf_counter() - start_time if start_time is not None else 0.0
    return MCResult(est, se, int(values.shape[0]), elapsed)


def mc_price_terminal(
    m: PricingMeasure,
    payoff: Callable[[np.ndarray], np.ndarray],
    spec: MCSpec,
    disc: Discount | None = None,
) -> MCResult:
    """Discounted sample mean of ``payoff(X)`` over terminal samples."""
    t0 = time.perf_counter()
    disc = disc or Discount()
    bounds = rng.chunk_bounds(spec.paths, spec.chunk_size)

    def work(b):
        idx, start, stop = b
        gen = rng.chunk_generator(spec.seed, idx, rng.TERMINAL)
        x = m._sample_chunk(gen, stop - start, spec.antithetic)
        with np.errstate(over="ignore", invalid="ignore"):
            v = np.asarray(payoff(x), dtype=float)
        bad = ~np.isfinite(v)
        if bad.any():
            raise FloatingPointError(f"payoff is not finite at sample {x[np.argmax(bad)].tolist()}")
        return v

    values = np.concatenate(rng.map_ordered(work, bounds, spec.threads))
    return summarize(values, spec, disc.factor, t0)


# -- paths -------------------------------------------------------------------------


@dataclass(frozen=True)
class PathModel:
    """Zero-drift correlated GBM on a uniform time grid."""

    spot: tuple[float, ...]
    vol: tuple[float, ...]
    maturity: float = 1.0
    steps: int = 500
    corr: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        spot = tuple(float(s) for s in np.atleast_1d(self.spot))
        vol = tuple(float(v) for v in np.atleast_1d(self.vol))
        object.__setattr__(self, "spot", spot)
        object.__setattr__(self, "vol", vol)
        if len(spot) != len(vol) or not spot:
            raise ValueError("spot and vol must have equal positive length")
        if any(s <= 0 for s in spot) or any(v <= 0 for v in vol) or self.maturity <= 0:
            raise ValueError("spot, vol and maturity must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.corr is not None:
            c = _validate_corr(np.asarray(self.corr, dtype=float), len(spot))
            object.__setattr__(self, "corr", tuple(tuple(float(v) for v in row) for row in c))

    @property
    def n(self) -> int:
        return len(self.spot)

    def corr_matrix(self) -> np.ndarray:
        return np.eye(self.n) if self.corr is None else np.asarray(self.corr)

    def factor(self) -> np.ndarray:
        c = self.corr_matrix()
        try:
            return np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(c)
            return vecs * np.sqrt(np.clip(vals, 0.0, None))

    def with_steps(self, steps: int) -> "PathModel":
        return PathModel(self.spot, self.vol, self.maturity, steps, self.corr)

    def terminal_measure(self):
        from .measures import CorrelatedLognormal

        return CorrelatedLognormal(self.spot, self.vol, self.maturity, self.corr_matrix())


@dataclass
class PathChunk:
    """One chunk of simulated paths handed to a reducer."""

    index: int
    times: np.ndarray  # (steps + 1,)
    paths: np.ndarray  # (rows, steps + 1, n), price space
    log_paths: np.ndarray
    model: PathModel
    spec: MCSpec
    _bridge: np.ndarray | None = None

    def bridge_max(self) -> np.ndarray:
        """Exact continuous-monitoring maximum per path and asset, sampled from
        the Brownian bridge between grid points (its own keyed stream)."""
        if self._bridge is None:
            gen = rng.chunk_generator(self.spec.seed, self.index, rng.BRIDGE)
            x = self.log_paths
            rows, steps1, n = x.shape
            u = gen.random((rows, steps1 - 1, n))
            dt = self.times[1] - self.times[0]
            var = (np.asarray(self.model.vol) ** 2) * dt
            dx = np.diff(x, axis=1)
            with np.errstate(divide="ignore"):
                top = 0.5 * (x[:, :-1] + x[:, 1:] + np.sqrt(dx * dx - 2.0 * var * np.log1p(-u)))
            self._bridge = np.asarray(self.model.spot) * np.exp(top.max(axis=1))
        return self._bridge

    def extension_normals(self, shape) -> np.ndarray:
        gen = rng.chunk_generator(self.spec.seed, self.index, rng.EXTENSION)
        return gen.standard_normal(shape)


def simulate(
    pm: PathModel,
    spec: MCSpec,
    reducer: Callable[[PathChunk], dict[str, np.ndarray]],
) -> dict[str, np.ndarray]:
    """Simulate paths chunk-wise and concatenate the reducer's per-path arrays."""
    steps = spec.steps or pm.steps
    times = np.linspace(0.0, pm.maturity, steps + 1)
    dt = pm.maturity / steps
    L = pm.factor()
    vol = np.asarray(pm.vol)
    spot = np.asarray(pm.spot)
    drift = -0.5 * vol * vol * dt
    sdt = vol * math.sqrt(dt)

    def work(b):
        idx, start, stop = b
        rows = stop - start
        gen = rng.chunk_generator(spec.seed, idx, rng.PATH)
        if spec.antithetic:
            half = rows // 2
            z = gen.standard_normal((half, steps, pm.n))
            z = np.concatenate([z, -z, gen.standard_normal((rows - 2 * half, steps, pm.n))], axis=0)
        else:
            z = gen.standard_normal((rows, steps, pm.n))
        inc = (z @ L.T) * sdt + drift
        logp = np.zeros((rows, steps + 1, pm.n))
        np.cumsum(inc, axis=1, out=logp[:, 1:])
        chunk = PathChunk(idx, times, spot * np.exp(logp), logp, pm, spec)
        return reducer(chunk)

    parts = rng.map_ordered(work, rng.chunk_bounds(spec.paths, spec.chunk_size), spec.threads)
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    w = np.zeros(times.size)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def standard_functionals(chunk: PathChunk, bridge: bool = False) -> dict[str, np.ndarray]:
    """Terminal value, running max (grid or bridge), trapezoid time average."""
    p = chunk.paths
    w = trapezoid_weights(chunk.times) / chunk.times[-1]
    out = {
        "terminal": p[:, -1, :],
        "max": p.max(axis=1),
        "average": np.einsum("rtn,t->rn", p, w),
    }
    if bridge:
        out["max"] = chunk.bridge_max()
    return out


# -- path options ---------------------------------------------------------------------------

PATH_KINDS = ("barrier_up_in", "call", "asian", "lookback", "cum_parisian", "multi_lookback", "asian_basket")


@dataclass(frozen=True)
class PathOption:
    """A path-dependent payoff; parameters by kind:

    * ``barrier_up_in``: H, K
    * ``call``: K
    * ``asian``: K
    * ``lookback``: K
    * ``cum_parisian``: L, H, K (occupation of ``{S <= H}`` at least L)
    * ``multi_lookback``: K (vector), window (T0, T1)
    * ``asian_basket``: K (vector)
    """

    kind: str
    K: float | tuple[float, ...] = 0.0
    H: float = 0.0
    L: float = 0.0
    window: tuple[float, float] | None = None
    asset: int = 0

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise ValueError(f"unknown path option kind {self.kind!r}")
        ks = np.atleast_1d(np.asarray(self.K, dtype=float))
        if np.any(ks < 0) or self.H < 0 or self.L < 0:
            raise ValueError("option parameters must be non-negative")
        if self.kind in ("multi_lookback", "asian_basket"):
            object.__setattr__(self, "K", tuple(float(k) for k in ks))
        elif ks.size != 1:
            raise ValueError(f"{self.kind} takes a scalar strike")
        else:
            object.__setattr__(self, "K", float(ks[0]))


def option_values(opt: PathOption, chunk: PathChunk, bridge: bool = False) -> np.ndarray:
    """Per-path discretised payoff of ``opt``."""
    p = chunk.paths
    a = opt.asset
    times = chunk.times
    if opt.kind in ("call", "barrier_up_in", "lookback", "asian", "cum_parisian"):
        s = p[:, :, a]
        ST = s[:, -1]
        if opt.kind == "call":
            return np.maximum(ST - opt.K, 0.0)
        if opt.kind in ("barrier_up_in", "lookback"):
            mx = chunk.bridge_max()[:, a] if bridge else s.max(axis=1)
            if opt.kind == "lookback":
                return np.maximum(mx - opt.K, 0.0)
            return (mx >= opt.H) * np.maximum(ST - opt.K, 0.0)
        if opt.kind == "asian":
            avg = s @ (trapezoid_weights(times) / times[-1])
            return np.maximum(avg - opt.K, 0.0)
        dt = np.diff(times)
        occ = (s[:, :-1] <= opt.H) @ dt  # left-endpoint rule
        return (occ >= opt.L) * np.maximum(ST - opt.K, 0.0)
    K = np.asarray(opt.K)
    if K.size != p.shape[2]:
        raise ValueError("strike vector length must equal the asset count")
    if opt.kind == "asian_basket":
        inner = np.maximum(p - K, 0.0).sum(axis=2)
        return inner @ trapezoid_weights(times)
    t0, t1 = opt.window or (0.0, times[-1])
    mask = (times >= t0 - 1e-12) & (times <= t1 + 1e-12)
    return np.maximum(p[:, mask, :] - K, 0.0).max(axis=(1, 2))


def mc_price_path(pm: PathModel, opt: PathOption, spec: MCSpec, bridge: bool = False) -> MCResult:
    t0 = time.perf_counter()
    out = simulate(pm, spec, lambda ch: {"v": option_values(opt, ch, bridge)})
    return summarize(out["v"], spec, 1.0, t0)


# -- common random numbers -----------------------------------------------------------------


@dataclass
class CRNResult:
    estimate: float
    standard_error: float
    raw: list[float]
    raw_se: list[float]
    steps: list[float]
    inconclusive: bool
    per_path: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def crn_derivative(
    target: Callable[[float], np.ndarray],
    at: float,
    steps: Sequence[float],
    kind: str = "forward",
    spec: MCSpec | None = None,
) -> CRNResult:
    """Derivative of ``E[target(param)]`` at ``at`` from per-path differences.

    ``target(param)`` must return per-path payoffs computed on one shared set
    of paths.  Forward differences are first order and central differences
    second order in the step; one Richardson step is applied to the two
    smallest steps, path by path, so the reported SE is that of the
    extrapolated difference itself.
    """
    steps = [float(h) for h in steps]
    if len(steps) < 2 or any(not b < a for a, b in zip(steps, steps[1:])) or steps[-1] <= 0:
        raise ValueError("steps must be positive and strictly decreasing")
    spec = spec or MCSpec()
    if kind == "forward":
        base = target(at)
        diffs = [(target(at + h) - base) / h for h in steps]
        order = 1
    elif kind == "central":
        diffs = [(target(at + h) - target(at - h)) / (2 * h) for h in steps]
        order = 2
    else:
        raise ValueError("kind must be 'forward' or 'central'")
    ratio = steps[-2] / steps[-1]
    f = ratio**order
    per_path = (f * diffs[-1] - diffs[-2]) / (f - 1.0)
    res = summarize(per_path, spec)
    raw = [summarize(d, spec) for d in diffs]
    means = [r.estimate for r in raw]
    ses = [r.standard_error for r in raw]
    moves = np.diff(means)
    noise = 2.0 * np.array(ses[1:]) + 1e-15
    signs = np.sign(moves[np.abs(moves) > noise])
    inconclusive = bool(signs.size > 1 and np.any(signs != signs[0]))
    return CRNResult(res.estimate, res.standard_error, means, ses, steps, inconclusive, per_path)
