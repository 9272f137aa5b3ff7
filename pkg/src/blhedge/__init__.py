"""Static hedging and pricing-law recovery from option prices.

Submodules: ``measures`` (pricing laws), ``payoffs`` (payoff classes),
``engine`` (split-decomposition pricing), ``density`` (state-price density
recovery), ``pathdep`` (path-dependent identity checks), ``hedge`` (static
portfolios), ``mollify`` (payoff smoothing), ``mc`` (Monte Carlo oracle)
and ``cli``.
"""

from .engine import enumerate_splits, expectation_with_weight, price_continuous, price_product, price_spread
from .measures import CorrelatedLognormal, DiscreteMeasure, EmpiricalMeasure, TailEvent
from .mc import MCResult, MCSpec, PathModel, PathOption, mc_price_path, mc_price_terminal

__version__ = "0.1.0"

__all__ = [
    "CorrelatedLognormal",
    "DiscreteMeasure",
    "EmpiricalMeasure",
    "MCResult",
    "MCSpec",
    "PathModel",
    "PathOption",
    "TailEvent",
    "enumerate_splits",
    "expectation_with_weight",
    "mc_price_path",
    "mc_price_terminal",
    "price_continuous",
    "price_product",
    "price_spread",
]
