"""Run configuration: JSON schema, defaults and builders for measures and payoffs."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import numpy as np

from . import payoffs as P
from .engine import rainbow_p1_payoff
from .mc import MCSpec, PathModel
from .measures import (
    CorrelatedLognormal,
    DiscreteMeasure,
    EmpiricalMeasure,
    binomial_fixture_2d,
    binomial_measure,
)
from .quadrature import QuadratureSpec

SCHEMA_VERSION = 1
IDENTITIES = ("thm21", "thm22", "thm23", "prop_fA", "parisian", "thmAB", "rectangle")


class ConfigError(ValueError):
    pass


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}
_posvec = {"type": "array", "items": _pos, "minItems": 1}
_matrix = {"type": "array", "items": _vec}
_int1 = {"type": "integer", "minimum": 1}


def _prim(name: str, props: dict, required) -> dict:
    return _obj({name: _obj(props, required)}, [name])


PAYOFF_SCHEMA = {
    "oneOf": [
        _prim("call", {"K": _nonneg}, ["K"]),
        _prim("put", {"K": _nonneg}, ["K"]),
        _prim("digital_ge", {"K": _nonneg}, ["K"]),
        _prim("digital_gt", {"K": _nonneg}, ["K"]),
        _prim("power", {"p": _nonneg}, ["p"]),
        _prim("affine", {"a": _num, "b": _num}, ["a", "b"]),
        _prim("exp_power", {"a": _num, "p": _num}, ["a"]),
        _prim("constant", {"c": _num}, ["c"]),
        _prim(
            "pieces",
            {"breakpoints": {"type": "array", "items": _nonneg}, "polys": {"type": "array", "items": _vec}, "values": _vec},
            ["breakpoints", "polys", "values"],
        ),
        _obj({"product": {"type": "array", "items": {"$ref": "#/$defs/payoff"}, "minItems": 1}}, ["product"]),
        _obj({"sum": {"type": "array", "items": {"$ref": "#/$defs/payoff"}, "minItems": 1}}, ["sum"]),
        _prim("spread", {}, []),
        _prim("indicator_ge", {}, []),
        _prim("rainbow_p1", {"K1": _nonneg, "K2": _nonneg, "K": _nonneg}, ["K1", "K2", "K"]),
    ]
}

MEASURE_SCHEMA = {
    "oneOf": [
        _obj(
            {"kind": {"const": "lognormal"}, "spot": _posvec, "vol": _posvec, "maturity": _pos, "corr": _matrix},
            ["kind", "spot", "vol", "maturity"],
        ),
        _obj(
            {"kind": {"const": "binomial"}, "spot": _pos, "up": _pos, "down": _pos, "steps": _int1},
            ["kind", "spot", "up", "down", "steps"],
        ),
        _obj({"kind": {"const": "binomial_fixture_2d"}, "steps": _int1}, ["kind"]),
        _obj({"kind": {"const": "discrete"}, "atoms": _matrix, "weights": _vec}, ["kind", "atoms", "weights"]),
        _obj({"kind": {"const": "empirical"}, "csv": {"type": "string"}}, ["kind", "csv"]),
    ]
}

PATH_MODEL_SCHEMA = _obj(
    {"spot": _posvec, "vol": _posvec, "maturity": _pos, "steps": _int1, "corr": _matrix}, ["spot", "vol"]
)

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"payoff": PAYOFF_SCHEMA},
    **_obj(
        {
            "schema": {"const": SCHEMA_VERSION},
            "measure": MEASURE_SCHEMA,
            "payoff": {"$ref": "#/$defs/payoff"},
            "quadrature": _obj(
                {
                    "upper": {"anyOf": [{"type": "null"}, _posvec]},
                    "nodes": {"type": "integer", "minimum": 3},
                    "adaptive": {"type": "boolean"},
                    "tol": _pos,
                }
            ),
            "mc": _obj(
                {
                    "paths": _int1,
                    "seed": {"type": "integer", "minimum": 0},
                    "antithetic": {"type": "boolean"},
                    "chunk_size": _int1,
                    "steps": {"anyOf": [{"type": "null"}, _int1]},
                }
            ),
            "discount": {"type": "number", "minimum": 1},
            "path_model": PATH_MODEL_SCHEMA,
            "price": _obj(
                {"method": {"enum": ["engine", "mc"]}, "force": {"type": "boolean"}, "evaluate_all": {"type": "boolean"}}
            ),
            "density": _obj({"surface": {"type": "string"}, "kind": {"enum": ["call_1d", "multi_lookback"]}}, ["surface"]),
            "hedge": _obj(
                {
                    "kind": {"enum": ["call", "digital"]},
                    "partition": _vec,
                    "lo": _nonneg,
                    "hi": _pos,
                    "segments": _int1,
                    "refinements": {"type": "integer", "minimum": 0, "maximum": 12},
                    "localized": {"type": "boolean"},
                    "samples": _int1,
                    "force": {"type": "boolean"},
                }
            ),
            "verify": _obj(
                {
                    "identity": {"type": "array", "items": {"enum": list(IDENTITIES)}, "minItems": 1},
                    "H": _pos,
                    "K": _nonneg,
                    "asian_K": _nonneg,
                    "thm23_payoffs": {"type": "array", "items": {"enum": ["max", "terminal_times_max"]}, "minItems": 1},
                    "parisian_K": _nonneg,
                    "levels": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 20}, "minItems": 1},
                    "rectangles": _int1,
                    "basket_K": _vec,
                    "basket_model": PATH_MODEL_SCHEMA,
                    "slices": {"type": "integer", "minimum": 1, "maximum": 20},
                }
            ),
            "mollify": _obj(
                {"eps": {"type": "array", "items": _pos, "minItems": 1}, "nodes": {"type": "integer", "minimum": 3}}
            ),
        },
        ["schema"],
    ),
}

DEFAULTS = {
    "schema": SCHEMA_VERSION,
    "measure": {"kind": "lognormal", "spot": [100.0], "vol": [0.2], "maturity": 1.0},
    "payoff": {"call": {"K": 100.0}},
    "quadrature": {"upper": None, "nodes": 401, "adaptive": False, "tol": 1e-7},
    "mc": {"paths": 200000, "seed": 0, "antithetic": False, "chunk_size": 4096, "steps": None},
    "discount": 1.0,
    "path_model": {"spot": [100.0], "vol": [0.2], "maturity": 1.0, "steps": 500},
    "price": {"method": "engine", "force": False, "evaluate_all": False},
    "hedge": {"kind": "call", "lo": 0.0, "hi": 1.0, "segments": 8, "refinements": 0, "localized": False, "samples": 100000, "force": False},
    "verify": {
        "identity": ["thm22"],
        "H": 120.0,
        "K": 110.0,
        "asian_K": 100.0,
        "thm23_payoffs": ["max", "terminal_times_max"],
        "parisian_K": 90.0,
        "levels": [5, 10, 20],
        "rectangles": 20,
        "basket_K": [100.0, 90.0],
        "basket_model": {"spot": [100.0, 90.0], "vol": [0.2, 0.3], "maturity": 1.0, "steps": 200, "corr": [[1.0, 0.4], [0.4, 1.0]]},
        "slices": 20,
    },
    "mollify": {"eps": [0.5, 0.25, 0.125], "nodes": 21},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        # measure, payoff and model blocks are replaced whole, never merged
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("measure", "payoff", "path_model", "basket_model"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def load(path: str | Path | None) -> dict:
    """Validated user config merged over the defaults."""
    user = {"schema": SCHEMA_VERSION}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
    validate(user)
    cfg = _merge(DEFAULTS, user)
    validate(cfg)
    return cfg


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)


# -- builders -------------------------------------------------------------------------------


def build_measure(block: dict, base_dir: Path | None = None):
    kind = block["kind"]
    try:
        if kind == "lognormal":
            return CorrelatedLognormal(block["spot"], block["vol"], block["maturity"], block.get("corr"))
        if kind == "binomial":
            return binomial_measure(block["spot"], block["up"], block["down"], block["steps"])
        if kind == "binomial_fixture_2d":
            return binomial_fixture_2d(block.get("steps", 6))
        if kind == "discrete":
            return DiscreteMeasure(block["atoms"], block["weights"])
        path = Path(block["csv"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return EmpiricalMeasure.from_csv(path)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"measure block: {exc}") from None


def build_payoff(block: dict, n: int):
    """Payoff from the config mini-language.

    One-dimensional primitives become :class:`PiecewisePayoff1D`; ``product``
    lists one factor per coordinate and ``sum`` adds products.  ``spread``,
    ``indicator_ge`` and ``rainbow_p1`` are two-asset black boxes.
    """
    (key, arg), = block.items()
    if key == "call":
        return P.call(arg["K"])
    if key == "put":
        return P.put(arg["K"])
    if key == "digital_ge":
        return P.digital_ge(arg["K"])
    if key == "digital_gt":
        return P.digital_gt(arg["K"])
    if key == "power":
        return P.power(arg["p"])
    if key == "affine":
        return P.affine(arg["a"], arg["b"])
    if key == "exp_power":
        return P.exp_power(arg["a"], arg.get("p", 1.0))
    if key == "constant":
        return P.constant(arg["c"])
    if key == "pieces":
        try:
            return P.from_polynomial_pieces(arg["breakpoints"], arg["polys"], arg["values"])
        except ValueError as exc:
            raise ConfigError(f"pieces payoff: {exc}") from None
    if key == "product":
        factors = [build_payoff(b, 1) for b in arg]
        if any(not isinstance(f, P.PiecewisePayoff1D) for f in factors):
            raise ConfigError("product factors must be one-dimensional primitives")
        return P.ProductPayoff.single(*factors)
    if key == "sum":
        parts = [build_payoff(b, n) for b in arg]
        out = None
        for p in parts:
            if isinstance(p, P.PiecewisePayoff1D):
                p = P.ProductPayoff.single(p)
            if not isinstance(p, P.ProductPayoff):
                raise ConfigError("sum terms must be products or primitives")
            out = p if out is None else out + p
        return out
    if key == "spread":
        return P.BlackBoxPayoff(2, lambda x: np.maximum(x[:, 0] - x[:, 1], 0.0), name="spread")
    if key == "indicator_ge":
        return P.BlackBoxPayoff(2, lambda x: (x[:, 0] >= x[:, 1]).astype(float), name="indicator_ge")
    if key == "rainbow_p1":
        return rainbow_p1_payoff(arg["K1"], arg["K2"], arg["K"])
    raise ConfigError(f"unknown payoff {key!r}")


def payoff_dimension(p) -> int:
    if isinstance(p, P.PiecewisePayoff1D):
        return 1
    return p.n


def build_quadrature(block: dict) -> QuadratureSpec:
    nodes = block["nodes"] + (1 - block["nodes"] % 2)
    upper = tuple(block["upper"]) if block["upper"] is not None else None
    return QuadratureSpec(upper, nodes, block["adaptive"], block["tol"])


def build_mc(block: dict, threads: int | None = None) -> MCSpec:
    try:
        return MCSpec(block["paths"], block["seed"], block["antithetic"], block["chunk_size"], threads, block["steps"])
    except ValueError as exc:
        raise ConfigError(f"mc block: {exc}") from None


def build_path_model(block: dict) -> PathModel:
    try:
        return PathModel(
            tuple(block["spot"]), tuple(block["vol"]), block.get("maturity", 1.0), block.get("steps", 500), block.get("corr")
        )
    except ValueError as exc:
        raise ConfigError(f"path model: {exc}") from None
