"""Command-line interface: ``blhedge {price,density,hedge,verify,mollify}``.

Exit codes: 0 success, 1 a verification failed, 2 membership refusal,
3 configuration or input error.  Machine output goes to stdout (or
``--out``); logging goes to stderr at the level named by ``BLHEDGE_LOG``.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import config as C
from . import pathdep
from .density import SurfaceError, bl_density_1d, joint_density_nd, read_surface_csv, rectangle_prob_direct, rectangle_prob_recovery, write_density_csv
from .engine import price_indicator_ge, price_product, price_rainbow_p1, price_spread
from .hedge import (
    MembershipRefusal,
    build_call_portfolio,
    build_digital_decomposition,
    replication_report,
)
from .mc import MCSpec, mc_price_terminal
from .measures import Discount, binomial_fixture_2d
from .mollify import convergence_check
from .payoffs import BlackBoxPayoff, PiecewisePayoff1D, ProductPayoff, check_product_membership

log = logging.getLogger("blhedge")

EXIT_OK, EXIT_FAIL, EXIT_REFUSED, EXIT_CONFIG = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class Refused(Exception):
    def __init__(self, failing):
        super().__init__("; ".join(failing))
        self.failing = list(failing)


def _setup_logging() -> None:
    level = LOG_LEVELS.get(os.environ.get("BLHEDGE_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


# -- commands ----------------------------------------------------------------------------


def cmd_price(cfg: dict, args) -> str:
    m = C.build_measure(cfg["measure"], args.base_dir)
    h = C.build_payoff(cfg["payoff"], m.dimension)
    if C.payoff_dimension(h) != m.dimension:
        raise C.ConfigError(f"payoff has dimension {C.payoff_dimension(h)}, measure {m.dimension}")
    disc = Discount(cfg["discount"])
    q = C.build_quadrature(cfg["quadrature"])
    if cfg["price"]["method"] == "mc":
        spec = C.build_mc(cfg["mc"], args.threads)
        func = (lambda x: h(x[:, 0])) if isinstance(h, PiecewisePayoff1D) else h
        res = mc_price_terminal(m, func, spec, disc)
        return json.dumps(dict(res.to_json(), method="mc"), sort_keys=True)
    if isinstance(h, BlackBoxPayoff):
        key = next(iter(cfg["payoff"]))
        if key == "spread":
            total = price_spread(m, q, disc)
            return json.dumps({"total": total, "discount": disc.factor, "method": "spread"}, sort_keys=True)
        if key == "rainbow_p1":
            a = cfg["payoff"][key]
            total = price_rainbow_p1(m, a["K1"], a["K2"], a["K"], q, disc)
            return json.dumps({"total": total, "discount": disc.factor, "method": "rainbow_p1"}, sort_keys=True)
        rep = price_indicator_ge(m, None, q, disc)
        out = {"total": rep.value, "discount": disc.factor, "method": "indicator_ge", "eps": rep.eps, "raw": rep.raw}
        return json.dumps(out, sort_keys=True)
    prod = h if isinstance(h, ProductPayoff) else ProductPayoff.single(h)
    if not cfg["price"]["force"]:
        mem = check_product_membership(prod, m, seed=cfg["mc"]["seed"])
        if not mem.member:
            raise Refused(mem.failing)
    bd = price_product(prod, m, q, disc, args.threads, cfg["price"]["evaluate_all"])
    return bd.dumps()


def cmd_density(cfg: dict, args) -> tuple[str, dict]:
    if "density" not in cfg:
        raise C.ConfigError("density command needs a 'density' block with a surface CSV")
    block = cfg["density"]
    path = Path(block["surface"])
    if args.base_dir is not None and not path.is_absolute():
        path = args.base_dir / path
    try:
        surf = read_surface_csv(path, block.get("kind"))
        dens = bl_density_1d(surf) if surf.n == 1 else joint_density_nd(surf)
    except (SurfaceError, OSError, ValueError) as exc:
        raise C.ConfigError(f"surface {path}: {exc}") from None
    buf = io.StringIO()
    write_density_csv(dens, buf)
    diag = dict(dens.diagnostics, mass=dens.mass)
    return buf.getvalue(), diag


def _partition(block: dict, level: int) -> np.ndarray:
    if "partition" in block:
        base = np.asarray(block["partition"], dtype=float)
    else:
        base = np.linspace(block["lo"], block["hi"], block["segments"] + 1)
    for _ in range(level):
        mids = 0.5 * (base[1:] + base[:-1])
        base = np.sort(np.concatenate([base, mids]))
    return base


def cmd_hedge(cfg: dict, args) -> tuple[str, dict]:
    m = C.build_measure(cfg["measure"], args.base_dir)
    f = C.build_payoff(cfg["payoff"], 1)
    if not isinstance(f, PiecewisePayoff1D):
        raise C.ConfigError("hedge needs a one-dimensional payoff")
    if m.dimension != 1:
        raise C.ConfigError("hedge needs a one-dimensional measure")
    block = cfg["hedge"]
    q = C.build_quadrature(cfg["quadrature"])
    samples, seed = block["samples"], cfg["mc"]["seed"]
    if block["kind"] == "digital":
        try:
            hp = build_digital_decomposition(f, m, q, check=not block["force"])
        except MembershipRefusal as exc:
            raise Refused(exc.failing) from None
        rep = replication_report(hp, f, m, samples, seed, q=q)
        return hp.to_csv(), {"kind": "digital", "report": rep.to_json()}
    table = []
    hp = None
    for level in range(block["refinements"] + 1):
        part = _partition(block, level)
        try:
            cur = build_call_portfolio(f, part, block["localized"])
        except ValueError as exc:
            raise C.ConfigError(f"hedge partition: {exc}") from None
        rep = replication_report(cur, f, m, samples, seed, q=q)
        row = dict(rep.to_json(), segments=int(part.size - 1))
        if table:
            prev = table[-1]
            row["sup_ratio"] = prev["sup_error"] / rep.sup_error if rep.sup_error > 0 else None
            row["l1_ratio"] = prev["l1_error"] / rep.l1_error if rep.l1_error > 0 else None
        table.append(row)
        hp = hp or cur
    return hp.to_csv(), {"kind": "call", "refinements": table}


def _parisian_report(pm, v: dict, mc: MCSpec) -> pathdep.IdentityReport:
    reps = pathdep.asian_from_parisian_grid(pm, v["parisian_K"], tuple(v["levels"]), mc)
    violations = sum(r.violations for r in reps)
    gaps = [r.gap for r in reps]
    monotone = all(b.estimate <= a.estimate + math.hypot(a.standard_error, b.standard_error) for a, b in zip(gaps, gaps[1:]))
    rep = pathdep.IdentityReport("parisian", float(violations), 0.0, 0.0, 0.0)
    rep.details = {"levels": [r.to_json() for r in reps], "gap_monotone": monotone}
    rep.passed = violations == 0 and monotone
    return rep


def _rectangle_reports(v: dict, seed: int) -> list[pathdep.IdentityReport]:
    m = binomial_fixture_2d()
    gen = np.random.default_rng(seed)
    atoms = [np.unique(m.atom_matrix[:, i]) for i in range(2)]
    gap = min(float(np.min(np.diff(a))) for a in atoms)
    out = []
    worst = 0.0
    for j in range(v["rectangles"]):
        M, K = [], []
        for a in atoms:
            lo, hi = np.sort(gen.uniform(0.8 * a[0], 1.1 * a[-1], 2))
            M.append(float(lo))
            K.append(float(hi))
        # keep every atom out of the eps windows below M and K
        below = [x for i, a in enumerate(atoms) for b in (M[i], K[i]) for x in (b - a[a < b])]
        eps = 0.5 * min([0.25 * gap] + below)
        rec = rectangle_prob_recovery(m, None, M, K, eps)
        direct = rectangle_prob_direct(m, M, K)
        worst = max(worst, abs(rec.value - direct))
        out.append((M, K, rec.value, direct, rec.exact))
    rep = pathdep.IdentityReport("rectangle", worst, 0.0, 0.0, 0.0)
    rep.details = {"rectangles": [{"M": M, "K": K, "recovered": r, "direct": d, "exact": e} for M, K, r, d, e in out], "tolerance": 1e-12}
    rep.passed = worst <= 1e-12
    return [rep]


def cmd_verify(cfg: dict, args) -> tuple[list[dict], bool]:
    v = cfg["verify"]
    names = [args.identity] if args.identity else v["identity"]
    for name in names:
        if name not in C.IDENTITIES:
            raise C.ConfigError(f"unknown identity {name!r}; choose from {', '.join(C.IDENTITIES)}")
    mc = C.build_mc(cfg["mc"], args.threads)
    pm = C.build_path_model(cfg["path_model"])
    reports = []
    for name in names:
        log.info("verifying %s", name)
        if name == "thm21":
            reports.append(pathdep.verify_barrier_lookback_strike(pm, v["H"], mc))
        elif name == "thm22":
            reports.append(pathdep.lookback_from_barrier_integral(pm, v["K"], mc))
        elif name == "thm23":
            funcs = {
                "max": BlackBoxPayoff(2, lambda x: x[:, 1], name="max"),
                "terminal_times_max": BlackBoxPayoff(2, lambda x: x[:, 0] * x[:, 1], name="terminal_times_max"),
            }
            for key in v["thm23_payoffs"]:
                rep = pathdep.price_h_of_terminal_and_max(pm, funcs[key], mc)
                rep.details["payoff"] = key
                reports.append(rep)
        elif name == "prop_fA":
            reports.extend(pathdep.asian_sensitivities(pm, v["asian_K"], mc))
        elif name == "parisian":
            reports.append(_parisian_report(pm, v, mc))
        elif name == "thmAB":
            bm = C.build_path_model(v["basket_model"])
            reports.append(pathdep.asian_basket_from_multi_lookback(bm, v["basket_K"], mc, v["slices"]))
        elif name == "rectangle":
            reports.extend(_rectangle_reports(v, mc.seed))
    rows = [r.to_json() for r in reports]
    ok = all(r.passed or r.inconclusive for r in reports)
    return rows, ok


def cmd_mollify(cfg: dict, args) -> str:
    m = C.build_measure(cfg["measure"], args.base_dir)
    h = C.build_payoff(cfg["payoff"], m.dimension)
    if C.payoff_dimension(h) != m.dimension:
        raise C.ConfigError("payoff and measure dimensions differ")
    if isinstance(h, ProductPayoff):
        h = BlackBoxPayoff(h.n, h, name="product")
    mc = C.build_mc(cfg["mc"], args.threads)
    try:
        rep = convergence_check(h, m, cfg["mollify"]["eps"], mc, cfg["mollify"]["nodes"])
    except ValueError as exc:
        raise C.ConfigError(f"mollify: {exc}") from None
    return json.dumps(rep.to_json(), sort_keys=True)


# -- driver ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override mc.seed")
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--out", type=Path, help="write the primary output here instead of stdout")
    common.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    parser = argparse.ArgumentParser(prog="blhedge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("price", parents=[common], help="price a payoff")
    p.add_argument("--force", action="store_true", help="skip the membership probes")
    p.add_argument("--method", choices=["engine", "mc"], help="pricing method")
    sub.add_parser("density", parents=[common], help="state-price density from a surface CSV")
    h = sub.add_parser("hedge", parents=[common], help="static replication portfolio")
    h.add_argument("--force", action="store_true", help="skip the membership probes")
    v = sub.add_parser("verify", parents=[common], help="numerical identity checks")
    v.add_argument("--identity", help="identity to check: " + ", ".join(C.IDENTITIES))
    sub.add_parser("mollify", parents=[common], help="mollifier convergence study")
    return parser


def _apply_overrides(cfg: dict, args) -> dict:
    if args.seed is not None:
        if args.seed < 0:
            raise C.ConfigError("--seed must be >= 0")
        cfg["mc"]["seed"] = args.seed
    if getattr(args, "force", False):
        cfg["price"]["force"] = True
        cfg["hedge"]["force"] = True
    if getattr(args, "method", None):
        cfg["price"]["method"] = args.method
    if getattr(args, "identity", None):
        if args.identity not in C.IDENTITIES:
            raise C.ConfigError(f"unknown identity {args.identity!r}; choose from {', '.join(C.IDENTITIES)}")
        cfg["verify"]["identity"] = [args.identity]
        args.identity = None
    if args.threads is not None and args.threads < 1:
        raise C.ConfigError("--threads must be >= 1")
    C.validate(cfg)
    return cfg


def _emit(text: str, out: Path | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(C.load(args.config), args)
        args.base_dir = args.config.parent if args.config is not None else None
        if args.dump_config:
            _emit(C.dumps(cfg), args.out)
            return EXIT_OK
        if args.command == "price":
            _emit(cmd_price(cfg, args), args.out)
        elif args.command in ("density", "hedge"):
            fn = cmd_density if args.command == "density" else cmd_hedge
            csv_text, diag = fn(cfg, args)
            diag_text = json.dumps(diag, sort_keys=True)
            if args.out is None:
                _emit(csv_text, None)
                sys.stderr.write(diag_text + "\n")
            else:
                _emit(csv_text, args.out)
                _emit(diag_text, None)
        elif args.command == "verify":
            rows, ok = cmd_verify(cfg, args)
            passed = sum(r["pass"] for r in rows)
            inconclusive = sum(r["inconclusive"] for r in rows)
            summary = {"summary": True, "reports": len(rows), "passed": passed, "inconclusive": inconclusive, "ok": ok}
            lines = [json.dumps(r, sort_keys=True) for r in rows] + [json.dumps(summary, sort_keys=True)]
            _emit("\n".join(lines), args.out)
            return EXIT_OK if ok else EXIT_FAIL
        elif args.command == "mollify":
            _emit(cmd_mollify(cfg, args), args.out)
    except C.ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except Refused as exc:
        log.error("membership refused: %s", exc)
        return EXIT_REFUSED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
