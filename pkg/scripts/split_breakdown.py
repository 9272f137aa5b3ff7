"""Per-split contributions of the 4^n pricing decomposition for a few payoffs.

    python scripts/split_breakdown.py --rho 0.5
"""

import argparse

from blhedge import payoffs as P
from blhedge.engine import price_product
from blhedge.measures import CorrelatedLognormal, binomial_fixture_2d


def show(name, h, m):
    bd = price_product(h, m, evaluate_all=True)
    print(f"\n{name}: total {bd.total:.10g}")
    for s in bd.splits:
        if abs(s.value) > 0:
            roles = "".join(s.split.role(i) for i in range(s.split.n))
            print(f"  {roles:>4} {s.value: .10e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rho", type=float, default=0.5)
    a = ap.parse_args()
    m = CorrelatedLognormal([100.0, 90.0], [0.2, 0.3], 1.0, [[1, a.rho], [a.rho, 1]])
    show("call90 x call80", P.ProductPayoff.single(P.call(90.0), P.call(80.0)), m)
    show("digital_ge100 x call100", P.ProductPayoff.single(P.digital_ge(100.0), P.call(100.0)), m)
    b = binomial_fixture_2d()
    show("digital_ge100 x digital_gt90 (binomial)", P.ProductPayoff.single(P.digital_ge(100.0), P.digital_gt(90.0)), b)


if __name__ == "__main__":
    main()
