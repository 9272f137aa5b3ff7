"""Breeden-Litzenberger density error on a Black-Scholes surface under strike-grid halving.

    python scripts/bl_convergence.py --steps 2 1 0.5 0.25
"""

import argparse

import numpy as np

from blhedge import closed_forms as cf
from blhedge.density import CallSurface, bl_density_1d, digital_from_call_spread


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=float, nargs="+", default=[2.0, 1.0, 0.5, 0.25])
    ap.add_argument("--spot", type=float, default=100.0)
    ap.add_argument("--vol", type=float, default=0.2)
    ap.add_argument("--maturity", type=float, default=1.0)
    a = ap.parse_args()
    print(f"{'step':>8} {'max_abs_err':>12} {'ratio':>7} {'mass':>10} {'digital_err':>12}")
    prev = None
    for step in a.steps:
        K = np.arange(0.4 * a.spot, 2.5 * a.spot + step / 2, step)
        s = CallSurface([K], cf.bs_call(a.spot, K, a.vol, a.maturity))
        d = bl_density_1d(s)
        err = float(np.max(np.abs(d.density - cf.lognormal_pdf(d.coords[0], a.spot, a.vol, a.maturity))))
        dig = digital_from_call_spread(s, a.spot).value - cf.lognormal_tail(a.spot, a.spot, a.vol, a.maturity)
        ratio = f"{prev / err:7.2f}" if prev else " " * 7
        print(f"{step:8.3f} {err:12.3e} {ratio} {d.mass:10.6f} {dig:12.2e}")
        prev = err


if __name__ == "__main__":
    main()
