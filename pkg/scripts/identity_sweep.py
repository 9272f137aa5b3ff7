"""Path-identity checks over several seeds and path counts, one JSON line per report.

    python scripts/identity_sweep.py --seeds 0 1 2 --paths 50000 200000
"""

import argparse
import json
import time

from blhedge import pathdep
from blhedge.mc import MCSpec, PathModel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--paths", type=int, nargs="+", default=[50_000, 200_000])
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--threads", type=int, default=None)
    a = ap.parse_args()
    pm = PathModel((100.0,), (0.2,), 1.0, a.steps)
    for paths in a.paths:
        for seed in a.seeds:
            mc = MCSpec(paths, seed, threads=a.threads)
            t0 = time.perf_counter()
            reps = [pathdep.verify_barrier_lookback_strike(pm, 120.0, mc), pathdep.lookback_from_barrier_integral(pm, 110.0, mc)]
            reps += pathdep.asian_sensitivities(pm, 100.0, mc)
            elapsed = time.perf_counter() - t0
            for r in reps:
                row = {k: v for k, v in r.to_json().items() if k != "details"}
                print(json.dumps(dict(row, seed=seed, paths=paths, elapsed=round(elapsed, 2)), sort_keys=True))


if __name__ == "__main__":
    main()
