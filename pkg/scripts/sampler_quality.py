"""Measure annealer solution quality against the exhaustive oracle.

Draws random dense QUBOs, solves each with the seeded annealer and with
exhaustive enumeration, and reports the hit rate and worst relative gap.

    python scripts/sampler_quality.py --n 16 --instances 100 --seed 7
"""

import argparse
import time

import numpy as np

from annealfolio.model import QuboModel
from annealfolio.sampler import AnnealSchedule, exhaustive_solve, simulated_anneal


def random_qubo(rng, n, scale):
    lin = rng.uniform(-scale, scale, n)
    quad = {
        (i, j): float(rng.uniform(-scale, scale))
        for i in range(n)
        for j in range(i + 1, n)
    }
    return QuboModel(n, lin, quad, 0.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=16, help="variables per instance (<= 24)")
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--scale", type=float, default=1.0, help="coefficient range [-scale, scale]")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--sweeps", type=int, default=1000)
    ap.add_argument("--restarts", type=int, default=32)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    schedule = AnnealSchedule(sweeps=args.sweeps, restarts=args.restarts)
    hits = 0
    worst_gap = 0.0
    t0 = time.perf_counter()
    for k in range(args.instances):
        m = random_qubo(rng, args.n, args.scale)
        sa = simulated_anneal(m, schedule, seed=int(rng.integers(0, 1 << 62)))
        exact = exhaustive_solve(m, top_k=1).best_energy
        gap = (sa.best_energy - exact) / max(abs(exact), 1e-9)
        worst_gap = max(worst_gap, gap)
        if sa.best_energy <= exact + 1e-9:
            hits += 1
    elapsed = time.perf_counter() - t0

    print(f"n={args.n}  instances={args.instances}  sweeps={args.sweeps}  restarts={args.restarts}")
    print(f"optimum found : {hits}/{args.instances}")
    print(f"worst rel gap : {worst_gap:.4%}")
    print(f"elapsed       : {elapsed:.1f}s ({elapsed / args.instances * 1000:.0f} ms/instance)")


if __name__ == "__main__":
    main()
