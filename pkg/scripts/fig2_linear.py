"""Density 2u on [0,1]: PDE solution vs simulated empirical measures.

Writes density.csv (solver), hist.csv (simulated histograms at N = --n) and
w1.csv (W1 to the solver at t=1 over several N and seeds).
"""
import argparse
from pathlib import Path

import numpy as np

from avgproc.analysis import EmpiricalMeasure, wasserstein1
from avgproc.core import InitialDistribution, RngStream
from avgproc.export import DENSITY_COLUMNS, density_rows, write_csv, write_json
from avgproc.limit_pde import DensityGrid, integrate
from avgproc.sim_complete import run


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--times", default="0.25,0.5,1,2")
    p.add_argument("--grid", type=int, default=4096)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default="runs/fig2")
    args = p.parse_args()
    out = Path(args.out)
    times = [float(s) for s in args.times.split(",")]
    dist = InitialDistribution.linear_2x()

    g0 = DensityGrid.from_distribution(dist, 2.0, args.grid)
    traj = integrate(g0, 1e-3, max(times), times)
    write_csv(out / "density.csv", DENSITY_COLUMNS, density_rows([g0] + traj.snapshots))

    r = run(dist, args.n, max(times), times, RngStream(args.seed))
    edges = np.linspace(0, 1, args.bins + 1)
    rows = []
    for t, cfg in r.snapshots:
        h, _ = np.histogram(cfg.opinions, edges, density=True)
        rows += [(t, float(a), float(b), float(v)) for a, b, v in zip(edges[:-1], edges[1:], h)]
    write_csv(out / "hist.csv", ("t", "left", "right", "density"), rows)

    ref = traj.at(1.0).cdf() if 1.0 in times else integrate(g0, 1e-3, 1.0).at(1.0).cdf()
    w_rows = []
    for n in (1_000, 10_000, 100_000):
        for s in range(args.seeds):
            rr = run(dist, n, 1.0, [1.0], RngStream(args.seed + s, 1))
            w = wasserstein1(EmpiricalMeasure.from_opinions(rr.config.opinions), ref)
            w_rows.append((n, args.seed + s, w))
        print(f"N={n:<7d} median W1 = {np.median([x[2] for x in w_rows if x[0] == n]):.5f}")
    write_csv(out / "w1.csv", ("N", "seed", "w1"), w_rows)
    write_json(out / "manifest.json", vars(args))


if __name__ == "__main__":
    main()
