"""Lipschitz ratio of the slab fixed-point map J against the slab length T0.

For several perturbation shapes delta, measures
||J(rho) - J(rho + delta)|| / ||delta|| in the slab norm, with rho the free
density of eps-Gaussian data.  Prints the fitted exponent in T0.
"""
import argparse

import numpy as np

from landau_lab import density_solver as ds
from landau_lab import equilibria as eq
from landau_lab.io import write_csv
from landau_lab.spacetime import TimeGrid
from landau_lab.spectral_field import PeriodicGrid

p = argparse.ArgumentParser()
p.add_argument("--eps", type=float, default=1e-3)
p.add_argument("--T0", type=float, nargs="+", default=[0.1, 0.2, 0.4])
p.add_argument("--dt", type=float, default=0.0125)
p.add_argument("--out", default="contraction.csv")
args = p.parse_args()

grid = PeriodicGrid(8.0, 32)
ps = ds.PhaseSpace(grid, 8.0, 32)
prof = eq.maxwellian()
h = ds.InitialData(args.eps).sample(ps)
X1, X2 = grid.mesh
bump = 1e-5 * np.exp(-((X1 - 0.7) ** 2 + (X2 + 0.3) ** 2) / 2)
shapes = {
    "static": lambda times: bump[None],
    "ramp": lambda times: bump[None] * times.t[:, None, None],
}
rows = []
for name, shape in shapes.items():
    ratios = []
    for T0 in args.T0:
        times = TimeGrid(T0, int(round(T0 / args.dt)))
        problem = ds.SlabProblem(ps, times, h, prof)
        rho = problem.free_density()
        d = np.broadcast_to(shape(times), rho.shape)
        diff = problem.apply(rho).rho - problem.apply(rho + d).rho
        r = ds.slab_norm(diff, grid, times, 0.5) / ds.slab_norm(d, grid, times, 0.5)
        ratios.append(r)
        rows.append((name, T0, r))
    slope = np.polyfit(np.log(args.T0), np.log(ratios), 1)[0]
    print(f"{name:7s} ratios {['%.3e' % r for r in ratios]}  exponent in T0 {slope:.2f}", flush=True)
write_csv(args.out, ["perturbation", "T0", "ratio"], rows)
