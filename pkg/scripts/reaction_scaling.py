"""Scaling of the reaction term R(g) with the data size eps.

Solves one slab to its fixed point for each eps, evaluates R through the two
T-operator calls and fits ||R||_{1+a,T} against eps and against ||g||_{1+a,T}.
"""
import argparse

import numpy as np

from landau_lab import density_solver as ds
from landau_lab import equilibria as eq
from landau_lab import norms
from landau_lab.io import write_csv
from landau_lab.spacetime import SpaceTimeField, TimeGrid
from landau_lab.spectral_field import PeriodicGrid

p = argparse.ArgumentParser()
p.add_argument("--eps", type=float, nargs="+", default=[4e-3, 2e-3, 1e-3, 5e-4])
p.add_argument("--N", type=int, default=16)
p.add_argument("--a", type=float, default=0.5)
p.add_argument("--out", default="reaction_scaling.csv")
args = p.parse_args()

grid = PeriodicGrid(8.0, args.N)
ps = ds.PhaseSpace(grid, 8.0, 32)
times = TimeGrid(0.5, 10)
prof = eq.maxwellian()
cfg = ds.SolverConfig(Nv=32, T0=0.5, dt=0.05, a=args.a)
rows = []
for eps in args.eps:
    problem = ds.SlabProblem(ps, times, ds.InitialData(eps).sample(ps), prof)
    res, _ = ds.solve_slab(problem, cfg)
    R, _ = ds.reaction(res.fields.E, prof, ds.SlabFlows(ps, times, res.fields.U, 2))
    g = norms.trajectory_norm(SpaceTimeField(grid, times, res.fields.g), 1, args.a).total
    r = norms.trajectory_norm(SpaceTimeField(grid, times, R), 1, args.a).total
    rows.append((eps, g, r))
    print(f"eps = {eps:.1e}  ||g|| = {g:.4e}  ||R|| = {r:.4e}", flush=True)
e, g, r = (np.log(np.array(c)) for c in zip(*rows))
print(f"exponent in eps {np.polyfit(e, r, 1)[0]:.3f}, in ||g|| {np.polyfit(g, r, 1)[0]:.3f}, "
      f"reference 1 + a = {1 + args.a}")
write_csv(args.out, ["eps", "g_norm", "R_norm"], rows)
