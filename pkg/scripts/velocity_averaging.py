"""Velocity-averaging harness: random smooth H and small Lipschitz phi.

Prints, for each t, the largest ratio over the seeded draws for p = 1 and
p = inf; boundedness in t is the property being probed.
"""
import argparse

import numpy as np

from landau_lab.io import write_csv
from landau_lab.norms import dispersive_average_ratios

p = argparse.ArgumentParser()
p.add_argument("--draws", type=int, default=20)
p.add_argument("--seed", type=int, default=0)
p.add_argument("--out", default="velocity_averaging.csv")
args = p.parse_args()


def draw(rng):
    n = rng.integers(1, 4)
    c, w, amp = rng.uniform(-3, 3, (n, 2)), rng.uniform(0.5, 1.5, n), rng.uniform(-1, 1, n)
    H = lambda q: sum(amp[i] * np.exp(-((q[..., 0] - c[i, 0]) ** 2 + (q[..., 1] - c[i, 1]) ** 2) / (2 * w[i] ** 2))
                      for i in range(n))
    k, m = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    lip = rng.uniform(0, 0.4)
    s = lip / (np.linalg.norm(k, axis=1) + np.linalg.norm(m, axis=1)).max()
    phi = lambda x, v: s * np.stack([np.sin(x @ k[0] + v @ m[0]), np.cos(x @ k[1] + v @ m[1])], -1)
    return H, phi, lip


rng = np.random.default_rng(args.seed)
ts = [1, 2, 4, 8, 16, 32, 64]
best = {(t, p): 0.0 for t in ts for p in (1, np.inf)}
for _ in range(args.draws):
    H, phi, lip = draw(rng)
    for t in ts:
        for p, r in dispersive_average_ratios(H, phi, 0.0, t, grad_phi=lip).items():
            best[t, p] = max(best[t, p], r)
for t in ts:
    print(f"t = {t:3d}   max ratio p=1: {best[t, 1]:.3f}   p=inf: {best[t, np.inf]:.3f}")
write_csv(args.out, ["t", "max_ratio_p1", "max_ratio_pinf"], ((t, best[t, 1], best[t, np.inf]) for t in ts))
