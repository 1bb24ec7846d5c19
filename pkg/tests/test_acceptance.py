"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
terminal summary.  Criteria 7 and 8 share one pair of long nonlinear runs.
"""
import sys
import time

import numpy as np
import pytest

from landau_lab import characteristics as ch
from landau_lab import density_solver as ds
from landau_lab import equilibria as eq
from landau_lab import norms
from landau_lab.cli import fit_decay_exponent
from landau_lab.linear_response import ResolventBank, radial_linear_density, volterra_resolvent
from landau_lab.spacetime import SpaceTimeField, TimeGrid, from_continuous_hat
from landau_lab.spectral_field import PeriodicGrid

MAXW = eq.maxwellian()
A_INDEX = 0.5


def test_c01_penrose_margin(verdict):
    start = time.perf_counter()
    scan = eq.penrose_margin(MAXW)
    worst = 0.0
    for ang in np.linspace(0, np.pi, 5):
        for r in np.geomspace(1e-2, 20.0, 40):
            xi = (r * np.cos(ang), r * np.sin(ang))
            exact = (2 + r * r) / (1 + r * r)
            worst = max(worst, abs(abs(1 - eq.kernel_hat_K(MAXW, 0.0, xi)) - exact))
    elapsed = time.perf_counter() - start
    ok = scan.margin > 0 and scan.drift < 1e-3 and worst < 1e-6 and elapsed < 60
    assert verdict(1, "Penrose margin", ok,
                   f"margin {scan.margin:.4f}, refinement drift {scan.drift:.1e}, "
                   f"tau=0 slice error {worst:.1e}, {elapsed:.0f}s")


def test_c02_resolvent(verdict):
    start = time.perf_counter()
    grid = PeriodicGrid(8.0, 32)
    residuals = [ResolventBank(MAXW, grid, TimeGrid(T, M), xi_max=np.inf).stored_residual()
                 for T, M in ((0.5, 10), (20.0, 400))]
    tg = TimeGrid(1.0, 1000)  # dt = 1e-3
    toy = 0.0
    for c in (-2.0, -0.5, 0.5, 2.0):
        exact = c * np.exp(c * tg.t)
        toy = max(toy, float(np.max(np.abs(volterra_resolvent(np.full(tg.M + 1, c), tg) - exact) / np.abs(exact))))
    elapsed = time.perf_counter() - start
    ok = max(residuals) < 1e-8 and toy < 1e-6 and elapsed < 60
    assert verdict(2, "resolvent", ok,
                   f"identity residual {max(residuals):.1e}, toy K=c relative error {toy:.1e}, {elapsed:.0f}s")


def test_c03_free_transport(verdict):
    start = time.perf_counter()
    f0 = ds.InitialData(1e-3)
    V, horizon, support = 8.0, 40.0, 8.0
    grid = PeriodicGrid(V * horizon + support, 2048)
    window = grid.window_ok(V, horizon)
    k1, k2 = grid.kmesh
    X1, X2 = grid.mesh
    r2 = X1**2 + X2**2
    ts = np.linspace(2.0, horizon, 39)
    weighted, spectral_err = [], 0.0
    for t in ts:
        rho = from_continuous_hat(grid, f0.free_density_hat(k1, k2, t)).real
        s2 = 1.0 + t * t
        exact = f0.epsilon / s2 * np.exp(-r2 / (2 * s2))
        spectral_err = max(spectral_err, float(np.max(np.abs(rho - exact)) / np.max(exact)))
        weighted.append(norms.japanese(t) ** 2 * np.max(np.abs(rho)))
    band = max(weighted) / min(weighted)
    # velocity averages of the sampled phase-space data against the same formula
    ps = ds.PhaseSpace(PeriodicGrid(8.0, 32), V, 32)
    pk1, pk2 = ps.grid.kmesh
    quad_err = 0.0
    for t in (0.0, 0.5, 1.0, 2.0):
        rho = ds.transported_initial(f0, None, t, ps).values
        ref = from_continuous_hat(ps.grid, f0.free_density_hat(pk1, pk2, t)).real
        quad_err = max(quad_err, float(np.max(np.abs(rho - ref)) / np.max(np.abs(ref))))
    elapsed = time.perf_counter() - start
    ok = window and band <= 4 and spectral_err < 1e-8 and quad_err < 1e-8 and elapsed < 120
    assert verdict(3, "free-transport decay", ok,
                   f"band {band:.3f} on [2,40] (L={grid.L:g}, window ok: {window}), "
                   f"spectral vs closed form {spectral_err:.1e}, phase-space average {quad_err:.1e}, {elapsed:.0f}s")


def test_c04_linear_damping(verdict):
    start = time.perf_counter()
    eps = 1e-3
    src = lambda k, t: eps * 2 * np.pi * np.exp(-k**2 * (1 + t**2) / 2)
    res = radial_linear_density(MAXW, src, TimeGrid(50.0, 1000), k_max=6.0, nk=600, nr=3000)
    e_inf, w_inf = fit_decay_exponent(res.t, res.norm_inf(), (5, 50))
    e_1, w_1 = fit_decay_exponent(res.t, res.norm_1(), (5, 50))
    elapsed = time.perf_counter() - start
    ok = e_inf <= -1.8 and e_1 >= -0.2 and elapsed < 300
    assert verdict(4, "linear damping", ok,
                   f"Linf exponent {e_inf:.3f} +- {w_inf:.3f}, L1 exponent {e_1:.3f} +- {w_1:.3f}, {elapsed:.0f}s")


def _manufactured_sampler(target, grid, times):
    scale = norms.trajectory_norm(ch.manufactured_g(grid, times, 1.0), 1, A_INDEX).total
    g = ch.manufactured_g(grid, times, target / scale)
    return ch.FieldSampler(ch.field_from_g(g), mode="trig"), norms.trajectory_norm(g, 1, A_INDEX).total


def test_c05_characteristics(verdict):
    start = time.perf_counter()
    grid, times = PeriodicGrid(8.0, 32), TimeGrid(12.0, 60)
    rng = np.random.default_rng(0)
    z, v = rng.uniform(-2, 2, (64, 2)), rng.uniform(-2, 2, (64, 2))
    consts = []
    for target in (1e-2, 5e-3):
        sampler, gnorm = _manufactured_sampler(target, grid, times)
        _, maxima = ch.flow_diagnostics(sampler, times.T, z, v, A_INDEX, v_max=2.0)
        consts.append({k: maxima[k] / gnorm for k in ch.DIAGNOSTIC_NAMES})
    drift = max(abs(consts[0][k] / consts[1][k] - 1) for k in ch.DIAGNOSTIC_NAMES)
    sampler, _ = _manufactured_sampler(1e-2, grid, times)
    fl = ch.compute_flow(sampler, 0.0, times.T, z, v)
    k0 = fl.index(0.0)
    h, fd_err = 1e-5, 0.0
    for j in range(4):
        e = np.zeros((1, 4))
        e[0, j] = h
        p = ch.compute_flow(sampler, 0.0, times.T, z + e[:, :2], v + e[:, 2:], jacobian=False)
        m = ch.compute_flow(sampler, 0.0, times.T, z - e[:, :2], v - e[:, 2:], jacobian=False)
        fd_err = max(fd_err, float(np.max(np.abs((p.Y[k0] - m.Y[k0]) / (2 * h) - fl.DY[k0][..., j]))),
                     float(np.max(np.abs((p.W[k0] - m.W[k0]) / (2 * h) - fl.DW[k0][..., j]))))
    liouville = max(float(np.max(np.abs(np.linalg.det(fl.phase_jacobian(s)) - 1))) for s in (0.0, 4.0, 8.0))
    inv = ch.invert_flow(sampler, 2.0, times.T, z + times.T * v, v)
    elapsed = time.perf_counter() - start
    ok = drift <= 0.1 and fd_err < 1e-5 and liouville < 1e-5 and inv.defect < 1e-8 and elapsed < 300
    worst = max(consts[0], key=consts[0].get)
    assert verdict(5, "characteristics", ok,
                   f"largest C = {consts[0][worst]:.3g} ({worst}), C drift under halving {drift:.1e}, "
                   f"Jacobian vs FD {fd_err:.1e}, Liouville {liouville:.1e}, Psi defect {inv.defect:.1e}, "
                   f"{elapsed:.0f}s")


def test_c06_contraction(verdict):
    start = time.perf_counter()
    grid = PeriodicGrid(8.0, 32)
    ps = ds.PhaseSpace(grid, 8.0, 32)
    h = ds.InitialData(1e-3).sample(ps)
    X1, X2 = grid.mesh
    delta = 1e-5 * np.exp(-((X1 - 0.7) ** 2 + (X2 + 0.3) ** 2) / 2)
    T0s = np.array([0.1, 0.2, 0.4])
    ratios = []
    for T0 in T0s:
        times = TimeGrid(T0, int(round(T0 / 0.0125)))
        problem = ds.SlabProblem(ps, times, h, MAXW)
        rho1 = problem.free_density()
        rho2 = rho1 + delta[None]
        diff = problem.apply(rho1).rho - problem.apply(rho2).rho
        ratios.append(ds.slab_norm(diff, grid, times, A_INDEX) / ds.slab_norm(rho1 - rho2, grid, times, A_INDEX))
    ratios = np.array(ratios)
    slope = np.polyfit(np.log(T0s), np.log(ratios), 1)[0]
    elapsed = time.perf_counter() - start
    ok = abs(slope - 1) <= 0.3 and elapsed < 300
    assert verdict(6, "contraction in T0", ok,
                   f"ratios {', '.join(f'{r:.2e}' for r in ratios)} at T0 = 0.1, 0.2, 0.4; "
                   f"exponent in T0 {slope:.2f} (linear needs 1 +- 0.3), {elapsed:.0f}s")


@pytest.fixture(scope="module")
def nonlinear_runs():
    grid = PeriodicGrid(8.0, 32)
    out = {}
    for eps in (1e-3, 5e-4):
        solver = ds.DensitySolver(grid, MAXW)
        f0 = ds.InitialData(eps)
        start = time.perf_counter()
        traj, state = solver.continuation(f0, 20.0)
        out[eps] = dict(solver=solver, f0=f0, traj=traj, state=state, seconds=time.perf_counter() - start)
    return out


@pytest.mark.slow
def test_c07_nonlinear_run(verdict, nonlinear_runs):
    runs = nonlinear_runs
    base = runs[1e-3]
    traj, state, f0 = base["traj"], base["state"], base["f0"]
    ok_run = all(r["state"].status == "converged" for r in runs.values())
    m = traj.mass()
    mass_drift = float(np.max(np.abs(m - m[0])) / abs(m[0]))
    C1 = {eps: r["traj"].ledger_total()[-1] / ds.triple_norm(r["f0"], r["traj"].ps, A_INDEX).total
          for eps, r in runs.items()}
    c1_drift = abs(C1[1e-3] / C1[5e-4] - 1)
    start = time.perf_counter()
    oracle = ds.SemiLagrangianOracle(traj.ps, MAXW)
    M = base["solver"].cfg.M
    run = oracle.run(f0.sample(traj.ps), base["solver"].cfg.T0, 2 * M, report_every=2)
    sl_err = float(np.max(np.abs(run.rho - traj.rho[:M + 1])) / np.max(np.abs(traj.rho[:M + 1])))
    oracle_mass = float(np.max(np.abs(run.mass - run.mass[0])) / abs(run.mass[0]))
    seconds = base["seconds"] + time.perf_counter() - start
    ok = (ok_run and mass_drift < 1e-6 and oracle_mass < 1e-6 and c1_drift <= 0.2 and sl_err < 1e-4
          and seconds <= 600)
    assert verdict(7, "nonlinear small-data run", ok,
                   f"status {state.status}, mass drift {mass_drift:.1e} (oracle {oracle_mass:.1e}), "
                   f"C1 = {C1[1e-3]:.3f} vs {C1[5e-4]:.3f} at eps/2 (drift {c1_drift:.1%}), "
                   f"SL oracle {sl_err:.1e} on the first slab, {seconds:.0f}s per run")


@pytest.mark.slow
def test_c08_scattering(verdict, nonlinear_runs):
    base = nonlinear_runs[1e-3]
    sc = ds.scattering_profile(base["traj"], base["f0"], MAXW)
    dyadic = [i for i, t in enumerate(sc.times) if t >= 1 and np.log2(t) == round(np.log2(t))]
    i, j = dyadic[-2], dyadic[-1]
    wd = sc.weighted_distance
    tn = ds.triple_norm(base["f0"], base["traj"].ps, A_INDEX).total
    ok = wd[j] <= wd[i]
    assert verdict(8, "scattering", ok,
                   f"<t>|f - f_inf| = {wd[i]:.2e} at t={sc.times[i]:g}, {wd[j]:.2e} at t={sc.times[j]:g}; "
                   f"|Y_inf|+|W_inf| = {sc.shift_size:.2e} = {sc.shift_size / tn:.3g} |||f0|||")


def _random_average_problem(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(1, 4)
    c, w, amp = rng.uniform(-3, 3, (n, 2)), rng.uniform(0.5, 1.5, n), rng.uniform(-1, 1, n)

    def H(p):
        x, y = p[..., 0], p[..., 1]
        return sum(amp[i] * np.exp(-((x - c[i, 0]) ** 2 + (y - c[i, 1]) ** 2) / (2 * w[i] ** 2)) for i in range(n))

    k, q = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    lip = rng.uniform(0, 0.4)
    scale = lip / (np.linalg.norm(k, axis=1) + np.linalg.norm(q, axis=1)).max()

    def phi(x, v):
        a = x[..., 0] * k[0, 0] + x[..., 1] * k[0, 1] + v[..., 0] * q[0, 0] + v[..., 1] * q[0, 1]
        b = x[..., 0] * k[1, 0] + x[..., 1] * k[1, 1] + v[..., 0] * q[1, 0] + v[..., 1] * q[1, 1]
        return scale * np.stack([np.sin(a), np.cos(b)], -1)

    return H, phi, lip


def test_c09_velocity_averaging(verdict):
    start = time.perf_counter()
    ts = [1, 2, 4, 8, 16, 32, 64]
    ratios = {}
    for seed in range(20):
        H, phi, lip = _random_average_problem(seed)
        for t in ts:
            for p, r in norms.dispersive_average_ratios(H, phi, 0.0, t, grad_phi=lip).items():
                ratios[seed, t, p] = r
    vals = np.array(list(ratios.values()))
    early = max(r for (s, t, p), r in ratios.items() if t <= 8)
    late = max(r for (s, t, p), r in ratios.items() if t >= 16)
    elapsed = time.perf_counter() - start
    # 2 pi is the exact constant for phi = 0 and p = 1 (and dominates the p = inf one)
    ok = np.all(np.isfinite(vals)) and vals.max() <= 2 * np.pi and late <= 1.5 * early and elapsed < 120
    assert verdict(9, "velocity averaging", ok,
                   f"max ratio {vals.max():.3f} over 20 draws x t in [1,64] x p in {{1,inf}} "
                   f"(t>=16: {late:.3f}, t<=8: {early:.3f}), {elapsed:.0f}s")


def test_c10_reaction_exponent(verdict):
    start = time.perf_counter()
    grid = PeriodicGrid(8.0, 16)
    ps = ds.PhaseSpace(grid, 8.0, 32)
    times = TimeGrid(0.5, 10)
    cfg = ds.SolverConfig(Nv=32, T0=0.5, dt=0.05)
    eps = np.array([2e-3, 1e-3, 5e-4])
    gn, Rn = [], []
    for e in eps:
        problem = ds.SlabProblem(ps, times, ds.InitialData(e).sample(ps), MAXW)
        res, _ = ds.solve_slab(problem, cfg)
        R, _ = ds.reaction(res.fields.E, MAXW, ds.SlabFlows(ps, times, res.fields.U, 2))
        gn.append(norms.trajectory_norm(SpaceTimeField(grid, times, res.fields.g), 1, A_INDEX).total)
        Rn.append(norms.trajectory_norm(SpaceTimeField(grid, times, R), 1, A_INDEX).total)
    p_eps = np.polyfit(np.log(eps), np.log(Rn), 1)[0]
    p_g = np.polyfit(np.log(gn), np.log(Rn), 1)[0]
    elapsed = time.perf_counter() - start
    target = 1 + A_INDEX
    ok = abs(p_eps - target) <= 0.2 * target and elapsed < 300
    assert verdict(10, "reaction exponent", ok,
                   f"exponent in eps {p_eps:.3f} (in ||g|| {p_g:.3f}), target {target} +- 20%, {elapsed:.0f}s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
