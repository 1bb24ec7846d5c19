import numpy as np
import pytest
import scipy.fft as sfft
from hypothesis import given, settings, strategies as st

from landau_lab import density_solver as ds
from landau_lab import equilibria as eq
from landau_lab.errors import LandauLabError
from landau_lab.linear_response import convolve_modes
from landau_lab.spacetime import TimeGrid, from_continuous_hat
from landau_lab.spectral_field import PeriodicGrid

MAXW = eq.maxwellian()


def small_solver(T0=0.25, dt=0.025, N=8, L=4.0, Nv=16):
    cfg = ds.SolverConfig(V=8.0, Nv=Nv, T0=T0, dt=dt)
    return ds.DensitySolver(PeriodicGrid(L, N), MAXW, cfg)


def test_free_density_matches_spectral_formula():
    ps = ds.PhaseSpace(PeriodicGrid(8.0, 32), 8.0, 32)
    f0 = ds.InitialData(1e-3)
    k1, k2 = ps.grid.kmesh
    for t in (0.0, 0.7, 2.0):
        rho = ds.transported_initial(f0, None, t, ps).values
        ref = from_continuous_hat(ps.grid, f0.free_density_hat(k1, k2, t)).real
        assert np.max(np.abs(rho - ref)) < 1e-8 * f0.epsilon


def test_shear_physical_round_trip():
    ps = ds.PhaseSpace(PeriodicGrid(4.0, 8), 8.0, 8)
    h = np.random.default_rng(0).standard_normal(ps.shape)
    h = sfft.ifft2(sfft.fft2(h, axes=(-2, -1)) * ps.grid.odd_mask, axes=(-2, -1)).real  # Nyquist shifts are not real
    back = ds.physical_to_shear(ds.shear_to_physical(h, ps, 1.3), ps, 1.3)
    assert np.max(np.abs(back - h)) < 1e-12


def test_initial_data_mass():
    ps = ds.PhaseSpace(PeriodicGrid(8.0, 32), 8.0, 32)
    f0 = ds.InitialData(2e-3, x_width=1.2, v_width=0.8)
    assert abs(f0.sample(ps).sum() * ps.grid.dx**2 * ps.dv**2 - f0.mass()) < 1e-10 * f0.mass()
    assert f0.scaled(0.5).mass() == pytest.approx(0.5 * f0.mass())


def test_zero_data_gives_zero_density():
    traj, state = small_solver().continuation(ds.InitialData(kind="zero"), 0.5)
    assert state.status == "converged"
    assert np.max(np.abs(traj.rho)) == 0.0 and np.max(np.abs(traj.U)) == 0.0


def test_large_data_is_refused():
    traj, state = small_solver().continuation(ds.InitialData(5.0), 0.5)
    assert traj is None and state.reason.startswith("local-data-too-large")


@pytest.fixture(scope="module")
def slab_flows():
    ps = ds.PhaseSpace(PeriodicGrid(4.0, 8), 8.0, 16)
    times = TimeGrid(0.5, 10)
    X1, X2 = ps.grid.mesh
    U = np.stack([1e-2 * (1 + t) * np.exp(-((X1 - 0.5) ** 2 + X2**2) / 2) for t in times.t])
    return ds.SlabFlows(ps, times, U, order=2)


def test_moment_sweep_matches_picard(slab_flows):
    for n, Y, W, bound in slab_flows.sweep():
        # two Picard sweeps: the gap to the converged flow is the third sweep, which ``bound`` estimates
        Ye, We, _ = slab_flows.solve(n)
        assert np.max(np.abs(Y - Ye[0])) <= bound + 1e-18
        assert np.max(np.abs(Y - Ye[0])) < 1e-6 * np.max(np.abs(Ye[0]))
        assert np.max(np.abs(W - We[0])) < 1e-6 * np.max(np.abs(We[0]))


def test_zero_potential_gives_zero_flows():
    ps = ds.PhaseSpace(PeriodicGrid(4.0, 8), 8.0, 8)
    times = TimeGrid(0.5, 5)
    fl = ds.SlabFlows(ps, times, np.zeros((6, 8, 8)), order=2)
    for _, Y, W, _ in fl.sweep():
        assert np.max(np.abs(Y)) == 0 and np.max(np.abs(W)) == 0


def test_compose_shifts_from_rest():
    ps = ds.PhaseSpace(PeriodicGrid(4.0, 8), 8.0, 8)
    rng = np.random.default_rng(2)
    Y, W = rng.standard_normal((2, 2) + ps.shape) * 1e-3
    zero = np.zeros_like(Y)
    Yc, Wc = ds.compose_shifts(Y, W, 1.5, zero, zero, ps)
    assert np.allclose(Yc, Y - 1.5 * W) and np.allclose(Wc, W)


def test_t_operator_trivial_cases(slab_flows):
    eta, _ = ds.normalize_eta(lambda v: eq.grad_mu(MAXW, v)[..., 0])
    F = np.zeros((11, 8, 8))
    assert np.max(np.abs(ds.t_operator(F, eta, slab_flows))) == 0
    ps, times = slab_flows.ps, slab_flows.times
    still = ds.SlabFlows(ps, times, np.zeros((11, 8, 8)))
    X1, _ = ps.grid.mesh
    F = np.broadcast_to(np.cos(np.pi / 4 * X1), (11, 8, 8))
    assert np.max(np.abs(ds.t_operator(F, eta, still))) < 1e-15


def test_eta_weight_gate(slab_flows):
    big = lambda v: 10 * eq.eval_mu(MAXW, v)
    with pytest.raises(LandauLabError) as e:
        ds.t_operator(np.zeros((11, 8, 8)), big, slab_flows)
    assert e.value.code == "eta-weight-violation"
    small, c = ds.normalize_eta(big)
    assert ds.eta_weight(small) == pytest.approx(1.0)


def _reaction_pair(eps):
    # small box with fine velocity spacing: velocity averages are exact to round-off here
    grid = PeriodicGrid(2.0, 8)
    ps = ds.PhaseSpace(grid, 8.0, 32)
    times = TimeGrid(0.25, 10)
    h = ds.InitialData(eps, x_width=1.0).sample(ps)
    problem = ds.SlabProblem(ps, times, h, MAXW)
    res, _ = ds.solve_slab(problem, ds.SolverConfig(Nv=32, T0=0.25, dt=0.025))
    out = problem.apply(res.rho, split=True)
    flows = ds.SlabFlows(ps, times, out.fields.U, 2)
    R, _ = ds.reaction(out.fields.E, MAXW, flows)
    Kg = sfft.ifft2(convolve_modes(problem.bank.K, grid.odd_mask * sfft.fft2(out.fields.g, axes=(-2, -1)),
                                   times.dt), axes=(-2, -1)).real
    return R, out.R, Kg, out.I


def test_reaction_matches_slab_splitting():
    R1, S1, Kg1, _ = _reaction_pair(1e-2)
    # the linear parts cancel: what is left is quadratic in the data
    assert np.max(np.abs(R1 - S1)) < 0.1 * np.max(np.abs(S1))
    assert np.max(np.abs(S1)) < 1e-3 * np.max(np.abs(Kg1))
    R2, S2, _, _ = _reaction_pair(5e-3)
    assert np.max(np.abs(S1)) / np.max(np.abs(S2)) == pytest.approx(4.0, rel=0.05)
    assert np.max(np.abs(R1)) / np.max(np.abs(R2)) == pytest.approx(4.0, rel=0.05)


def test_local_solve_conserves_mass_and_restarts():
    solver = small_solver()
    f0 = ds.InitialData(1e-3, x_width=0.8)
    traj = solver.local_solve(f0)
    m = traj.mass()
    assert np.max(np.abs(m - m[0])) < 1e-8 * abs(m[0])
    assert max(traj.iterations) <= 6
    f_end = ds.reconstruct_f(traj, solver, 0.25)
    snap = ds.shear_to_physical(traj.final.h, traj.ps, 0.25)
    assert np.max(np.abs(f_end - snap)) < 1e-12


def test_continuation_seams_and_snapshots():
    solver = small_solver()
    traj, state = solver.continuation(ds.InitialData(1e-3, x_width=0.8), 1.0)
    assert state.status == "converged" and state.T == pytest.approx(1.0)
    assert max(s.seam for s in traj.slabs[1:]) < 1e-6
    assert sorted(traj.snapshots) == [0.0, 0.25, 0.5, 1.0]
    with pytest.raises(LandauLabError) as e:
        ds.snapshot_at(traj, 0.75)
    assert e.value.code == "flow-unavailable"
    with pytest.raises(LandauLabError):
        ds.reconstruct_f(traj, solver, 0.3)


def test_scattering_requires_converged_shifts():
    solver = small_solver()
    traj, _ = solver.continuation(ds.InitialData(1e-3, x_width=0.8), 0.5)
    with pytest.raises(LandauLabError) as e:
        ds.scattering_profile(traj, ds.InitialData(1e-3, x_width=0.8), MAXW, tol=1e-14)
    assert e.value.code == "scattering-not-converged"


def test_velocity_truncation_breach():
    ps = ds.PhaseSpace(PeriodicGrid(4.0, 8), 2.0, 8)
    with pytest.raises(LandauLabError) as e:
        ds.transported_initial(ds.InitialData(1e-3), None, 0.0, ps)
    assert e.value.code == "velocity-truncation-breach"


@given(eps=st.floats(1e-5, 1e-2), steps=st.integers(1, 4))
@settings(max_examples=6, deadline=None)
def test_oracle_keeps_total_distribution_nonnegative_and_mass(eps, steps):
    # Nv = 32: at dv = 1 the spectral velocity kick rings at O(eps^2)
    ps = ds.PhaseSpace(PeriodicGrid(4.0, 8), 8.0, 32)
    oracle = ds.SemiLagrangianOracle(ps, MAXW)
    f0 = ds.InitialData(eps, x_width=0.8).sample(ps)
    run = oracle.run(f0, 0.1 * steps, steps)
    total = run.f_end + oracle.mu0
    assert total.min() > -1e-10 * total.max()
    # round-off is set by the full distribution, background included
    full_mass = abs(run.mass[0]) + np.broadcast_to(oracle.mu0, ps.shape).sum() * ps.grid.dx**2 * ps.dv**2
    assert np.max(np.abs(run.mass - run.mass[0])) < 1e-12 * full_mass


def test_oracle_agrees_with_fixed_point_on_first_slab():
    solver = small_solver(N=16, Nv=32)  # resolved in x and v
    f0 = ds.InitialData(1e-3, x_width=1.0)
    traj = solver.local_solve(f0)
    oracle = ds.SemiLagrangianOracle(solver.ps, MAXW)
    run = oracle.run(f0.sample(solver.ps), 0.25, 20, report_every=2)
    err = np.max(np.abs(run.rho - traj.rho)) / np.max(np.abs(traj.rho))
    assert err < 1e-4
