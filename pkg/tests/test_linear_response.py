import numpy as np
from hypothesis import given, settings, strategies as st

from landau_lab import equilibria as eq
from landau_lab.linear_response import (ResolventBank, discrete_laplace, linear_density_evolve, radial_linear_density,
                                        resolvent_residual, solve_volterra, trapezoid_convolution,
                                        volterra_resolvent)
from landau_lab.spacetime import TimeGrid
from landau_lab.spectral_field import PeriodicGrid


@given(c=st.floats(-2.0, 2.0))
@settings(max_examples=10, deadline=None)
def test_constant_kernel_resolvent(c):
    tg = TimeGrid(1.0, 1000)
    G = volterra_resolvent(np.full(1001, c), tg)
    exact = c * np.exp(c * tg.t)
    assert np.max(np.abs(G - exact) / np.maximum(np.abs(exact), 1e-300)) < 1e-6


def test_zero_kernel_returns_source():
    S = np.linspace(0, 1, 11)
    assert np.array_equal(solve_volterra(np.zeros(11), S, 0.1), S)


def test_trapezoid_convolution_against_direct_sum():
    rng = np.random.default_rng(1)
    K, g = rng.standard_normal(9), rng.standard_normal(9)
    dt = 0.3
    out = trapezoid_convolution(K, g, dt)
    for m in range(1, 9):
        w = np.full(m + 1, dt)
        w[[0, -1]] *= 0.5
        assert abs(out[m] - sum(w[j] * K[m - j] * g[j] for j in range(m + 1))) < 1e-13


def test_bank_residual_and_radial_grouping():
    grid = PeriodicGrid(8.0, 16)
    tg = TimeGrid(4.0, 80)
    bank = ResolventBank(eq.maxwellian(), grid, tg, xi_max=np.inf)
    assert bank.stored_residual() < 1e-8
    assert np.allclose(bank.G[:, 1, 2], bank.G[:, 2, 1])
    assert bank.mode(1, 0).residual() < 1e-8


def test_two_bump_bank_residual():
    grid = PeriodicGrid(8.0, 8)
    bank = ResolventBank(eq.two_bump((1.0, 0.0), 0.8), grid, TimeGrid(2.0, 40), xi_max=np.inf)
    assert bank.stored_residual() < 1e-8


def test_resolvent_identity_residual_helper():
    tg = TimeGrid(2.0, 40)
    K = eq.kernel_time(eq.maxwellian(), tg.t, (0.5, 0.0))
    G = volterra_resolvent(K, tg)
    assert resolvent_residual(K, G, tg.dt) < 1e-12


def test_free_radial_density_is_gaussian():
    sx, sv, eps = 1.0, 1.0, 1e-3
    src = lambda k, t: eps * 2 * np.pi * sx**2 * np.exp(-k**2 * (sx**2 + (t * sv) ** 2) / 2)
    tg = TimeGrid(4.0, 8)
    res = radial_linear_density(eq.maxwellian(), src, tg, k_max=12.0, nk=1200, r_max=20.0, nr=400,
                                zero_kernel=True)
    for n, t in enumerate(tg.t):
        var = sx**2 + (t * sv) ** 2
        exact = eps * sx**2 / var * np.exp(-res.r**2 / (2 * var))
        assert np.max(np.abs(res.rho[n] - exact)) < 1e-8


def test_periodic_zero_kernel_matches_radial():
    grid = PeriodicGrid(16.0, 64)
    tg = TimeGrid(2.0, 4)
    src = lambda k1, k2, t: np.exp(-(k1**2 + k2**2) * (1 + t * t) / 2)
    rho = linear_density_evolve(src, eq.maxwellian(), grid, tg, zero_kernel=True)
    X1, X2 = grid.mesh
    var = 1 + tg.T**2
    exact = np.exp(-(X1**2 + X2**2) / (2 * var)) / (2 * np.pi * var)
    assert np.max(np.abs(rho.values[-1] - exact)) < 1e-10


def test_discrete_laplace_of_exponential():
    dt = 1e-3
    t = dt * np.arange(20001)
    got = discrete_laplace(np.exp(-t), dt, np.array([0.0, 1.0]))
    assert np.allclose(got, 1 / (1 + 1j * np.array([0.0, 1.0])), atol=1e-6)
