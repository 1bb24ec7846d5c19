"""Time-domain kernel K(t, xi), its Volterra resolvent G = K + K*G, the
space-time convolution G *_(t,x), and the linearized density evolution.

All time convolutions use the product trapezoidal rule on a uniform grid::

    (K*G)(t_m) = dt [K_m G_0 / 2 + sum_{0<j<m} K_{m-j} G_j + K_0 G_m / 2]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import special

from . import equilibria as eq
from .errors import LandauLabError
from .spacetime import SpaceTimeField, TimeGrid, from_continuous_hat, trapezoid_weights

BLOWUP = 1e6


def kernel_time_K(profile, xi, grid):
    xi = np.asarray(xi, dtype=float)
    if not np.hypot(*xi) > 0:
        raise LandauLabError("zero-wavenumber", "K(t, 0) vanishes identically")
    return eq.kernel_time(profile, grid.t, xi)


def solve_volterra(K, S, dt):
    """Solve y = S + K*y by trapezoidal marching.

    ``K`` and ``S`` have shape (M+1,) or (M+1, n) (independent columns).
    """
    K = np.asarray(K)
    S = np.asarray(S)
    dtype = np.result_type(K, S, float)
    y = np.zeros(np.broadcast_shapes(K.shape, S.shape), dtype=dtype)
    Kb = np.broadcast_to(K, y.shape)
    denom = 1.0 - 0.5 * dt * Kb[0]
    y[0] = S[0] if S.ndim == y.ndim else S[0]
    for m in range(1, y.shape[0]):
        acc = 0.5 * Kb[m] * y[0]
        if m > 1:
            acc = acc + np.sum(Kb[m - 1:0:-1] * y[1:m], axis=0)
        y[m] = (S[m] + dt * acc) / denom
        if np.max(np.abs(y[m])) > BLOWUP:
            raise LandauLabError("resolvent-instability", f"|G| > {BLOWUP:g} at step {m}", step=m)
    return y


def volterra_resolvent(K_samples, grid):
    """G solving G = K + K*G on the time grid."""
    return solve_volterra(K_samples, K_samples, grid.dt)


def trapezoid_convolution(K, g, dt):
    """(K*g)(t_m) for all m; leading axis is time, trailing axes broadcast."""
    K = np.asarray(K)
    g = np.asarray(g)
    M1 = g.shape[0]
    out = np.zeros(np.broadcast_shapes(K.shape, g.shape), dtype=np.result_type(K, g))
    for m in range(1, M1):
        w = trapezoid_weights(m, dt)
        out[m] = np.tensordot(w, K[m::-1] * g[: m + 1], axes=(0, 0)) if K.ndim == 1 else \
            np.sum(w.reshape((-1,) + (1,) * (g.ndim - 1)) * K[m::-1] * g[: m + 1], axis=0)
    return out


def resolvent_residual(K, G, dt):
    """max_m |G - K - K*G|."""
    return float(np.max(np.abs(G - K - trapezoid_convolution(K, G, dt))))


@dataclass
class ModeResolvent:
    xi: np.ndarray
    K_samples: np.ndarray
    G_samples: np.ndarray
    dt: float

    def residual(self):
        return resolvent_residual(self.K_samples, self.G_samples, self.dt)


class ResolventBank:
    """Per-mode kernels and resolvents on a periodic grid.

    For radial profiles modes are grouped by |xi|, so the Volterra solve runs
    once per distinct magnitude.  Modes with |xi| > ``xi_max`` use G = K.
    """

    def __init__(self, profile, grid, times, xi_max=None):
        self.profile, self.grid, self.times = profile, grid, times
        band = (grid.N // 3) * np.pi / grid.L
        self.xi_max = band if xi_max is None else xi_max
        k1, k2 = grid.kmesh
        kk = np.sqrt(grid.k2)
        t = times.t
        N = grid.N
        if profile.radial:
            uniq, inv = np.unique(np.round(kk, 12), return_inverse=True)
            mags = uniq
            hat = profile.radial_hat(np.outer(t, mags))
            Kcols = -(mags**2) * t[:, None] * hat / (1.0 + mags**2)
            solved = (mags <= self.xi_max) & (mags > 0)
            Gcols = Kcols.copy()
            if np.any(solved):
                Gcols[:, solved] = solve_volterra(Kcols[:, solved], Kcols[:, solved], times.dt)
            self.K = Kcols[:, inv.ravel()].reshape(len(t), N, N)
            self.G = Gcols[:, inv.ravel()].reshape(len(t), N, N)
            self._solved_mask = solved[inv.ravel()].reshape(N, N)
        else:
            xi = np.stack([k1, k2], axis=-1)
            hat = profile.mu_hat(t[:, None, None, None] * xi[None])
            self.K = -(kk**2)[None] * t[:, None, None] * hat / (1.0 + kk**2)[None]
            solved = (kk <= self.xi_max) & (kk > 0)
            self.G = self.K.copy()
            cols = self.K[:, solved]
            self.G[:, solved] = solve_volterra(cols, cols, times.dt)
            self._solved_mask = solved

    def mode(self, i, j):
        k1, k2 = self.grid.kmesh
        return ModeResolvent(np.array([k1[i, j], k2[i, j]]), self.K[:, i, j], self.G[:, i, j], self.times.dt)

    def stored_residual(self):
        """Worst resolvent identity residual over Volterra-solved modes."""
        m = self._solved_mask
        if not np.any(m):
            return 0.0
        return resolvent_residual(self.K[:, m], self.G[:, m], self.times.dt)


def convolve_modes(kernel, ghat, dt):
    """Trapezoidal time convolution per spatial mode (shapes (M+1, ..., N, N))."""
    out = np.zeros(np.broadcast_shapes(kernel.shape[:1] + ghat.shape[1:], ghat.shape), dtype=complex)
    for m in range(1, ghat.shape[0]):
        w = trapezoid_weights(m, dt).reshape((-1,) + (1,) * (ghat.ndim - 1))
        kk = kernel[m::-1]
        if ghat.ndim == kernel.ndim + 1:
            kk = kk[:, None]
        out[m] = np.sum(w * kk * ghat[: m + 1], axis=0)
    return out


def apply_G_spacetime(g, bank):
    """(G *_(t,x) g)(t, x) on the shared space-time grid."""
    g.check_compatible(bank.grid, bank.times)
    out_hat = convolve_modes(bank.G, g.hat, bank.times.dt)
    vals = sfft.ifft2(out_hat, axes=(-2, -1))
    res = SpaceTimeField(g.grid, g.times, vals.real)
    res.meta["max_imag"] = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    return res


def linear_density_evolve(source_hat, profile, grid, times, zero_kernel=False, xi_max=np.inf):
    """Per mode solve rho_hat = S + K*rho_hat, S(t, xi) = ``source_hat(xi1, xi2, t)``.

    ``source_hat`` returns the continuous transform (vectorized in xi).
    Returns a SpaceTimeField of rho(t, x) on the periodic grid.
    """
    k1, k2 = grid.kmesh
    S = np.stack([source_hat(k1, k2, t) for t in times.t])
    if zero_kernel:
        rho_hat = S
    else:
        bank_K = _kernel_samples(profile, grid, times)
        kk = np.sqrt(grid.k2)
        active = (kk > 0) & (kk <= xi_max)
        rho_hat = S.astype(complex).copy()
        rho_hat[:, active] = solve_volterra(bank_K[:, active], S[:, active], times.dt)
    vals = from_continuous_hat(grid, rho_hat)
    out = SpaceTimeField(grid, times, vals.real)
    out.meta["max_imag"] = float(np.max(np.abs(vals.imag)))
    return out


def _kernel_samples(profile, grid, times):
    t = times.t
    kk = np.sqrt(grid.k2)
    if profile.radial:
        uniq, inv = np.unique(np.round(kk, 12), return_inverse=True)
        cols = -(uniq**2) * t[:, None] * profile.radial_hat(np.outer(t, uniq)) / (1 + uniq**2)
        return cols[:, inv.ravel()].reshape(len(t), grid.N, grid.N)
    k1, k2 = grid.kmesh
    xi = np.stack([k1, k2], axis=-1)
    return -(kk**2)[None] * t[:, None, None] * profile.mu_hat(t[:, None, None, None] * xi[None]) / (1 + kk**2)[None]


# -- whole-space radial evolution -------------------------------------------

@dataclass
class RadialDensity:
    """rho(t, r) on the whole plane for radial data, with its transform."""

    t: np.ndarray
    k: np.ndarray
    r: np.ndarray
    rho_hat: np.ndarray  # (nt, nk)
    rho: np.ndarray  # (nt, nr)

    def norm_inf(self):
        return np.max(np.abs(self.rho), axis=1)

    def norm_1(self):
        w = 2 * np.pi * self.r * np.gradient(self.r)
        return np.abs(self.rho) @ w


def radial_linear_density(profile, source_hat_radial, times, k_max=6.0, nk=600, r_max=None, nr=1200,
                          zero_kernel=False):
    """Linear density on R^2 for radial profile and radial source.

    ``source_hat_radial(k, t)`` is the continuous transform of the free
    source at |xi| = k.  The inverse transform is the order-0 Hankel integral
    rho(t, r) = (2 pi)^-1 int rho_hat(t, k) J0(k r) k dk (trapezoid in k).
    """
    if not profile.radial:
        raise LandauLabError("profile-kind", "radial evolution needs a radial profile")
    t = times.t
    k = np.linspace(0.0, k_max, nk + 1)
    S = np.stack([source_hat_radial(k, tt) for tt in t])
    if zero_kernel:
        rho_hat = S
    else:
        Kc = -(k**2) * t[:, None] * profile.radial_hat(np.outer(t, k)) / (1 + k**2)
        rho_hat = solve_volterra(Kc, S, times.dt)
    dk = k[1] - k[0]
    if r_max is None:
        r_max = 0.45 * 2 * np.pi / dk
    r = np.linspace(0.0, r_max, nr + 1)
    wk = np.full(k.size, dk)
    wk[0] = wk[-1] = 0.5 * dk
    J = special.j0(np.outer(k, r)) * (wk * k)[:, None] / (2 * np.pi)
    rho = rho_hat.real @ J
    return RadialDensity(t, k, r, rho_hat, rho)


def discrete_laplace(samples, dt, taus):
    """sum_m w_m G(t_m) exp(-i tau t_m) (trapezoid) for each tau."""
    t = dt * np.arange(len(samples))
    w = trapezoid_weights(len(samples) - 1, dt)
    return np.exp(-1j * np.outer(taus, t)) @ (w * samples)
