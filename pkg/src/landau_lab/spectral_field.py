"""Periodic grids, spectral multipliers and the screened semilinear field solve.

The box is [-L, L)^2 with N points per axis; dual frequencies are
xi_k = pi k / L.  Fields carry their samples; the DFT is computed lazily.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import LandauLabError


@dataclass(frozen=True)
class PeriodicGrid:
    L: float
    N: int

    def __post_init__(self):
        if self.N < 8 or self.N & (self.N - 1):
            raise LandauLabError("grid-invalid", f"N={self.N} must be a power of two >= 8")
        if self.L <= 0:
            raise LandauLabError("grid-invalid", "L must be positive")

    @property
    def dx(self):
        return 2.0 * self.L / self.N

    @cached_property
    def x(self):
        return -self.L + self.dx * np.arange(self.N)

    @cached_property
    def mesh(self):
        """(X1, X2) with 'ij' indexing."""
        return np.meshgrid(self.x, self.x, indexing="ij")

    @cached_property
    def k1d(self):
        return 2.0 * np.pi * sfft.fftfreq(self.N, d=self.dx)

    @cached_property
    def kmesh(self):
        return np.meshgrid(self.k1d, self.k1d, indexing="ij")

    @cached_property
    def k2(self):
        k1, k2 = self.kmesh
        return k1**2 + k2**2

    @cached_property
    def dealias_mask(self):
        """2/3-rule mask: keep |k_i| < N/3 on both axes."""
        idx = np.abs(sfft.fftfreq(self.N) * self.N)
        keep = idx < self.N / 3.0
        return keep[:, None] & keep[None, :]

    @cached_property
    def odd_mask(self):
        """Zero the Nyquist row/column for odd-order derivatives."""
        m = np.ones(self.N)
        m[self.N // 2] = 0.0
        return m[:, None] * m[None, :]

    @property
    def dxi(self):
        return np.pi / self.L

    def window_ok(self, v_max, horizon):
        """Dispersive-window condition dxi <= pi / (v_max * T)."""
        return self.dxi <= np.pi / (v_max * horizon) + 1e-15

    def shift_phase(self, ahat, alpha):
        """Spectral translate: returns hat of g(. - alpha)."""
        k1, k2 = self.kmesh
        return ahat * np.exp(-1j * (k1 * alpha[0] + k2 * alpha[1]))


@dataclass
class ScalarField2D:
    grid: PeriodicGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.N, self.grid.N):
            raise LandauLabError("grid-mismatch", f"values shape {self.values.shape}")

    @cached_property
    def hat(self):
        return sfft.fft2(self.values)

    @classmethod
    def from_hat(cls, grid, hat, **meta):
        f = cls(grid, sfft.ifft2(hat).real, dict(meta))
        return f

    def norm(self, p):
        if p == np.inf or p == "inf":
            return float(np.max(np.abs(self.values)))
        return float(np.sum(np.abs(self.values) ** p) * self.grid.dx**2) ** (1.0 / p)

    def integral(self):
        return float(np.sum(self.values) * self.grid.dx**2)


@dataclass
class VectorField2D:
    grid: PeriodicGrid
    values: np.ndarray  # shape (2, N, N)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (2, self.grid.N, self.grid.N):
            raise LandauLabError("grid-mismatch", f"values shape {self.values.shape}")

    @cached_property
    def hat(self):
        return sfft.fft2(self.values, axes=(-2, -1))

    def component(self, i):
        return ScalarField2D(self.grid, self.values[i])


# -- nonlinearity ------------------------------------------------------------

def _massless():
    return (
        lambda r: r - np.expm1(r),
        lambda r: -np.expm1(r),
        lambda r: -np.exp(r),
        lambda r: -np.exp(r),
    )


def _zero():
    z = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    return (z, z, z, z)


@dataclass
class NonlinearityA:
    """A(r) with A(0) = A'(0) = 0 and bounded derivatives on |r| <= 1."""

    kind: str = "massless-electron"
    funcs: tuple | None = None
    C_A: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.kind == "massless-electron":
            self.funcs = _massless()
        elif self.kind == "zero":
            self.funcs = _zero()
        elif self.kind == "custom":
            if self.funcs is None or len(self.funcs) != 4:
                raise LandauLabError("nonlinearity-invalid", "custom A needs (A, A', A'', A''')")
            a0, d0 = float(self.funcs[0](0.0)), float(self.funcs[1](0.0))
            if abs(a0) > 1e-12 or abs(d0) > 1e-12:
                raise LandauLabError("nonlinearity-invalid", f"A(0)={a0}, A'(0)={d0}")
        else:
            raise LandauLabError("nonlinearity-invalid", f"unknown kind {self.kind!r}")
        self.C_A = self.measure_constant()

    def __call__(self, r):
        return self.funcs[0](r)

    def derivative(self, r, order=1):
        return self.funcs[order](r)

    def measure_constant(self, n=10_000):
        """sup_{|r|<=1} |A/r^2| + |A'/r| + |A''| + |A'''| on n samples."""
        r = np.linspace(-1.0, 1.0, n)
        r = r[r != 0.0]
        A, d1, d2, d3 = (f(r) for f in self.funcs)
        return float(np.max(np.abs(A / r**2) + np.abs(d1 / r) + np.abs(d2) + np.abs(d3)))


# -- operators ---------------------------------------------------------------

def helmholtz_multiplier(grid):
    return 1.0 / (1.0 + grid.k2)


def helmholtz_invert(rho):
    """u with u_hat = rho_hat / (1 + |xi|^2)."""
    return ScalarField2D.from_hat(rho.grid, rho.hat * helmholtz_multiplier(rho.grid))


def eval_A(A, u):
    if np.max(np.abs(u.values)) > 1.0:
        raise LandauLabError("assumption-window-exceeded", f"|u|_inf = {np.max(np.abs(u.values)):.3g} > 1")
    return ScalarField2D(u.grid, A(u.values))


def _A_hat(A, u_values, grid, dealias):
    ah = sfft.fft2(A(u_values))
    return ah * grid.dealias_mask if dealias else ah


def semilinear_residual(u, rho, A, dealias=True):
    """sup |(-Lap + 1) u - rho - A(u)|, evaluated spectrally."""
    g = u.grid
    r = (1.0 + g.k2) * u.hat - rho.hat - _A_hat(A, u.values, g, dealias)
    return float(np.max(np.abs(sfft.ifft2(r))))


def smallness(rho):
    """||rho||_{L1 cap Linf} = max of the two norms."""
    return max(rho.norm(1), rho.norm(np.inf))


def solve_semilinear(rho, A, tol=1e-10, max_iter=64, gate=0.1, dealias=True):
    """Picard iteration for -Lap u + u = rho + A(u), started from the linear solve."""
    size = smallness(rho)
    if size > gate:
        raise LandauLabError("smallness-violation", f"||rho||_L1capLinf = {size:.3e} > {gate}", size=size)
    g = rho.grid
    mult = helmholtz_multiplier(g)
    u_hat = rho.hat * mult
    u = sfft.ifft2(u_hat).real
    for it in range(1, max_iter + 1):
        new_hat = (rho.hat + _A_hat(A, u, g, dealias)) * mult
        new = sfft.ifft2(new_hat).real
        step = float(np.max(np.abs(new - u)))
        u = new
        if step < tol:
            out = ScalarField2D(g, u, {"iterations": it, "step": step})
            out.meta["residual"] = semilinear_residual(out, rho, A, dealias)
            return out
    raise LandauLabError("picard-divergence", f"no convergence in {max_iter} iterations (step {step:.2e})")


def electric_field(u):
    """E = -grad u by spectral differentiation."""
    g = u.grid
    k1, k2 = g.kmesh
    m = g.odd_mask
    eh = np.stack([-1j * k1 * u.hat * m, -1j * k2 * u.hat * m])
    return VectorField2D(g, sfft.ifft2(eh, axes=(-2, -1)).real)


def gradient(f):
    """Spectral gradient of a scalar field, shape (2, N, N)."""
    g = f.grid
    k1, k2 = g.kmesh
    m = g.odd_mask
    return sfft.ifft2(np.stack([1j * k1 * f.hat * m, 1j * k2 * f.hat * m]), axes=(-2, -1)).real


def laplacian(f):
    return ScalarField2D.from_hat(f.grid, -f.grid.k2 * f.hat)


def divergence(E):
    g = E.grid
    k1, k2 = g.kmesh
    m = g.odd_mask
    return ScalarField2D.from_hat(g, (1j * k1 * E.hat[0] + 1j * k2 * E.hat[1]) * m)
