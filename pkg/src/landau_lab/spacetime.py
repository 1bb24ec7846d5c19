"""Time grids and sampled space-time fields shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import LandauLabError
from .spectral_field import PeriodicGrid, ScalarField2D


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int
    t0: float = 0.0

    def __post_init__(self):
        if self.M < 2 or self.T <= 0:
            raise LandauLabError("time-grid-invalid", f"need M >= 2 and T > 0 (got M={self.M}, T={self.T})")

    @property
    def dt(self):
        return self.T / self.M

    @cached_property
    def t(self):
        return self.t0 + self.dt * np.arange(self.M + 1)

    def truncate(self, m):
        """First m steps (m+1 nodes)."""
        return TimeGrid(m * self.dt, m, self.t0)

    def same_as(self, other):
        return self.M == other.M and np.isclose(self.T, other.T) and np.isclose(self.t0, other.t0)


def trapezoid_weights(m, dt):
    """Composite trapezoid weights on m+1 nodes."""
    w = np.full(m + 1, dt)
    if m == 0:
        return np.zeros(1)
    w[0] = w[-1] = 0.5 * dt
    return w


def to_continuous_hat(grid, values):
    """Samples on [-L, L)^2 -> continuous transform at xi_k (axes -2, -1)."""
    sign = np.where(np.arange(grid.N) % 2, -1.0, 1.0)
    phase = sign[:, None] * sign[None, :]
    return grid.dx**2 * sfft.fft2(values, axes=(-2, -1)) * phase


def from_continuous_hat(grid, chat):
    """Inverse of :func:`to_continuous_hat` (real part)."""
    sign = np.where(np.arange(grid.N) % 2, -1.0, 1.0)
    phase = sign[:, None] * sign[None, :]
    return sfft.ifft2(chat * phase, axes=(-2, -1)) / grid.dx**2


@dataclass
class SpaceTimeField:
    """Samples g(t_m, x) (scalar: shape (M+1, N, N); vector: (M+1, 2, N, N))."""

    grid: PeriodicGrid
    times: TimeGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        n, N = self.times.M + 1, self.grid.N
        if self.values.shape not in ((n, N, N), (n, 2, N, N)):
            raise LandauLabError("grid-mismatch", f"values shape {self.values.shape} vs ({n}, [2,] {N}, {N})")

    @property
    def is_vector(self):
        return self.values.ndim == 4

    @cached_property
    def hat(self):
        return sfft.fft2(self.values, axes=(-2, -1))

    def slice(self, m):
        return ScalarField2D(self.grid, self.values[m].real)

    def check_compatible(self, grid, times):
        if grid != self.grid or not times.same_as(self.times):
            raise LandauLabError("grid-mismatch", "space-time grids differ")

    @classmethod
    def zeros(cls, grid, times, vector=False):
        shape = (times.M + 1, 2, grid.N, grid.N) if vector else (times.M + 1, grid.N, grid.N)
        return cls(grid, times, np.zeros(shape))
