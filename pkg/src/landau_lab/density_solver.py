"""The density fixed-point solver.

The unknown is rho(t, x) alone.  Given a guess, the map

    J(rho) = G * (I + R + A(U)) + I + R

recomputes U = N(rho), g = rho + A(U), E = -grad U, the characteristics, the
transported initial data I and the reaction term R, and returns a new density.

Phase-space data live in the shear frame h(z, v) = f(t, z + t v, v) on a
periodic box in z and a truncated box [-V, V)^2 in v; arrays are laid out
(Nv, Nv, N, N) so that spatial FFTs run over the contiguous trailing axes.
Velocity averages rho(t, x) = int h(x - t v, v) dv integrate the
trigonometric interpolant in v exactly, which avoids the recurrence of plain
grid sums.

Time is advanced slab by slab.  The system is autonomous, so on each slab
[T_k, T_k + T0] the density equation is restarted with f(T_k) as data and the
time convolutions run over the slab only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from . import equilibria as eq
from .errors import LandauLabError
from .linear_response import ResolventBank, convolve_modes
from .norms import (PhaseGrid, besov_values, default_shifts, japanese, lp_norm, running_ledger,
                    spectral_gradient, trajectory_norm, weighted_series)
from .spacetime import SpaceTimeField, TimeGrid, trapezoid_weights
from .spectral_field import NonlinearityA, PeriodicGrid, ScalarField2D, electric_field, solve_semilinear

log = logging.getLogger(__name__)


# -- phase space ---------------------------------------------------------------

@dataclass(frozen=True)
class PhaseSpace:
    grid: PeriodicGrid
    V: float = 8.0
    Nv: int = 32

    def __post_init__(self):
        if self.Nv < 4 or self.Nv % 2 or self.V <= 0:
            raise LandauLabError("grid-invalid", f"need even Nv >= 4 and V > 0 (Nv={self.Nv}, V={self.V})")

    @property
    def dv(self):
        return 2.0 * self.V / self.Nv

    @property
    def v1d(self):
        return -self.V + self.dv * np.arange(self.Nv)

    @property
    def vmesh(self):
        """(V1, V2) shaped (Nv, Nv, 1, 1) for broadcasting against phase arrays."""
        a, b = np.meshgrid(self.v1d, self.v1d, indexing="ij")
        return a[:, :, None, None], b[:, :, None, None]

    @property
    def velocities(self):
        v1, v2 = self.vmesh
        return np.stack(np.broadcast_arrays(v1, v2), axis=-1)[:, :, 0, 0]

    @property
    def kv(self):
        return np.pi / self.V * sfft.fftfreq(self.Nv, 1.0 / self.Nv)

    @property
    def shape(self):
        return (self.Nv, self.Nv, self.grid.N, self.grid.N)

    def norms_grid(self):
        return PhaseGrid(self.grid.L, self.grid.N, self.V, self.Nv)

    def to_norms_layout(self, h):
        return np.moveaxis(h, (0, 1), (2, 3))

    def zmesh(self):
        X1, X2 = self.grid.mesh
        return X1[None, None], X2[None, None]


def _velocity_weights(ps, eta):
    """Trig-interpolant integration factors: shape (Nv, len(eta)) for one axis."""
    kv = ps.kv
    m = np.rint(kv * ps.V / np.pi).astype(int)
    sign = np.where(m % 2, -1.0, 1.0)
    S = sign[:, None] * 2.0 * ps.V * np.sinc((kv[:, None] - eta[None, :]) * ps.V / np.pi) / ps.Nv
    ny = ps.Nv // 2
    # split the Nyquist coefficient evenly between +/- pi/dv so the interpolant is real
    kn = np.pi / ps.dv
    plus = sign[ny] * 2.0 * ps.V * np.sinc((kn - eta) * ps.V / np.pi) / ps.Nv
    S[ny] = 0.5 * (S[ny] + plus)
    return S


def vavg_hat(h, ps, t):
    """DFT coefficients (rfft layout) of rho(x) = int h(x - t v, v) dv."""
    g = ps.grid
    k1 = g.k1d
    k2 = k1[: g.N // 2 + 1].copy()
    k2[-1] = abs(k2[-1])
    H = sfft.fft(sfft.rfft2(h, axes=(-2, -1)), axis=0)
    H = sfft.fft(H, axis=1)
    S1 = _velocity_weights(ps, t * k1)
    S2 = _velocity_weights(ps, t * k2)
    tmp = np.einsum("abxy,ax->bxy", H, S1, optimize=True)
    return np.einsum("bxy,by->xy", tmp, S2, optimize=True)


def vavg(h, ps, t):
    """rho(x) = int h(x - t v, v) dv for shear-frame samples ``h`` (exact in v for the interpolant)."""
    return sfft.irfft2(vavg_hat(h, ps, t), s=(ps.grid.N, ps.grid.N))


class ShearShifter:
    """Samples F(z + tau v_j) of spatial fields on the phase grid via Fourier phase shifts."""

    def __init__(self, ps):
        self.ps = ps
        g = ps.grid
        self.k1 = g.k1d
        k2 = g.k1d[: g.N // 2 + 1].copy()
        k2[-1] = abs(k2[-1])
        self.k2 = k2

    def __call__(self, fields_rhat, tau):
        """``fields_rhat``: (c, N, N//2+1) rfft2 coefficients -> (c, Nv, Nv, N, N)."""
        v = self.ps.v1d
        A = np.exp(1j * tau * np.outer(v, self.k1))  # (Nv, N)
        B = np.exp(1j * tau * np.outer(v, self.k2))  # (Nv, Nh)
        N = self.ps.grid.N
        # the phase separates: inverse over k1 with the v1 factor, then over k2 with the v2 factor
        G = sfft.ifft(A[None, :, :, None] * fields_rhat[:, None], axis=-2)  # (c, Nv, N, Nh)
        return sfft.irfft(G[:, :, None] * B[None, None, :, None, :], n=N, axis=-1)


def _rhat(values):
    return sfft.rfft2(values, axes=(-2, -1))


def potential_derivatives(U_values, grid, order=2):
    """rfft2 coefficients of grad U and Hess U (unique entries) for E = -grad U."""
    g = grid
    k1 = g.k1d[:, None]
    k2 = g.k1d[None, : g.N // 2 + 1].copy()
    k2[0, -1] = abs(k2[0, -1])
    keep = np.ones(g.N)
    keep[g.N // 2] = 0.0
    m = keep[:, None] * keep[None, : g.N // 2 + 1]
    uh = _rhat(U_values)
    out = [-1j * k1 * uh * m, -1j * k2 * uh * m]  # E1, E2
    if order >= 1:
        out += [k1 * k1 * uh, k1 * k2 * uh * m, k2 * k2 * uh]  # d1E1, d2E1 = d1E2, d2E2
    return np.stack(out)


# -- initial data --------------------------------------------------------------

@dataclass
class InitialData:
    """Perturbation f0(x, v).

    ``kind="gaussian"``: eps exp(-|x-x0|^2 / (2 sx^2)) exp(-|v|^2 / (2 sv^2)) / (2 pi sv^2).
    ``kind="zero"``: f0 = 0.  ``kind="grid"``: samples on a PhaseSpace (Nv, Nv, N, N).
    """

    epsilon: float = 1e-3
    kind: str = "gaussian"
    x_width: float = 1.0
    v_width: float = 1.0
    x0: tuple = (0.0, 0.0)
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "zero", "grid"):
            raise LandauLabError("initial-data-invalid", f"unknown kind {self.kind!r}")
        if self.kind == "grid" and self.values is None:
            raise LandauLabError("initial-data-invalid", "grid data needs values")

    def __call__(self, x1, x2, v1, v2):
        if self.kind == "zero":
            return np.zeros(np.broadcast_shapes(np.shape(x1), np.shape(v1)))
        if self.kind == "grid":
            raise LandauLabError("initial-data-invalid", "gridded data has no pointwise evaluator")
        sx, sv = self.x_width, self.v_width
        r2 = (x1 - self.x0[0]) ** 2 + (x2 - self.x0[1]) ** 2
        return self.epsilon * np.exp(-r2 / (2 * sx**2) - (v1**2 + v2**2) / (2 * sv**2)) / (2 * np.pi * sv**2)

    def sample(self, ps):
        if self.kind == "grid":
            if self.values.shape != ps.shape:
                raise LandauLabError("grid-mismatch", f"initial data shape {self.values.shape} vs {ps.shape}")
            return np.array(self.values, dtype=float)
        z1, z2 = ps.zmesh()
        v1, v2 = ps.vmesh
        return self(z1, z2, v1, v2)

    def free_density_hat(self, k1, k2, t):
        """Continuous transform of the free-transport density, f0_hat(xi, t xi) (Gaussian kind)."""
        if self.kind == "zero":
            return np.zeros(np.broadcast_shapes(np.shape(k1), np.shape(k2)), dtype=complex)
        if self.kind != "gaussian":
            raise LandauLabError("initial-data-invalid", "closed form only for Gaussian data")
        sx, sv = self.x_width, self.v_width
        k2s = k1**2 + k2**2
        shift = np.exp(-1j * (k1 * self.x0[0] + k2 * self.x0[1]))
        return self.epsilon * 2 * np.pi * sx**2 * np.exp(-k2s * (sx**2 + (t * sv) ** 2) / 2) * shift

    def mass(self, ps=None):
        if self.kind == "zero":
            return 0.0
        if self.kind == "gaussian":
            return self.epsilon * 2 * np.pi * self.x_width**2
        return float(self.values.sum() * ps.grid.dx**2 * ps.dv**2)

    def scaled(self, factor):
        vals = None if self.values is None else self.values * factor
        return InitialData(self.epsilon * factor, self.kind, self.x_width, self.v_width, self.x0, vals)


def triple_norm(f0, ps, a=0.5, **kw):
    """|||f0|||_{1+a} on the solver's phase grid."""
    from .norms import triple_norm_initial

    h = f0.sample(ps)
    return triple_norm_initial(np.ascontiguousarray(ps.to_norms_layout(h)), ps.norms_grid(), a, **kw)


# -- phase-space derivatives and displaced evaluation --------------------------------

class PhaseDerivatives:
    """Spectral first and second derivatives of a shear-frame array in (z1, z2, v1, v2)."""

    AXES = (2, 3, 0, 1)  # z1, z2, v1, v2 in the (Nv, Nv, N, N) layout

    def __init__(self, h, ps, second=True):
        self.h = h
        self.ps = ps
        kz = ps.grid.k1d
        kv = ps.kv
        ks = [kz, kz, kv, kv]
        masks = []
        for k, n in zip(ks, (ps.grid.N, ps.grid.N, ps.Nv, ps.Nv)):
            m = np.ones(n)
            m[n // 2] = 0.0
            masks.append(m)
        H = sfft.fftn(h)
        shape = [1, 1, 1, 1]

        def axis_vec(i, vec):
            s = list(shape)
            s[self.AXES[i]] = -1
            return vec.reshape(s)

        ik = [axis_vec(i, 1j * ks[i]) for i in range(4)]
        om = [axis_vec(i, masks[i]) for i in range(4)]
        self.first = np.stack([sfft.ifftn(ik[i] * om[i] * H).real for i in range(4)])
        self._spec = (H, ik, om)
        self._second = None
        self.with_second = second

    @property
    def second(self):
        """Unique second derivatives, computed on first use."""
        if self._second is None and self.with_second:
            H, ik, om = self._spec
            sec = {}
            for i in range(4):
                for j in range(i, 4):
                    mult = ik[i] * ik[j] if i != j else ik[i] * ik[i]
                    if i != j:
                        mult = mult * om[i] * om[j]
                    sec[(i, j)] = sfft.ifftn(mult * H).real
            self._second = sec
        return self._second

    def displaced(self, dz, dv, order=2):
        """h(z + dz, v + dv) by Taylor expansion of the given order; dz, dv shaped (2, Nv, Nv, N, N)."""
        d = [dz[0], dz[1], dv[0], dv[1]]
        out = self.h.copy()
        for i in range(4):
            out += self.first[i] * d[i]
        if order >= 2 and self.second is not None:
            for (i, j), Hij in self.second.items():
                w = 0.5 if i == j else 1.0
                out += w * Hij * d[i] * d[j]
        return out


def displaced_spline(h, ps, dz, dv):
    """h(z + dz, v + dv) by quintic spline interpolation (periodic in all four axes)."""
    Nv, N = ps.Nv, ps.grid.N
    ia, ib = np.meshgrid(np.arange(Nv), np.arange(Nv), indexing="ij")
    ix, iy = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    coords = [ia[:, :, None, None] + dv[0] / ps.dv, ib[:, :, None, None] + dv[1] / ps.dv,
              ix[None, None] + dz[0] / ps.grid.dx, iy[None, None] + dz[1] / ps.grid.dx]
    coords = [np.broadcast_to(c, h.shape) for c in coords]
    return ndimage.map_coordinates(h, coords, order=5, mode="grid-wrap")


TAYLOR_LIMIT = 0.2  # switch to spline interpolation beyond this fraction of a cell
LINEAR_LIMIT = 3e-4  # below this the quadratic term is < (pi * rel)^2 / 2 ~ 5e-7 relative


def displace(h, deriv, ps, dz, dv):
    """h(z + dz, v + dv), choosing Taylor order or spline interpolation by displacement size."""
    rel = max(float(np.max(np.abs(dz))) / ps.grid.dx, float(np.max(np.abs(dv))) / ps.dv)
    if rel <= LINEAR_LIMIT:
        return deriv.displaced(dz, dv, order=1), rel
    if rel <= TAYLOR_LIMIT:
        return deriv.displaced(dz, dv), rel
    return displaced_spline(h, ps, dz, dv), rel


def mu_at(profile, w1, w2):
    """mu at velocity components given as separate arrays (avoids a stacked copy)."""
    if profile.radial:
        return profile.radial_density(np.hypot(w1, w2))
    return eq.eval_mu(profile, np.stack([w1, w2], axis=-1))


# -- one slab ------------------------------------------------------------------------

def _backward_integrals(dt, e):
    """(int_{tau_k}^{t} (tau - tau_k) e, int_{tau_k}^{t} e) on uniform nodes for every k (trapezoid)."""
    n = e.shape[0]
    I0 = np.zeros_like(e)
    I1 = np.zeros_like(e)
    if n == 1:
        return I1, I0
    # local times tau - tau_0 keep the moments well scaled
    tt = (dt * np.arange(n)).reshape((-1,) + (1,) * (e.ndim - 1))
    seg0 = 0.5 * dt * (e[:-1] + e[1:])
    seg1 = 0.5 * dt * (tt[:-1] * e[:-1] + tt[1:] * e[1:])
    I0[:-1] = np.cumsum(seg0[::-1], axis=0)[::-1]
    I1[:-1] = np.cumsum(seg1[::-1], axis=0)[::-1]
    return I1 - tt * I0, I0


@dataclass
class SlabFields:
    """U, g, E on the slab nodes, derived from rho through the semilinear solve."""

    rho: np.ndarray
    U: np.ndarray
    g: np.ndarray
    E: np.ndarray
    picard_iterations: list


def field_solve(rho, grid, A, gate=0.1, tol=1e-10):
    U = np.empty_like(rho)
    g = np.empty_like(rho)
    its = []
    for m in range(rho.shape[0]):
        r = ScalarField2D(grid, rho[m])
        u = solve_semilinear(r, A, tol=tol, gate=gate)
        U[m] = u.values
        Ah = sfft.fft2(A(u.values)) * grid.dealias_mask
        g[m] = rho[m] + sfft.ifft2(Ah).real
        its.append(u.meta["iterations"])
    Eh = potential_derivatives(U, grid, order=0)
    E = sfft.irfft2(np.moveaxis(Eh, 0, 1), s=(grid.N, grid.N), axes=(-2, -1))
    return SlabFields(rho, U, g, E, its)


try:  # fused sweep update; the numpy path below is the fallback
    import numba

    @numba.njit(cache=True)
    def _sweep_step_fused(S, acc, out, dt, s):
        """One node of the second-order moment sweep (see SlabFlows.sweep).

        ``S`` is (5, P) field samples; ``acc`` is point-major (P, 22) running
        sums followed by the node-0 samples; ``out`` (P, 4) receives Y and W.
        Point-major storage keeps the many streams off the same cache sets.
        Returns (max|Y - P|, max|H|).
        """
        half = 0.5 * dt
        dmax = 0.0
        hmax = 0.0
        for p in range(S.shape[1]):
            e1, e2 = S[0, p], S[1, p]
            h11, h12, h22 = S[2, p], S[3, p], S[4, p]
            a = acc[p]
            a[0] += dt * e1
            a[1] += dt * e2
            a[2] += dt * s * e1
            a[3] += dt * s * e2
            q1 = a[0] - half * (a[17] + e1)
            q2 = a[1] - half * (a[18] + e2)
            p1 = a[2] - half * s * e1
            p2 = a[3] - half * s * e2
            u1 = p1 - s * q1
            u2 = p2 - s * q2
            d1 = h11 * u1 + h12 * u2
            d2 = h12 * u1 + h22 * u2
            a[4] += dt * h11
            a[5] += dt * h12
            a[6] += dt * h22
            a[7] += dt * s * h11
            a[8] += dt * s * h12
            a[9] += dt * s * h22
            a[10] += dt * s * s * h11
            a[11] += dt * s * s * h12
            a[12] += dt * s * s * h22
            a[13] += dt * d1
            a[14] += dt * d2
            a[15] += dt * s * d1
            a[16] += dt * s * d2
            c11 = a[4] - half * (a[19] + h11)
            c12 = a[5] - half * (a[20] + h12)
            c22 = a[6] - half * (a[21] + h22)
            s11 = a[7] - half * s * h11
            s12 = a[8] - half * s * h12
            s22 = a[9] - half * s * h22
            t11 = a[10] - half * s * s * h11
            t12 = a[11] - half * s * s * h12
            t22 = a[12] - half * s * s * h22
            y1 = s11 * p1 + s12 * p2 - t11 * q1 - t12 * q2 - (a[15] - half * s * d1)
            y2 = s12 * p1 + s22 * p2 - t12 * q1 - t22 * q2 - (a[16] - half * s * d2)
            out[p, 0] = p1 + y1
            out[p, 1] = p2 + y2
            out[p, 2] = -(q1 + c11 * p1 + c12 * p2 - s11 * q1 - s12 * q2 - (a[13] - half * d1))
            out[p, 3] = -(q2 + c12 * p1 + c22 * p2 - s12 * q1 - s22 * q2 - (a[14] - half * d2))
            dmax = max(dmax, abs(y1), abs(y2))
            hmax = max(hmax, abs(h11), abs(h12), abs(h22))
        return dmax, hmax
except ImportError:  # pragma: no cover
    _sweep_step_fused = None


class SlabFlows:
    """Characteristics on the phase grid for targets t_n in one slab.

    The field and its gradient are sampled along free streaming lines
    z + tau v by Fourier phase shifts (exact for the trigonometric interpolant);
    the perturbation Y enters through a first-order Taylor correction.

    :meth:`sweep` returns the two-sweep Picard iterate for Y_{T_k, t_n} using
    running time moments (linear cost in the number of nodes); :meth:`solve`
    iterates to convergence for every start node and is kept as a reference.
    """

    def __init__(self, ps, times, U, order=1):
        if order not in (1, 2):
            raise LandauLabError("flow-order", f"flow order must be 1 or 2 (got {order})")
        self.ps, self.times, self.order = ps, times, order
        self.taylor = order == 2
        self.fused = True
        # sup |grad E| <= sum_k |k|^2 |U_k| for the trigonometric interpolant
        Uh = sfft.fft2(U, axes=(-2, -1)) / ps.grid.N**2
        self.hess_bound = float(np.max(np.sum(np.abs(Uh) * ps.grid.k2, axis=(-2, -1))))
        self._shifter = ShearShifter(ps)
        self._U = U
        self._cache = {}

    def sample(self, m):
        if m not in self._cache:
            order = 1 if self.taylor else 0
            self._cache = {m: self._shifter(potential_derivatives(self._U[m], self.ps.grid, order), self.times.t[m])}
        return self._cache[m]

    def _field(self, m, Y):
        S = self.sample(m)
        if not self.taylor or Y is None:
            return S[:2].copy()
        return np.stack([S[0] + S[2] * Y[0] + S[3] * Y[1], S[1] + S[3] * Y[0] + S[4] * Y[1]])

    def sweep(self):
        """Yield (n, Y_{T_k,t_n}, W_{T_k,t_n}, bound) for n = 1..M.

        Order 1 integrates the field along straight lines; order 2 adds the
        gradient correction.  ``bound`` estimates the next neglected correction.

        With local times s_j, P = int s E, Q = int E (cumulative trapezoid) and
        d_j = H_j (P_j - s_j Q_j), the second Picard sweep is

            Y = P_n + [sH] P_n - [s^2 H] Q_n - [s d],
            W = -(Q_n + [H] P_n - [sH] Q_n - [d]),

        where [f] is the cumulative trapezoid of f up to t_n.
        """
        dt = self.times.dt
        M = self.times.M

        def hv(H, x, out):  # symmetric (H11, H12, H22) times vector, accumulated into out
            out[0] += H[0] * x[0]
            out[0] += H[1] * x[1]
            out[1] += H[1] * x[0]
            out[1] += H[2] * x[1]
            return out

        def hv_sub(H, x, out):
            out[0] -= H[0] * x[0]
            out[0] -= H[1] * x[1]
            out[1] -= H[1] * x[0]
            out[1] -= H[2] * x[1]
            return out

        S0 = self.sample(0)
        E0 = S0[:2].copy()
        rQ = dt * E0
        rP = np.zeros_like(E0)
        if self.taylor:
            H0 = S0[2:].copy()
            rH = dt * H0
            rSH = np.zeros_like(H0)
            rS2H = np.zeros_like(H0)
            rD = np.zeros_like(E0)
            rSD = np.zeros_like(E0)
        hmax = 0.0
        half = 0.5 * dt
        if self.taylor and self.fused and _sweep_step_fused is not None:
            yield from self._sweep_fused(E0, H0)
            return
        for n in range(1, M + 1):
            s = n * dt
            S = self.sample(n)
            E = S[:2]
            rQ += dt * E
            rP += (dt * s) * E
            Q = rQ - half * E0
            Q -= half * E
            P = rP - (half * s) * E
            if not self.taylor:
                bound = self.hess_bound * s * s / 2 * float(np.max(np.abs(P)))
                yield n, P, -Q, bound
                continue
            H = S[2:]
            hmax = max(hmax, float(np.max(np.abs(H))))
            u = P - s * Q
            d = hv(H, u, np.zeros_like(u))
            rH += dt * H
            rSH += (dt * s) * H
            rS2H += (dt * s * s) * H
            rD += dt * d
            rSD += (dt * s) * d
            cH = rH - half * H0
            cH -= half * H
            cSH = rSH - (half * s) * H
            cS2H = rS2H - (half * s * s) * H
            Y = rSD - (half * s) * d  # [s d]
            np.negative(Y, out=Y)
            Y += P
            hv(cSH, P, Y)
            hv_sub(cS2H, Q, Y)
            W = rD - half * d  # [d]
            W -= Q
            hv_sub(cH, P, W)
            hv(cSH, Q, W)
            # the next sweep changes Y by about |grad E| s^2 / 2 times this sweep's correction
            bound = hmax * s * s / 2 * float(np.max(np.abs(Y - P)))
            yield n, Y, W, bound

    def _sweep_fused(self, E0, H0):
        dt = self.times.dt
        P = E0[0].size
        acc = np.zeros((P, 22))
        acc[:, 0:2] = dt * E0.reshape(2, P).T
        acc[:, 4:7] = dt * H0.reshape(3, P).T
        acc[:, 17:19] = E0.reshape(2, P).T
        acc[:, 19:22] = H0.reshape(3, P).T
        out = np.empty((P, 4))
        hmax = 0.0
        for n in range(1, self.times.M + 1):
            s = n * dt
            S = self.sample(n).reshape(5, P)
            dmax, hm = _sweep_step_fused(S, acc, out, dt, s)
            hmax = max(hmax, hm)
            YW = np.ascontiguousarray(out.T).reshape((4,) + self.ps.shape)
            yield n, YW[:2], YW[2:], hmax * s * s / 2 * dmax

    def solve(self, n, tol=1e-14, max_iter=30):
        """Y_{tau_m, t_n}, W_{tau_m, t_n} for m = 0..n, arrays (n+1, 2, Nv, Nv, N, N)."""
        dt = self.times.dt
        shape = (n + 1, 2) + self.ps.shape
        Y = np.zeros(shape)
        e = np.empty(shape)
        step = np.inf
        samples = [self.sample(m).copy() for m in range(n + 1)]
        for it in range(1, max_iter + 1):
            for m in range(n + 1):
                Sm = samples[m]
                if it == 1 or not self.taylor:
                    e[m] = Sm[:2]
                else:
                    e[m, 0] = Sm[0] + Sm[2] * Y[m, 0] + Sm[3] * Y[m, 1]
                    e[m, 1] = Sm[1] + Sm[3] * Y[m, 0] + Sm[4] * Y[m, 1]
            Ynew, I0 = _backward_integrals(dt, e)
            step = float(np.max(np.abs(Ynew - Y)))
            Y = Ynew
            scale = float(np.max(np.abs(Y)))
            if step <= tol * max(scale, 1e-300) or scale == 0.0 or not self.taylor:
                break
        else:
            raise LandauLabError("picard-divergence", f"flow iteration stalled (step {step:.2e})")
        return Y, -I0, it


@dataclass
class TransportOut:
    IR: np.ndarray
    I: np.ndarray | None
    h_end: np.ndarray
    Y0: np.ndarray
    W0: np.ndarray
    bound: float
    disp: float


@dataclass
class SlabResult:
    """J(rho) and by-products; ``I``/``R`` are set only for split transports."""

    rho: np.ndarray
    fields: SlabFields
    I: np.ndarray | None
    R: np.ndarray | None
    h_end: np.ndarray
    W0_end: np.ndarray
    Y0_end: np.ndarray
    flow_bound: float
    max_displacement: float


class SlabProblem:
    """The fixed-point map J on one slab [T_k, T_k + M dt] with shear-frame data h_k at T_k."""

    def __init__(self, ps, times, h_start, profile, A=None, bank=None, gate=0.1, flow_order=2, field_tol=1e-10):
        self.ps, self.times, self.profile = ps, times, profile
        self.A = A or NonlinearityA("massless-electron")
        self.gate, self.flow_order, self.field_tol = gate, flow_order, field_tol
        self.h = h_start
        self.deriv = PhaseDerivatives(h_start, ps)
        local = TimeGrid(times.T, times.M)
        self.bank = bank or ResolventBank(profile, ps.grid, local, xi_max=np.inf)
        v1, v2 = ps.vmesh
        self._v = (v1, v2)
        self.mu0 = eq.eval_mu(profile, np.stack(np.broadcast_arrays(v1, v2), axis=-1))
        self.cache = None

    def free_density(self):
        """Velocity averages of h_k alone (zero field): the natural starting guess."""
        return np.stack([vavg(self.h, self.ps, t) for t in self.times.t])

    def mu_shift(self, W0):
        v1, v2 = self._v
        return mu_at(self.profile, v1 + W0[0], v2 + W0[1]) - self.mu0

    def transport(self, fields, split=False):
        """I + (mu-part of R) on every node, plus the data at the slab end.

        With ``split`` the two velocity averages are also returned separately.
        """
        ps, times = self.ps, self.times
        M = times.M
        flows = SlabFlows(ps, times, fields.U, self.flow_order)
        IR = np.empty((M + 1, ps.grid.N, ps.grid.N))
        I = np.empty_like(IR) if split else None
        IR[0] = vavg(self.h, ps, times.t[0])
        if split:
            I[0] = IR[0]
        Tk = times.t[0]
        disp, bound = 0.0, 0.0
        h_end = self.h.copy()
        Y0 = W0 = np.zeros((2,) + ps.shape)
        for n, Y0, W0, b in flows.sweep():
            bound = max(bound, b)
            q, rel = displace(self.h, self.deriv, ps, Y0 - Tk * W0, W0)
            disp = max(disp, rel)
            q += self.mu_shift(W0)
            IR[n] = vavg(q, ps, times.t[n])
            if split:
                I[n] = vavg(q - self.mu_shift(W0), ps, times.t[n])
            if n == M:
                h_end = q
        return TransportOut(IR, I, h_end, Y0, W0, bound, disp)

    def apply(self, rho, reuse_tol=None, split=False):
        """J(rho) on the slab nodes."""
        grid = self.ps.grid
        fields = field_solve(rho, grid, self.A, self.gate, self.field_tol)
        if self.cache is not None and reuse_tol is not None and \
                float(np.max(np.abs(fields.g - self.cache[0]))) < 0.1 * reuse_tol:
            tr = self.cache[1]
        else:
            tr = self.transport(fields, split)
            self.cache = (fields.g, tr)
        dt = self.times.dt
        # E carries no Nyquist modes, so neither does the linear response
        odd = grid.odd_mask
        Kg = sfft.ifft2(convolve_modes(self.bank.K, odd * sfft.fft2(fields.g, axes=(-2, -1)), dt), axes=(-2, -1)).real
        IR = tr.IR - Kg
        Au = fields.g - fields.rho
        Gs = sfft.ifft2(convolve_modes(self.bank.G, odd * sfft.fft2(IR + Au, axes=(-2, -1)), dt), axes=(-2, -1)).real
        I = tr.I
        R = None if I is None else IR - I
        return SlabResult(Gs + IR, fields, I, R, tr.h_end, tr.W0, tr.Y0, tr.bound, tr.disp)


# -- reference solver --------------------------------------------------------------

@dataclass
class OracleRun:
    """Physical-frame reference trajectory: densities and masses at the report times."""

    t: np.ndarray
    rho: np.ndarray
    mass: np.ndarray
    f_end: np.ndarray


class SemiLagrangianOracle:
    """Strang-split semi-Lagrangian solver in the physical frame.

    Free streaming shifts f(x - v dt, v) spectrally in x; the field kick
    applies f(x, v - E dt) + mu(v - E dt) - mu(v) spectrally in v.  The
    physical frame oscillates in v at frequency t |xi|, so the scheme is only
    trusted while t max|xi| stays well below the velocity Nyquist frequency.
    """

    def __init__(self, ps, profile, A=None, gate=0.1):
        self.ps, self.profile = ps, profile
        self.A = A or NonlinearityA("massless-electron")
        self.gate = gate
        g = ps.grid
        v1, v2 = ps.vmesh
        self._v = (v1, v2)
        self.mu0 = eq.eval_mu(profile, np.stack(np.broadcast_arrays(v1, v2), axis=-1))
        k1, k2 = g.kmesh
        self._kx = (k1, k2)
        kv = ps.kv
        self._kv = (kv[:, None, None, None], kv[None, :, None, None])

    def density(self, f):
        return f.sum(axis=(0, 1)) * self.ps.dv**2

    def field(self, f):
        u = solve_semilinear(ScalarField2D(self.ps.grid, self.density(f)), self.A, tol=1e-13, gate=self.gate)
        return electric_field(u).values

    def stream(self, f, dt):
        v1, v2 = self._v
        k1, k2 = self._kx
        fh = sfft.fft2(f, axes=(-2, -1)) * np.exp(-1j * dt * (v1 * k1 + v2 * k2))
        return sfft.ifft2(fh, axes=(-2, -1)).real

    def kick(self, f, E, dt):
        a1, a2 = self._kv
        e1, e2 = E[0][None, None], E[1][None, None]
        fh = sfft.fft2(f, axes=(0, 1)) * np.exp(-1j * dt * (a1 * e1 + a2 * e2))
        v1, v2 = self._v
        vv = np.stack(np.broadcast_arrays(v1 - dt * e1, v2 - dt * e2), axis=-1)
        return sfft.ifft2(fh, axes=(0, 1)).real + eq.eval_mu(self.profile, vv) - self.mu0

    def run(self, f0, T, steps, report_every=1):
        dt = T / steps
        f = np.array(f0, dtype=float)
        ts, rhos, masses = [0.0], [self.density(f)], [self.density(f).sum() * self.ps.grid.dx**2]
        for n in range(1, steps + 1):
            f = self.stream(f, 0.5 * dt)
            f = self.kick(f, self.field(f), dt)
            f = self.stream(f, 0.5 * dt)
            if n % report_every == 0:
                r = self.density(f)
                ts.append(n * dt)
                rhos.append(r)
                masses.append(r.sum() * self.ps.grid.dx**2)
        return OracleRun(np.array(ts), np.array(rhos), np.array(masses), f)


# -- local solve and continuation ------------------------------------------------------

@dataclass
class SolverConfig:
    """Discretization and control parameters of the density solve."""

    V: float = 8.0
    Nv: int = 32
    T0: float = 0.5
    dt: float = 0.05
    tol: float = 1e-6  # relative, in the ||.||_{a,T0} norm of the slab update
    max_iter: int = 20
    a: float = 0.5
    gate: float = 0.1
    local_gate: float = 1.0  # bound on the initial density norms
    flow_order: int = 2
    field_tol: float = 1e-10

    @property
    def M(self):
        m = int(round(self.T0 / self.dt))
        if m < 2 or not np.isclose(m * self.dt, self.T0):
            raise LandauLabError("time-grid-invalid", f"T0 = {self.T0} is not a multiple (>= 2) of dt = {self.dt}")
        return m


@dataclass
class SlabLog:
    t_start: float
    iterations: int
    updates: list
    seam: float  # |rho(T_k) from the previous slab - rho(T_k) restarted| / max|rho|
    flow_bound: float
    max_displacement: float
    field_iterations: int

    @property
    def ratios(self):
        u = self.updates
        return [u[i + 1] / u[i] for i in range(len(u) - 1) if u[i] > 0]


@dataclass
class Snapshot:
    """Shear-frame data h(z, v) = f(t, z + t v, v) and the cumulative shifts Y_{0,t}, W_{0,t}."""

    t: float
    h: np.ndarray
    Y: np.ndarray
    W: np.ndarray


@dataclass
class DensityTrajectory:
    ps: PhaseSpace
    times: TimeGrid
    rho: np.ndarray
    U: np.ndarray
    g: np.ndarray
    E: np.ndarray
    a: float
    series_rho: dict
    series_U: dict
    slabs: list
    snapshots: dict
    final: Snapshot

    def field(self, name):
        return SpaceTimeField(self.ps.grid, self.times, getattr(self, name))

    def ledger(self, which="rho"):
        """Running ||.||_{1+a,t_n} (non-decreasing)."""
        series = self.series_rho if which == "rho" else self.series_U
        return sum(np.maximum.accumulate(v) for v in series.values())

    def ledger_total(self):
        return self.ledger("rho") + self.ledger("U")

    def mass(self):
        return self.rho.sum(axis=(-2, -1)) * self.ps.grid.dx**2

    @property
    def iterations(self):
        return [s.iterations for s in self.slabs]


@dataclass
class BootstrapState:
    T: float
    eps1: float
    status: str = "continuing"  # continuing | converged | threshold-breach
    reason: str = ""
    C1: float = float("nan")
    triple_norm: float = float("nan")


def slab_norm(values, grid, times, a):
    """||.||_{a,T} of a slab array (weights use absolute times)."""
    return trajectory_norm(SpaceTimeField(grid, times, values), m=0, gamma=a).total


def solve_slab(problem, cfg, rho0=None):
    """Iterate J on one slab to its fixed point; returns (SlabResult, updates)."""
    grid, times = problem.ps.grid, problem.times
    rho = problem.free_density() if rho0 is None else rho0
    updates, rising = [], 0
    for _ in range(cfg.max_iter):
        res = problem.apply(rho)
        diff = slab_norm(res.rho - rho, grid, times, cfg.a)
        scale = slab_norm(res.rho, grid, times, cfg.a)
        if updates and diff >= updates[-1]:
            rising += 1
            if rising >= 3:
                raise LandauLabError("local-solve-divergence",
                                     f"update ratio >= 1 three times at T_k = {times.t[0]:g}; reduce T0",
                                     updates=updates)
        else:
            rising = 0
        updates.append(diff)
        rho = res.rho
        if diff <= cfg.tol * scale:
            return res, updates
    raise LandauLabError("local-solve-divergence",
                         f"no convergence in {cfg.max_iter} iterations at T_k = {times.t[0]:g}; reduce T0",
                         updates=updates)


def compose_shifts(Y, W, Tk, Yc, Wc, ps):
    """Cumulative shifts Y_{0,t}, W_{0,t} from the slab shifts and Y_{0,T_k}, W_{0,T_k}.

    With z' = z + Y - T_k W and v' = v + W the composition reads
    Y_{0,t} = Y - T_k W + Y_{0,T_k}(z', v'),  W_{0,t} = W + W_{0,T_k}(z', v').
    The previous shifts are evaluated at the displaced point to first order
    (spectral in z, centered differences in v where they are not periodic).
    """
    dz = Y - Tk * W
    out = []
    for base, prev in ((dz, Yc), (W, Wc)):
        new = base + prev
        for c in range(2):
            gz = spectral_gradient(prev[c], ps.grid.L)  # axes (2, ..., N, N)
            gv = np.gradient(prev[c], ps.dv, axis=(0, 1))
            new[c] += gz[0] * dz[0] + gz[1] * dz[1] + gv[0] * W[0] + gv[1] * W[1]
        out.append(new)
    return out


def _initial_gate(rho0, grid, a):
    """sum_p ||rho(0)||_{L^p} + ||grad rho(0)||_{B^a_{p,inf}} over p = 1, inf."""
    grad = spectral_gradient(rho0, grid.L)
    total = lp_norm(rho0, grid.dx, 1) + lp_norm(rho0, grid.dx, np.inf)
    total += besov_values(grad, grid.L, a, 1, default_shifts(grid.L), comp_axes=1)
    total += besov_values(grad, grid.L, a, np.inf, default_shifts(grid.L), comp_axes=1)
    return float(total)


class DensitySolver:
    """Slab-by-slab fixed-point solve of the density equation."""

    def __init__(self, grid, profile, cfg=None, A=None, snapshot_times=None):
        self.cfg = cfg or SolverConfig()
        self.ps = PhaseSpace(grid, self.cfg.V, self.cfg.Nv)
        self.profile = profile
        self.A = A or NonlinearityA("massless-electron")
        self.local = TimeGrid(self.cfg.T0, self.cfg.M)
        self.bank = ResolventBank(profile, grid, self.local, xi_max=np.inf)
        self.snapshot_times = snapshot_times

    def _slab(self, h, Tk):
        times = TimeGrid(self.cfg.T0, self.cfg.M, Tk)
        return SlabProblem(self.ps, times, h, self.profile, self.A, self.bank, self.cfg.gate, self.cfg.flow_order,
                           self.cfg.field_tol)

    def local_solve(self, f0, T0=None):
        """Fixed point on [0, T0] from the free-transport guess."""
        if T0 is not None and not np.isclose(T0, self.cfg.T0):
            from dataclasses import replace
            return DensitySolver(self.ps.grid, self.profile, replace(self.cfg, T0=T0), self.A,
                                 self.snapshot_times).local_solve(f0)
        traj, state = self.continuation(f0, self.cfg.T0, eps1=np.inf)
        if traj is None:
            raise LandauLabError("local-solve-divergence", state.reason)
        return traj

    def continuation(self, f0, T_max, eps1=1.0):
        """Extend slab by slab up to T_max while the ledger stays below eps1.

        Returns (DensityTrajectory, BootstrapState).  A breach is reported in
        the state and the data computed so far are kept.
        """
        cfg, ps = self.cfg, self.ps
        nslab = int(round(T_max / cfg.T0))
        if nslab < 1 or not np.isclose(nslab * cfg.T0, T_max):
            raise LandauLabError("time-grid-invalid", f"T_max = {T_max} is not a multiple of T0 = {cfg.T0}")
        snaps_at = self.snapshot_times
        if snaps_at is None:
            snaps_at = [cfg.T0 * 2**j for j in range(64) if cfg.T0 * 2**j <= T_max + 1e-9]
        snaps_at = list(snaps_at) + [T_max]
        h = f0.sample(ps)
        rho0 = vavg(h, ps, 0.0)
        state = BootstrapState(0.0, eps1)
        size = _initial_gate(rho0, ps.grid, cfg.a)
        if size > cfg.local_gate:
            state.status, state.reason = "threshold-breach", f"local-data-too-large ({size:.3e} > {cfg.local_gate:g})"
            log.warning("bootstrap-breach: %s", state.reason)
            return None, state
        zero = np.zeros((2,) + ps.shape)
        Yc, Wc = zero, zero.copy()
        snapshots = {0.0: Snapshot(0.0, h.copy(), Yc, Wc)}
        parts = {k: [] for k in ("rho", "U", "g", "E")}
        slabs = []
        prev_end = None
        ledger_rho = ledger_U = None
        for k in range(nslab):
            Tk = k * cfg.T0
            try:
                problem = self._slab(h, Tk)
                res, updates = solve_slab(problem, cfg)
            except LandauLabError as err:
                state.status, state.reason = "threshold-breach", f"{err.code} at T = {Tk:g}"
                break
            seam = 0.0
            if prev_end is not None:
                seam = float(np.max(np.abs(prev_end - res.rho[0]))) / max(float(np.max(np.abs(res.rho[0]))), 1e-300)
            prev_end = res.rho[-1]
            start = 0 if k == 0 else 1
            fields = res.fields
            parts["rho"].append(res.rho[start:])
            parts["U"].append(fields.U[start:])
            parts["g"].append(fields.g[start:])
            parts["E"].append(fields.E[start:])
            slabs.append(SlabLog(Tk, len(updates), updates, seam, res.flow_bound, res.max_displacement,
                                 max(fields.picard_iterations)))
            Yc, Wc = compose_shifts(res.Y0_end, res.W0_end, Tk, Yc, Wc, ps)
            h = res.h_end
            t_end = Tk + cfg.T0
            if any(np.isclose(t_end, s) for s in snaps_at):
                snapshots[round(t_end, 12)] = Snapshot(t_end, h.copy(), Yc.copy(), Wc.copy())
            # ledger on the nodes so far
            st = SpaceTimeField(ps.grid, TimeGrid(cfg.T0, cfg.M, Tk), res.rho)
            su = SpaceTimeField(ps.grid, st.times, fields.U)
            sr = weighted_series(st, 1, cfg.a)
            sU = weighted_series(su, 1, cfg.a)
            ledger_rho = _extend_series(ledger_rho, sr, start)
            ledger_U = _extend_series(ledger_U, sU, start)
            state.T = t_end
            total = running_ledger(None, series=ledger_rho)[-1] + running_ledger(None, series=ledger_U)[-1]
            if total > eps1:
                state.status, state.reason = "threshold-breach", f"ledger {total:.3e} > eps1 at T = {t_end:g}"
                log.warning("bootstrap-breach: %s", state.reason)
                break
        if not slabs:
            return None, state
        if state.status == "continuing":
            state.status = "converged"
        n_nodes = sum(p.shape[0] for p in parts["rho"])
        times = TimeGrid((n_nodes - 1) * cfg.dt, n_nodes - 1)
        traj = DensityTrajectory(ps, times, *(np.concatenate(parts[n]) for n in ("rho", "U", "g", "E")),
                                 cfg.a, ledger_rho, ledger_U, slabs, snapshots,
                                 Snapshot(state.T, h, Yc, Wc))
        return traj, state


def _extend_series(acc, new, start):
    if acc is None:
        return {k: v[start:].copy() for k, v in new.items()}
    return {k: np.concatenate([acc[k], new[k][start:]]) for k in acc}


# -- operators on stored trajectories ------------------------------------------------------

def shear_to_physical(h, ps, t):
    """f(t, x, v) = h(x - t v, v) by spectral shifts in x."""
    k1, k2 = ps.grid.kmesh
    v1, v2 = ps.vmesh
    fh = sfft.fft2(h, axes=(-2, -1)) * np.exp(-1j * t * (v1 * k1 + v2 * k2))
    return sfft.ifft2(fh, axes=(-2, -1)).real


def physical_to_shear(f, ps, t):
    return shear_to_physical(f, ps, -t)


def _check_velocity_tail(q, tol=1e-10):
    ring = np.concatenate([np.abs(q[[0, -1]]).ravel(), np.abs(q[:, [0, -1]]).ravel()])
    peak = float(np.max(np.abs(q)))
    if peak > 0 and float(ring.max()) > tol * peak:
        raise LandauLabError("velocity-truncation-breach",
                             f"integrand at |v| = v_max is {ring.max() / peak:.1e} of its peak")


def snapshot_at(traj, t):
    for key, snap in traj.snapshots.items():
        if np.isclose(key, t):
            return snap
    if traj.final is not None and np.isclose(traj.final.t, t):
        return traj.final
    raise LandauLabError("flow-unavailable", f"no stored flow maps at t = {t:g}",
                         available=sorted(traj.snapshots))


def transported_initial(f0, traj, t, ps=None):
    """I(t, x) = int f0(X_{0,t}, V_{0,t}) dv from the stored cumulative shifts.

    ``traj=None`` means zero field (free transport); then ``ps`` is required.
    """
    if traj is None:
        Y = W = 0.0
    else:
        ps = traj.ps
        snap = snapshot_at(traj, t)
        Y, W = snap.Y, snap.W
    z1, z2 = ps.zmesh()
    v1, v2 = ps.vmesh
    if f0.kind == "grid":
        q = f0.sample(ps)
        if traj is not None:
            q = displace(q, PhaseDerivatives(q, ps), ps, Y, W)[0]
    else:
        q = f0(z1 + (Y[0] if traj is not None else 0.0), z2 + (Y[1] if traj is not None else 0.0),
               v1 + (W[0] if traj is not None else 0.0), v2 + (W[1] if traj is not None else 0.0))
    q = np.broadcast_to(q, ps.shape)
    _check_velocity_tail(q)
    return ScalarField2D(ps.grid, vavg(np.ascontiguousarray(q), ps, t))


def eta_weight(eta, V=8.0, n=161):
    """sup_v sum_{j<=3} <v>^3 |grad^j eta(v)| by finite differences on [-V, V]^2."""
    v = np.linspace(-V, V, n)
    dv = v[1] - v[0]
    a, b = np.meshgrid(v, v, indexing="ij")
    vals = eta(np.stack([a, b], axis=-1))
    total = np.abs(vals)
    tensors = [vals]
    for _ in range(3):
        nxt = []
        for T in tensors:
            g = np.gradient(T, dv, axis=(-2, -1))
            nxt.extend(g)
        tensors = nxt
        total = total + np.sqrt(sum(T**2 for T in tensors))
    w = (1 + a**2 + b**2) ** 1.5
    return float(np.max(w * total))


def normalize_eta(eta, V=8.0):
    """(eta / c, c) with c the weight bound, so the normalized weight passes the gate."""
    c = eta_weight(eta, V)
    if c == 0:
        return eta, 0.0
    return (lambda v: eta(v) / c), c


def t_operator(F, eta, flows, V=None):
    """T[F, eta] = T_L - T_NL on one slab.

    T_L(t) = int_{T_k}^t int F(s, x - (t - s) v) eta(v) dv ds and T_NL uses
    X_{s,t}, V_{s,t} in place of the free characteristics.  ``F`` holds
    samples on the slab nodes (shape (M+1, N, N)); ``flows`` is a SlabFlows.
    Returns an (M+1, N, N) array (zero at the first node).
    """
    return _t_sum([(1.0, F, eta)], flows, V)


def _t_sum(terms, flows, V=None):
    """sum c T[F, eta] over (c, F, eta) terms, sharing one flow solve per node."""
    ps, times = flows.ps, flows.times
    v1, v2 = ps.vmesh
    shifter = ShearShifter(ps)
    k1 = ps.grid.k1d[:, None]
    k2 = ps.grid.k1d[None, : ps.grid.N // 2 + 1].copy()
    k2[0, -1] = abs(k2[0, -1])
    keep = np.ones(ps.grid.N)
    keep[ps.grid.N // 2] = 0.0
    mask = keep[:, None] * keep[None, : ps.grid.N // 2 + 1]
    prepared = []
    for c, F, eta in terms:
        F = np.asarray(F.values if hasattr(F, "values") else F, dtype=float)
        if eta_weight(eta, V or ps.V) > 1.0 + 1e-9:
            raise LandauLabError("eta-weight-violation", "sum_j <v>^3 |grad^j eta| exceeds 1; normalize first")
        samples = []
        for m in range(times.M + 1):
            fh = _rhat(F[m])
            samples.append(shifter(np.stack([fh, 1j * k1 * fh * mask, 1j * k2 * fh * mask]), times.t[m]))
        prepared.append((c, eta, eta(ps.velocities)[:, :, None, None], samples))
    out = np.zeros((times.M + 1, ps.grid.N, ps.grid.N))
    for n in range(1, times.M + 1):
        Y, W, _ = flows.solve(n)
        w = trapezoid_weights(n, times.dt)
        acc = np.zeros(ps.shape)
        for m in range(n + 1):
            vel = np.stack(np.broadcast_arrays(v1 + W[m, 0], v2 + W[m, 1]), axis=-1)
            for c, eta, eta0, samples in prepared:
                S = samples[m]
                moved = (S[0] + S[1] * Y[m, 0] + S[2] * Y[m, 1]) * eta(vel)
                acc += (c * w[m]) * (S[0] * eta0 - moved)
        out[n] = vavg(acc, ps, times.t[n])
    return out


def reaction(E, profile, flows):
    """R = sum_i c_i T[E_i, eta_i] with eta_i = d_{v_i} mu / c_i normalized to the weight gate.

    ``E`` has shape (M+1, 2, N, N) on the slab nodes.  Returns (R, (c_1, c_2)).
    """
    E = np.asarray(E)
    V = flows.ps.V
    terms, consts = [], []
    for i in range(2):
        eta, c = normalize_eta(lambda v, i=i: eq.grad_mu(profile, v)[..., i], V)
        consts.append(c)
        if c:
            terms.append((c, E[:, i], eta))
    if not terms:
        return np.zeros((E.shape[0],) + E.shape[2:]), tuple(consts)
    return _t_sum(terms, flows, V), tuple(consts)


def advance_slab(h, Tk, rho_slab, solver):
    """Shear-frame data at T_k + T0 from data at T_k and the slab density (no fixed-point iteration)."""
    problem = solver._slab(h, Tk)
    fields = field_solve(rho_slab, solver.ps.grid, solver.A, solver.cfg.gate, solver.cfg.field_tol)
    return problem.transport(fields).h_end


def reconstruct_f(traj, solver, t):
    """Physical-frame f(t, x, v) from the stored density, restarting at the latest snapshot <= t.

    ``t`` must be a slab boundary.
    """
    T0 = solver.cfg.T0
    k_end = int(round(t / T0))
    if not np.isclose(k_end * T0, t) or t > traj.times.T + 1e-9:
        raise LandauLabError("time-invalid", f"t = {t:g} is not a slab boundary inside the trajectory")
    starts = [s for s in traj.snapshots if s <= t + 1e-9]
    t_start = max(starts)
    h = traj.snapshots[t_start].h
    M = solver.cfg.M
    for k in range(int(round(t_start / T0)), k_end):
        h = advance_slab(h, k * T0, traj.rho[k * M:(k + 1) * M + 1], solver)
    return shear_to_physical(h, traj.ps, t)


@dataclass
class ScatteringProfile:
    f_inf: np.ndarray  # shear-frame layout (Nv, Nv, N, N)
    Y_inf: np.ndarray
    W_inf: np.ndarray
    times: np.ndarray
    distance: np.ndarray  # ||h(t) - f_inf||_inf at the snapshot times
    limit_change: float

    @property
    def weighted_distance(self):
        return japanese(self.times) * self.distance

    @property
    def shift_size(self):
        return float(np.max(np.abs(self.Y_inf)) + np.max(np.abs(self.W_inf)))


def scattering_profile(traj, f0, profile, tol=1e-6):
    """f_inf(x, v) = f0(x + Y_inf, v + W_inf) + mu(v + W_inf) - mu(v) from the last snapshots."""
    times = sorted(t for t in traj.snapshots if t > 0)
    if len(times) < 2:
        raise LandauLabError("scattering-not-converged", "need at least two snapshot times")
    last, prev = traj.snapshots[times[-1]], traj.snapshots[times[-2]]
    change = max(float(np.max(np.abs(last.Y - prev.Y))), float(np.max(np.abs(last.W - prev.W))))
    if change >= tol:
        raise LandauLabError("scattering-not-converged",
                             f"Y, W changed by {change:.2e} between t = {times[-2]:g} and {times[-1]:g}")
    ps = traj.ps
    z1, z2 = ps.zmesh()
    v1, v2 = ps.vmesh
    Y, W = last.Y, last.W
    if f0.kind == "grid":
        base = f0.sample(ps)
        base = displace(base, PhaseDerivatives(base, ps), ps, Y, W)[0]
    else:
        base = f0(z1 + Y[0], z2 + Y[1], v1 + W[0], v2 + W[1])
    mu0 = mu_at(profile, *np.broadcast_arrays(v1, v2))
    f_inf = base + mu_at(profile, v1 + W[0], v2 + W[1]) - mu0
    dist = np.array([float(np.max(np.abs(traj.snapshots[t].h - f_inf))) for t in times])
    return ScatteringProfile(f_inf, Y, W, np.array(times), dist, change)
