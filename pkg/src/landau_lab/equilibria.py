"""Homogeneous equilibria mu(v) on R^2, their Fourier data and the Penrose margin.

Fourier convention used throughout the package (velocity and space alike)::

    h_hat(eta) = int h(v) exp(-i v . eta) dv

With it, (grad_v mu)^(eta) = i eta mu_hat(eta), and for radial mu the
transform mu_hat depends on |eta| only (a Hankel transform of order 0).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, special

from .errors import LandauLabError, PenroseViolation, ZeroWavenumberWarning

TWO_PI = 2.0 * np.pi

# envelope level below which the time integrand of K~ is dropped
ENVELOPE_CUT = 1e-12
# phase (omega * s_cut) above which the Filon rule replaces adaptive quadrature
FILON_PHASE = 50.0


@dataclass
class EquilibriumProfile:
    """Background distribution mu.

    ``kind`` is one of ``"maxwellian"``, ``"tabulated"`` (radial, given by
    knots ``table_r``/``table_m``) or ``"two-bump"`` (non-radial,
    0.5 [M(v - u0) + M(v + u0)] with thermal width ``sigma``).
    """

    kind: str = "maxwellian"
    sigma: float = 1.0
    u0: tuple = (0.0, 0.0)
    table_r: np.ndarray | None = None
    table_m: np.ndarray | None = None
    tail: str | None = "exponential"
    v_max: float = 8.0
    decay_order: int = 7
    quad_nodes: int = 768
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("maxwellian", "tabulated", "two-bump"):
            raise LandauLabError("profile-kind", f"unknown kind {self.kind!r}")
        if self.decay_order < 7:
            raise LandauLabError("profile-decay", "decay_order must be >= 7")
        if self.sigma <= 0 or self.v_max <= 0:
            raise LandauLabError("profile-invalid", "sigma and v_max must be positive")
        self.u0 = tuple(float(c) for c in self.u0)
        if self.kind == "tabulated":
            r = np.asarray(self.table_r, dtype=float)
            m = np.asarray(self.table_m, dtype=float)
            if r.ndim != 1 or r.shape != m.shape or r.size < 4:
                raise LandauLabError("profile-invalid", "table needs >= 4 matching knots")
            if np.any(np.diff(r) <= 0) or r[0] != 0.0:
                raise LandauLabError("profile-invalid", "knots must start at 0 and increase")
            if np.any(m < 0):
                raise LandauLabError("profile-invalid", "tabulated density must be >= 0")
            self.table_r, self.table_m = r, m
            self._cache["spline"] = interpolate.CubicSpline(r, m, bc_type=((1, 0.0), "not-a-knot"))
            if self.tail == "exponential":
                k = min(6, r.size)
                mm = np.maximum(m[-k:], 1e-300)
                slope = np.polyfit(r[-k:], np.log(mm), 1)[0]
                self._cache["tail_rate"] = max(-slope, 1e-3)

    @property
    def radial(self):
        return self.kind != "two-bump"

    # -- pointwise values -------------------------------------------------
    def radial_density(self, r):
        """m(r) for radial profiles."""
        r = np.asarray(r, dtype=float)
        if self.kind == "maxwellian":
            s2 = self.sigma**2
            return np.exp(-0.5 * r**2 / s2) / (TWO_PI * s2)
        if self.kind != "tabulated":
            raise LandauLabError("profile-kind", "radial_density needs a radial profile")
        r_last = self.table_r[-1]
        inside = r <= r_last
        if np.any(~inside) and self.tail is None:
            raise LandauLabError("profile-out-of-range", f"|v| > last knot {r_last}")
        out = np.empty_like(r)
        out[inside] = self._cache["spline"](r[inside])
        if np.any(~inside):
            rate = self._cache["tail_rate"]
            out[~inside] = self.table_m[-1] * np.exp(-rate * (r[~inside] - r_last))
        return np.maximum(out, 0.0)

    def mu_hat(self, eta):
        """Fourier transform mu_hat(eta) for eta of shape (..., 2)."""
        eta = np.asarray(eta, dtype=float)
        k2 = np.sum(eta**2, axis=-1)
        if self.kind == "maxwellian":
            return np.exp(-0.5 * self.sigma**2 * k2)
        if self.kind == "two-bump":
            phase = eta[..., 0] * self.u0[0] + eta[..., 1] * self.u0[1]
            return np.exp(-0.5 * self.sigma**2 * k2) * np.cos(phase)
        return self.radial_hat(np.sqrt(k2))

    def radial_hat(self, k):
        """mu_hat as a function of |eta| (radial profiles only)."""
        k = np.asarray(k, dtype=float)
        if self.kind == "maxwellian":
            return np.exp(-0.5 * self.sigma**2 * k**2)
        if self.kind == "two-bump":
            raise LandauLabError("profile-kind", "two-bump profile is not radial")
        return _hankel0(self, k)


def maxwellian(sigma=1.0, v_max=8.0):
    return EquilibriumProfile("maxwellian", sigma=sigma, v_max=v_max)


def two_bump(u0, sigma=1.0, v_max=None):
    u = float(np.hypot(*u0))
    vm = v_max if v_max is not None else u + 8.0 * sigma
    return EquilibriumProfile("two-bump", sigma=sigma, u0=tuple(u0), v_max=vm)


def tabulated(r, m, v_max=8.0, tail="exponential", normalize=False):
    r = np.asarray(r, dtype=float)
    m = np.asarray(m, dtype=float)
    if normalize:
        prof = EquilibriumProfile("tabulated", table_r=r, table_m=m, v_max=v_max, tail=tail)
        m = m / total_mass(prof)
    return EquilibriumProfile("tabulated", table_r=r, table_m=m, v_max=v_max, tail=tail)


def load_table(path, v_max=8.0, tail="exponential"):
    """Two-column ``radius value`` text file -> tabulated profile."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    return tabulated(data[:, 0], data[:, 1], v_max=v_max, tail=tail)


def eval_mu(profile, v):
    """mu(v) for velocities of shape (..., 2)."""
    v = np.asarray(v, dtype=float)
    if profile.kind == "two-bump":
        s2 = profile.sigma**2
        u = np.asarray(profile.u0)
        a = np.sum((v - u) ** 2, axis=-1)
        b = np.sum((v + u) ** 2, axis=-1)
        return 0.5 * (np.exp(-0.5 * a / s2) + np.exp(-0.5 * b / s2)) / (TWO_PI * s2)
    return profile.radial_density(np.sqrt(np.sum(v**2, axis=-1)))


def grad_mu(profile, v):
    """grad_v mu(v), shape (..., 2)."""
    v = np.asarray(v, dtype=float)
    if profile.kind == "maxwellian":
        return -v / profile.sigma**2 * eval_mu(profile, v)[..., None]
    if profile.kind == "two-bump":
        s2 = profile.sigma**2
        u = np.asarray(profile.u0)
        ga = np.exp(-0.5 * np.sum((v - u) ** 2, axis=-1) / s2)[..., None] * (-(v - u) / s2)
        gb = np.exp(-0.5 * np.sum((v + u) ** 2, axis=-1) / s2)[..., None] * (-(v + u) / s2)
        return 0.5 * (ga + gb) / (TWO_PI * s2)
    r = np.sqrt(np.sum(v**2, axis=-1))
    inside = r <= profile.table_r[-1]
    dm = np.empty_like(r)
    dm[inside] = profile._cache["spline"](r[inside], 1)
    if np.any(~inside):
        dm[~inside] = -profile._cache["tail_rate"] * profile.radial_density(r[~inside])
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[..., None] > 0, v / r[..., None], 0.0)
    return dm[..., None] * unit


def total_mass(profile, n=4000):
    """int mu dv over |v| <= v_max (radial) or a square box (two-bump)."""
    if profile.radial:
        x, w = np.polynomial.legendre.leggauss(n)
        r = 0.5 * profile.v_max * (x + 1.0)
        return 0.5 * profile.v_max * np.sum(w * TWO_PI * r * profile.radial_density(r))
    vm = profile.v_max
    g = np.linspace(-vm, vm, 801)
    V = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    return integrate.simpson(integrate.simpson(eval_mu(profile, V), x=g), x=g)


def check_normalization(profile, tol=1e-8):
    mass = total_mass(profile)
    if abs(mass - 1.0) > tol:
        raise LandauLabError("profile-normalization", f"int mu dv = {mass:.12f}", mass=mass)
    return mass


def _hankel_nodes(profile, n):
    key = ("hankel", n)
    if key not in profile._cache:
        x, w = np.polynomial.legendre.leggauss(n)
        r = 0.5 * profile.v_max * (x + 1.0)
        wr = 0.5 * profile.v_max * w * TWO_PI * r * profile.radial_density(r)
        profile._cache[key] = (r, wr)
    return profile._cache[key]


def _hankel0(profile, k):
    """2 pi int_0^vmax m(r) J0(k r) r dr by Gauss-Legendre, checked against n/2 nodes."""
    shape = k.shape
    kk = k.ravel()
    r, wr = _hankel_nodes(profile, profile.quad_nodes)
    r2, wr2 = _hankel_nodes(profile, profile.quad_nodes // 2)
    out = np.empty_like(kk)
    coarse = np.empty_like(kk)
    for i0 in range(0, kk.size, 2048):
        sl = slice(i0, i0 + 2048)
        out[sl] = special.j0(np.outer(kk[sl], r)) @ wr
        coarse[sl] = special.j0(np.outer(kk[sl], r2)) @ wr2
    err = np.max(np.abs(out - coarse)) if kk.size else 0.0
    if err > 1e-8:
        raise LandauLabError("quadrature-failure", f"Hankel refinement gap {err:.2e}", gap=err)
    return out.reshape(shape)


def fourier_grad_mu(profile, eta):
    """(grad_v mu)^(eta) = i eta mu_hat(eta), complex array of shape (..., 2)."""
    eta = np.asarray(eta, dtype=float)
    return 1j * eta * profile.mu_hat(eta)[..., None]


# -- the dielectric kernel ---------------------------------------------------

def kernel_time(profile, t, xi):
    """K(t, xi) = (1+|xi|^2)^-1 i xi . (grad mu)^(t xi), real for real mu.

    ``t`` is an array of times, ``xi`` a single 2-vector.
    """
    xi = np.asarray(xi, dtype=float)
    t = np.asarray(t, dtype=float)
    k2 = float(xi @ xi)
    return -k2 * t * profile.mu_hat(t[..., None] * xi) / (1.0 + k2)


def _direction_profile(profile, direction):
    """s -> s mu_hat(s e) along a unit direction."""
    e = np.asarray(direction, dtype=float)
    return lambda s: np.asarray(s) * profile.mu_hat(np.asarray(s)[..., None] * e)


def _cutoff(h, s_max=200.0):
    s = np.linspace(0.0, s_max, 20001)
    big = np.nonzero(np.abs(h(s)) >= ENVELOPE_CUT)[0]
    if big.size == 0:
        return s[1]
    return float(min(s[min(big[-1] + 50, s.size - 1)], s_max))


def filon_exp(values, ds, omegas):
    """int_0^S h(s) exp(-i omega s) ds by the Filon-Simpson rule.

    ``values`` holds h on 2n+1 equispaced nodes with spacing ``ds``;
    ``omegas`` is a 1-d array of angular frequencies.
    """
    h = np.asarray(values)
    if h.size % 2 == 0:
        raise ValueError("Filon rule needs an odd number of nodes")
    s = ds * np.arange(h.size)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    theta = omegas * ds
    small = np.abs(theta) < 0.1
    th = np.where(small, 1.0, theta)
    sn, cs = np.sin(th), np.cos(th)
    alpha = (th**2 + th * sn * cs - 2 * sn**2) / th**3
    beta = 2 * (th * (1 + cs**2) - 2 * sn * cs) / th**3
    gamma = 4 * (sn - th * cs) / th**3
    t2 = theta**2
    alpha = np.where(small, 2 * theta**3 / 45 - 2 * theta**5 / 315 + 2 * theta**7 / 4725, alpha)
    beta = np.where(small, 2 / 3 + 2 * t2 / 15 - 4 * t2**2 / 105 + 2 * t2**3 / 567, beta)
    gamma = np.where(small, 4 / 3 - 2 * t2 / 15 + t2**2 / 210 - t2**3 / 11340, gamma)
    out = np.empty(omegas.size, dtype=complex)
    for i0 in range(0, omegas.size, 256):
        w = omegas[i0:i0 + 256, None]
        ph = w * s[None, :]
        c, sn_ = np.cos(ph), np.sin(ph)
        hc, hs = h * c, h * sn_
        c_even = hc[:, ::2].sum(axis=1) - 0.5 * (hc[:, 0] + hc[:, -1])
        s_even = hs[:, ::2].sum(axis=1) - 0.5 * (hs[:, 0] + hs[:, -1])
        c_odd = hc[:, 1::2].sum(axis=1)
        s_odd = hs[:, 1::2].sum(axis=1)
        a, b, g = alpha[i0:i0 + 256], beta[i0:i0 + 256], gamma[i0:i0 + 256]
        cos_int = ds * (a * (hs[:, -1] - hs[:, 0]) + b * c_even + g * c_odd)
        sin_int = ds * (-a * (hc[:, -1] - hc[:, 0]) + b * s_even + g * s_odd)
        out[i0:i0 + 256] = cos_int - 1j * sin_int
    return out


def _phi_single(h, omega, s_cut, panels=2048):
    """Phi(omega) = int_0^inf exp(-i omega s) h(s) ds, adaptive or Filon."""
    if abs(omega) * s_cut > FILON_PHASE:
        grid = np.linspace(0.0, s_cut, 2 * panels + 1)
        fine = filon_exp(h(grid), grid[1], [omega])[0]
        half = filon_exp(h(grid[::2]), grid[2], [omega])[0]
        if abs(fine - half) > 1e-8:
            raise LandauLabError("quadrature-failure", f"Filon refinement gap {abs(fine - half):.2e}")
        return fine
    opts = dict(limit=400, epsabs=1e-14, epsrel=1e-12)
    re = integrate.quad(lambda s: h(s) * np.cos(omega * s), 0.0, s_cut, **opts)[0]
    im = integrate.quad(lambda s: h(s) * np.sin(omega * s), 0.0, s_cut, **opts)[0]
    return re - 1j * im


def kernel_hat_K(profile, tau, xi):
    """K~(tau, xi) = int_0^inf exp(-i tau t) K(t, xi) dt.

    Substituting s = t|xi| gives K~ = -(1+|xi|^2)^-1 Phi(tau/|xi|) with
    Phi(omega) = int_0^inf exp(-i omega s) s mu_hat(s e) ds, e = xi/|xi|.
    """
    xi = np.asarray(xi, dtype=float)
    k = float(np.hypot(*xi))
    if k == 0.0:
        warnings.warn("zero-wavenumber: K~ vanishes identically at xi = 0", ZeroWavenumberWarning)
        return 0.0 + 0.0j
    h = _direction_profile(profile, xi / k)
    s_cut = _cutoff(h)
    return -_phi_single(h, tau / k, s_cut) / (1.0 + k * k)


def phi_batch(profile, omegas, direction=(1.0, 0.0), panels=2048):
    """Phi on many frequencies at once (Filon-Simpson on a shared grid)."""
    h = _direction_profile(profile, np.asarray(direction, float) / np.hypot(*direction))
    s_cut = _cutoff(h)
    grid = np.linspace(0.0, s_cut, 2 * panels + 1)
    return filon_exp(h(grid), grid[1], omegas)


# -- Penrose scan ------------------------------------------------------------

@dataclass
class PenroseScan:
    tau_range: tuple
    xi_magnitudes: np.ndarray
    margin: float
    argmin: tuple
    taus: np.ndarray = None
    table: np.ndarray = None  # rows (tau, |xi|, re K~, im K~, |1 - K~|)
    refinements: int = 0
    drift: float = float("nan")
    angle: float = 0.0

    @property
    def violation(self):
        return self.margin <= 1e-12


@dataclass
class ScanConfig:
    tau_max: float = 40.0
    xi_min: float = 1.0 / 64
    xi_max: float = 16.0
    n_tau: int = 81
    n_xi: int = 33
    refine_tol: float = 1e-3
    max_refinements: int = 4
    angles: int = 8
    single_point: tuple | None = None


def _scan_once(profile, taus, xis, angles):
    best = (np.inf, 0.0, 0.0, 0.0)
    rows = []
    pos = taus[taus >= 0]
    for ang in angles:
        e = (np.cos(ang), np.sin(ang))
        om = (pos[:, None] / xis[None, :]).ravel()
        phi = phi_batch(profile, om, e, panels=384).reshape(pos.size, xis.size)
        kt = -phi / (1.0 + xis[None, :] ** 2)
        # K~(-tau) = conj K~(tau) for real mu
        full = np.empty((taus.size, xis.size), dtype=complex)
        idx = {float(t): i for i, t in enumerate(pos)}
        for i, t in enumerate(taus):
            j = idx[float(abs(t))]
            full[i] = kt[j] if t >= 0 else np.conj(kt[j])
        gap = np.abs(1.0 - full)
        i, j = np.unravel_index(np.argmin(gap), gap.shape)
        if gap[i, j] < best[0]:
            best = (float(gap[i, j]), float(taus[i]), float(xis[j]), float(ang))
            T, X = np.meshgrid(taus, xis, indexing="ij")
            rows = np.column_stack([T.ravel(), X.ravel(), full.real.ravel(), full.imag.ravel(), gap.ravel()])
    return best, rows


def penrose_margin(profile, scan=None, check=True):
    """inf |1 - K~(tau, xi)| over a refined (tau, |xi|) scan.

    Radial profiles are scanned along one direction; non-radial ones over
    ``scan.angles`` directions in [0, pi) plus the direction of ``u0``.
    Raises :class:`PenroseViolation` when the margin is not positive and
    ``check`` is set.
    """
    scan = scan or ScanConfig()
    if profile.radial:
        angles = [0.0]
    else:
        angles = list(np.linspace(0.0, np.pi, scan.angles, endpoint=False))
        if any(profile.u0):
            angles.append(float(np.arctan2(profile.u0[1], profile.u0[0]) % np.pi))
    if scan.single_point is not None:
        tau, xm = scan.single_point
        kt = kernel_hat_K(profile, tau, (xm, 0.0))
        gap = abs(1.0 - kt)
        result = PenroseScan((tau, tau), np.array([xm]), gap, (tau, xm), np.array([tau]),
                             np.array([[tau, xm, kt.real, kt.imag, gap]]))
    else:
        n_tau, n_xi = scan.n_tau, scan.n_xi
        prev, drift, level = None, np.inf, 0
        for level in range(scan.max_refinements + 1):
            taus = np.linspace(-scan.tau_max, scan.tau_max, n_tau)
            xis = np.geomspace(scan.xi_min, scan.xi_max, n_xi)
            best, rows = _scan_once(profile, taus, xis, angles)
            if prev is not None:
                drift = abs(best[0] - prev)
                if drift < scan.refine_tol:
                    break
            prev = best[0]
            n_tau, n_xi = 2 * n_tau - 1, 2 * n_xi - 1
        result = PenroseScan((-scan.tau_max, scan.tau_max), xis, best[0], (best[1], best[2]),
                             taus, rows, refinements=level, drift=drift, angle=best[3])
    if check and result.violation:
        raise PenroseViolation(result)
    return result
