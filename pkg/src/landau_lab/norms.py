"""Weighted space-time norms and Hölder/Besov seminorms.

Seminorms replace the supremum over all shifts alpha by a finite
:class:`ShiftSet`: a dyadic ladder of magnitudes times a few directions.
Off-grid shifts use trigonometric interpolation, grid-aligned shifts are
exact rolls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import LandauLabError

AXES_AND_DIAGONALS = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]]) / np.array(
    [[1.0], [1.0], [np.sqrt(2)], [np.sqrt(2)]]
)


@dataclass(frozen=True)
class ShiftSet:
    h0: float
    J: int = 10
    directions: tuple = tuple(map(tuple, AXES_AND_DIAGONALS))

    def __post_init__(self):
        if self.h0 <= 0 or self.J < 0 or len(self.directions) == 0:
            raise LandauLabError("shift-set-invalid", "need h0 > 0, J >= 0 and at least one direction")

    @property
    def magnitudes(self):
        return self.h0 * 2.0 ** -np.arange(self.J + 1)

    @property
    def vectors(self):
        d = np.asarray(self.directions, dtype=float)
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
        return (self.magnitudes[:, None, None] * d[None]).reshape(-1, 2)

    def check_domain(self, half_width):
        if self.h0 > half_width + 1e-12:
            raise LandauLabError("shift-set-invalid", f"h0 = {self.h0} exceeds half-width {half_width}")

    def refined(self, extra=1):
        """Same ladder extended by ``extra`` finer octaves."""
        return ShiftSet(self.h0, self.J + extra, self.directions)


def default_shifts(L):
    return ShiftSet(L / 4.0)


@dataclass
class NormReport:
    components: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.components.items():
            if not v >= 0:
                raise LandauLabError("norm-invalid", f"component {k} = {v}")

    @property
    def total(self):
        return float(sum(self.components.values()))

    def __getitem__(self, key):
        return self.components[key]

    def lines(self):
        w = max(len(k) for k in self.components) if self.components else 5
        out = [f"{k:<{w}}  {v:.6e}" for k, v in self.components.items()]
        out.append(f"{'total':<{w}}  {self.total:.6e}")
        return out


# -- shifting ----------------------------------------------------------------

def _kmesh(N, L):
    k = np.pi / L * sfft.fftfreq(N, 1.0 / N)
    return k[:, None], k[None, :]


def shift_many(values, L, alphas):
    """g(x - alpha) for every alpha; ``values`` has the two spatial axes last.

    Returns an array of shape (len(alphas),) + values.shape.
    """
    values = np.asarray(values, dtype=float)
    N = values.shape[-1]
    dx = 2.0 * L / N
    alphas = np.atleast_2d(alphas)
    out = np.empty((len(alphas),) + values.shape)
    ghat = None
    k1, k2 = _kmesh(N, L)
    for i, a in enumerate(alphas):
        steps = a / dx
        if np.allclose(steps, np.round(steps), atol=1e-12):
            out[i] = np.roll(values, tuple(np.round(steps).astype(int)), axis=(-2, -1))
            continue
        if ghat is None:
            ghat = sfft.fft2(values, axes=(-2, -1))
        out[i] = sfft.ifft2(ghat * np.exp(-1j * (k1 * a[0] + k2 * a[1])), axes=(-2, -1)).real
    return out


def _pointwise_abs(values, comp_axes):
    if comp_axes == 0:
        return np.abs(values)
    return np.sqrt(np.sum(values**2, axis=tuple(range(comp_axes))))


def lp_norm(values, dx, p, comp_axes=0):
    """L^p norm over the two trailing axes of a (possibly vector) field."""
    a = _pointwise_abs(values, comp_axes)
    if p == np.inf:
        return float(np.max(a))
    return float(np.sum(a**p) * dx**2) ** (1.0 / p)


def besov_values(values, L, a, p, shifts, comp_axes=0):
    """max_alpha ||g - g(. - alpha)||_{L^p} / |alpha|^a for a sampled field."""
    if not 0 < a < 1:
        raise LandauLabError("index-invalid", f"a = {a} must lie in (0, 1)")
    shifts.check_domain(L)
    N = np.shape(values)[-1]
    dx = 2.0 * L / N
    alphas = shifts.vectors
    shifted = shift_many(values, L, alphas)
    best = 0.0
    for al, sh in zip(alphas, shifted):
        q = lp_norm(values - sh, dx, p, comp_axes) / np.linalg.norm(al) ** a
        best = max(best, q)
    return best


def besov_seminorm(g, a, p, shifts=None):
    """Discrete Ḃ^a_{p,inf} seminorm of a ScalarField2D."""
    shifts = shifts or default_shifts(g.grid.L)
    return besov_values(g.values, g.grid.L, a, p, shifts)


def holder_sup_field(values, L, a, shifts):
    """Pointwise x -> sup_alpha |g(x) - g(x - alpha)| / |alpha|^a (the pointwise Ḟ variant)."""
    alphas = shifts.vectors
    shifted = shift_many(values, L, alphas)
    mags = np.linalg.norm(alphas, axis=1).reshape((-1,) + (1,) * np.ndim(values))
    return np.max(np.abs(values[None] - shifted) / mags**a, axis=0)


def fdot_seminorm(g, a, p, shifts=None):
    """||sup_alpha |delta_alpha g| / |alpha|^a||_{L^p}."""
    shifts = shifts or default_shifts(g.grid.L)
    return lp_norm(holder_sup_field(g.values, g.grid.L, a, shifts), g.grid.dx, p)


def spectral_gradient(values, L):
    """Gradient over the two trailing axes; output has a new leading axis of size 2."""
    N = values.shape[-1]
    k1, k2 = _kmesh(N, L)
    keep = np.ones(N)
    keep[N // 2] = 0.0
    m = keep[:, None] * keep[None, :]
    h = sfft.fft2(values, axes=(-2, -1))
    return np.stack([sfft.ifft2(1j * k1 * h * m, axes=(-2, -1)).real, sfft.ifft2(1j * k2 * h * m, axes=(-2, -1)).real])


# -- trajectory norm ---------------------------------------------------------

def japanese(t):
    return np.sqrt(1.0 + np.asarray(t, dtype=float) ** 2)


def weighted_series(g, m=1, gamma=0.5, shifts=None):
    """Per-node weighted terms of ||g||_{m+gamma,T}: dict name -> array over time nodes.

    ``L{p}[j]`` = <s>^{2(p-1)/p} ||g(s)||_{L^p} and
    ``B{p}[j]`` = <s>^{j+gamma+2(p-1)/p} ||grad^j g(s)||_{Ḃ^gamma_{p,inf}}.
    The undifferentiated L^p term is repeated for each j, as in the norm's definition.
    """
    grid = g.grid
    shifts = shifts or default_shifts(grid.L)
    t = g.times.t
    out = {}
    for j in range(m + 1):
        for ps in ("1", "inf"):
            out[f"L{ps}[{j}]"] = np.zeros(len(t))
            out[f"B{ps}[{j}]"] = np.zeros(len(t))
    vals = np.real(g.values)
    w = japanese(t)
    derivs = [vals]
    for j in range(1, m + 1):
        derivs.append(np.moveaxis(spectral_gradient(derivs[-1], grid.L), 0, 1))
    alphas = shifts.vectors
    mags = np.linalg.norm(alphas, axis=1)
    shifts.check_domain(grid.L)
    if not 0 < gamma < 1:
        raise LandauLabError("index-invalid", f"a = {gamma} must lie in (0, 1)")
    for p, ps in ((1, "1"), (np.inf, "inf")):
        e = 0.0 if p == 1 else 2.0
        lv = w**e * _node_lp(np.abs(vals), grid.dx, p)
        for j in range(m + 1):
            out[f"L{ps}[{j}]"][:] = lv
            best = np.zeros(len(t))
            shifted = shift_many(derivs[j], grid.L, alphas)
            for al, sh, mag in zip(alphas, shifted, mags):
                d = derivs[j] - sh
                pw = np.sqrt(np.sum(d**2, axis=tuple(range(1, j + 1)))) if j else np.abs(d)
                best = np.maximum(best, _node_lp(pw, grid.dx, p) / mag**gamma)
            out[f"B{ps}[{j}]"][:] = w ** (j + gamma + e) * best
    return out


def _node_lp(a, dx, p):
    """L^p norm over the two trailing axes for every leading index."""
    if p == np.inf:
        return a.max(axis=(-2, -1))
    return (np.sum(a**p, axis=(-2, -1)) * dx**2) ** (1.0 / p)


def trajectory_norm(g, m=1, gamma=0.5, shifts=None, T=None, series=None):
    """||g||_{m+gamma,T} itemized (sup over time nodes t <= T of each weighted term)."""
    shifts = shifts or default_shifts(g.grid.L)
    t = g.times.t
    n = len(t) if T is None else int(np.count_nonzero(t <= T + 1e-12))
    series = series or weighted_series(g, m, gamma, shifts)
    comps = {k: float(v[:n].max()) if n else 0.0 for k, v in series.items()}
    return NormReport(comps, {"m": m, "gamma": gamma, "T": float(t[n - 1]) if n else 0.0,
                              "h0": shifts.h0, "J": shifts.J})


def running_ledger(g, m=1, gamma=0.5, shifts=None, series=None):
    """||g||_{m+gamma,t_n} for every node; non-decreasing by construction."""
    series = series or weighted_series(g, m, gamma, shifts)
    return sum(np.maximum.accumulate(v) for v in series.values())


# -- phase-space triple norm -------------------------------------------------

@dataclass(frozen=True)
class PhaseGrid:
    """Periodic phase-space box [-L, L)^2 x [-V, V)^2; sample arrays are (Nx, Nx, Nv, Nv)."""

    L: float
    Nx: int
    V: float
    Nv: int

    @property
    def dx(self):
        return 2.0 * self.L / self.Nx

    @property
    def dv(self):
        return 2.0 * self.V / self.Nv

    @property
    def x(self):
        return -self.L + self.dx * np.arange(self.Nx)

    @property
    def v(self):
        return -self.V + self.dv * np.arange(self.Nv)

    def mesh(self):
        return np.meshgrid(self.x, self.x, self.v, self.v, indexing="ij")


def _to_v_last(a):
    return np.moveaxis(a, (-4, -3), (-2, -1))


def _from_v_last(a):
    return np.moveaxis(a, (-2, -1), (-4, -3))


def _shift_axes(h, L, alpha, x_axes):
    if x_axes:
        return _from_v_last(shift_many(_to_v_last(h), L, [alpha])[0])
    return shift_many(h, L, [alpha])[0]


def phase_gradient(h, pg):
    """(grad_x h, grad_v h) stacked: shape (4,) + h.shape."""
    gx = _from_v_last(spectral_gradient(_to_v_last(h), pg.L))
    gv = spectral_gradient(h, pg.V)
    return np.concatenate([gx, gv])


def _holder_sup(h, L, a, shifts, comp_axes):
    """Pointwise sup over the shift set of |delta_alpha h| / |alpha|^a (shifts on the last two axes)."""
    N = h.shape[-1]
    dx = 2.0 * L / N
    k1, k2 = _kmesh(N, L)
    k2 = k2[:, : N // 2 + 1]
    hat = None
    best = None
    for al in shifts.vectors:
        steps = al / dx
        if np.allclose(steps, np.round(steps), atol=1e-12):
            sh = np.roll(h, tuple(np.round(steps).astype(int)), axis=(-2, -1))
        else:
            if hat is None:
                hat = sfft.rfft2(h, axes=(-2, -1))
            sh = sfft.irfft2(hat * np.exp(-1j * (k1 * al[0] + k2 * al[1])), s=(N, N), axes=(-2, -1))
        sh -= h
        q = _pointwise_abs(sh, comp_axes)
        q *= np.linalg.norm(al) ** -a
        best = q if best is None else np.maximum(best, q, out=best)
    return best


def d_operator(h, pg, a, shifts_x, shifts_v, comp_axes=0):
    """Pointwise D^a h = |h| + Ḋ^a_1 h + Ḋ^a_2 h on the phase grid."""
    d1 = _from_v_last(_holder_sup(np.ascontiguousarray(_to_v_last(h)), pg.L, a, shifts_x, comp_axes))
    d2 = _holder_sup(h, pg.V, a, shifts_v, comp_axes)
    return _pointwise_abs(h, comp_axes) + d1 + d2


def mixed_norm(F, pg, p):
    """||F||_{L^1_x L^p_v cap L^1_v L^p_x} as the max of the two orderings.

    L^1_x L^p_v means int ||F(x, .)||_{L^p_v} dx (outer variable carries L^1).
    """
    if p == np.inf:
        inner_v = F.max(axis=(2, 3))
        inner_x = F.max(axis=(0, 1))
    else:
        inner_v = (np.sum(F**p, axis=(2, 3)) * pg.dv**2) ** (1 / p)
        inner_x = (np.sum(F**p, axis=(0, 1)) * pg.dx**2) ** (1 / p)
    return max(float(inner_v.sum() * pg.dx**2), float(inner_x.sum() * pg.dv**2))


def triple_norm_values(h, pg, a=0.5, shifts_x=None, shifts_v=None):
    """|||h|||_{1+a} itemized for phase-space samples ``h``."""
    shifts_x = shifts_x or ShiftSet(pg.L / 4)
    shifts_v = shifts_v or ShiftSet(pg.V / 4)
    shifts_x.check_domain(pg.L)
    shifts_v.check_domain(pg.V)
    comps = {}
    D0 = d_operator(h, pg, a, shifts_x, shifts_v)
    D1 = d_operator(phase_gradient(h, pg), pg, a, shifts_x, shifts_v, comp_axes=1)
    for p in (1, np.inf):
        ps = "1" if p == 1 else "inf"
        comps[f"D[h] p={ps}"] = mixed_norm(D0, pg, p)
        comps[f"D[grad h] p={ps}"] = mixed_norm(D1, pg, p)
    rep = NormReport(comps, {"a": a, "hx0": shifts_x.h0, "hv0": shifts_v.h0})
    if not np.isfinite(rep.total):
        raise LandauLabError("norm-truncation-breach", "triple norm is not finite")
    return rep


def triple_norm_initial(h, pg, a=0.5, shifts_x=None, shifts_v=None, tail_tol=1e-6):
    """|||f0|||_{1+a} from samples (Nx, Nx, Nv, Nv), refusing data that do not decay inside the box."""
    edge = max(np.abs(h[[0, -1]]).max(), np.abs(h[:, [0, -1]]).max(),
               np.abs(h[:, :, [0, -1]]).max(), np.abs(h[:, :, :, [0, -1]]).max())
    peak = np.abs(h).max()
    if peak > 0 and edge > tail_tol * peak:
        raise LandauLabError("norm-truncation-breach", f"boundary values {edge:.2e} vs peak {peak:.2e}")
    return triple_norm_values(h, pg, a, shifts_x, shifts_v)


# -- velocity-averaging harness ----------------------------------------------

def _average_values(H, phi, s, t, w_half, n_w, n_x, x_scale, grad_phi):
    if s > t / 2 + 1e-12:
        raise LandauLabError("time-window", f"need s <= t/2 (s={s}, t={t})")
    if grad_phi is not None and grad_phi > 0.5:
        raise LandauLabError("lipschitz-gate", f"||grad phi|| = {grad_phi:.3g} > 1/2")
    d = t - s
    w1 = np.linspace(-w_half, w_half, n_w + 1)[:-1] + w_half / n_w
    dw = w1[1] - w1[0]
    W = np.stack(np.meshgrid(w1, w1, indexing="ij"), axis=-1).reshape(-1, 2)
    h_l1 = float(np.sum(np.abs(H(W))) * dw**2)
    R = x_scale * max(d, 1.0) + w_half
    x1 = np.linspace(-R, R, n_x + 1)[:-1] + R / n_x
    dx = x1[1] - x1[0]
    if h_l1 == 0.0:
        return np.zeros(n_x * n_x), 0.0, dx
    X = np.stack(np.meshgrid(x1, x1, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = np.empty(len(X))
    for i in range(0, len(X), 512):
        xb = X[i:i + 512, None, :]
        v = (xb - W[None]) / d
        arg = phi(np.broadcast_to(xb, v.shape), v) + W[None]
        br = 1 + v[..., 0] ** 2 + v[..., 1] ** 2
        vals[i:i + 512] = np.sum(H(arg) / (br * np.sqrt(br)), axis=1) * dw**2 / d**2
    return vals, h_l1, dx


def dispersive_average_ratios(H, phi, s, t, ps=(1, np.inf), w_half=6.0, n_w=32, n_x=64, x_scale=6.0,
                              grad_phi=None):
    """Ratio ||int H(phi + x - (t-s) v) <v>^-3 dv||_{L^p} / (t^{-2(p-1)/p} ||H||_{L^1}) for each p.

    ``H(points)`` is a callable on (..., 2) arrays, essentially supported in
    [-w_half, w_half]^2; ``phi(x, v)`` returns (..., 2).  With the change of
    variables w = x - (t-s) v the v-integral becomes a w-integral over H's
    support, dv = dw / (t-s)^2.  One quadrature serves every p.
    """
    vals, h_l1, dx = _average_values(H, phi, s, t, w_half, n_w, n_x, x_scale, grad_phi)
    out = {}
    for p in ps:
        if h_l1 == 0.0:
            out[p] = 0.0
        elif p == np.inf:
            out[p] = float(np.max(np.abs(vals)) / (t ** -2.0 * h_l1))
        else:
            lhs = np.sum(np.abs(vals) ** p) ** (1 / p) * dx ** (2 / p)
            out[p] = float(lhs / (t ** (-2.0 * (p - 1) / p) * h_l1))
    return out


def dispersive_average_check(H, phi, s, t, p, **kw):
    """Single-p form of :func:`dispersive_average_ratios`."""
    return dispersive_average_ratios(H, phi, s, t, (p,), **kw)[p]
