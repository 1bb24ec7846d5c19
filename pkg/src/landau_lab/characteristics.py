"""Perturbative characteristics Y, W, the straightening map Psi, and their
weighted diagnostics.

With the shear-frame convention

    X_{s,t}(x, v) = x - (t-s) v + Y_{s,t}(x - vt, v),   V_{s,t}(x, v) = v + W_{s,t}(x - vt, v),

the corrections solve

    Y_{s,t}(z, v) =  int_s^t (tau - s) E(tau, z + tau v + Y_{tau,t}(z, v)) dtau,
    W_{s,t}(z, v) = -int_s^t            E(tau, z + tau v + Y_{tau,t}(z, v)) dtau.

One Picard solve for a fixed ``t`` yields Y_{s,t}, W_{s,t} at every time node
s in [s0, t] at once; the Jacobians with respect to (z, v) ride along.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .errors import LandauLabError
from .norms import ShiftSet, japanese
from .spacetime import SpaceTimeField


class FieldSampler:
    """Evaluate E(tau, x) and its spatial gradient at arbitrary points.

    ``mode="trig"`` sums the trigonometric interpolant exactly (cost N^2 per
    point); ``mode="spline"`` uses periodic quintic splines of the stored
    samples and spectrally computed gradients.  Off-node times use cubic
    Hermite interpolation with finite-difference time derivatives.
    """

    def __init__(self, E: SpaceTimeField, mode="spline", order=5):
        if not E.is_vector:
            raise LandauLabError("field-invalid", "sampler needs a vector field")
        self.E, self.mode, self.order = E, mode, order
        self.grid, self.times = E.grid, E.times
        g = self.grid
        k1, k2 = g.kmesh
        m = g.odd_mask
        eh = E.hat  # (M+1, 2, N, N)
        # components: E1, E2, d1E1, d2E1, d1E2, d2E2
        self._hats = np.stack(
            [eh[:, 0], eh[:, 1], 1j * k1 * eh[:, 0] * m, 1j * k2 * eh[:, 0] * m,
             1j * k1 * eh[:, 1] * m, 1j * k2 * eh[:, 1] * m], axis=1)
        self._coef = {}
        self._dEdt = None

    # -- spatial evaluation at one node ---------------------------------------
    def _coefficients(self, n):
        c = self._coef.get(n)
        if c is None:
            vals = sfft.ifft2(self._hats[n], axes=(-2, -1)).real
            c = np.stack([ndimage.spline_filter(v, order=self.order, mode="grid-wrap") for v in vals])
            self._coef[n] = c
        return c

    def _index_coords(self, pts):
        g = self.grid
        return ((pts[..., 0] + g.L) / g.dx, (pts[..., 1] + g.L) / g.dx)

    def _node_eval(self, n, pts, comps):
        """Components ``comps`` of (E1, E2, d1E1, d2E1, d1E2, d2E2) at time node n."""
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, 2)
        if self.mode == "trig":
            g = self.grid
            ph1 = np.exp(1j * np.outer(g.k1d, flat[:, 0] + g.L))
            ph2 = np.exp(1j * np.outer(g.k1d, flat[:, 1] + g.L))
            out = []
            for c in comps:
                a = self._hats[n, c] @ ph2
                out.append((np.sum(ph1 * a, axis=0)).real / g.N**2)
            return np.stack(out, axis=-1).reshape(shape + (len(comps),))
        coef = self._coefficients(n)
        c1, c2 = self._index_coords(flat)
        out = [ndimage.map_coordinates(coef[c], [c1, c2], order=self.order, mode="grid-wrap", prefilter=False)
               for c in comps]
        return np.stack(out, axis=-1).reshape(shape + (len(comps),))

    def node_field(self, n, pts):
        return self._node_eval(n, pts, (0, 1))

    def node_gradient(self, n, pts):
        """grad E at node n as (..., 2, 2) with [i, j] = d_j E_i."""
        v = self._node_eval(n, pts, (2, 3, 4, 5))
        return v.reshape(v.shape[:-1] + (2, 2))

    # -- time interpolation -----------------------------------------------------
    def _locate(self, tau):
        tg = self.times
        u = (tau - tg.t0) / tg.dt
        if u < -1e-9 or u > tg.M + 1e-9:
            raise LandauLabError("time-out-of-range", f"tau = {tau} outside the field's time grid")
        n = int(np.clip(np.floor(u + 1e-9), 0, tg.M - 1))
        return n, u - n

    def _hermite(self, tau, pts, fn):
        n, th = self._locate(tau)
        if abs(th) < 1e-9:
            return fn(n, pts)
        if abs(th - 1) < 1e-9:
            return fn(n + 1, pts)
        dt = self.times.dt
        M = self.times.M

        def deriv(k):
            lo, hi = max(k - 1, 0), min(k + 1, M)
            return (fn(hi, pts) - fn(lo, pts)) / ((hi - lo) * dt)

        h00 = 2 * th**3 - 3 * th**2 + 1
        h10 = th**3 - 2 * th**2 + th
        h01 = -2 * th**3 + 3 * th**2
        h11 = th**3 - th**2
        return h00 * fn(n, pts) + h10 * dt * deriv(n) + h01 * fn(n + 1, pts) + h11 * dt * deriv(n + 1)

    def field(self, tau, pts):
        return self._hermite(tau, np.asarray(pts, dtype=float), self.node_field)

    def gradient(self, tau, pts):
        return self._hermite(tau, np.asarray(pts, dtype=float), self.node_gradient)


# -- flows -------------------------------------------------------------------

@dataclass
class FlowMaps:
    """Y, W (and Jacobians) at shear-frame points (z, v) for every s in ``s_nodes``, fixed t.

    ``DY[k, p]`` is the 2x4 Jacobian d(Y)/d(z1, z2, v1, v2).
    """

    s_nodes: np.ndarray
    t: float
    z: np.ndarray
    v: np.ndarray
    Y: np.ndarray
    W: np.ndarray
    DY: np.ndarray | None = None
    DW: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def index(self, s):
        k = int(np.argmin(np.abs(self.s_nodes - s)))
        if abs(self.s_nodes[k] - s) > 1e-9:
            raise LandauLabError("time-out-of-range", f"s = {s} is not a stored node")
        return k

    def X(self, s):
        """Backward position X_{s,t} at the physical points (z + t v, v)."""
        k = self.index(s)
        x = self.z + self.t * self.v
        return x - (self.t - s) * self.v + self.Y[k]

    def V(self, s):
        return self.v + self.W[self.index(s)]

    def phase_jacobian(self, s):
        """4x4 Jacobian of (X, V)_{s,t} with respect to the physical (x, v)."""
        k = self.index(s)
        P = len(self.z)
        I = np.broadcast_to(np.eye(2), (P, 2, 2))
        DYz, DYv = self.DY[k][..., :2], self.DY[k][..., 2:]
        DWz, DWv = self.DW[k][..., :2], self.DW[k][..., 2:]
        t, d = self.t, self.t - s
        J = np.empty((P, 4, 4))
        J[:, :2, :2] = I + DYz
        J[:, :2, 2:] = -d * I - t * DYz + DYv
        J[:, 2:, :2] = DWz
        J[:, 2:, 2:] = I - t * DWz + DWv
        return J


def _time_nodes(sampler, s, t):
    tg = sampler.times
    if s > t + 1e-12:
        raise LandauLabError("time-order", f"need s <= t (s={s}, t={t})")
    inner = tg.t[(tg.t > s + 1e-9) & (tg.t < t - 1e-9)]
    return np.concatenate([[s], inner, [t]]) if t > s + 1e-12 else np.array([t])


def _eval_nodes(sampler, taus, pts, grad):
    vals = np.empty(pts.shape)
    gr = np.empty(pts.shape + (2,)) if grad else None
    for k, tau in enumerate(taus):
        vals[k] = sampler.field(tau, pts[k])
        if grad:
            gr[k] = sampler.gradient(tau, pts[k])
    return vals, gr


def _backward_integrals(taus, e):
    """(int_{s_k}^t (tau - s_k) e, int_{s_k}^t e) for every node s_k (trapezoid)."""
    n = len(taus)
    I0 = np.zeros_like(e)
    I1 = np.zeros_like(e)
    if n == 1:
        return I1, I0
    h = np.diff(taus).reshape((-1,) + (1,) * (e.ndim - 1))
    tt = taus.reshape((-1,) + (1,) * (e.ndim - 1))
    seg0 = 0.5 * h * (e[:-1] + e[1:])
    seg1 = 0.5 * h * (tt[:-1] * e[:-1] + tt[1:] * e[1:])
    I0[:-1] = np.cumsum(seg0[::-1], axis=0)[::-1]
    I1[:-1] = np.cumsum(seg1[::-1], axis=0)[::-1]
    return I1 - tt * I0, I0


def compute_flow(sampler, s, t, z, v, tol=1e-12, max_iter=50, jacobian=True, Y0=None):
    """Picard iteration for Y_{.,t}, W_{.,t} at shear points (z, v) on all nodes in [s, t]."""
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    v = np.asarray(v, dtype=float).reshape(-1, 2)
    taus = _time_nodes(sampler, s, t)
    tt = taus[:, None, None]
    base = z[None] + tt * v[None]
    Y = np.zeros((len(taus),) + z.shape) if Y0 is None else np.array(Y0, dtype=float)
    step = np.inf
    for it in range(1, max_iter + 1):
        e, _ = _eval_nodes(sampler, taus, base + Y, False)
        Ynew, I0 = _backward_integrals(taus, e)
        step = float(np.max(np.abs(Ynew - Y))) if Y.size else 0.0
        Y = Ynew
        if step < tol:
            break
    else:
        raise LandauLabError("picard-divergence", f"flow iteration stalled (step {step:.2e})", step=step)
    e, gE = _eval_nodes(sampler, taus, base + Y, jacobian)
    Yc, I0 = _backward_integrals(taus, e)
    W = -I0
    flows = FlowMaps(taus, float(t), z, v, Y, W, meta={"iterations": it, "step": step,
                                                      "residual": float(np.max(np.abs(Yc - Y)))})
    if jacobian:
        flows.DY, flows.DW = _jacobians(taus, gE, tol, max_iter)
    return flows


def _jacobians(taus, gE, tol, max_iter):
    """Linear Picard for DY = int (tau-s) gradE (D pos), DW = -int gradE (D pos)."""
    n, P = gE.shape[:2]
    Dbase = np.zeros((n, P, 2, 4))
    Dbase[..., 0, 0] = Dbase[..., 1, 1] = 1.0
    Dbase[..., 0, 2] = Dbase[..., 1, 3] = taus[:, None]
    DY = np.zeros((n, P, 2, 4))
    for _ in range(max_iter):
        integrand = gE @ (Dbase + DY)
        new, I0 = _backward_integrals(taus, integrand)
        step = float(np.max(np.abs(new - DY)))
        DY = new
        if step < tol:
            break
    else:
        raise LandauLabError("picard-divergence", "Jacobian iteration stalled")
    integrand = gE @ (Dbase + DY)
    _, I0 = _backward_integrals(taus, integrand)
    return DY, -I0


def flow_from_physical(sampler, s, t, x, v, **kw):
    """compute_flow at physical points (x, v): shear coordinate z = x - t v."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    v = np.asarray(v, dtype=float).reshape(-1, 2)
    return compute_flow(sampler, s, t, x - t * v, v, **kw)


# -- straightening map ---------------------------------------------------------

@dataclass
class InverseMap:
    psi: np.ndarray
    grad_x: np.ndarray
    grad_v: np.ndarray
    defect: float
    iterations: int


def invert_flow(sampler, s, t, x, v, tol=1e-10, max_iter=20, flow_tol=1e-13):
    """Psi_{s,t}(x, v) with X_{s,t}(x, Psi) = x - (t-s) v, by Newton from Psi = v.

    Also returns grad_x Psi and grad_v Psi from the implicit function theorem.
    """
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    v = np.asarray(v, dtype=float).reshape(-1, 2)
    d = t - s
    P = len(x)
    if d <= 0:
        eye = np.broadcast_to(np.eye(2), (P, 2, 2)).copy()
        return InverseMap(v.copy(), np.zeros((P, 2, 2)), eye, 0.0, 0)
    psi = v.copy()
    defect = np.inf
    for it in range(1, max_iter + 1):
        fl = compute_flow(sampler, s, t, x - t * psi, psi, tol=flow_tol)
        k = fl.index(s)
        Fv = -d * psi + fl.Y[k] + d * v
        defect = float(np.max(np.abs(Fv)))
        DYz, DYv = fl.DY[k][..., :2], fl.DY[k][..., 2:]
        J = -d * np.eye(2) - t * DYz + DYv
        if defect < tol:
            break
        psi = psi - np.linalg.solve(J, Fv[..., None])[..., 0]
    else:
        raise LandauLabError("inverse-map-failure", f"Newton defect {defect:.2e} after {max_iter} steps")
    Jinv = np.linalg.inv(J)
    grad_x = -Jinv @ DYz
    grad_v = -d * Jinv
    return InverseMap(psi, grad_x, grad_v, defect, it)


# -- diagnostics ---------------------------------------------------------------

DIAGNOSTIC_NAMES = ("wY", "wGradxY", "wGradvY", "wW", "wGradvW", "wHolderGradvW", "holderGradvY")


def holder_shifts(v_max, J=10):
    return ShiftSet(v_max / 4.0, J)


def flow_diagnostics(sampler, t, z, v, a=0.5, s_ladder=None, shifts=None, v_max=None, tol=1e-12):
    """Weighted suprema of Y, W and their derivatives over the s ladder (fixed t).

    Returns (rows, maxima): one row per s with the seven weighted quantities,
    and their maxima over the ladder.  Hölder quotients in v use the shift set
    applied to the sample points (extra flows at (z, v - alpha)).
    """
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    v = np.asarray(v, dtype=float).reshape(-1, 2)
    if s_ladder is None:
        s_ladder = [0.0] + [0.5 * 2**k for k in range(20) if 0.5 * 2**k < t]
    if shifts is None:
        shifts = holder_shifts(v_max if v_max is not None else float(np.max(np.abs(v))) or 1.0)
    alphas = shifts.vectors
    P = len(z)
    zz = np.concatenate([z] + [z] * len(alphas))
    vv = np.concatenate([v] + [v - al for al in alphas])
    fl = compute_flow(sampler, 0.0, t, zz, vv, tol=tol)
    mags = np.linalg.norm(alphas, axis=1)
    rows = []
    for s in s_ladder:
        k = fl.index(min(fl.s_nodes, key=lambda q: abs(q - s)))
        s_eff = fl.s_nodes[k]
        Y, W = fl.Y[k], fl.W[k]
        DY, DW = fl.DY[k], fl.DW[k]
        gxY, gvY, gvW = DY[:P, :, :2], DY[:P, :, 2:], DW[:P, :, 2:]
        dgvW = DW[P:, :, 2:].reshape(len(alphas), P, 2, 2) - gvW[None]
        dgvY = DY[P:, :, 2:].reshape(len(alphas), P, 2, 2) - gvY[None]
        hq = lambda D: float(np.max(np.linalg.norm(D, axis=(-2, -1)).max(axis=1) / mags**a))
        w = japanese(s_eff)
        rows.append({
            "s": float(s_eff), "t": float(t),
            "wY": w * np.max(np.linalg.norm(Y[:P], axis=-1)),
            "wGradxY": w ** (1 + a) * np.max(np.linalg.norm(gxY, axis=(-2, -1))),
            "wGradvY": w**a * np.max(np.linalg.norm(gvY, axis=(-2, -1))),
            "wW": w**2 * np.max(np.linalg.norm(W[:P], axis=-1)),
            "wGradvW": w ** (1 + a) * np.max(np.linalg.norm(gvW, axis=(-2, -1))),
            "wHolderGradvW": w * hq(dgvW),
            "holderGradvY": hq(dgvY),
        })
    maxima = {k: max(r[k] for r in rows) for k in DIAGNOSTIC_NAMES}
    return rows, maxima


def psi_bounds(inv, v, s, a=0.5):
    """<s>^2 |Psi - v|, <s>^{2+a} |grad_x Psi|, <s>^{1+a} |grad_v (Psi - v)| (sup over samples)."""
    w = japanese(s)
    return {
        "wPsi": w**2 * float(np.max(np.linalg.norm(inv.psi - np.reshape(v, (-1, 2)), axis=-1))),
        "wGradxPsi": w ** (2 + a) * float(np.max(np.linalg.norm(inv.grad_x, axis=(-2, -1)))),
        "wGradvPsi": w ** (1 + a) * float(np.max(np.linalg.norm(inv.grad_v - np.eye(2), axis=(-2, -1)))),
    }


def manufactured_g(grid, times, amplitude=1.0):
    """g(t, x) = c exp(-|x|^2 / (2<t>^2)) / <t>^2, a density-like field with the norm's decay."""
    X1, X2 = grid.mesh
    r2 = X1**2 + X2**2
    vals = np.stack([amplitude * np.exp(-r2 / (2 * (1 + t**2))) / (1 + t**2) for t in times.t])
    return SpaceTimeField(grid, times, vals)


def field_from_g(g):
    """E = -grad (1 - Lap)^{-1} g for every time slice."""
    grid = g.grid
    k1, k2 = grid.kmesh
    m = grid.odd_mask / (1.0 + grid.k2)
    uh = g.hat * m
    Eh = np.stack([-1j * k1 * uh, -1j * k2 * uh], axis=1)
    return SpaceTimeField(grid, g.times, sfft.ifft2(Eh, axes=(-2, -1)).real)
