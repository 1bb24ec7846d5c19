import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from landau_lab import norms
from landau_lab.errors import LandauLabError
from landau_lab.spacetime import SpaceTimeField, TimeGrid
from landau_lab.spectral_field import PeriodicGrid


def plane_wave(k=2):
    g = PeriodicGrid(np.pi, 32)
    X1, _ = g.mesh
    return g, np.sin(k * X1)


@pytest.mark.parametrize("p", [1, np.inf])
def test_besov_plane_wave_closed_form(p):
    g, vals = plane_wave(2)
    sh = norms.ShiftSet(np.pi / 4, 6)
    a = 0.5
    # ||g - g(. - alpha)|| = 2 |sin(k alpha_1 / 2)| ||cos||
    best = 0.0
    for al in sh.vectors:
        amp = 2 * abs(np.sin(2 * al[0] / 2))
        c = np.abs(np.cos(2 * (g.x - al[0] / 2)))  # the sampled difference, exactly
        size = amp * c.max() if p == np.inf else amp * c.sum() * g.dx * (2 * np.pi)
        best = max(best, size / np.linalg.norm(al) ** a)
    assert abs(norms.besov_values(vals, g.L, a, p, sh) - best) < 1e-10 * max(best, 1)


def test_lp_norms_of_constant():
    g = PeriodicGrid(2.0, 16)
    c = np.full((16, 16), 3.0)
    assert abs(norms.lp_norm(c, g.dx, 1) - 3 * 16) < 1e-12
    assert norms.lp_norm(c, g.dx, np.inf) == 3.0


@given(c=st.floats(0.01, 100.0), a=st.floats(0.1, 0.9))
@settings(max_examples=20, deadline=None)
def test_besov_homogeneous(c, a):
    g, vals = plane_wave(3)
    sh = norms.default_shifts(g.L)
    base = norms.besov_values(vals, g.L, a, 1, sh)
    assert abs(norms.besov_values(c * vals, g.L, a, 1, sh) - c * base) < 1e-9 * c * base


@given(alpha=st.tuples(st.integers(-8, 8), st.integers(-8, 8)))
@settings(max_examples=20, deadline=None)
def test_besov_translation_invariant(alpha):
    g = PeriodicGrid(8.0, 32)
    X1, X2 = g.mesh
    vals = np.exp(-(X1**2 + 2 * X2**2) / 2)
    moved = np.roll(vals, alpha, axis=(0, 1))
    sh = norms.default_shifts(g.L)
    assert abs(norms.besov_values(vals, g.L, 0.5, np.inf, sh) - norms.besov_values(moved, g.L, 0.5, np.inf, sh)) < 1e-12


def test_shift_many_spectral_and_roll_agree():
    g = PeriodicGrid(8.0, 32)
    X1, X2 = g.mesh
    vals = np.exp(-(X1**2 + X2**2))
    exact = norms.shift_many(vals, g.L, [[g.dx * 3, -g.dx]])[0]
    spectral = norms.shift_many(vals, g.L, [[g.dx * 3 + 1e-9, -g.dx]])[0]
    assert np.max(np.abs(exact - spectral)) < 1e-8


def test_trajectory_norm_and_monotone_ledger():
    g = PeriodicGrid(8.0, 16)
    tg = TimeGrid(4.0, 8)
    X1, X2 = g.mesh
    vals = np.stack([np.exp(-(X1**2 + X2**2) / (2 * (1 + t * t))) / (1 + t * t) for t in tg.t])
    f = SpaceTimeField(g, tg, vals)
    rep = norms.trajectory_norm(f, 1, 0.5)
    led = norms.running_ledger(f, 1, 0.5)
    assert np.all(np.diff(led) >= 0)
    assert abs(led[-1] - rep.total) < 1e-12 * rep.total
    assert abs(norms.trajectory_norm(SpaceTimeField(g, tg, 2 * vals), 1, 0.5).total - 2 * rep.total) < 1e-10


def test_japanese_bracket():
    assert norms.japanese(0.0) == 1.0
    assert abs(norms.japanese(3.0) - np.sqrt(10)) < 1e-15


def gaussian_phase(pg, eps=1.0):
    x, v = pg.x, pg.v
    X1, X2, V1, V2 = np.meshgrid(x, x, v, v, indexing="ij")
    return eps * np.exp(-(X1**2 + X2**2) / 2 - (V1**2 + V2**2) / 2)


@given(c=st.floats(0.001, 1000.0))
@settings(max_examples=5, deadline=None)
def test_triple_norm_homogeneous(c):
    pg = norms.PhaseGrid(8.0, 8, 8.0, 8)
    h = gaussian_phase(pg)
    a = norms.triple_norm_values(h, pg).total
    b = norms.triple_norm_values(c * h, pg).total
    assert abs(b - c * a) < 1e-10 * c * a


def test_triple_norm_refuses_truncated_data():
    pg = norms.PhaseGrid(2.0, 8, 8.0, 8)
    with pytest.raises(LandauLabError) as e:
        norms.triple_norm_initial(gaussian_phase(pg), pg)
    assert e.value.code == "norm-truncation-breach"


def test_shift_set_validation():
    with pytest.raises(LandauLabError):
        norms.ShiftSet(0.0)
    with pytest.raises(LandauLabError):
        norms.ShiftSet(5.0).check_domain(4.0)
    assert norms.ShiftSet(1.0, 3).refined().J == 4


def test_dispersive_check_gates():
    H = lambda w: np.exp(-np.sum(w**2, -1))
    phi = lambda x, v: np.zeros_like(x)
    with pytest.raises(LandauLabError):
        norms.dispersive_average_check(H, phi, 3.0, 4.0, 1)
    with pytest.raises(LandauLabError):
        norms.dispersive_average_check(H, phi, 0.0, 4.0, 1, grad_phi=0.9)


def test_dispersive_ratio_free_transport_decays_like_t_minus_two():
    # phi = 0 is free transport: the sup ratio stays O(1) as t grows
    H = lambda w: np.exp(-np.sum(w**2, -1))
    phi = lambda x, v: np.zeros_like(x)
    r = [norms.dispersive_average_check(H, phi, 0.0, t, np.inf) for t in (2.0, 8.0, 32.0)]
    assert max(r) / min(r) < 4
