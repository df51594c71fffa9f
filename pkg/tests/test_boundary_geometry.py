"""Boundary restriction, Bartnik data, and exact boundary linearizations."""

import numpy as np
import pytest

from statvac import boundary_geometry as bgeo
from statvac import chart_tensor as ct
from statvac import testfields as tf


def test_flat_round_sphere_geometry(eu_small):
    B = bgeo.boundary_restriction(eu_small.jet)
    r0 = eu_small.grid.r_sigma
    tt = eu_small.grid.theta
    assert np.max(np.abs(B.H - 2.0 / r0)) < 2e-3
    q_exact = np.zeros_like(B.g_top)
    q_exact[:, 0, 0] = r0 ** 2
    q_exact[:, 1, 1] = r0 ** 2 * np.sin(tt) ** 2
    assert np.max(np.abs(B.g_top - q_exact)) < 1e-10
    assert np.max(np.abs(B.A - q_exact / r0)) < 2e-3


def test_mean_curvature_converges_second_order():
    errs = []
    for n, t in ((24, 16), (48, 32)):
        grid = ct.axisym_grid(1.5, 2.5, n, t)
        from statvac.backgrounds import BackgroundSpec, make_background
        bg = make_background(BackgroundSpec("schwarzschild", m=0.5), grid)
        H_exact = 2.0 * np.sqrt(1.0 - 1.0 / 1.5) / 1.5
        errs.append(np.max(np.abs(bgeo.mean_curvature(bg.jet) - H_exact)))
    assert errs[0] / errs[1] > 3.0


def test_round_sphere_scalar_curvature(eu_small):
    sj = bgeo.boundary_restriction(eu_small.jet).surface_jet()
    r0 = eu_small.grid.r_sigma
    assert np.max(np.abs(sj.scal - 2.0 / r0 ** 2)) < 1e-3


def test_schwarzschild_mean_curvature(schw_small):
    r0 = schw_small.grid.r_sigma
    m = 0.5
    H_exact = 2.0 * np.sqrt(1.0 - 2.0 * m / r0) / r0
    H = bgeo.mean_curvature(schw_small.jet)
    assert np.max(np.abs(H - H_exact)) < 2e-3


def test_bartnik_data_fields(schw_small):
    data = bgeo.bartnik_data(schw_small.jet)
    r0 = schw_small.grid.r_sigma
    tt = schw_small.grid.theta
    assert data.tau[:, 0, 0] == pytest.approx(r0 ** 2)
    assert data.tau[:, 1, 1] == pytest.approx(r0 ** 2 * np.sin(tt) ** 2)
    assert data.phi == pytest.approx(
        2.0 * np.sqrt(1.0 - 1.0 / r0) / r0, abs=2e-3)


def test_boundary_primes_match_finite_differences(schw_small):
    grid = schw_small.grid
    h = tf.random_deformation(grid, 3).h.comps
    nup, gtp, Ap, Hp = bgeo.boundary_primes(schw_small.jet, h)
    eps = 1e-6
    g0 = schw_small.g.comps

    def restrict(gc):
        jet = ct.MetricJet(ct.TensorField(grid, ("l", "l"), gc, sym=True),
                           check=False)
        return bgeo.boundary_restriction(jet, check=False)

    Bp, Bm = restrict(g0 + eps * h), restrict(g0 - eps * h)
    for exact, plus, minus in ((nup, Bp.nu, Bm.nu),
                               (gtp, Bp.g_top, Bm.g_top),
                               (Ap, Bp.A, Bm.A),
                               (Hp, Bp.H, Bm.H)):
        fd = (plus - minus) / (2.0 * eps)
        scale = np.max(np.abs(exact)) + 1.0
        assert np.max(np.abs(fd - exact)) / scale < 1e-7


def test_boundary_primes_linearity(schw_small):
    h = tf.random_deformation(schw_small.grid, 5).h.comps
    one = bgeo.boundary_primes(schw_small.jet, h)
    two = bgeo.boundary_primes(schw_small.jet, 2.0 * h)
    for a, b in zip(one, two):
        assert np.max(np.abs(b - 2.0 * a)) < 1e-9 * (np.max(np.abs(a)) + 1.0)


def test_save_load_bartnik_roundtrip(tmp_path, schw_small):
    data = bgeo.bartnik_data(schw_small.jet)
    path = tmp_path / "bartnik.stv"
    bgeo.save_bartnik_data(path, data)
    loaded = bgeo.load_bartnik_data(path)
    assert np.array_equal(loaded.tau, data.tau)
    assert np.array_equal(loaded.phi, data.phi)


def test_outer_boundary_restriction(eu_small):
    B = bgeo.boundary_restriction(eu_small.jet, i_r=-1)
    r1 = eu_small.grid.r_out
    assert np.max(np.abs(B.H - 2.0 / r1)) < 2e-3
