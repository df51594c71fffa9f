"""Seeded smooth random fields and the manufactured transport scenario."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from statvac import chart_tensor as ct
from statvac import testfields as tf
from statvac.backgrounds import BackgroundSpec, make_background


@given(st.floats(min_value=-1.0, max_value=2.0),
       st.floats(min_value=-1.0, max_value=2.0))
def test_step5_bounds_and_monotone(a, b):
    sa = float(tf._step5(np.array([a]))[0])
    sb = float(tf._step5(np.array([b]))[0])
    assert 0.0 <= sa <= 1.0
    if a <= b:
        assert sa <= sb + 1e-12


def test_radial_window_outer_support(eu_small):
    grid = eu_small.grid
    w = tf.radial_window(grid, "outer")
    r = grid.mesh()[0]
    x = (r - grid.r_sigma) / (grid.r_out - grid.r_sigma)
    assert np.all(w[x <= 0.2] == 1.0)
    assert np.all(w[x >= 0.6] == 0.0)


def test_radial_window_both_vanishes_at_boundaries(eu_small):
    w = tf.radial_window(eu_small.grid, "both")
    assert np.max(np.abs(w[0])) == 0.0
    assert np.max(np.abs(w[-1])) == 0.0
    assert np.max(w) > 0.5


def test_seed_reproducibility(eu_small):
    grid = eu_small.grid
    a = tf.random_deformation(grid, 42)
    b = tf.random_deformation(grid, 42)
    c = tf.random_deformation(grid, 43)
    assert np.array_equal(a.h.comps, b.h.comps)
    assert np.array_equal(a.v.comps, b.v.comps)
    assert not np.array_equal(a.h.comps, c.h.comps)


def test_random_deformation_is_symmetric(eu_small):
    h = tf.random_deformation(eu_small.grid, 5).h.comps
    assert np.max(np.abs(h - np.swapaxes(h, -1, -2))) < 1e-14


def test_sigma_traceless_removes_tangential_trace(schw_small):
    h = tf.random_deformation(schw_small.grid, 7).h
    ht = tf.sigma_traceless(schw_small, h)
    grid = schw_small.grid
    sa = (grid.theta_axis, grid.phi_axis)
    g = schw_small.g.comps
    q = np.stack([np.stack([g[..., a, b] for b in sa], axis=-1)
                  for a in sa], axis=-2)
    hq = np.stack([np.stack([ht.comps[..., a, b] for b in sa], axis=-1)
                   for a in sa], axis=-2)
    tr = np.einsum("...ab,...ab->...", np.linalg.inv(q), hq)
    assert np.max(np.abs(tr)) < 1e-12


def test_harmonic_scalar_is_harmonic(schw_radial):
    f = tf.harmonic_scalar(schw_radial)
    lap = ct.laplacian(schw_radial.jet, f.comps).comps
    assert np.max(np.abs(lap[2:-2])) < 1e-3


def test_harmonic_scalar_euclidean_fallback(eu_small):
    f = tf.harmonic_scalar(eu_small)
    r = eu_small.grid.mesh()[0]
    assert np.max(np.abs(f.comps - eu_small.grid.r_sigma / r)) < 1e-12


def test_manufactured_h_is_lie_derivative():
    # h must agree with the discrete L_Y(delta) up to truncation error
    sups = []
    for n, t in ((24, 24), (48, 48)):
        grid = ct.axisym_grid(1.5, 4.0, n, t)
        eu = make_background(BackgroundSpec("euclidean"), grid)
        case = tf.manufactured_transport_case(grid, s=0.1)
        lie = ct.lie_derivative(eu.jet, case["Y"], eu.jet.field)
        sups.append(np.max(np.abs(lie.comps - case["h"].comps)))
    assert sups[0] / sups[1] > 3.0


def test_euclidean_christoffels_match_jet():
    grid = ct.axisym_grid(1.5, 4.0, 32, 32)
    eu = make_background(BackgroundSpec("euclidean"), grid)
    rr, tt = grid.mesh()
    exact = tf.euclidean_chart_christoffels(rr, tt)
    assert np.max(np.abs(eu.jet.Gamma - exact)) < 5e-3


def test_manufactured_at_point_matches_grid_fields():
    grid = ct.axisym_grid(1.5, 4.0, 16, 16)
    case = tf.manufactured_transport_case(grid, s=0.1)
    i, j = 5, 7
    p = (grid.r[i], grid.theta[j])
    Y, om, h, T = case["at_point"](p)
    assert np.max(np.abs(Y - case["Y"].comps[i, j])) < 1e-12
    assert np.max(np.abs(om - case["omega"][i, j])) < 1e-12
    assert np.max(np.abs(h - case["h"].comps[i, j])) < 1e-12


def test_unknown_window_rejected(eu_small):
    with pytest.raises(ValueError):
        tf.radial_window(eu_small.grid, "sideways")
