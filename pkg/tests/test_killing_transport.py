"""h-Killing candidate transport along geodesic paths."""

import numpy as np
import pytest

from statvac import chart_tensor as ct
from statvac import killing_transport as kt
from statvac import testfields as tf
from statvac.backgrounds import BackgroundSpec, make_background
from statvac.errors import GridMismatch


GRID = ct.axisym_grid(1.5, 4.0, 32, 32)
EU = make_background(BackgroundSpec("euclidean"), GRID)
CASE = tf.manufactured_transport_case(GRID, s=0.1)
GEOM = kt.TransportGeometry(EU, h=CASE["h"], overrides=CASE["overrides"])


def start_state(p):
    Y, om, _, _ = CASE["at_point"](p)
    return Y, om


def test_transport_recovers_closed_form():
    p = np.array([1.8, 0.9])
    q = np.array([3.4, 2.0])
    X0, om0 = start_state(p)
    path = kt.GeodesicPath(np.array([p, q]))
    state = kt.transport(EU, p, X0, om0, path, geometry=GEOM)
    Yq, omq, _, _ = CASE["at_point"](q)
    # accuracy here is limited by the bicubic geometry splines at 32x32,
    # not by the integrator
    assert np.max(np.abs(state.X - Yq)) < 1e-5
    assert np.max(np.abs(state.omega - omq)) < 1e-4
    assert state.drift < 1e-4


def test_transport_two_path_consistency():
    p = np.array([1.8, 0.9])
    q = np.array([3.4, 2.0])
    corner_a = np.array([q[0], p[1]])
    corner_b = np.array([p[0], q[1]])
    X0, om0 = start_state(p)
    s1 = kt.transport(EU, p, X0, om0,
                      kt.GeodesicPath(np.array([p, corner_a, q])),
                      geometry=GEOM)
    s2 = kt.transport(EU, p, X0, om0,
                      kt.GeodesicPath(np.array([p, corner_b, q])),
                      geometry=GEOM)
    assert np.max(np.abs(s1.X - s2.X)) < 1e-5
    assert np.max(np.abs(s1.omega - s2.omega)) < 1e-5


def test_killing_transport_in_flat_space():
    # with h = 0, transporting the value of a genuine Killing field along
    # any path must reproduce the Killing field at the target
    p = np.array([1.8, 0.9])
    q = np.array([3.2, 1.9])
    geom = kt.TransportGeometry(
        EU, overrides={"Gamma": CASE["overrides"]["Gamma"],
                       "riemann": CASE["overrides"]["riemann"]})

    def killing_at(x):
        # z-rotation generator: X = d/dphi, omega_{ij} = nabla_j X_i
        rv, tv = x
        X = np.array([0.0, 0.0, 1.0])
        E, _ = tf._frames_at(rv, tv)
        # Cartesian: X = (-y, x, 0) = (0, r sin t, 0) at phi = 0
        M = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        om = np.einsum("ia,jb,ij->ab", E, E, M)
        return X, om

    X0, om0 = killing_at(p)
    path = kt.GeodesicPath(np.array([p, q]))
    state = kt.transport(EU, p, X0, om0, path, geometry=geom)
    Xq, omq = killing_at(q)
    assert np.max(np.abs(state.X - Xq)) < 1e-5
    assert np.max(np.abs(state.omega - omq)) < 1e-5


def test_extend_h_killing_recovers_field():
    targets = [np.array([2.5, 1.2]), np.array([3.5, 2.4])]
    X_ext, report = kt.extend_h_killing(EU, CASE["Y"], CASE["h"], targets,
                                        geometry=GEOM, strict=False,
                                        tol=1e-10)
    exact = CASE["Y"].comps
    scale = np.max(np.abs(exact))
    err = np.max(np.abs(X_ext.comps - exact)) / scale
    assert err < 5e-3
    assert report["max_disagreement"] < 1e-5


def test_transport_requires_axisym_grid():
    grid = ct.radial_grid(1.5, 4.0, 32)
    pair = make_background(BackgroundSpec("euclidean"), grid)
    with pytest.raises(GridMismatch):
        kt.TransportGeometry(pair)


def test_geodesic_path_endpoints():
    p, q = np.array([1.8, 0.9]), np.array([3.4, 2.0])
    path = kt.GeodesicPath(np.array([p, q]))
    assert np.allclose(path.start, p)
    assert np.allclose(path.end, q)
