"""Gauge field, Gamma operator, and the gauged Killing basis."""

import numpy as np
import pytest

from statvac import chart_tensor as ct
from statvac import gauge
from statvac import testfields as tf
from statvac.errors import GridMismatch


def test_gauge_vanishes_at_background(schw_small):
    G = gauge.gauge_G(schw_small, schw_small)
    assert np.max(np.abs(G.comps)) < 1e-14


def test_gauge_prime_matches_fd(schw_small):
    from statvac.backgrounds import StaticPair
    grid = schw_small.grid
    d = tf.random_deformation(grid, 2)
    hc, vc = d.h.comps, d.v.comps
    exact = gauge.gauge_G_prime(schw_small, hc, vc)
    exact = exact.comps if isinstance(exact, ct.TensorField) else exact
    g0, u0 = schw_small.g.comps, schw_small.u.comps
    eps = 1e-5

    def parent(e):
        pair = StaticPair(
            ct.TensorField(grid, ("l", "l"), g0 + e * hc, sym=True),
            ct.TensorField(grid, (), u0 + e * vc))
        return gauge.gauge_G(pair, schw_small).comps

    fd = (parent(eps) - parent(-eps)) / (2.0 * eps)
    assert np.max(np.abs(fd - exact)) / (np.max(np.abs(exact)) + 1.0) < 1e-6


def test_gamma_is_linear(schw_small):
    X = tf.random_vector(schw_small.grid, 3)
    one = gauge.Gamma(schw_small, X).comps
    X2 = ct.TensorField(schw_small.grid, ("u",), 2.0 * X.comps)
    two = gauge.Gamma(schw_small, X2).comps
    assert np.max(np.abs(two - 2.0 * one)) < 1e-9 * (np.max(np.abs(one)) + 1)


def test_euclidean_killing_generators_kill_flat_metric(eu_small):
    gens = list(gauge.euclidean_killing_generators(eu_small.grid))
    assert len(gens) == 2
    for name, Z in gens:
        lz = ct.lie_derivative(eu_small.jet, Z, eu_small.jet.field)
        assert np.max(np.abs(lz.comps)) < 5e-3, name


def test_kappa0_orthogonality_residual_small(schw_small):
    X = tf.random_vector(schw_small.grid, 5, window="both")
    res = gauge.kappa0_orthogonality(schw_small, X)
    val = res["residual"] if isinstance(res, dict) else res
    assert abs(float(np.max(np.abs(val)))) < 1e-2


def test_build_basis_small_grid(schw_small):
    basis = gauge.build_gauged_killing_basis(schw_small)
    assert basis.count == 2
    for name, rec in basis.residuals.items():
        assert rec["linear_residual"] <= 1e-8, name
        assert rec["gamma_sup"] <= 1e-8, name
        assert rec["sigma_sup"] <= 1e-8, name
    assert basis.gram.shape == (2, 2)
    assert np.linalg.cond(basis.gram) < 1e8


def test_basis_grid_gate(schw_small):
    other = ct.axisym_grid(1.5, 2.5, 10, 8)
    with pytest.raises(GridMismatch):
        gauge.build_gauged_killing_basis(schw_small, grid=other)


def test_save_load_basis_roundtrip(tmp_path, schw_small):
    basis = gauge.build_gauged_killing_basis(schw_small)
    path = tmp_path / "basis.stv"
    gauge.save_basis(path, basis)
    loaded = gauge.load_basis(path, schw_small)
    assert loaded.count == basis.count
    assert loaded.names == basis.names
    for a, b in zip(loaded.W, basis.W):
        assert np.allclose(a.comps, b.comps)
    assert np.allclose(loaded.gram, basis.gram)


def test_orthogonal_projection_annihilates_images(schw_small):
    # projection onto the orthogonal complement of the pair images sends
    # every image to (numerically) zero and leaves the complement alone
    basis = gauge.build_gauged_killing_basis(schw_small)
    ih, iv = basis.images[0]
    proj = gauge.orthogonal_projection(ih, iv, basis)
    scale = np.max(np.abs(ih.comps)) + 1.0
    assert np.max(np.abs(proj.h.comps)) / scale < 1e-10
    assert np.max(np.abs(proj.v.comps)) / scale < 1e-10


def test_orthogonal_projection_is_idempotent(schw_small):
    basis = gauge.build_gauged_killing_basis(schw_small)
    d = tf.random_deformation(schw_small.grid, 12)
    once = gauge.orthogonal_projection(d.h, d.v, basis)
    twice = gauge.orthogonal_projection(once.h, once.v, basis)
    scale = np.max(np.abs(once.h.comps)) + 1.0
    assert np.max(np.abs(twice.h.comps - once.h.comps)) / scale < 1e-10
    assert np.max(np.abs(twice.v.comps - once.v.comps)) / scale < 1e-10
