"""Background pairs, static residuals, spacetime lifts, serialization."""

import numpy as np
import pytest
import warnings

from statvac import chart_tensor as ct
from statvac.backgrounds import (BackgroundSpec, StaticPair, make_background,
                                 static_vacuum_residual, check_static,
                                 spacetime_metric, spacetime_bianchi_check,
                                 save_pair, load_pair)
from statvac.errors import HorizonInsideDomain, GridMismatch
from statvac.errors import BackgroundNotStatic


def residual_sup(pair):
    first, second = static_vacuum_residual(pair)
    return max(np.max(np.abs(first.comps)), np.max(np.abs(second.comps)))


def test_euclidean_is_static_vacuum():
    sups = []
    for n, t in ((24, 16), (48, 32)):
        grid = ct.axisym_grid(1.5, 2.5, n, t)
        sups.append(residual_sup(make_background(BackgroundSpec("euclidean"),
                                                 grid)))
    assert sups[0] < 1e-2
    assert sups[0] / sups[1] > 3.0


def test_schwarzschild_is_static_vacuum():
    sups = []
    for n in (64, 128):
        grid = ct.radial_grid(1.5, 20.0, n)
        sups.append(residual_sup(make_background(
            BackgroundSpec("schwarzschild", m=0.5), grid)))
    assert sups[0] < 1e-2
    assert sups[0] / sups[1] > 3.0


def test_schwarzschild_potential(schw_small):
    r = schw_small.grid.mesh()[0]
    assert np.max(np.abs(schw_small.u.comps
                         - np.sqrt(1.0 - 1.0 / r))) < 1e-12


def test_horizon_inside_domain_raises():
    grid = ct.radial_grid(1.5, 20.0, 32)
    with pytest.raises(HorizonInsideDomain):
        make_background(BackgroundSpec("schwarzschild", m=1.0), grid)


def test_check_static_warns_for_non_static(eu_small):
    grid = eu_small.grid
    u = ct.TensorField(grid, (), 1.0 + 0.3 * grid.mesh()[0])
    bad = StaticPair(eu_small.g, u)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        check_static(bad, tol=1e-6)
    assert any(issubclass(w.category, BackgroundNotStatic) for w in rec)


def test_spacetime_metric_blocks(schw_small):
    g4 = spacetime_metric(schw_small, sign=-1)
    comps = g4.comps
    assert comps.shape == schw_small.grid.shape + (4, 4)
    assert np.max(np.abs(comps[..., 0, 0]
                         + schw_small.u.comps ** 2)) < 1e-12
    assert np.max(np.abs(comps[..., 0, 1:])) < 1e-12
    assert np.max(np.abs(comps[..., 1:, 1:]
                         - schw_small.g.comps)) < 1e-12


def test_spacetime_bianchi_check_small(schw_small):
    res = spacetime_bianchi_check(schw_small, schw_small)
    assert np.max(np.abs(res.comps)) < 1e-8


def test_save_load_pair_roundtrip(tmp_path, schw_small):
    path = tmp_path / "pair.stv"
    save_pair(path, schw_small)
    loaded = load_pair(path)
    assert loaded.grid == schw_small.grid
    assert np.array_equal(loaded.g.comps, schw_small.g.comps)
    assert np.array_equal(loaded.u.comps, schw_small.u.comps)


def test_load_pair_grid_gate(tmp_path, schw_small):
    path = tmp_path / "pair.stv"
    save_pair(path, schw_small)
    other = ct.axisym_grid(1.5, 2.5, 10, 8)
    with pytest.raises(GridMismatch):
        load_pair(path, expect_grid=other)


def test_background_spec_kinds():
    grid = ct.radial_grid(2.0, 10.0, 24)
    for kind in ("euclidean", "schwarzschild"):
        pair = make_background(BackgroundSpec(kind, m=0.4), grid)
        assert pair.grid == grid
    with pytest.raises(Exception):
        make_background(BackgroundSpec("unknown"), grid)
