"""ADM mass, integral identities, and the family kernel sweep."""

import numpy as np
import pytest
import warnings

from statvac import chart_tensor as ct
from statvac import diagnostics as dg
from statvac import testfields as tf
from statvac.backgrounds import BackgroundSpec, make_background
from statvac.errors import RadiusOutsideGrid


def test_cartesian_frames_inverse(eu_small):
    E, Lam, _ = dg.cartesian_frames(eu_small.grid)
    eye = np.einsum("...ia,...aj->...ij", E, Lam)
    target = np.zeros_like(eye)
    target[..., 0, 0] = target[..., 1, 1] = target[..., 2, 2] = 1.0
    assert np.max(np.abs(eye - target)) < 1e-12


def test_adm_mass_euclidean_is_zero():
    grid = ct.radial_grid(1.5, 48.0, 128)
    eu = make_background(BackgroundSpec("euclidean"), grid)
    out = dg.adm_mass(eu)
    assert abs(out["mass"]) < 1e-10


def test_adm_mass_schwarzschild():
    grid = ct.radial_grid(1.5, 50.0, 96)
    sw = make_background(BackgroundSpec("schwarzschild", m=0.5), grid)
    out = dg.adm_mass(sw)
    assert out["mass"] == pytest.approx(0.5, rel=0.01)


def test_adm_flux_profile_closed_form():
    # the flux integral at finite radius evaluates to m / (1 - 2m/r)
    grid = ct.radial_grid(1.5, 50.0, 96)
    m = 0.5
    sw = make_background(BackgroundSpec("schwarzschild", m=m), grid)
    dev = sw.g.comps - __import__(
        "statvac.backgrounds", fromlist=["x"]).spherical_flat_components(grid)
    flux = dg.adm_flux_profile(grid, dev) / (16.0 * np.pi)
    r = grid.r
    exact = m / (1.0 - 2.0 * m / r)
    interior = slice(2, -2)
    assert np.max(np.abs(flux[interior] - exact[interior])) < 1e-3


def test_adm_mass_radius_gate(schw_small):
    with pytest.raises(RadiusOutsideGrid):
        dg.adm_mass(schw_small, radii=(8.0, 16.0, 32.0))


def test_green_identity_antisymmetry(schw_small):
    d1 = tf.random_deformation(schw_small.grid, 1, window="both")
    res = dg.green_identity_check(schw_small, d1.h, d1.v, d1.h, d1.v)
    assert res == 0.0


def test_green_identity_residual_shrinks():
    vals = []
    for n, t in ((24, 16), (48, 32)):
        grid = ct.axisym_grid(1.5, 3.0, n, t)
        sw = make_background(BackgroundSpec("schwarzschild", m=0.5), grid)
        d1 = tf.random_deformation(grid, 1, window="both")
        d2 = tf.random_deformation(grid, 2, window="both")
        vals.append(abs(dg.green_identity_check(sw, d1.h, d1.v,
                                                d2.h, d2.v)))
    assert vals[0] / vals[1] > 3.0


def test_wf_identity_check_keys(schw_small):
    h = tf.sigma_traceless(schw_small,
                           tf.random_deformation(schw_small.grid, 3).h)
    f = tf.harmonic_scalar(schw_small)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = dg.wf_identity_check(schw_small, h, f)
    for key in ("bulk", "boundary", "integral"):
        assert np.isfinite(out[key])


def test_mass_preservation_check(schw_radial):
    d = tf.random_deformation(schw_radial.grid, 5, window="outer")
    out = dg.mass_preservation_check(schw_radial, d.h, d.v)
    assert np.isfinite(out["h_mass_integral"])
    assert np.isfinite(out["v_coefficient"])


def test_rt_first_variation(schw_radial):
    d = tf.random_deformation(schw_radial.grid, 4, window="outer")
    out = dg.rt_first_variation_check(schw_radial, d.h, d.v, details=True)
    scale = abs(out["fd"]) + abs(out["bulk"]) + abs(out["boundary"]) + 1e-12
    assert out["residual"] / scale < 0.1


def test_identity_suite_records(schw_small):
    records = dg.identity_suite(schw_small, seed=0)
    names = [r["name"] for r in records]
    assert len(records) == len(set(names))
    assert len(records) == 11
    for rec in records:
        assert np.isfinite(rec["residual"]), rec["name"]
        assert rec["residual"] >= 0.0


def test_family_sweep_rejects_static_pair(schw_small):
    with pytest.raises(TypeError):
        dg.family_sweep(schw_small)


def test_hidden_bc_check_shapes(schw_small):
    d = tf.random_deformation(schw_small.grid, 6, window="both")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = dg.hidden_bc_check(schw_small, d.h, d.v)
    nt = len(schw_small.grid.theta)
    assert out["eq1"].shape == (nt,)
    assert out["eq2"].shape == (nt, 2)
