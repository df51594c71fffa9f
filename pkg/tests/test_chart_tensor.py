"""Grids, tensor calculus, quadrature, and field serialization."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from statvac import chart_tensor as ct
from statvac.errors import GridMismatch


def flat_jet(grid):
    from statvac.backgrounds import spherical_flat_components
    return ct.MetricJet(ct.TensorField(grid, ("l", "l"),
                                       spherical_flat_components(grid),
                                       sym=True))


def test_radial_grid_nodes():
    grid = ct.radial_grid(1.5, 20.0, 64)
    assert grid.r[0] == pytest.approx(1.5)
    assert grid.r[-1] == pytest.approx(20.0)
    assert np.all(np.diff(grid.r) > 0)
    assert grid.regime == "radial1d"


def test_axisym_grid_shape_and_refine():
    grid = ct.axisym_grid(1.5, 2.5, 20, 12)
    assert grid.shape == (20, 12)
    fine = grid.refined(2)
    assert fine.shape == (39, 24)       # radial nodes nest: 2n - 1
    assert np.max(np.abs(fine.r[::2] - grid.r)) < 1e-12
    assert fine.r_sigma == grid.r_sigma and fine.r_out == grid.r_out


def test_partials_second_order_convergence():
    # f = (r_sigma / r) * cos(theta): exact d/dr and d/dtheta are known
    sups = []
    for n in (24, 48, 96):
        grid = ct.axisym_grid(1.5, 2.5, n, n // 2)
        r, tt = grid.mesh()
        f = (1.5 / r) * np.cos(tt)
        d = ct.partials(grid, f, 0)
        err_r = d[..., 0] - (-1.5 / r ** 2) * np.cos(tt)
        err_t = d[..., 1] - (1.5 / r) * (-np.sin(tt))
        sups.append(max(np.max(np.abs(err_r)), np.max(np.abs(err_t))))
    assert sups[0] / sups[1] > 3.0
    assert sups[1] / sups[2] > 3.0


def test_harmonic_one_over_r():
    sups = []
    for n in (24, 48):
        grid = ct.axisym_grid(1.5, 3.0, n, 12)
        jet = flat_jet(grid)
        lap = ct.laplacian(jet, 1.0 / grid.mesh()[0]).comps
        sups.append(np.max(np.abs(lap[1:-1])))
    assert sups[0] < 1e-2
    assert sups[0] / sups[1] > 3.0


def test_raise_lower_roundtrip(eu_small, rng):
    jet = eu_small.jet
    comps = rng.standard_normal(eu_small.grid.shape + (3,))
    X = ct.TensorField(eu_small.grid, ("u",), comps)
    back = ct.raise_index(jet, ct.lower_index(jet, X, 0), 0)
    assert np.max(np.abs(back.comps - comps)) < 1e-12


def test_trace_of_metric_is_dimension(eu_small):
    tr = ct.trace2(eu_small.jet, eu_small.jet.field).comps
    assert np.max(np.abs(tr - 3.0)) < 1e-12


def test_tensor_magnitude_of_metric(schw_small):
    # |g|_g = sqrt(g^ik g^jl g_ij g_kl) = sqrt(3) pointwise
    mag = ct.tensor_magnitude(schw_small.jet, schw_small.jet.field)
    assert np.max(np.abs(mag - np.sqrt(3.0))) < 1e-10


def test_tensor_magnitude_unit_vector(eu_small):
    grid = eu_small.grid
    comps = np.zeros(grid.shape + (3,))
    comps[..., 0] = 1.0
    X = ct.TensorField(grid, ("u",), comps)
    assert np.max(np.abs(ct.tensor_magnitude(eu_small.jet, X) - 1.0)) < 1e-12


def test_lie_derivative_rotation_killing(eu_small):
    grid = eu_small.grid
    comps = np.zeros(grid.shape + (3,))
    comps[..., 2] = 1.0               # the phi-rotation generator
    X = ct.TensorField(grid, ("u",), comps)
    lx = ct.lie_derivative(eu_small.jet, X, eu_small.jet.field)
    assert np.max(np.abs(lx.comps)) < 1e-10


def test_integrate_dvol_annulus_volume(eu_small):
    vol = ct.integrate_dvol(eu_small.jet, np.ones(eu_small.grid.shape))
    exact = 4.0 * np.pi / 3.0 * (2.5 ** 3 - 1.5 ** 3)
    assert vol == pytest.approx(exact, rel=2e-3)


def test_surface_integral_sphere_area(eu_small):
    area = ct.surface_integral(eu_small.jet,
                               np.ones(len(eu_small.grid.theta)), 0)
    assert area == pytest.approx(4.0 * np.pi * 1.5 ** 2, rel=2e-3)


def test_save_load_fields_roundtrip(tmp_path, eu_small, rng):
    grid = eu_small.grid
    f = ct.TensorField(grid, (), rng.standard_normal(grid.shape))
    X = ct.TensorField(grid, ("u",), rng.standard_normal(grid.shape + (3,)))
    path = tmp_path / "fields.stv"
    ct.save_fields(path, {"f": f, "X": X})
    lgrid, fields = ct.load_fields(path)
    assert lgrid == grid
    assert np.array_equal(fields["f"].comps, f.comps)
    assert np.array_equal(fields["X"].comps, X.comps)
    assert fields["X"].variance == ("u",)


def test_grid_mismatch_raises(eu_small, schw_radial):
    with pytest.raises(GridMismatch):
        ct.trace2(eu_small.jet, schw_radial.jet.field)


@given(st.floats(min_value=-2.0, max_value=3.0),
       st.floats(min_value=-2.0, max_value=3.0))
def test_smoothstep_bounds_and_monotone(a, b):
    sa, sb = ct.smoothstep(np.array([a]))[0], ct.smoothstep(np.array([b]))[0]
    assert 0.0 <= sa <= 1.0
    if a <= b:
        assert sa <= sb + 1e-15


def test_smoothstep_endpoints():
    s = ct.smoothstep(np.array([-1.0, 0.0, 1.0, 2.0]))
    assert s[0] == 0.0 and s[1] == 0.0
    assert s[2] == 1.0 and s[3] == 1.0


def test_weighted_norm_positive(schw_small, rng):
    h = ct.TensorField(schw_small.grid, ("l", "l"),
                       rng.standard_normal(schw_small.grid.shape + (3, 3)))
    val = ct.weighted_norm(schw_small.jet, h, ct.WeightedNorm())
    assert np.isfinite(val) and val > 0
