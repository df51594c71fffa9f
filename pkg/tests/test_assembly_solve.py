"""Sparse assembly, kernel probe, and the bordered Newton solver."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from statvac import assembly_solve as asm
from statvac import chart_tensor as ct
from statvac import gauge
from statvac import testfields as tf
from statvac.backgrounds import BackgroundSpec, make_background
from statvac.boundary_geometry import bartnik_data
from statvac.errors import OutsideNeighborhood
from statvac.linearized_ops import Deformation


def tiny_background():
    if not hasattr(tiny_background, "pair"):
        grid = ct.axisym_grid(1.5, 2.5, 16, 14)
        tiny_background.pair = make_background(
            BackgroundSpec("schwarzschild", m=0.5), grid)
    return tiny_background.pair


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_pack_unpack_roundtrip(seed):
    grid = tiny_background().grid
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(grid.shape + (7,))
    d = asm.unpack_deformation(grid, x)
    back = asm.pack_deformation(d)
    assert np.max(np.abs(back - x)) < 1e-14


def test_sym_full_roundtrip(rng):
    h = rng.standard_normal((4, 5, 3, 3))
    h = 0.5 * (h + np.swapaxes(h, -1, -2))
    assert np.max(np.abs(asm._sym_to_full(asm._full_to_sym(h)) - h)) < 1e-15


def test_assembled_matrix_matches_matrix_free_apply():
    bg = tiny_background()
    grid = bg.grid
    op = asm.assemble_LG(bg, verify=False)
    fn = asm._LG_apply_fn(bg, 0.9)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(grid.shape + (7,))
    ax = (op.matrix @ x.ravel()).reshape(grid.shape + (7,))
    fx = fn(x)
    assert np.max(np.abs(ax - fx)) < 1e-9 * (np.max(np.abs(fx)) + 1.0)


def test_kernel_probe_returns_expected_keys():
    bg = tiny_background()
    op = asm.assemble_LG(bg, verify=False)
    probe = asm.kernel_probe(op, tol_gap=10.0, k=6)
    for key in ("dimension", "singular_values", "gap_ratio", "no_gap",
                "deformations"):
        assert key in probe
    assert len(probe["singular_values"]) == 6
    assert all(s >= 0 for s in probe["singular_values"])


def test_newton_background_data_is_fixed_point():
    bg = tiny_background()
    data = bartnik_data(bg.jet)
    pair, W, trace, info = asm.newton_solve_extension(bg, data.tau, data.phi)
    assert trace.converged
    assert info["residual"] <= 1e-9
    assert info["deviation_norm"] <= 1e-9
    assert info["W_norm"] <= 1e-9
    assert np.max(np.abs(pair.g.comps - bg.g.comps)) <= 1e-9


def test_newton_neighborhood_gate():
    bg = tiny_background()
    data = bartnik_data(bg.jet)
    with pytest.raises(OutsideNeighborhood):
        asm.newton_solve_extension(bg, 2.0 * data.tau, data.phi)


def test_modified_residual_vanishes_at_background():
    bg = tiny_background()
    grid = bg.grid
    R = asm.modified_residual(bg, np.zeros(grid.shape + (3,)), bg)
    R0 = np.real(R)
    # interior rows are the static vacuum defect of the background itself
    assert np.max(np.abs(R0[1:-1, :, :7])) < 1e-1
    data_rows = R0[0, :, 3:7]
    assert np.isfinite(data_rows).all()


def test_assemble_modified_shapes():
    bg = tiny_background()
    basis = gauge.build_gauged_killing_basis(bg)
    op = asm.assemble_modified(bg, basis=basis, verify=False)
    n = np.prod(bg.grid.shape) * 10 + basis.count
    assert op.matrix.shape == (n, n)
    assert op.meta["nborder"] == basis.count


def test_dofmap_size():
    bg = tiny_background()
    op = asm.assemble_LG(bg, verify=False)
    assert op.matrix.shape[0] == np.prod(bg.grid.shape) * 7
    assert op.dofmap.size == op.matrix.shape[0]
