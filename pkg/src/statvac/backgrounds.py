"""Exact background pairs and nonlinear operator evaluation.

A StaticPair is a metric g together with a positive scalar u on the same
grid.  Backgrounds are evaluated from closed forms in the area-radius
spherical chart, where the Schwarzschild components are exact nodal values.

The spacetime lift puts the pair on the product chart (t, r, theta, phi) as
the metric +- u^2 dt^2 + g; nothing depends on t, so the lifted grid reuses
the same nodes with an inactive leading coordinate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import boundary_geometry as bgeo
from . import chart_tensor as ct
from .chart_tensor import MetricJet, TensorField
from .errors import ConfigInvalid, GridMismatch, HorizonInsideDomain
from .errors import BackgroundNotStatic

__all__ = [
    "StaticPair",
    "BackgroundSpec",
    "make_background",
    "static_vacuum_residual",
    "spacetime_metric",
    "spacetime_bianchi_check",
    "static_harmonic_coordinate_residual",
    "spacetime_boundary_data",
    "spacetime_boundary_data_prime",
    "check_static",
    "save_pair",
    "load_pair",
]

_CS_EPS = 1e-100


@dataclass(eq=False)
class StaticPair:
    """A metric field and a scalar field on one grid."""

    g: TensorField
    u: TensorField

    def __post_init__(self):
        if self.g.grid != self.u.grid:
            raise GridMismatch("g and u live on different grids")
        self._jet = None

    @property
    def grid(self):
        return self.g.grid

    @property
    def jet(self):
        if self._jet is None or self._jet.g is not self.g.comps:
            self._jet = MetricJet(self.g, check=not np.iscomplexobj(
                self.g.comps))
        return self._jet

    def copy(self):
        return StaticPair(self.g.copy(), self.u.copy())


@dataclass(frozen=True)
class BackgroundSpec:
    """Which exact background to construct."""

    kind: str                 # 'euclidean' | 'schwarzschild' | 'from_file'
    m: float = 0.0
    n: int = 3
    path: str = ""

    def __post_init__(self):
        if self.kind not in ("euclidean", "schwarzschild", "from_file"):
            raise ConfigInvalid("unknown background kind %r" % (self.kind,))
        if self.kind == "schwarzschild" and self.m <= 0:
            raise ConfigInvalid("schwarzschild mass must be positive")
        if self.n != 3:
            raise ConfigInvalid("only dimension n=3 is supported")

    @property
    def horizon_radius(self):
        return (2.0 * self.m) ** (1.0 / (self.n - 2))


def spherical_flat_components(grid):
    """Euclidean metric components in the spherical chart."""
    ir, it, ip = grid.r_axis, grid.theta_axis, grid.phi_axis
    rr, tt = grid.mesh()
    g = np.zeros(grid.shape + (grid.dim, grid.dim))
    g[..., ir, ir] = 1.0
    g[..., it, it] = rr ** 2
    g[..., ip, ip] = rr ** 2 * np.sin(tt) ** 2
    return g


def make_background(spec: BackgroundSpec, grid) -> StaticPair:
    if spec.kind == "from_file":
        return load_pair(spec.path, expect_grid=grid)
    g = spherical_flat_components(grid)
    if spec.kind == "euclidean":
        u = np.ones(grid.shape)
    else:
        if grid.r_sigma <= spec.horizon_radius:
            raise HorizonInsideDomain(
                "r_sigma=%g <= horizon radius %g"
                % (grid.r_sigma, spec.horizon_radius))
        rr = grid.mesh()[0]
        f = 1.0 - 2.0 * spec.m / rr ** (spec.n - 2)
        g[..., grid.r_axis, grid.r_axis] = 1.0 / f
        u = np.sqrt(f)
    return StaticPair(TensorField(grid, ("l", "l"), g, sym=True),
                      ct.scalar_field(grid, u))


# ----------------------------------------------------------------------------
# the static vacuum operator
# ----------------------------------------------------------------------------

def static_vacuum_residual(pair: StaticPair):
    """S(g, u) = (-u Ric_g + hess_g u, lap_g u) as a pair of fields."""
    jet = pair.jet
    hess = ct.hessian(jet, pair.u)
    first = TensorField(pair.grid, ("l", "l"),
                        -pair.u.comps[..., None, None] * jet.ricci
                        + hess.comps, sym=True)
    second = ct.laplacian(jet, pair.u)
    return first, second


def check_static(pair: StaticPair, tol=1e-2, warn=True):
    """Sup norm of S(pair); warns when the pair is not static vacuum."""
    first, second = static_vacuum_residual(pair)
    grid = pair.grid
    if grid.regime == "radial1d":
        je = grid.equator_index
        size = max(np.max(np.abs(first.comps[:, je])),
                   np.max(np.abs(second.comps[:, je])))
    else:
        size = max(np.max(np.abs(first.comps)), np.max(np.abs(second.comps)))
    if warn and size > tol:
        warnings.warn("pair has static vacuum residual %g" % size,
                      BackgroundNotStatic)
    return float(size)


# ----------------------------------------------------------------------------
# spacetime lift and the product-chart Bianchi identity
# ----------------------------------------------------------------------------

def spacetime_metric(pair: StaticPair, sign=+1):
    """The product-chart metric +- u^2 dt^2 + g on the lifted grid."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    grid = pair.grid.with_time_axis()
    d = grid.dim
    comps = np.zeros(grid.shape + (d, d),
                     dtype=np.result_type(pair.g.comps, pair.u.comps))
    comps[..., 1:, 1:] = pair.g.comps
    comps[..., 0, 0] = sign * pair.u.comps ** 2
    return TensorField(grid, ("l", "l"), comps, sym=True)


def spacetime_bianchi_check(pair: StaticPair, background: StaticPair,
                            sign=+1):
    """Product-chart Bianchi operator minus its 3+1 reduction.

    Evaluates beta w.r.t. the lifted background metric on the lifted pair
    metric directly in the product chart, subtracts the reduced formula
    beta_gbar g + ubar^-2 u du - ubar^-1 g(grad ubar, .), and returns the
    difference as a lifted covector (t-component included; it should vanish).
    """
    if pair.grid != background.grid:
        raise GridMismatch("pair and background on different grids")
    gst = spacetime_metric(pair, sign)
    gst_bar = spacetime_metric(background, sign)
    jet_bar_st = MetricJet(gst_bar, check=False)
    beta_full = ct.bianchi_beta(jet_bar_st, gst)

    jet_bar = background.jet
    beta_space = ct.bianchi_beta(jet_bar, pair.g).comps
    du = ct.partials(pair.grid, pair.u.comps, 0)
    dubar = ct.partials(pair.grid, background.u.comps, 0)
    grad_ubar = np.einsum("...ij,...j->...i", jet_bar.ginv, dubar)
    ub = background.u.comps
    reduced = (beta_space
               + (pair.u.comps / ub ** 2)[..., None] * du
               - (1.0 / ub)[..., None] * np.einsum(
                   "...ij,...j->...i", pair.g.comps, grad_ubar))

    diff = beta_full.comps.copy()
    diff[..., 1:] -= reduced
    return TensorField(gst.grid, ("l",), diff)


def static_harmonic_coordinate_residual(pair: StaticPair):
    """-Gamma^k + u^-1 g^{ik} d_i u in the working chart (one per coordinate).

    The working chart is generally not static-harmonic; this quantifies the
    defect.
    """
    jet = pair.jet
    contracted = np.einsum("...ij,...kij->...k", jet.ginv, jet.Gamma)
    du = ct.partials(pair.grid, pair.u.comps, 0)
    grad_u = np.einsum("...ik,...i->...k", jet.ginv, du)
    return TensorField(pair.grid, ("u",),
                       -contracted + grad_u / pair.u.comps[..., None])


# ----------------------------------------------------------------------------
# spacetime boundary data
# ----------------------------------------------------------------------------

def _spacetime_boundary_blocks(grid, g_comps, u_comps, sign):
    """(induced metric, A) of R x Sigma in (t, theta, phi) components."""
    jet = MetricJet(TensorField(grid, ("l", "l"), g_comps, sym=True),
                    check=not np.iscomplexobj(g_comps))
    B = bgeo.boundary_restriction(jet, check=False)
    du = ct.partials(grid, u_comps, 0)
    nu_u = np.einsum("ti,ti->t", B.nu, du[0])
    u0 = u_comps[0]
    nt = len(grid.theta)
    dtype = np.result_type(g_comps, u_comps)
    induced = np.zeros((nt, 3, 3), dtype=dtype)
    induced[:, 0, 0] = sign * u0 ** 2
    induced[:, 1:, 1:] = B.g_top
    Abig = np.zeros((nt, 3, 3), dtype=dtype)
    Abig[:, 0, 0] = sign * u0 * nu_u
    Abig[:, 1:, 1:] = B.A
    return induced, Abig


def spacetime_boundary_data(pair: StaticPair, sign=+1):
    """Block forms (+-u^2 dt^2 + g^T, +-u nu(u) dt^2 + A_g) on the boundary."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    return _spacetime_boundary_blocks(pair.grid, pair.g.comps, pair.u.comps,
                                      sign)


def spacetime_boundary_data_prime(pair: StaticPair, h, v, sign=+1):
    """Exact discrete linearization of the spacetime boundary blocks."""
    h = h.comps if isinstance(h, TensorField) else h
    v = v.comps if isinstance(v, TensorField) else v
    induced, Abig = _spacetime_boundary_blocks(
        pair.grid, pair.g.comps + 1j * _CS_EPS * h,
        pair.u.comps + 1j * _CS_EPS * v, sign)
    return np.imag(induced) / _CS_EPS, np.imag(Abig) / _CS_EPS


# ----------------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------------

def save_pair(path, pair: StaticPair):
    ct.save_fields(path, {"g": pair.g, "u": pair.u})


def load_pair(path, expect_grid=None):
    grid, fields = ct.load_fields(path)
    if expect_grid is not None and grid != expect_grid:
        raise GridMismatch("file grid differs from requested grid")
    pair = StaticPair(fields["g"], fields["u"])
    check_static(pair)
    return pair
