"""Seeded smooth random fields for identity checks and experiments.

Fields are assembled in the Cartesian frame from isotropic tensor shapes
(multiples of delta, n x n, sym(n x e_z), e_z x e_z, and the rotation
generator z cross x) with axisymmetric scalar amplitudes -- low-order
powers of 1/r times Legendre modes in cos(theta) -- and then pushed to
spherical chart components through the coordinate Jacobians.  Building in
the Cartesian frame guarantees smoothness and the correct parity across the
symmetry axis for every tensor rank.

Radial windows (C^4 polynomial steps) produce fields that vanish near the
outer truncation sphere (``window="outer"``) or near both boundaries
(``window="both"``), as the integral identities on truncated domains
require.  All draws are reproducible from a ``numpy.random.Generator`` or an
integer seed.
"""

from __future__ import annotations

import numpy as np
from scipy.special import eval_legendre

from .chart_tensor import TensorField
from .diagnostics import cartesian_frames
from .linearized_ops import Deformation

__all__ = [
    "random_scalar",
    "random_vector",
    "random_deformation",
    "sigma_traceless",
    "harmonic_scalar",
    "radial_window",
    "euclidean_chart_christoffels",
    "manufactured_transport_case",
]


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _step5(s):
    """C^4 polynomial step: 0 at s<=0, 1 at s>=1 (degree-9 smoothstep)."""
    s = np.clip(s, 0.0, 1.0)
    return s ** 5 * (126.0 + s * (-420.0 + s * (540.0
                                                + s * (-315.0 + 70.0 * s))))


def radial_window(grid, kind="both"):
    """Nodal radial window, shaped grid.shape.

    ``"both"``: vanishes to 5th order at r_sigma and r_out (compact support
    in the open annulus).  ``"outer"``: identically 1 on the inner 20% of
    the annulus and identically 0 on the outer 40%, so that flux and mass
    integrals sampled near r_out see exactly zero field.  ``None``: ones.
    """
    r = grid.mesh()[0]
    if kind is None:
        return np.ones(grid.shape)
    x = (r - grid.r_sigma) / (grid.r_out - grid.r_sigma)
    if kind == "outer":
        return 1.0 - _step5((x - 0.2) / 0.4)
    if kind in ("both", True):
        return (4.0 * x * (1.0 - x)) ** 5
    raise ValueError("unknown window kind %r" % (kind,))


def _amplitude(grid, rng, ell_max=2, n_rad=3, decay=1.0):
    """Random smooth axisymmetric scalar: powers of r_sigma/r times
    Legendre modes of cos(theta), normalized to unit sup."""
    r, tt = grid.mesh()
    mu = np.cos(tt)
    out = np.zeros(grid.shape)
    for k in range(n_rad):
        rad = (grid.r_sigma / r) ** (decay + k)
        for ell in range(ell_max + 1):
            c = rng.standard_normal() / (1.0 + k + ell)
            out += c * rad * eval_legendre(ell, mu)
    sup = np.max(np.abs(out))
    return out / sup if sup > 0 else out


def random_scalar(grid, seed, window=None, ell_max=2):
    rng = _rng(seed)
    vals = _amplitude(grid, rng, ell_max=ell_max) * radial_window(grid,
                                                                  window)
    return TensorField(grid, (), vals)


def _unit_vectors(grid):
    tt = grid.mesh()[1]
    n = np.zeros(grid.shape + (3,))
    n[..., 0] = np.sin(tt)
    n[..., 2] = np.cos(tt)
    ez = np.zeros(grid.shape + (3,))
    ez[..., 2] = 1.0
    # z cross x / r at phi = 0 (rotation generator direction)
    rot = np.zeros(grid.shape + (3,))
    rot[..., 1] = np.sin(tt)
    return n, ez, rot


def random_vector(grid, seed, window=None, ell_max=2):
    """Random smooth vector field (contravariant chart components)."""
    rng = _rng(seed)
    n, ez, rot = _unit_vectors(grid)
    Xc = (_amplitude(grid, rng, ell_max)[..., None] * n
          + _amplitude(grid, rng, ell_max)[..., None] * ez
          + _amplitude(grid, rng, ell_max)[..., None] * rot)
    Xc *= radial_window(grid, window)[..., None]
    _, Lam, _ = cartesian_frames(grid)
    comps = np.einsum("...ai,...i->...a", Lam, Xc)
    return TensorField(grid, ("u",), comps)


def random_deformation(grid, seed, window=None, ell_max=2):
    """Random smooth (sym2 covariant, scalar) deformation pair."""
    rng = _rng(seed)
    n, ez, rot = _unit_vectors(grid)
    eye = np.zeros(grid.shape + (3, 3))
    eye[..., 0, 0] = eye[..., 1, 1] = eye[..., 2, 2] = 1.0

    def sym(a, b):
        return 0.5 * (np.einsum("...i,...j->...ij", a, b)
                      + np.einsum("...i,...j->...ij", b, a))

    shapes = [eye, sym(n, n), sym(n, ez), sym(ez, ez), sym(n, rot)]
    hc = np.zeros(grid.shape + (3, 3))
    for shape in shapes:
        hc += _amplitude(grid, rng, ell_max)[..., None, None] * shape
    hc *= radial_window(grid, window)[..., None, None]
    E = cartesian_frames(grid)[0]
    comps = np.einsum("...ia,...jb,...ij->...ab", E, E, hc)
    v = _amplitude(grid, rng, ell_max) * radial_window(grid, window)
    return Deformation(TensorField(grid, ("l", "l"), comps, sym=True),
                       TensorField(grid, (), v))


def sigma_traceless(pair, h):
    """Remove the tangential trace of h on every coordinate sphere.

    Returns h - (1/2)(tr_q h) q on the tangential block (q the tangential
    part of the pair's metric), leaving the normal components untouched; the
    result has tr_Sigma h = 0 on Sigma and stays smooth.
    """
    grid = pair.grid
    hc = np.array(h.comps if isinstance(h, TensorField) else h)
    sa = (grid.theta_axis, grid.phi_axis)
    g = pair.g.comps
    q = np.stack([np.stack([g[..., a, b] for b in sa], axis=-1)
                  for a in sa], axis=-2)
    hq = np.stack([np.stack([hc[..., a, b] for b in sa], axis=-1)
                   for a in sa], axis=-2)
    qinv = np.linalg.inv(q)
    tr = np.einsum("...ab,...ab->...", qinv, hq)
    for ai, a in enumerate(sa):
        for bi, b in enumerate(sa):
            hc[..., a, b] -= 0.5 * tr * q[..., ai, bi]
    return TensorField(grid, ("l", "l"), hc, sym=True)


def _frames_at(rv, tv):
    """Point/array version of the chart-to-Cartesian frames at phi = 0."""
    rv = np.asarray(rv, float)
    tv = np.asarray(tv, float)
    sh = np.broadcast(rv, tv).shape
    st, ctt = np.sin(tv), np.cos(tv)
    E = np.zeros(sh + (3, 3))
    E[..., 0, 0] = st
    E[..., 2, 0] = ctt
    E[..., 0, 1] = rv * ctt
    E[..., 2, 1] = -rv * st
    E[..., 1, 2] = rv * st
    return E, np.linalg.inv(E)


def euclidean_chart_christoffels(rv, tv):
    """Closed-form Christoffel symbols of the flat metric in the chart."""
    rv = np.asarray(rv, float)
    tv = np.asarray(tv, float)
    sh = np.broadcast(rv, tv).shape
    st, ctt = np.sin(tv), np.cos(tv)
    G = np.zeros(sh + (3, 3, 3))
    G[..., 0, 1, 1] = -rv
    G[..., 0, 2, 2] = -rv * st ** 2
    G[..., 1, 0, 1] = G[..., 1, 1, 0] = 1.0 / rv
    G[..., 1, 2, 2] = -st * ctt
    G[..., 2, 0, 2] = G[..., 2, 2, 0] = 1.0 / rv
    G[..., 2, 1, 2] = G[..., 2, 2, 1] = ctt / st
    return G


def _transport_quantities(rv, tv, s):
    """Closed-form (Y, omega, h, T_low) in chart components at phi = 0.

    Y_cart = s (xz, yz, z^2 - (x^2 + y^2)/2), h = L_Y delta = 2s diag(z,z,2z),
    omega_{ij} = d_j Y_i, T as the lowered transport tensor of h.
    """
    E, Lam = _frames_at(rv, tv)
    rv = np.asarray(rv, float)
    tv = np.asarray(tv, float)
    sh = np.broadcast(rv, tv).shape
    x = rv * np.sin(tv)
    z = rv * np.cos(tv)
    Yc = np.zeros(sh + (3,))
    Yc[..., 0] = s * x * z
    Yc[..., 2] = s * (z ** 2 - x ** 2 / 2.0)
    M = np.zeros(sh + (3, 3))          # M_ij = d_j Y_i (Cartesian)
    M[..., 0, 0] = s * z
    M[..., 0, 2] = s * x
    M[..., 1, 1] = s * z
    M[..., 2, 0] = -s * x
    M[..., 2, 2] = 2.0 * s * z
    hc = np.zeros(sh + (3, 3))
    hc[..., 0, 0] = hc[..., 1, 1] = 2.0 * s * z
    hc[..., 2, 2] = 4.0 * s * z
    # h_{ij;k} = dh/dz only: 2s D_ij delta_{kz} with D = diag(1, 1, 2)
    D = np.diag([1.0, 1.0, 2.0])
    dh = np.zeros(sh + (3, 3, 3))
    dh[..., :, :, 2] = 2.0 * s * D
    Tc = 0.5 * (dh + np.swapaxes(dh, -2, -1)
                - np.einsum("...jki->...ijk", dh))
    Y = np.einsum("...ai,...i->...a", Lam, Yc)
    om = np.einsum("...ia,...jb,...ij->...ab", E, E, M)
    h = np.einsum("...ia,...jb,...ij->...ab", E, E, hc)
    T = np.einsum("...ia,...jb,...kc,...ijk->...abc", E, E, E, Tc)
    return Y, om, h, T


def manufactured_transport_case(grid, s=0.1):
    """Closed-form h-Killing transport scenario on a Euclidean chart.

    Y is a smooth Cartesian-polynomial vector field with h = L_Y delta; the
    nodal fields, the exact omega, the connection/curvature overrides for a
    TransportGeometry, and point evaluators for exact comparison at
    arbitrary chart points are all returned in one dict.
    """
    rr, tt = grid.mesh()
    Y, om, h, T = _transport_quantities(rr, tt, s)
    overrides = {"Gamma": euclidean_chart_christoffels(rr, tt),
                 "riemann": np.zeros(grid.shape + (3, 3, 3, 3)),
                 "t_low": T,
                 "h": h}

    def at_point(p):
        return _transport_quantities(p[0], p[1], s)

    return {"Y": TensorField(grid, ("u",), Y),
            "h": TensorField(grid, ("l", "l"), h, sym=True),
            "omega": om,
            "overrides": overrides,
            "at_point": at_point}


def harmonic_scalar(pair):
    """A decaying harmonic function of the pair's metric.

    At a static vacuum pair the potential u is harmonic, so 1 - u (scaled to
    unit sup) is a decaying harmonic function; for a constant potential
    (Euclidean background) r_sigma / r is returned instead.
    """
    grid = pair.grid
    u = pair.u.comps
    if float(np.ptp(u)) < 1e-12:
        vals = grid.r_sigma / grid.mesh()[0]
    else:
        vals = 1.0 - u
        vals = vals / np.max(np.abs(vals))
    return TensorField(grid, (), np.array(vals))
