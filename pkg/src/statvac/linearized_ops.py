"""Linearized curvature operators, S', L, and the Green-identity operators.

Every primary linearized operator here is the exact derivative of its
discrete nonlinear parent, computed by complex-step differentiation through
the complex-safe tensor engine.  This makes the finite-difference oracle
property exact to roundoff: the operator IS the derivative of the code that
evaluates the parent.

The classical covariant display formulas (Lichnerowicz-type Ric', the
first-derivative Hessian variation, and the divergence-form Laplacian
variation) are provided as *_display functions; they agree with the primary
operators to discretization error and are exercised by the identity suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import boundary_geometry as bgeo
from . import chart_tensor as ct
from .backgrounds import StaticPair, static_vacuum_residual
from .chart_tensor import MetricJet, TensorField
from .errors import GridMismatch

__all__ = [
    "Deformation",
    "ric_prime",
    "scal_prime",
    "hessian_prime",
    "laplacian_prime",
    "ric_prime_display",
    "scal_prime_display",
    "hessian_prime_display",
    "laplacian_prime_display",
    "S_prime",
    "L_apply",
    "P_op",
    "Q_op",
    "radial_ops_jet",
]

_CS_EPS = 1e-100


@dataclass(eq=False)
class Deformation:
    """A metric perturbation h (symmetric) and scalar perturbation v."""

    h: TensorField
    v: TensorField

    def __post_init__(self):
        if self.h.grid != self.v.grid:
            raise GridMismatch("h and v live on different grids")

    @property
    def grid(self):
        return self.h.grid


def _comps(x):
    return x.comps if isinstance(x, TensorField) else np.asarray(x)


def _perturbed(jet, h):
    hc = _comps(h)
    if hc.shape != jet.g.shape:
        raise GridMismatch("h shape %s does not match metric %s"
                           % (hc.shape, jet.g.shape))
    return MetricJet(TensorField(jet.grid, ("l", "l"),
                                 jet.g + 1j * _CS_EPS * hc, sym=True),
                     check=False)


# ----------------------------------------------------------------------------
# exact discrete linearizations
# ----------------------------------------------------------------------------

def ric_prime(jet, h):
    jp = _perturbed(jet, h)
    return TensorField(jet.grid, ("l", "l"), np.imag(jp.ricci) / _CS_EPS,
                       sym=True)


def scal_prime(jet, h):
    jp = _perturbed(jet, h)
    return TensorField(jet.grid, (), np.imag(jp.scal) / _CS_EPS)


def hessian_prime(jet, h, f):
    jp = _perturbed(jet, h)
    hess = ct.hessian(jp, np.real(_comps(f)))
    return TensorField(jet.grid, ("l", "l"), np.imag(hess.comps) / _CS_EPS,
                       sym=True)


def laplacian_prime(jet, h, f):
    jp = _perturbed(jet, h)
    lap = ct.laplacian(jp, np.real(_comps(f)))
    return TensorField(jet.grid, (), np.imag(lap.comps) / _CS_EPS)


# ----------------------------------------------------------------------------
# display formulas (identity-suite counterparts)
# ----------------------------------------------------------------------------

def ric_prime_display(jet, h):
    """Lichnerowicz-form linearized Ricci with explicit curvature terms."""
    hf = h if isinstance(h, TensorField) else TensorField(
        jet.grid, ("l", "l"), h, sym=True)
    gi = jet.ginv
    n2h = ct.cov_deriv2(jet, hf).comps            # [..., i, j, k, l] = h_ij;kl
    tr = ct.trace2(jet, hf)
    tr_hess = ct.hessian(jet, tr).comps
    h_up = np.einsum("...lm,...mj->...lj", gi, hf.comps)
    ric = jet.ricci
    riem_low = np.einsum("...ia,...aklj->...iklj", jet.g, jet.riemann)
    hup2 = np.einsum("...ka,...lb,...ab->...kl", gi, gi, hf.comps)
    out = (-0.5 * np.einsum("...kl,...ijkl->...ij", gi, n2h)
           + 0.5 * np.einsum("...kl,...iklj->...ij", gi, n2h)
           + 0.5 * np.einsum("...kl,...jkli->...ij", gi, n2h)
           - 0.5 * tr_hess
           + 0.5 * (np.einsum("...il,...lj->...ij", ric, h_up)
                    + np.einsum("...jl,...li->...ij", ric, h_up))
           # curvature-term sign translated to this engine's Riemann
           # convention R^a_{bcd} = d_c G^a_{db} - d_d G^a_{cb} + [G, G]
           + np.einsum("...iklj,...kl->...ij", riem_low, hup2))
    return TensorField(jet.grid, ("l", "l"), out, sym=True)


def scal_prime_display(jet, h):
    """R'(h) = -lap(tr h) + Div Div h - <h, Ric>."""
    hf = h if isinstance(h, TensorField) else TensorField(
        jet.grid, ("l", "l"), h, sym=True)
    gi = jet.ginv
    tr = ct.trace2(jet, hf)
    lap_tr = ct.laplacian(jet, tr).comps
    n2h = ct.cov_deriv2(jet, hf).comps
    divdiv = np.einsum("...ik,...jl,...ijkl->...", gi, gi, n2h)
    dot = np.einsum("...ik,...jl,...ij,...kl->...", gi, gi, hf.comps,
                    jet.ricci)
    return TensorField(jet.grid, (), -lap_tr + divdiv - dot)


def hessian_prime_display(jet, h, f):
    """((hess)'(h) f)_ij = (1/2) g^{kl} f_,l (h_ij;k - h_jk;i - h_ik;j)."""
    hf = h if isinstance(h, TensorField) else TensorField(
        jet.grid, ("l", "l"), h, sym=True)
    df = ct.partials(jet.grid, _comps(f), 0)
    gradf = np.einsum("...kl,...l->...k", jet.ginv, df)
    nh = ct.cov_deriv(jet, hf).comps              # [..., i, j, k] = h_ij;k
    out = 0.5 * (np.einsum("...k,...ijk->...ij", gradf, nh)
                 - np.einsum("...k,...jki->...ij", gradf, nh)
                 - np.einsum("...k,...ikj->...ij", gradf, nh))
    return TensorField(jet.grid, ("l", "l"), out, sym=True)


def laplacian_prime_display(jet, h, f):
    """(lap)'(h) f = -g^{ik} g^{jl} f_;ij h_kl + g^{ij}(-(Div h)_i + (1/2)(tr h)_;i) f_,j."""
    hf = h if isinstance(h, TensorField) else TensorField(
        jet.grid, ("l", "l"), h, sym=True)
    gi = jet.ginv
    fc = _comps(f)
    hess_f = ct.hessian(jet, fc).comps
    df = ct.partials(jet.grid, fc, 0)
    beta_like = (-ct.divergence_sym2(jet, hf).comps
                 + 0.5 * ct.partials(jet.grid, ct.trace2(jet, hf).comps, 0))
    out = (-np.einsum("...ik,...jl,...ij,...kl->...", gi, gi, hess_f,
                      hf.comps)
           + np.einsum("...ij,...i,...j->...", gi, beta_like, df))
    return TensorField(jet.grid, (), out)


# ----------------------------------------------------------------------------
# S', L, and the Green-identity operators
# ----------------------------------------------------------------------------

def _perturbed_pair(pair, h, v):
    g_eps = TensorField(pair.grid, ("l", "l"),
                        pair.g.comps + 1j * _CS_EPS * _comps(h), sym=True)
    u_eps = TensorField(pair.grid, (),
                        pair.u.comps + 1j * _CS_EPS * _comps(v))
    return StaticPair(g_eps, u_eps)


def S_prime(pair: StaticPair, h, v):
    """Exact discrete linearization of the static vacuum operator."""
    first, second = static_vacuum_residual(_perturbed_pair(pair, h, v))
    return (TensorField(pair.grid, ("l", "l"),
                        np.imag(first.comps) / _CS_EPS, sym=True),
            TensorField(pair.grid, (), np.imag(second.comps) / _CS_EPS))


def L_apply(pair: StaticPair, h, v):
    """Interior S'(h, v) and boundary (h^T, H'(h)) on Sigma."""
    interior = S_prime(pair, h, v)
    grid = pair.grid
    sa = [grid.theta_axis, grid.phi_axis]
    nt = np.arange(len(grid.theta))
    h_top = _comps(h)[0][np.ix_(nt, sa, sa)]
    Hp = bgeo.H_prime(pair.jet, _comps(h))
    return interior, (h_top, Hp)


def _W_parent(pair: StaticPair):
    """W(g, u) = (R')^*(u) + (1/2) u R g = -u Ric + hess u - (lap u) g + (1/2) u R g."""
    jet = pair.jet
    u = pair.u.comps
    hess = ct.hessian(jet, u).comps
    lap = np.einsum("...ij,...ij->...", jet.ginv, hess)
    return (-u[..., None, None] * jet.ricci + hess
            - lap[..., None, None] * jet.g
            + 0.5 * (u * jet.scal)[..., None, None] * jet.g)


def _circ_full(jet, W, h):
    """(W o h)_ij = (1/2)(W_ik h^k_j + W_jk h^k_i) with ambient indices."""
    h_up = np.einsum("...km,...mj->...kj", jet.ginv, h)
    Wh = np.einsum("...ik,...kj->...ij", W, h_up)
    return 0.5 * (Wh + np.swapaxes(Wh, -1, -2))


def P_op(pair: StaticPair, h, v):
    """Full general-pair P, first variation of the mass functional density.

    P = (W'(h, v) - 2 W o h + (1/2)(tr h) W,  R'(h) + (1/2)(tr h) R)
    with W = (R')^*(u) + (1/2) u R g.  At a static vacuum pair W = 0 and
    P = (W'(h, v), R'(h)).
    """
    jet = pair.jet
    hc, vc = _comps(h), _comps(v)
    W = np.real(_W_parent(pair))
    Wp = np.imag(_W_parent(_perturbed_pair(pair, hc, vc))) / _CS_EPS
    trh = ct.trace2(jet, TensorField(pair.grid, ("l", "l"), hc,
                                     sym=True)).comps
    first = Wp - 2.0 * _circ_full(jet, W, hc) + 0.5 * trh[..., None,
                                                          None] * W
    Rp = scal_prime(jet, hc).comps
    second = Rp + 0.5 * trh * np.real(jet.scal)
    return (TensorField(pair.grid, ("l", "l"), first, sym=True),
            TensorField(pair.grid, (), second))


def _Q_parent(grid, g_comps, u_comps):
    """(u A - nu(u) g^T) and u on Sigma; complex-safe."""
    jet = MetricJet(TensorField(grid, ("l", "l"), g_comps, sym=True),
                    check=not np.iscomplexobj(g_comps))
    B = bgeo.boundary_restriction(jet, check=False)
    du = ct.partials(grid, u_comps, 0)
    nu_u = np.einsum("ti,ti->t", B.nu, du[0])
    core = u_comps[0][:, None, None] * B.A - nu_u[:, None, None] * B.g_top
    return core, u_comps[0], B


def Q_op(pair: StaticPair, h, v, simplified=False):
    """Boundary Green-identity operator on Sigma (surface indices).

    Full form: ((u A - nu(u) g^T)'(h,v), 2v) - (2 (u A - nu(u) g^T) o h^T, 0)
    + (1/2)(tr h^T)((u A - nu(u) g^T), 2u).  With ``simplified`` the
    static-vacuum corollary form (v A + u A'(h) - (nu'(h)u + nu(v)) g^T, 2v)
    is returned instead; the two agree whenever h^T = 0 on Sigma.
    """
    grid = pair.grid
    hc, vc = _comps(h), _comps(v)
    jet = pair.jet
    if simplified:
        B = bgeo.boundary_restriction(jet, check=False)
        nup, _, Ap, _ = bgeo.boundary_primes(jet, hc)
        du = ct.partials(grid, pair.u.comps, 0)
        dv = ct.partials(grid, vc, 0)
        nup_u = np.einsum("ti,ti->t", nup, du[0])
        nu_v = np.einsum("ti,ti->t", B.nu, dv[0])
        u0, v0 = pair.u.comps[0], vc[0]
        first = (v0[:, None, None] * B.A + u0[:, None, None] * Ap
                 - (nup_u + nu_v)[:, None, None] * B.g_top)
        return first, 2.0 * v0
    core0, u0, B = _Q_parent(grid, pair.g.comps, pair.u.comps)
    core_eps, _, _ = _Q_parent(grid, pair.g.comps + 1j * _CS_EPS * hc,
                               pair.u.comps + 1j * _CS_EPS * vc)
    core_p = np.imag(core_eps) / _CS_EPS
    sa = [grid.theta_axis, grid.phi_axis]
    nt = np.arange(len(grid.theta))
    h_top = hc[0][np.ix_(nt, sa, sa)]
    qinv = B.g_top_inv
    h_top_up = np.einsum("tkm,tmj->tkj", qinv, h_top)
    circ = np.einsum("tik,tkj->tij", np.real(core0), h_top_up)
    circ = 0.5 * (circ + np.swapaxes(circ, -1, -2))
    tr_h_top = np.einsum("tab,tab->t", qinv, h_top)
    first = (core_p - 2.0 * circ
             + 0.5 * tr_h_top[:, None, None] * np.real(core0))
    second = 2.0 * vc[0] + tr_h_top * u0
    return first, second


def radial_ops_jet(pair: StaticPair):
    """Convenience: the pair's metric jet (kept for API symmetry)."""
    return pair.jet
