"""Gauge operators, Killing-type vector operators, and the gauged basis.

Operators implemented here, with (g, u) a working pair and (gbar, ubar) the
reference background:

    G(g, u)        = beta_gbar g + ubar^-2 u du - ubar^-1 g(grad_gbar ubar, .)
    G'(h, v)       = beta h + ubar^-1 dv + ubar^-2 v dubar - ubar^-1 h(grad ubar, .)
    Gamma_pair(X)  = -lap_g X - u^-1 grad X(grad_g u, .) + u^-2 X(u) du
    hatGamma(Z)    = u Gamma_pair(Z) - u Ric(Z, .) + hess u (Z, .)
    kappa0(X)      = (L_X g - (Div X + u^-1 X(u)) g, -Div X + u^-1 X(u))
    kappa(X)       = (2 beta* X - ubar^-1 X(ubar) gbar,
                      -Div X + ubar^-1 X(ubar),
                      (-2 ubar beta* X + X(ubar) gbar)(nu, .), 0, 0)

The gauged vector basis solves, for each asymptotic Euclidean generator Z,
the linear problem Gamma(Y) = -Gamma(Z) with Y = -Z on the inner boundary
and a componentwise Robin decay row at the outer radius, and keeps
W = Y + Z together with its pair image (L_W gbar, W(ubar)).

All Laplacians of vectors/covectors are rough (connection) Laplacians.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import boundary_geometry as bgeo
from . import chart_tensor as ct
from .backgrounds import StaticPair
from .chart_tensor import TensorField
from .errors import (GridMismatch, RankDeficientBasis, SingularAssembly,
                     SolverDiverged)
from .linearized_ops import Deformation

__all__ = [
    "gauge_G",
    "gauge_G_prime",
    "Gamma",
    "Gamma_pair",
    "hatGamma",
    "kappa0",
    "KappaBlocks",
    "kappa",
    "l2_inner",
    "kappa0_orthogonality",
    "euclidean_killing_generators",
    "probe_sparse_matrix",
    "gamma_system_matrix",
    "gamma_smallest_singular_value",
    "GaugedVectorBasis",
    "build_gauged_killing_basis",
    "orthogonal_projection",
    "save_basis",
    "load_basis",
]


# ----------------------------------------------------------------------------
# the static-harmonic gauge operator and its linearization
# ----------------------------------------------------------------------------

def gauge_G(pair: StaticPair, background: StaticPair):
    """G(g, u) = beta_gbar g + ubar^-2 u du - ubar^-1 g(grad_gbar ubar, .)."""
    if pair.grid != background.grid:
        raise GridMismatch("pair and background on different grids")
    grid = pair.grid
    jet_bar = background.jet
    beta = ct.bianchi_beta(jet_bar, pair.g).comps
    du = ct.partials(grid, pair.u.comps, 0)
    dubar = ct.partials(grid, background.u.comps, 0)
    grad_ubar = np.einsum("...ij,...j->...i", jet_bar.ginv, dubar)
    ub = background.u.comps
    comps = (beta
             + (pair.u.comps / ub ** 2)[..., None] * du
             - (1.0 / ub)[..., None] * np.einsum(
                 "...ij,...j->...i", pair.g.comps, grad_ubar))
    return TensorField(grid, ("l",), comps)


def gauge_G_prime(background: StaticPair, h, v):
    """G'(h, v) = beta h + ubar^-1 dv + ubar^-2 v dubar - ubar^-1 h(grad ubar, .)."""
    grid = background.grid
    jet = background.jet
    h = h if isinstance(h, TensorField) else TensorField(
        grid, ("l", "l"), np.asarray(h), sym=True)
    vc = v.comps if isinstance(v, TensorField) else np.asarray(v)
    beta = ct.bianchi_beta(jet, h).comps
    dv = ct.partials(grid, vc, 0)
    dubar = ct.partials(grid, background.u.comps, 0)
    grad_ubar = np.einsum("...ij,...j->...i", jet.ginv, dubar)
    ub = background.u.comps
    comps = (beta
             + (1.0 / ub)[..., None] * dv
             + (vc / ub ** 2)[..., None] * dubar
             - (1.0 / ub)[..., None] * np.einsum(
                 "...ij,...j->...i", h.comps, grad_ubar))
    return TensorField(grid, ("l",), comps)


# ----------------------------------------------------------------------------
# the vector operators Gamma, Gamma_{(g,u)}, hatGamma
# ----------------------------------------------------------------------------

def _vector_and_covector(jet, X):
    if X.variance == ("u",):
        return X, ct.lower_index(jet, X, 0)
    if X.variance == ("l",):
        return ct.raise_index(jet, X, 0), X
    raise ValueError("X must be a rank-1 field")


def Gamma_pair(pair: StaticPair, X):
    """Gamma_{(g,u)}(X) = -lap X - u^-1 grad X(grad u, .) + u^-2 X(u) du.

    Accepts a vector or covector field; returns a covector field.  The
    Laplacian is the rough Laplacian of the covector and grad X(grad u, .)
    fills the derivative slot of grad X with grad u.
    """
    grid = pair.grid
    jet = pair.jet
    Xu, Xl = _vector_and_covector(jet, X)
    dd = ct.cov_deriv2(jet, Xl).comps                 # [..., a, k, l]
    lap = np.einsum("...kl,...akl->...a", jet.ginv, dd)
    nX = ct.cov_deriv(jet, Xl).comps                  # [..., a, k]
    du = ct.partials(grid, pair.u.comps, 0)
    grad_u = np.einsum("...ij,...j->...i", jet.ginv, du)
    slope = np.einsum("...ak,...k->...a", nX, grad_u)
    x_of_u = np.einsum("...i,...i->...", Xu.comps, du)
    u = pair.u.comps
    comps = (-lap
             - slope / u[..., None]
             + (x_of_u / u ** 2)[..., None] * du)
    return TensorField(grid, ("l",), comps)


def Gamma(background: StaticPair, X):
    """Gamma(X), the vector operator at the reference background pair."""
    return Gamma_pair(background, X)


def hatGamma(pair: StaticPair, Z):
    """hatGamma(Z) = u Gamma_{(g,u)}(Z) - u Ric(Z, .) + hess u (Z, .)."""
    grid = pair.grid
    jet = pair.jet
    Zu, _ = _vector_and_covector(jet, Z)
    gz = Gamma_pair(pair, Z).comps
    ric_z = np.einsum("...ij,...i->...j", jet.ricci, Zu.comps)
    hess_z = np.einsum("...ij,...i->...j",
                       ct.hessian(jet, pair.u).comps, Zu.comps)
    u = pair.u.comps[..., None]
    return TensorField(grid, ("l",), u * gz - u * ric_z + hess_z)


# ----------------------------------------------------------------------------
# cokernel fields kappa0 and kappa
# ----------------------------------------------------------------------------

def kappa0(pair: StaticPair, X):
    """kappa0 = (L_X g - (Div X + u^-1 X(u)) g, -Div X + u^-1 X(u))."""
    grid = pair.grid
    jet = pair.jet
    Xu, _ = _vector_and_covector(jet, X)
    lx = ct.lie_derivative(jet, Xu, jet.field).comps
    div = ct.divergence_vector(jet, Xu).comps
    du = ct.partials(grid, pair.u.comps, 0)
    x_of_u = np.einsum("...i,...i->...", Xu.comps, du)
    scal = -div + x_of_u / pair.u.comps
    h = lx - (div + x_of_u / pair.u.comps)[..., None, None] * pair.g.comps
    return (TensorField(grid, ("l", "l"), h, sym=True),
            TensorField(grid, (), scal))


@dataclass(eq=False)
class KappaBlocks:
    """The five blocks of kappa(X): two interior fields, three boundary rows."""

    interior_h: TensorField          # symmetric (0,2)
    interior_v: TensorField          # scalar
    boundary: np.ndarray             # covector rows on the inner boundary
    boundary_gtop: np.ndarray        # identically zero block
    boundary_H: np.ndarray           # identically zero block


def kappa(background: StaticPair, X):
    """The boundary-value-shaped cokernel field at the background."""
    grid = background.grid
    jet = background.jet
    Xu, _ = _vector_and_covector(jet, X)
    bstar = ct.bianchi_adjoint(jet, Xu).comps
    div = ct.divergence_vector(jet, Xu).comps
    du = ct.partials(grid, background.u.comps, 0)
    x_of_u = np.einsum("...i,...i->...", Xu.comps, du)
    ub = background.u.comps
    h = 2.0 * bstar - (x_of_u / ub)[..., None, None] * background.g.comps
    v = -div + x_of_u / ub
    B = bgeo.boundary_restriction(jet, check=False)
    M = (-2.0 * ub[0][..., None, None] * bstar[0]
         + x_of_u[0][..., None, None] * background.g.comps[0])
    boundary = np.einsum("tij,ti->tj", M, B.nu)
    nt = len(grid.theta)
    return KappaBlocks(TensorField(grid, ("l", "l"), h, sym=True),
                       TensorField(grid, (), v),
                       boundary,
                       np.zeros((nt, 2, 2)),
                       np.zeros(nt))


def l2_inner(jet, pair_a, pair_b):
    """Unweighted L^2 inner product of (sym2, scalar) deformation pairs."""
    ha, va = pair_a
    hb, vb = pair_b
    hdot = np.einsum("...ik,...jl,...ij,...kl->...", jet.ginv, jet.ginv,
                     np.real(ha.comps), np.real(hb.comps))
    va = va.comps if isinstance(va, TensorField) else va
    vb = vb.comps if isinstance(vb, TensorField) else vb
    return float(ct.integrate_dvol(jet, hdot + np.real(va) * np.real(vb)))


def kappa0_orthogonality(pair: StaticPair, X):
    """L^2 pairing of the pair's residual with kappa0(pair, X).

    Vanishes (up to quadrature and truncation) for compactly supported X.
    """
    from .backgrounds import static_vacuum_residual
    s1, s2 = static_vacuum_residual(pair)
    k_h, k_v = kappa0(pair, X)
    return l2_inner(pair.jet, (s1, s2), (k_h, k_v))


# ----------------------------------------------------------------------------
# asymptotic Euclidean generators (axisymmetric subset)
# ----------------------------------------------------------------------------

def euclidean_killing_generators(grid):
    """The axisymmetric Euclidean generators in the spherical chart.

    Axial translation: X^r = cos(theta), X^theta = -sin(theta)/r.
    Axial rotation:    X^phi = 1.
    """
    ir, it, ip = grid.r_axis, grid.theta_axis, grid.phi_axis
    rr, tt = grid.mesh()
    tz = np.zeros(grid.shape + (grid.dim,))
    tz[..., ir] = np.cos(tt)
    tz[..., it] = -np.sin(tt) / rr
    rz = np.zeros(grid.shape + (grid.dim,))
    rz[..., ip] = 1.0
    return [("translation_z", TensorField(grid, ("u",), tz)),
            ("rotation_z", TensorField(grid, ("u",), rz))]


# ----------------------------------------------------------------------------
# colored probing of grid-local linear operators into sparse matrices
# ----------------------------------------------------------------------------

def _theta_reader_sets(grid, reach_t):
    """For each theta row j, the rows whose stencils read column j."""
    nt = len(grid.theta)
    readers = []
    if not grid.pole_ghosts:
        for j in range(nt):
            readers.append(np.arange(max(0, j - reach_t),
                                     min(nt, j + reach_t + 1)))
        return readers
    for j in range(nt):
        s = set()
        for j2 in range(max(0, j - 3 * reach_t), min(nt, j + 3 * reach_t + 1)):
            for dj in range(-reach_t, reach_t + 1):
                p = j2 + dj
                if p < 0:
                    p = -1 - p            # parity fold at the axis
                elif p >= nt:
                    p = 2 * nt - 1 - p    # parity fold at the far axis
                if p == j:
                    s.add(j2)
        readers.append(np.array(sorted(s)))
    return readers


def probe_sparse_matrix(apply_fn, grid, ncomp, reach_r=3, reach_t=None,
                        verify=True):
    """Assemble a sparse matrix for a grid-local linear operator.

    ``apply_fn`` maps an array of shape grid.shape + (ncomp,) to an array of
    the same shape and must be linear.  ``reach_r``/``reach_t`` bound the
    stencil extent in index space (theta reach counts parity-folded
    positions).  Columns are probed in batches of one stencil color each.
    """
    nr, nt = grid.shape
    if reach_t is None:
        reach_t = ct._THETA_HALO if grid.pole_ghosts else 3
    cr = min(nr, 2 * reach_r + 1)
    ctt = min(nt, 2 * reach_t + 1)
    n = nr * nt * ncomp
    readers = _theta_reader_sets(grid, reach_t)

    ii, jj = np.meshgrid(np.arange(nr), np.arange(nt), indexing="ij")
    color_rj = (ii % cr) * ctt + (jj % ctt)

    rows_out, cols_out, vals_out = [], [], []
    comp_idx = np.arange(ncomp)
    for crj in range(cr * ctt):
        cells = np.argwhere(color_rj == crj)
        if cells.size == 0:
            continue
        for a in range(ncomp):
            e = np.zeros((nr, nt, ncomp))
            e[cells[:, 0], cells[:, 1], a] = 1.0
            R = np.asarray(apply_fn(e))
            for (i, j) in cells:
                col = (i * nt + j) * ncomp + a
                i0, i1 = max(0, i - reach_r), min(nr, i + reach_r + 1)
                block = R[i0:i1][:, readers[j], :]
                nz = np.nonzero(block)
                if nz[0].size == 0:
                    continue
                flat_rows = (((nz[0] + i0) * nt + readers[j][nz[1]]) * ncomp
                             + comp_idx[nz[2]])
                rows_out.append(flat_rows)
                cols_out.append(np.full(flat_rows.shape, col))
                vals_out.append(block[nz])
    A = sp.csr_matrix(
        (np.concatenate(vals_out),
         (np.concatenate(rows_out), np.concatenate(cols_out))),
        shape=(n, n))
    if verify:
        rng = np.random.default_rng(0)
        x = rng.standard_normal((nr, nt, ncomp))
        ref = np.asarray(apply_fn(x)).ravel()
        got = A @ x.ravel()
        scale = np.max(np.abs(ref)) + 1.0
        if np.max(np.abs(got - ref)) > 1e-10 * scale:
            raise SingularAssembly(
                "probed sparse matrix disagrees with the operator")
    return A


# ----------------------------------------------------------------------------
# the discrete Gamma boundary-value system
# ----------------------------------------------------------------------------

def _robin_rows(grid, Ycomps, decay_rate):
    """Robin decay rows d_r(c) + (q/r) c at the outer radius.

    ``c`` are the rescaled components (Y^r, r Y^theta, r sin(theta) Y^phi),
    which are O(1) in the asymptotically Cartesian frame.
    """
    ir, it, ip = grid.r_axis, grid.theta_axis, grid.phi_axis
    rr, tt = grid.mesh()
    c = np.zeros_like(Ycomps)
    c[..., ir] = Ycomps[..., ir]
    c[..., it] = rr * Ycomps[..., it]
    c[..., ip] = rr * np.sin(tt) * Ycomps[..., ip]
    dc = ct._d1_r(grid, c)
    return dc[-1] + (decay_rate / grid.r_out) * c[-1]


def _gamma_system_apply(background: StaticPair, decay_rate):
    grid = background.grid

    def apply_fn(Ycomps):
        Y = TensorField(grid, ("u",), Ycomps)
        out = Gamma_pair(background, Y).comps.copy()
        out[0] = Ycomps[0]
        out[-1] = _robin_rows(grid, Ycomps, decay_rate)
        return out

    return apply_fn


def gamma_system_matrix(background: StaticPair, decay_rate=0.9, verify=True):
    """Sparse matrix of Gamma with inner Dirichlet and outer Robin rows."""
    grid = background.grid
    return probe_sparse_matrix(_gamma_system_apply(background, decay_rate),
                               grid, grid.dim, verify=verify)


def gamma_smallest_singular_value(background: StaticPair, decay_rate=0.9,
                                  equilibrate=True):
    """Smallest singular value of the (row-equilibrated) Gamma system."""
    A = gamma_system_matrix(background, decay_rate)
    if equilibrate:
        scale = np.maximum(np.abs(A).max(axis=1).toarray().ravel(), 1e-300)
        A = sp.diags(1.0 / scale) @ A
    lu = spla.splu(A.tocsc())
    n = A.shape[0]
    op = spla.LinearOperator(
        (n, n), matvec=lu.solve,
        rmatvec=lambda b: lu.solve(b, trans="T"), dtype=float)
    smax_inv = spla.svds(op, k=1, return_singular_vectors=False)[0]
    return float(1.0 / smax_inv)


# ----------------------------------------------------------------------------
# the gauged vector basis
# ----------------------------------------------------------------------------

@dataclass(eq=False)
class GaugedVectorBasis:
    """Vector fields W with Gamma(W) ~ 0, W = 0 on the inner boundary."""

    background: StaticPair
    names: list
    W: list
    images: list                     # (L_W gbar, W(ubar)) per W
    residuals: dict
    gram: np.ndarray
    _ortho: list = dc_field(default=None, repr=False, compare=False)

    @property
    def count(self):
        return len(self.W)

    def orthonormal_images(self):
        if self._ortho is None:
            self._ortho = _orthonormalize(self.background.jet, self.images,
                                          self.gram)
        return self._ortho


def _pair_image(background: StaticPair, W):
    jet = background.jet
    lw = ct.lie_derivative(jet, W, jet.field)
    dubar = ct.partials(background.grid, background.u.comps, 0)
    w_of_u = np.einsum("...i,...i->...", W.comps, dubar)
    return lw, TensorField(background.grid, (), w_of_u)


def build_gauged_killing_basis(background: StaticPair, grid=None,
                               decay_rate=0.9, tol=1e-8):
    """Solve Gamma(Y) = -Gamma(Z), Y = -Z on the inner boundary, per generator.

    Returns the basis of W = Y + Z with pair images and their Gram matrix
    under the rho-weighted L^2 product.  Intended for axisymmetric grids,
    where the generator set has two elements.
    """
    if grid is None:
        grid = background.grid
    if grid != background.grid:
        raise GridMismatch("basis grid differs from background grid")
    A = gamma_system_matrix(background, decay_rate)
    lu = spla.splu(A.tocsc())
    jet = background.jet
    names, Ws, images, residuals = [], [], [], {}
    for name, Z in euclidean_killing_generators(grid):
        rhs = -Gamma_pair(background, Z).comps
        rhs[0] = -Z.comps[0]
        rhs[-1] = 0.0
        b = rhs.ravel()
        y = lu.solve(b)
        lin_res = float(np.max(np.abs(A @ y - b)) / (np.max(np.abs(b)) + 1.0))
        if not np.isfinite(lin_res) or lin_res > tol:
            raise SolverDiverged(
                "Gamma solve for %s: residual %g > %g" % (name, lin_res, tol))
        Y = TensorField(grid, ("u",), y.reshape(grid.shape + (grid.dim,)))
        W = TensorField(grid, ("u",), Y.comps + Z.comps)
        gamma_w = Gamma_pair(background, W).comps
        gamma_sup = float(np.max(np.abs(gamma_w[1:-1])))
        sigma_sup = float(np.max(np.abs(W.comps[0])))
        lw, w_of_u = _pair_image(background, W)
        image_size = float(np.sqrt(ct.l2rho_inner(jet, (lw, w_of_u),
                                                  (lw, w_of_u))))
        names.append(name)
        Ws.append(W)
        images.append((lw, w_of_u))
        residuals[name] = {"linear_residual": lin_res,
                           "gamma_sup": gamma_sup,
                           "sigma_sup": sigma_sup,
                           "image_norm": image_size}
    k = len(images)
    gram = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            gram[i, j] = gram[j, i] = ct.l2rho_inner(jet, images[i],
                                                     images[j])
    if np.linalg.cond(gram) > 1e8:
        raise RankDeficientBasis(
            "Gram condition number %g" % np.linalg.cond(gram))
    return GaugedVectorBasis(background, names, Ws, images, residuals, gram)


def _orthonormalize(jet, images, gram=None):
    """Modified Gram-Schmidt under the rho-weighted L^2 product."""
    if gram is not None and np.linalg.cond(gram) > 1e8:
        raise RankDeficientBasis(
            "Gram condition number %g" % np.linalg.cond(gram))
    out = []
    for (h, v) in images:
        hc, vc = h.comps.copy(), v.comps.copy()
        grid = h.grid
        for _ in range(2):                   # re-orthogonalization pass
            for eh, ev in out:
                c = ct.l2rho_inner(jet, (TensorField(grid, ("l", "l"), hc,
                                                     sym=True), vc),
                                   (eh, ev))
                hc = hc - c * eh.comps
                vc = vc - c * ev.comps
        hf = TensorField(grid, ("l", "l"), hc, sym=True)
        vf = TensorField(grid, (), vc)
        nrm = np.sqrt(ct.l2rho_inner(jet, (hf, vf), (hf, vf)))
        if not np.isfinite(nrm) or nrm <= 1e-14:
            raise RankDeficientBasis("near-zero image in orthonormalization")
        out.append((TensorField(grid, ("l", "l"), hc / nrm, sym=True),
                    TensorField(grid, (), vc / nrm)))
    return out


def orthogonal_projection(h, v, basis: GaugedVectorBasis) -> Deformation:
    """Project (h, v) onto the rho-weighted orthogonal complement of the
    basis pair images."""
    jet = basis.background.jet
    grid = basis.background.grid
    if h.grid != grid:
        raise GridMismatch("deformation and basis on different grids")
    hc, vc = h.comps.copy(), np.array(
        v.comps if isinstance(v, TensorField) else v)
    es = basis.orthonormal_images()
    for _ in range(2):                       # second pass sharpens orthogonality
        for eh, ev in es:
            c = ct.l2rho_inner(jet, (TensorField(grid, ("l", "l"), hc,
                                                 sym=True), vc), (eh, ev))
            hc = hc - c * eh.comps
            vc = vc - c * ev.comps
    return Deformation(TensorField(grid, ("l", "l"), hc, sym=True),
                       TensorField(grid, (), vc))


# ----------------------------------------------------------------------------
# basis persistence
# ----------------------------------------------------------------------------

def save_basis(path, basis: GaugedVectorBasis):
    """Persist basis fields with a manifest of generators and residuals."""
    fields = {}
    for name, W, (ih, iv) in zip(basis.names, basis.W, basis.images):
        fields["W/" + name] = W
        fields["image_h/" + name] = ih
        fields["image_v/" + name] = iv
    manifest = {"generators": basis.names,
                "residuals": basis.residuals,
                "gram": basis.gram.tolist()}
    ct.save_fields(path, fields, extra_meta={"manifest": json.dumps(manifest)})


def load_basis(path, background: StaticPair) -> GaugedVectorBasis:
    grid, fields = ct.load_fields(path)
    if grid != background.grid:
        raise GridMismatch("basis file grid differs from background grid")
    with open(path, "rb") as fh:
        raw = ct._unpack(fh)
    manifest = None
    for _, (_, meta) in raw.items():
        if "manifest" in meta:
            manifest = json.loads(meta["manifest"])
            break
    if manifest is None:
        raise ValueError("basis container lacks a manifest")
    names = manifest["generators"]
    Ws = [fields["W/" + n] for n in names]
    images = [(fields["image_h/" + n], fields["image_v/" + n]) for n in names]
    return GaugedVectorBasis(background, names, Ws, images,
                             manifest["residuals"],
                             np.array(manifest["gram"]))
