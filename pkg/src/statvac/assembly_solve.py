"""Discrete assembly of the gauged linearization, kernel probing, and the
damped Newton solve of the modified extension problem.

Unknown layout per node (axisym2d chart, dim = 3):

    slots 0..5   h (or g - gbar) symmetric components, order
                 (rr, rt, rp, tt, tp, pp)
    slot  6      v (or u - ubar)
    slots 7..9   W components (modified system only)

Row layout mirrors the operator displays: interior nodes carry the two
gauged equations (plus the vector row for the modified system); the inner
boundary carries (gauge row, tangential metric row, mean-curvature row,
W Dirichlet rows); the outer boundary carries componentwise Robin decay
rows on asymptotically Cartesian rescaled components.

The modified system is bordered with one Lagrange row per gauged-basis
image enforcing the weighted-L2 orthogonality that defines the complement
of the kernel, and one matching column per image holding the eta-weighted
cokernel field, keeping the bordered matrix square.

The Newton solve works on the background-subtracted defect

    F(x) = Tbar(background + x) - Tbar(background) - (0, ..., dtau, dphi)

which vanishes identically at x = 0, so the achievable residual is set by
the linear-solver precision rather than by the truncation error of the
background itself.  Jacobians are exact discrete derivatives of F obtained
by complex-step probing, so the iteration is a true Newton method.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import boundary_geometry as bgeo
from . import chart_tensor as ct
from . import gauge
from .backgrounds import StaticPair, check_static
from .chart_tensor import TensorField
from .errors import (GridMismatch, LineSearchFailed, MaxIterations,
                     NoSpectralGap, OutsideNeighborhood, SingularAssembly)
from .linearized_ops import Deformation, S_prime

__all__ = [
    "DOFMap",
    "DiscreteOperator",
    "NewtonTrace",
    "SolveOptions",
    "assemble_LG",
    "kernel_probe",
    "assemble_modified",
    "modified_residual",
    "newton_solve_extension",
    "pack_deformation",
    "unpack_deformation",
]

_CS_EPS = 1e-100

# symmetric-component order (rr, rt, rp, tt, tp, pp) and multiplicities
_SYM = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_SYM_MULT = np.array([1.0, 2.0, 2.0, 1.0, 2.0, 1.0])


def _sym_to_full(x6):
    """Six symmetric slots -> full (..., 3, 3) array."""
    out = np.zeros(x6.shape[:-1] + (3, 3), dtype=x6.dtype)
    for a, (i, j) in enumerate(_SYM):
        out[..., i, j] = x6[..., a]
        out[..., j, i] = x6[..., a]
    return out


def _full_to_sym(h):
    out = np.zeros(h.shape[:-2] + (6,), dtype=h.dtype)
    for a, (i, j) in enumerate(_SYM):
        out[..., a] = h[..., i, j]
    return out


def pack_deformation(d: Deformation):
    """Deformation -> unknown array of shape grid.shape + (7,)."""
    out = np.zeros(d.grid.shape + (7,))
    out[..., :6] = _full_to_sym(d.h.comps)
    out[..., 6] = d.v.comps
    return out


def unpack_deformation(grid, x):
    """Unknown array (first 7 slots) -> Deformation."""
    h = TensorField(grid, ("l", "l"), _sym_to_full(x[..., :6]), sym=True)
    v = TensorField(grid, (), np.array(x[..., 6]))
    return Deformation(h, v)


# ----------------------------------------------------------------------------
# DOF bookkeeping
# ----------------------------------------------------------------------------

@dataclass(eq=False)
class DOFMap:
    """Bijection between unknown indices and (field, component, node)."""

    grid: ct.ChartGrid
    ncomp: int                    # unknowns per node (7 or 10)
    nborder: int = 0              # Lagrange multipliers

    _SLOT_FIELDS = (("h", 0), ("h", 1), ("h", 2), ("h", 3), ("h", 4),
                    ("h", 5), ("v", 0), ("W", 0), ("W", 1), ("W", 2))

    @property
    def size(self):
        nr, nt = self.grid.shape
        return nr * nt * self.ncomp + self.nborder

    def index(self, i, j, slot):
        nt = len(self.grid.theta)
        return (i * nt + j) * self.ncomp + slot

    def describe(self, idx):
        """Unknown index -> (field, component, i, j) or ('border', ell)."""
        nr, nt = self.grid.shape
        base = nr * nt * self.ncomp
        if idx >= base:
            return ("border", idx - base, -1, -1)
        node, slot = divmod(idx, self.ncomp)
        i, j = divmod(node, nt)
        field, comp = self._SLOT_FIELDS[slot]
        return (field, comp, i, j)

    def row_class(self, idx):
        field, comp, i, j = self.describe(idx)
        if field == "border":
            return "border"
        nr = len(self.grid.r)
        if i == nr - 1:
            return "outerDecay"
        if i == 0:
            if field == "h" and comp < 3:
                return "boundaryGauge"
            if field == "h":
                return "boundaryTau"
            if field == "v":
                return "boundaryH"
            return "boundaryW"
        if field == "h":
            return "interiorMetric"
        if field == "v":
            return "interiorScalar"
        return "interiorW"


@dataclass(eq=False)
class DiscreteOperator:
    """A probed sparse operator with its DOF map and assembly metadata."""

    matrix: sp.csr_matrix
    dofmap: DOFMap
    meta: dict = dc_field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(eq=False)
class NewtonTrace:
    """Per-iteration convergence record of the Newton solve."""

    records: list = dc_field(default_factory=list)
    converged: bool = False

    def add(self, **kw):
        self.records.append(dict(kw))

    @property
    def residuals(self):
        return [r["residual"] for r in self.records]


# ----------------------------------------------------------------------------
# outer decay rows
# ----------------------------------------------------------------------------

def _comp_scales(grid):
    """Asymptotically Cartesian per-index scales (1, r, r sin(theta))."""
    rr, tt = grid.mesh()
    return np.stack([np.ones_like(rr), rr, rr * np.sin(tt)], axis=-1)


def _robin_block(grid, x, decay_rate):
    """Robin decay rows at the outer radius for a full unknown block.

    ``x`` has shape grid.shape + (ncomp,).  Metric slots are rescaled by the
    product of the per-index scales, W slots by the single scale, before
    taking d_r c + (q / r_out) c.
    """
    s = _comp_scales(grid)
    c = np.array(x)
    for a, (i, j) in enumerate(_SYM):
        c[..., a] = x[..., a] / (s[..., i] * s[..., j])
    if x.shape[-1] > 7:
        for k in range(3):
            c[..., 7 + k] = x[..., 7 + k] * s[..., k]
    dc = ct._d1_r(grid, c)
    return dc[-1] + (decay_rate / grid.r_out) * c[-1]


# ----------------------------------------------------------------------------
# the gauged linearization L^G as a grid-local linear map
# ----------------------------------------------------------------------------

def _LG_apply_fn(background: StaticPair, decay_rate):
    grid = background.grid
    jet = background.jet
    ub = background.u.comps
    du_bar = ct.partials(grid, ub, 0)
    grad_ubar = np.einsum("...ij,...j->...i", jet.ginv, du_bar)
    sa = [grid.theta_axis, grid.phi_axis]
    nt_idx = np.arange(len(grid.theta))

    def apply_fn(x):
        h = TensorField(grid, ("l", "l"), _sym_to_full(x[..., :6]), sym=True)
        v = x[..., 6]
        s1, s2 = S_prime(background, h, v)
        Gp = gauge.gauge_G_prime(background, h, v)
        Gp_vec = ct.raise_index(jet, Gp, 0)
        DG = ct.D_operator(jet, Gp_vec).comps
        row_h = s1.comps - ub[..., None, None] * DG
        row_v = s2.comps - np.einsum("...i,...i->...", Gp.comps, grad_ubar)
        out = np.zeros(grid.shape + (7,))
        out[..., :6] = _full_to_sym(row_h)
        out[..., 6] = row_v
        # inner boundary rows: (G'(h,v), h^T, H'(h))
        out[0, :, 0:3] = Gp.comps[0]
        h_top = h.comps[0][np.ix_(nt_idx, sa, sa)]
        out[0, :, 3] = h_top[:, 0, 0]
        out[0, :, 4] = h_top[:, 0, 1]
        out[0, :, 5] = h_top[:, 1, 1]
        out[0, :, 6] = bgeo.H_prime(jet, h.comps)
        # outer rows: gauge components pin down G'(h, v) at the truncation
        # ring (without them the annulus admits gauge-violating near-kernel
        # modes with G' != 0 growing toward the outer boundary); the
        # remaining slots carry Robin decay rows.
        robin = _robin_block(grid, x, decay_rate)
        out[-1, :, 0:3] = Gp.comps[-1]
        out[-1, :, 3:7] = robin[:, 3:7]
        return out

    return apply_fn


def _detect_reach(apply_fn, grid, ncomp):
    """Measure the stencil reach of a grid-local operator by probing."""
    nr, nt = grid.shape
    j0 = nt // 2
    reach_r = reach_t = 0
    probes = [(i, j0, a) for a in range(ncomp)
              for i in (0, 1, 2, 3, nr // 2, nr - 3, nr - 2, nr - 1)]
    for (i, j, a) in probes:
        e = np.zeros((nr, nt, ncomp))
        e[i, j, a] = 1.0
        R = np.asarray(apply_fn(e))
        nz = np.argwhere(np.any(R != 0.0, axis=-1))
        if nz.size:
            reach_r = max(reach_r, int(np.max(np.abs(nz[:, 0] - i))))
            reach_t = max(reach_t, int(np.max(np.abs(nz[:, 1] - j))))
    return reach_r + 1, reach_t + 1


def assemble_LG(background: StaticPair, grid=None, decay_rate=0.9,
                verify=True) -> DiscreteOperator:
    """Sparse matrix of L^G with boundary and outer decay rows.

    Interior rows are the two gauged equations; the inner boundary carries
    (G'(h, v), h^T, H'(h)); the outer boundary carries Robin decay rows.
    """
    if grid is not None and grid != background.grid:
        raise GridMismatch("background not on the requested grid")
    grid = background.grid
    check_static(background)
    fn = _LG_apply_fn(background, decay_rate)
    reach_r, reach_t = _detect_reach(fn, grid, 7)
    A = gauge.probe_sparse_matrix(fn, grid, 7, reach_r=reach_r,
                                  reach_t=reach_t, verify=verify)
    return DiscreteOperator(A, DOFMap(grid, 7),
                            {"kind": "LG", "decay_rate": decay_rate,
                             "reach": (reach_r, reach_t)})


# ----------------------------------------------------------------------------
# kernel probing
# ----------------------------------------------------------------------------

def _row_equilibrated(A):
    scale = np.maximum(np.abs(A).max(axis=1).toarray().ravel(), 1e-300)
    return sp.diags(1.0 / scale) @ A


def _grid_volume_weights(grid):
    """Flat-chart nodal volume weights r^2 sin(theta) dr dtheta."""
    wr = ct.radial_trapezoid_weights(grid.r)
    rr, tt = grid.mesh()
    return wr[:, None] * grid.dtheta * rr ** 2 * np.sin(tt)


def _physical_column_scales(dofmap):
    """Per-unknown scale turning raw chart values into weighted-frame values.

    Multiplying the raw unknown by this scale gives sqrt(volume weight)
    times the orthonormal-frame component (with symmetric multiplicities),
    so the Euclidean norm of the scaled vector is the discrete weighted-L2
    norm of the deformation.  Data-blind equilibration is unreliable here:
    chart factors like sin^2(theta) in phi-indexed columns near the axis
    masquerade as near-null columns and produce spurious tiny singular
    values concentrated in the first cells off the poles.
    """
    grid = dofmap.grid
    s = _comp_scales(grid)
    sq = np.sqrt(_grid_volume_weights(grid))
    dc = np.zeros(grid.shape + (dofmap.ncomp,))
    for a, (i, j) in enumerate(_SYM):
        dc[..., a] = sq * np.sqrt(_SYM_MULT[a]) / (s[..., i] * s[..., j])
    dc[..., 6] = sq
    for k in range(dofmap.ncomp - 7):
        dc[..., 7 + k] = sq * s[..., k]
    flat = dc.reshape(-1)
    if dofmap.nborder:
        flat = np.concatenate([flat, np.ones(dofmap.nborder)])
    return flat


def _physically_scaled(op):
    """(scaled matrix, column scale): physical columns, unit-inf-norm rows."""
    A = op.matrix.tocsr()
    dc = _physical_column_scales(op.dofmap)
    A = A @ sp.diags(1.0 / dc)
    rmax = np.maximum(np.abs(A).max(axis=1).toarray().ravel(), 1e-300)
    return (sp.diags(1.0 / rmax) @ A).tocsr(), dc


def kernel_probe(op, tol_gap=10.0, k=6, near_null=1e-6):
    """Smallest singular values, spectral-gap kernel dimension, and vectors.

    The near-kernel is the set of singular values at or below ``near_null``
    (a residual ceiling in the row-normalized scaled units of the assembly);
    the reported dimension is the largest count d of such values that is
    separated from sigma_{d+1} by a ratio >= ``tol_gap``.  Taking the largest
    qualifying gap rather than the widest one matters: the discrete kernel
    vectors converge at different rates, so the widest ratio often sits
    *inside* the kernel cluster and would split it.

    Returns a dict with ``dimension``, ``singular_values`` (ascending),
    ``gap_ratio``, ``no_gap`` and ``vectors`` (columns of the unknown-space
    near-kernel, reshaped to Deformations when a DOFMap is available).  A
    missing gap is reported via ``no_gap`` (and a NoSpectralGap instance in
    ``error``), not raised, so sweeps can continue.  ``op`` may also be a
    plain (sparse or dense) matrix, probed without physical scaling.
    """
    if isinstance(op, DiscreteOperator):
        Aeq, dcol = _physically_scaled(op)
    else:
        Aeq = sp.csr_matrix(op)
        dcol = np.ones(Aeq.shape[1])
    n = Aeq.shape[0]
    k = int(min(k, n - 2))
    if n <= 2000:
        _, s, vt = np.linalg.svd(Aeq.toarray())
        sigma = s[::-1][:k]
        vecs = vt[::-1][:k].T
    else:
        try:
            lu = spla.splu(Aeq.tocsc())
        except RuntimeError as exc:
            raise SingularAssembly("operator is exactly singular: %s" % exc)
        lin = spla.LinearOperator(
            (n, n), matvec=lu.solve,
            rmatvec=lambda b: lu.solve(b, trans="T"), dtype=float)
        u, s, _ = spla.svds(lin, k=k)
        order = np.argsort(s)[::-1]        # largest of inverse first
        sigma = 1.0 / s[order]             # ascending smallest of A
        vecs = u[:, order]                 # right singular directions, scaled
    vecs = vecs / dcol[:, None]            # back to the unknown space
    vecs /= np.linalg.norm(vecs, axis=0, keepdims=True)
    ratios = sigma[1:] / np.maximum(sigma[:-1], 1e-300)
    below = sigma[:-1] <= near_null
    qualifying = np.nonzero(below & (ratios >= tol_gap))[0]
    no_gap = False
    err = None
    if sigma[0] > near_null:
        dimension = 0
        gap_ratio = float(sigma[0] / near_null)
    elif qualifying.size:
        m = int(qualifying[-1])
        dimension = m + 1
        gap_ratio = float(ratios[m])
    else:
        dimension = 0
        gap_ratio = float(ratios.max()) if ratios.size else 0.0
        no_gap = True
        err = NoSpectralGap(sigma.tolist(), tol_gap)
    result = {"dimension": dimension,
              "singular_values": sigma,
              "gap_ratio": gap_ratio,
              "no_gap": no_gap,
              "error": err,
              "vectors": vecs[:, :max(dimension, 1)]}
    if isinstance(op, DiscreteOperator) and op.dofmap.nborder == 0:
        grid = op.dofmap.grid
        ncomp = op.dofmap.ncomp
        defs = []
        for c in range(dimension):
            x = vecs[:, c].reshape(grid.shape + (ncomp,))
            defs.append(unpack_deformation(grid, x))
        result["deformations"] = defs
    return result


# ----------------------------------------------------------------------------
# the nonlinear modified operator (background-subtracted defect form)
# ----------------------------------------------------------------------------

def modified_residual(pair: StaticPair, W, background: StaticPair,
                      tau=None, phi=None, decay_rate=0.9, eta=None):
    """Row values of the modified operator at (pair, W), shape + (10,).

    Interior rows: the two gauged equations with the eta-weighted W terms
    and the vector row Gamma_{(g,u)}(W) + (-Ric + u^-1 hess u)(W, .).
    Inner boundary: gauge row with its W term, then (g^T - tau, H - phi).
    Outer boundary: gauge components, then Robin decay rows on the deviation
    from the background and on W.  Complex-step safe in all inputs.
    """
    grid = pair.grid
    jet = pair.jet
    u = pair.u.comps
    Wc = W.comps if isinstance(W, TensorField) else np.asarray(W)
    Wf = TensorField(grid, ("u",), Wc)
    if eta is None:
        eta = ct.eta_values(grid)

    du = ct.partials(grid, u, 0)
    w_of_u = np.einsum("...i,...i->...", Wc, du)
    hess_u = ct.hessian(jet, pair.u).comps
    lap_u = np.einsum("...ij,...ij->...", jet.ginv, hess_u)
    grad_u = np.einsum("...ij,...j->...i", jet.ginv, du)

    G = gauge.gauge_G(pair, background)
    G_vec = ct.raise_index(jet, G, 0)
    DG = ct.D_operator(jet, G_vec).comps
    bstarW = ct.bianchi_adjoint(jet, Wf).comps
    divW = ct.divergence_vector(jet, Wf).comps

    row_h = (-u[..., None, None] * jet.ricci + hess_u
             - u[..., None, None] * DG
             - eta[..., None, None] * (
                 2.0 * bstarW - (w_of_u / u)[..., None, None] * pair.g.comps))
    row_v = (lap_u - np.einsum("...i,...i->...", G.comps, grad_u)
             + eta * (divW - w_of_u / u))
    gam = gauge.Gamma_pair(pair, Wf).comps
    row_W = gam + np.einsum("...ij,...i->...j",
                            -jet.ricci + hess_u / u[..., None, None], Wc)

    dtype = np.result_type(pair.g.comps, u, Wc)
    out = np.zeros(grid.shape + (10,), dtype=dtype)
    out[..., :6] = _full_to_sym(row_h)
    out[..., 6] = row_v
    out[..., 7:10] = row_W

    # inner boundary rows
    B = bgeo.boundary_restriction(jet, check=False)
    M = (2.0 * u[0][..., None, None] * bstarW[0]
         - w_of_u[0][..., None, None] * pair.g.comps[0])
    out[0, :, 0:3] = G.comps[0] + np.einsum("tij,ti->tj", M, B.nu)
    g_top = B.g_top
    out[0, :, 3] = g_top[:, 0, 0]
    out[0, :, 4] = g_top[:, 0, 1]
    out[0, :, 5] = g_top[:, 1, 1]
    out[0, :, 6] = B.H
    if tau is not None:
        out[0, :, 3] -= tau[:, 0, 0]
        out[0, :, 4] -= tau[:, 0, 1]
        out[0, :, 5] -= tau[:, 1, 1]
    if phi is not None:
        out[0, :, 6] -= phi
    out[0, :, 7:10] = Wc[0]

    # outer rows: gauge components at the truncation ring (same structure
    # as the assembled linearization, whose outer rows carry G'(h, v)) plus
    # Robin decay rows on the deviation from the background and on W
    x = np.zeros(grid.shape + (10,), dtype=dtype)
    x[..., :6] = _full_to_sym(pair.g.comps - background.g.comps)
    x[..., 6] = u - background.u.comps
    x[..., 7:10] = Wc
    robin = _robin_block(grid, x, decay_rate)
    out[-1, :, 0:3] = G.comps[-1]
    out[-1, :, 3:10] = robin[:, 3:10]
    return out


def _iterate_pair(background: StaticPair, x, cs_dir=None):
    """Background + deviation x (+ i*eps*cs_dir for complex-step probes)."""
    grid = background.grid
    g = background.g.comps + _sym_to_full(x[..., :6])
    u = background.u.comps + x[..., 6]
    Wc = np.array(x[..., 7:10])
    if cs_dir is not None:
        g = g + 1j * _CS_EPS * _sym_to_full(cs_dir[..., :6])
        u = u + 1j * _CS_EPS * cs_dir[..., 6]
        Wc = Wc + 1j * _CS_EPS * cs_dir[..., 7:10]
    pair = StaticPair(TensorField(grid, ("l", "l"), g, sym=True),
                      TensorField(grid, (), u))
    return pair, Wc


def _jacobian_apply_fn(background, x0, decay_rate, eta):
    def apply_fn(dx):
        pair, Wc = _iterate_pair(background, x0, cs_dir=dx)
        R = modified_residual(pair, Wc, background,
                              decay_rate=decay_rate, eta=eta)
        return np.imag(R) / _CS_EPS

    return apply_fn


def _border_blocks(background: StaticPair, basis, eta):
    """Lagrange rows C (orthogonality to basis images, weighted L2) and the
    matching columns B (eta-weighted cokernel fields kappa(W_ell))."""
    grid = background.grid
    jet = background.jet
    w_vol = ct._node_volume_weights(jet)
    rho = ct.rho_values(grid)
    wr = w_vol * rho
    n = grid.shape[0] * grid.shape[1] * 10
    rows = []
    cols = []
    for Wvec, (im_h, im_v) in zip(basis.W, basis.images):
        M = np.einsum("...ik,...jl,...kl->...ij", jet.ginv, jet.ginv,
                      im_h.comps)
        row = np.zeros(grid.shape + (10,))
        row[..., :6] = wr[..., None] * _full_to_sym(M) * _SYM_MULT
        row[..., 6] = wr * im_v.comps
        rows.append(row.ravel())

        kb = gauge.kappa(background, Wvec)
        col = np.zeros(grid.shape + (10,))
        col[..., :6] = eta[..., None] * _full_to_sym(kb.interior_h.comps)
        col[..., 6] = eta * kb.interior_v.comps
        col[0, :, 0:3] = kb.boundary
        col[-1] = 0.0
        cols.append(col.ravel())
    C = sp.csr_matrix(np.array(rows)) if rows else sp.csr_matrix((0, n))
    B = (sp.csr_matrix(np.array(cols)).T if cols
         else sp.csr_matrix((n, 0)))
    return B, C


def assemble_modified(background: StaticPair, grid=None, basis=None,
                      x0=None, decay_rate=0.9, verify=True,
                      report_sigma=False) -> DiscreteOperator:
    """Bordered sparse matrix of the linearized modified operator.

    The node block is the exact complex-step Jacobian of the modified
    residual at deviation ``x0`` (default: the background itself); the
    border couples the Lagrange orthogonality rows with the eta-weighted
    cokernel columns.
    """
    if grid is not None and grid != background.grid:
        raise GridMismatch("background not on the requested grid")
    grid = background.grid
    if basis is None:
        basis = gauge.build_gauged_killing_basis(background,
                                                 decay_rate=decay_rate)
    if x0 is None:
        x0 = np.zeros(grid.shape + (10,))
    eta = ct.eta_values(grid)
    fn = _jacobian_apply_fn(background, x0, decay_rate, eta)
    reach_r, reach_t = _detect_reach(fn, grid, 10)
    A = gauge.probe_sparse_matrix(fn, grid, 10, reach_r=reach_r,
                                  reach_t=reach_t, verify=verify)
    B, C = _border_blocks(background, basis, eta)
    nb = C.shape[0]
    M = sp.bmat([[A, B], [C, sp.csr_matrix((nb, nb))]], format="csr")
    meta = {"kind": "modified", "decay_rate": decay_rate,
            "reach": (reach_r, reach_t), "nborder": nb}
    if report_sigma:
        Aeq = _row_equilibrated(M)
        lu = spla.splu(Aeq.tocsc())
        n = M.shape[0]
        lin = spla.LinearOperator(
            (n, n), matvec=lu.solve,
            rmatvec=lambda b: lu.solve(b, trans="T"), dtype=float)
        smax_inv = spla.svds(lin, k=1, return_singular_vectors=False)[0]
        meta["sigma_min"] = float(1.0 / smax_inv)
    return DiscreteOperator(M, DOFMap(grid, 10, nborder=nb), meta)


# ----------------------------------------------------------------------------
# the Newton solve
# ----------------------------------------------------------------------------

@dataclass
class SolveOptions:
    """Options for newton_solve_extension."""

    max_iter: int = 10
    tol: float = 1e-9              # defect residual (sup norm)
    tol_W: float = 1e-8
    tol_gauge: float = 1e-8
    neighborhood_eps: float = 0.1  # gate on relative boundary-data size
    decay_rate: float = 0.9
    damping_floor: float = 2.0 ** -10
    reassemble: bool = True        # re-probe the Jacobian every iteration
    verify_assembly: bool = True


def _as_boundary_data(background, tau, phi):
    bdata = bgeo.bartnik_data(background.jet)
    if isinstance(tau, bgeo.BartnikData):
        phi = tau.phi if phi is None else phi
        tau = tau.tau
    tau = np.asarray(tau, float)
    phi = np.asarray(phi, float)
    if tau.shape != bdata.tau.shape or phi.shape != bdata.phi.shape:
        raise GridMismatch("boundary data shaped %s/%s, expected %s/%s"
                           % (tau.shape, phi.shape, bdata.tau.shape,
                              bdata.phi.shape))
    return tau, phi, bdata


def newton_solve_extension(background: StaticPair, tau, phi=None,
                           opts: SolveOptions = None, basis=None):
    """Solve the modified extension problem for boundary data (tau, phi).

    Returns (pair, W field, trace, info).  The residual is the
    background-subtracted defect, so the background itself is an exact
    discrete solution of its own boundary data.
    """
    opts = opts or SolveOptions()
    grid = background.grid
    tau, phi, bdata = _as_boundary_data(background, tau, phi)

    scale_tau = float(np.max(np.abs(bdata.tau)))
    scale_phi = float(np.max(np.abs(bdata.phi)))
    rel = (np.max(np.abs(tau - bdata.tau)) / scale_tau
           + np.max(np.abs(phi - bdata.phi)) / scale_phi)
    if rel > opts.neighborhood_eps:
        raise OutsideNeighborhood(
            "boundary data %g away from the background (gate %g)"
            % (rel, opts.neighborhood_eps))

    if basis is None:
        basis = gauge.build_gauged_killing_basis(
            background, decay_rate=opts.decay_rate)
    eta = ct.eta_values(grid)
    R_bg = np.real(modified_residual(
        background, np.zeros(grid.shape + (3,)), background,
        decay_rate=opts.decay_rate, eta=eta))

    dtarget = np.zeros(grid.shape + (10,))
    dtarget[0, :, 3] = tau[:, 0, 0] - bdata.tau[:, 0, 0]
    dtarget[0, :, 4] = tau[:, 0, 1] - bdata.tau[:, 0, 1]
    dtarget[0, :, 5] = tau[:, 1, 1] - bdata.tau[:, 1, 1]
    dtarget[0, :, 6] = phi - bdata.phi

    B, C = _border_blocks(background, basis, eta)
    nb = C.shape[0]

    def defect(x, lam):
        pair, Wc = _iterate_pair(background, x)
        R = np.real(modified_residual(pair, Wc, background,
                                      decay_rate=opts.decay_rate, eta=eta))
        top = (R - R_bg - dtarget).ravel() + (B @ lam if nb else 0.0)
        bot = C @ x.ravel() if nb else np.zeros(0)
        return np.concatenate([top, bot])

    x = np.zeros(grid.shape + (10,))
    lam = np.zeros(nb)
    r = defect(x, lam)
    trace = NewtonTrace()
    op = None
    for it in range(opts.max_iter):
        res_sup = float(np.max(np.abs(r)))
        if res_sup <= opts.tol:
            trace.converged = True
            break
        if op is None or opts.reassemble:
            op = assemble_modified(background, basis=basis, x0=x,
                                   decay_rate=opts.decay_rate,
                                   verify=opts.verify_assembly)
        lu = spla.splu(op.matrix.tocsc())
        step = lu.solve(-r)
        dx = step[:x.size].reshape(x.shape)
        dlam = step[x.size:]
        alpha = 1.0
        norm0 = float(np.linalg.norm(r))
        while True:
            r_try = defect(x + alpha * dx, lam + alpha * dlam)
            if float(np.linalg.norm(r_try)) < norm0:
                break
            alpha *= 0.5
            if alpha < opts.damping_floor:
                raise LineSearchFailed(
                    "no residual decrease above damping floor %g"
                    % opts.damping_floor)
        x = x + alpha * dx
        lam = lam + alpha * dlam
        r = r_try
        pair, Wc = _iterate_pair(background, x)
        trace.add(residual=float(np.max(np.abs(r))),
                  residual_interior=float(np.max(np.abs(
                      r[:x.size].reshape(x.shape)[1:-1]))),
                  residual_boundary=float(np.max(np.abs(
                      r[:x.size].reshape(x.shape)[0]))),
                  damping=alpha,
                  W_norm=float(np.max(np.abs(Wc))),
                  gauge_residual=float(np.max(np.abs(
                      gauge.gauge_G(pair, background).comps))))
    else:
        if float(np.max(np.abs(r))) > opts.tol:
            raise MaxIterations(
                "residual %g after %d iterations (tol %g)"
                % (float(np.max(np.abs(r))), opts.max_iter, opts.tol))
        trace.converged = True

    pair, Wc = _iterate_pair(background, x)
    W = TensorField(grid, ("u",), Wc)
    achieved = bgeo.bartnik_data(pair.jet)
    info = {
        "residual": float(np.max(np.abs(r))),
        "W_norm": float(np.max(np.abs(Wc))),
        "gauge_residual": float(np.max(np.abs(
            gauge.gauge_G(pair, background).comps))),
        "tau_mismatch": float(np.max(np.abs(achieved.tau - tau))),
        "phi_mismatch": float(np.max(np.abs(achieved.phi - phi))),
        "deviation_norm": float(np.max(np.abs(x[..., :7]))),
        "lambda": lam,
    }
    if info["W_norm"] > opts.tol_W:
        info["W_warning"] = ("converged W norm %g above tolerance %g"
                             % (info["W_norm"], opts.tol_W))
    return pair, W, trace, info
