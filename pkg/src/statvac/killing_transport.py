"""Transport of approximate Killing data along curves, and the geodesic gauge.

For a symmetric (0,2)-tensor h define the (1,2)-tensor

    (T_h)^i_{jk} = (1/2) (h^i_{j;k} + h^i_{k;j} - h_{jk;}^i).

A vector field X with L_X g = h satisfies, for every vector V,

    nabla_V X     = omega(V)
    nabla_V omega = -R(X, V) + T_h(V, .)

with omega = nabla X.  These identities hold pointwise for any V, so the
first-order system can be integrated along any piecewise-smooth coordinate
curve; it is integrated along true geodesics only where a geodesic
congruence is required (the normal congruence of the geodesic gauge).

In this engine's curvature convention (R^a_{bcd} with
(nabla_c nabla_d - nabla_d nabla_c) W^a = R^a_{bcd} W^b), the component
form of the system with omega_{ij} = X_{i;j} (first index lowered) is

    dX_i/dt      = V^k Gamma^a_{ki} X_a + omega_{ik} V^k
    domega_ij/dt = V^k (Gamma^a_{ki} omega_{aj} + Gamma^a_{kj} omega_{ia})
                   + V^k (-R^a_{kij} X_a + (T_h)_{ijk}).

Along every curve the combination omega_{ij} + omega_{ji} - h_{ij} is
conserved; its drift is monitored per transport.

Geometry (connection, curvature, T_h, metric) is interpolated with
precomputed tensor-product cubic splines on the chart, with parity ghost
rows across the poles so paths may graze the axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline, make_interp_spline

from . import boundary_geometry as bgeo
from . import chart_tensor as ct
from .backgrounds import StaticPair
from .chart_tensor import TensorField
from .errors import (CollarTooThin, GridMismatch, InconsistentContinuation,
                     PathLeftDomain, StepSizeUnderflow)

__all__ = [
    "T_h_tensor",
    "TransportState",
    "GeodesicPath",
    "TransportGeometry",
    "transport",
    "geodesic_gauge_vector",
    "extend_h_killing",
]


# ----------------------------------------------------------------------------
# the T_h tensor
# ----------------------------------------------------------------------------

def _T_h_lowered(jet, h):
    """(T_h)_{ijk} = (1/2)(h_{ij;k} + h_{ik;j} - h_{jk;i}); symmetric in (j,k)."""
    nh = ct.cov_deriv(jet, h).comps            # [..., i, j, k] = h_{ij;k}
    return 0.5 * (nh
                  + np.einsum("...ikj->...ijk", nh)
                  - np.einsum("...jki->...ijk", nh))


def T_h_tensor(jet, h):
    """(T_h)^i_{jk} as a rank-(1,2) field, first index raised by g."""
    if h.grid != jet.grid:
        raise GridMismatch("h and metric on different grids")
    low = _T_h_lowered(jet, h)
    comps = np.einsum("...ia,...ajk->...ijk", jet.ginv, low)
    return TensorField(jet.grid, ("u", "l", "l"), comps)


# ----------------------------------------------------------------------------
# tensor-product cubic splines with parity ghosts across the poles
# ----------------------------------------------------------------------------

class _Spline2D:
    """Precomputed tensor-product spline for batched components."""

    def __init__(self, r, theta, values, degree=3):
        self.k = degree
        s1 = make_interp_spline(r, values, k=degree, axis=0)
        self.tr = s1.t
        s2 = make_interp_spline(theta, s1.c, k=degree, axis=1)
        self.tt = s2.t
        self.c = s2.c          # interpolation axis is moved to the front

    def __call__(self, rv, tv):
        try:
            br = BSpline.design_matrix(np.atleast_1d(rv), self.tr, self.k)
            bt = BSpline.design_matrix(np.atleast_1d(tv), self.tt, self.k)
        except ValueError as exc:
            raise PathLeftDomain(
                "point (r=%g, theta=%g) outside the chart" % (rv, tv)
            ) from exc
        # only k+1 consecutive basis functions are nonzero at a point, so
        # restrict the contraction to that window of the coefficient array
        ir, it = br.indices, bt.indices
        sub = self.c[it[0]:it[-1] + 1, ir[0]:ir[-1] + 1]
        return np.einsum("i,j,ji...->...", br.data, bt.data, sub)


def _extended_theta(grid, layers):
    th = grid.theta
    if not grid.pole_ghosts or layers == 0:
        return th
    north = -th[layers - 1::-1]
    south = (2.0 * np.pi - th)[:-layers - 1:-1]
    return np.concatenate([north, th, south])


def _extend(grid, comps, rank, layers):
    if not grid.pole_ghosts or layers == 0:
        return comps
    return ct._theta_extend(grid, comps, rank, layers=layers)


class TransportGeometry:
    """Splined connection, curvature, metric, and optional h on one chart."""

    def __init__(self, pair: StaticPair, h=None, degree=3, overrides=None):
        grid = pair.grid
        if grid.regime != "axisym2d":
            raise GridMismatch("transport requires an axisym2d grid")
        self.grid = grid
        self.pair = pair
        self.has_h = h is not None
        jet = pair.jet
        over = dict(overrides or {})
        layers = min(ct._THETA_HALO, len(grid.theta))

        def pick(name, default, rank):
            # closed-form nodal arrays may replace the finite-difference jet
            # (needed when spline accuracy must beat the stencil error)
            arr = over.pop(name, None)
            return _extend(grid, default if arr is None else arr, rank,
                           layers)

        blocks = [
            (pick("Gamma", jet.Gamma, 3), 27),
            (pick("riemann", jet.riemann, 4), 81),
            (pick("g", jet.g, 2), 9),
            (pick("ginv", jet.ginv, 2), 9),
        ]
        if self.has_h:
            if h.grid != grid:
                raise GridMismatch("h and pair on different grids")
            blocks.append((pick("t_low", _T_h_lowered(jet, h), 3), 27))
            blocks.append((pick("h", h.comps, 2), 9))
        if over:
            raise ValueError("unknown overrides: %s" % sorted(over))
        flat = [b.reshape(b.shape[0], b.shape[1], -1) for b, _ in blocks]
        packed = np.concatenate(flat, axis=-1)
        th_ext = _extended_theta(grid, layers)
        # weight by sin(theta) before fitting: chart components with a
        # cot(theta)-type axis singularity become smooth, so the fit does
        # not ring near the poles; evaluation divides the weight back out
        packed = packed * np.sin(th_ext)[None, :, None]
        self._spline = _Spline2D(grid.r, th_ext, packed, degree=degree)

    def at(self, x):
        """Geometry sample at chart point x = (r, theta)."""
        w = np.sin(x[1])
        if abs(w) < 1e-12:
            raise PathLeftDomain(
                "geometry evaluation on the symmetry axis (theta=%g)"
                % (x[1],))
        vals = self._spline(x[0], x[1]) / w
        gamma = vals[0:27].reshape(3, 3, 3)
        riem = vals[27:108].reshape(3, 3, 3, 3)
        g = vals[108:117].reshape(3, 3)
        ginv = vals[117:126].reshape(3, 3)
        if self.has_h:
            t_low = vals[126:153].reshape(3, 3, 3)
            h = vals[153:162].reshape(3, 3)
        else:
            t_low = np.zeros((3, 3, 3))
            h = np.zeros((3, 3))
        return gamma, riem, g, ginv, t_low, h


# ----------------------------------------------------------------------------
# transport state, paths, and the adaptive integrator
# ----------------------------------------------------------------------------

@dataclass(eq=False)
class TransportState:
    """Transport data at a point: position, tangent, X, omega.

    ``X`` holds vector components, ``X_cov`` the covector, and ``omega``
    the matrix omega_{ij} = X_{i;j} with the first index lowered.
    """

    x: np.ndarray          # chart point (r, theta)
    V: np.ndarray          # chart tangent (3,)
    X: np.ndarray          # vector components (3,)
    X_cov: np.ndarray      # covector components (3,)
    omega: np.ndarray      # (3, 3), first index lowered
    t: float               # accumulated curve parameter (coordinate length)
    drift: float = 0.0     # sup |omega + omega^T - h| change along the curve


@dataclass(eq=False)
class GeodesicPath:
    """A piecewise-linear chart path through waypoints (r, theta).

    Each segment is a straight coordinate segment integrated with its chord
    tangent; the transport system is valid along any such curve.
    """

    waypoints: np.ndarray

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, float))
        if self.waypoints.shape[0] < 2 or self.waypoints.shape[1] != 2:
            raise ValueError("path needs at least two (r, theta) waypoints")

    @property
    def start(self):
        return self.waypoints[0]

    @property
    def end(self):
        return self.waypoints[-1]

    def segments(self):
        for a, b in zip(self.waypoints[:-1], self.waypoints[1:]):
            yield a, b


def _rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + dt / 2.0, y + dt / 2.0 * k1)
    k3 = f(t + dt / 2.0, y + dt / 2.0 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(f, t0, t1, y0, tol, outputs=()):
    """Adaptive RK4 with step doubling; local error <= tol per unit parameter.

    ``outputs`` is an increasing sequence of parameter values in (t0, t1]
    at which the state is recorded exactly (steps are clamped to land on
    them).  Returns (y_end, recorded_states).
    """
    span = t1 - t0
    if span <= 0:
        return y0.copy(), []
    targets = list(outputs) + ([] if outputs and np.isclose(
        outputs[-1], t1) else [t1])
    t, y = t0, y0.copy()
    dt = span / 16.0
    recorded = []
    yscale = 1.0 + np.max(np.abs(y0))
    for tgt in targets:
        while t < tgt - 1e-14 * span:
            dt = min(dt, tgt - t)
            if dt < 1e-13 * span:
                raise StepSizeUnderflow("step %g below floor" % dt)
            y_big = _rk4_step(f, t, y, dt)
            y_mid = _rk4_step(f, t, y, dt / 2.0)
            y_two = _rk4_step(f, t + dt / 2.0, y_mid, dt / 2.0)
            err = np.max(np.abs(y_two - y_big)) / 15.0
            allowed = tol * dt * yscale
            if err <= allowed:
                t += dt
                y = y_two + (y_two - y_big) / 15.0
                yscale = max(yscale, 1.0 + np.max(np.abs(y)))
                grow = 0.9 * (allowed / err) ** 0.25 if err > 0 else 2.0
                dt *= min(2.0, max(1.0, grow))
            else:
                dt *= max(0.25, 0.9 * (allowed / err) ** 0.25)
        recorded.append((tgt, y.copy()))
        t = tgt
    return recorded[-1][1], recorded if outputs else recorded[:-1]


def _pack(X_cov, omega):
    return np.concatenate([X_cov, omega.ravel()])


def _unpack(y):
    return y[:3], y[3:12].reshape(3, 3)


def _rhs(geom: TransportGeometry, x, V, y):
    """Right-hand side of the (X, omega) system at chart point x."""
    gamma, riem, _, _, t_low, _ = geom.at(x)
    X_cov, omega = _unpack(y)
    gv = np.einsum("k,aki->ia", V, gamma)          # V^k Gamma^a_{ki} -> (i, a)
    dX = gv @ X_cov + omega @ V
    domega = (np.einsum("ia,aj->ij", gv, omega)
              + np.einsum("ja,ia->ij", gv, omega)
              - np.einsum("akij,a,k->ij", riem, X_cov, V)
              + np.einsum("ijk,k->ij", t_low, V))
    return np.concatenate([dX, domega.ravel()])


def _drift_value(geom, x, y):
    _, _, _, _, _, h = geom.at(x)
    _, omega = _unpack(y)
    return np.max(np.abs(omega + omega.T - h))


def _lift_tangent(d):
    return np.array([d[0], d[1], 0.0])


def transport(pair: StaticPair, p, X0, omega0, path: GeodesicPath, h=None,
              tol=1e-9, geometry: TransportGeometry = None) -> TransportState:
    """Integrate (X, omega) along ``path`` from initial data at its start.

    ``X0`` holds vector components, ``omega0`` the matrix omega_{ij} with
    the first index lowered.  ``p``, if given, must match the path start.
    """
    if geometry is None:
        geometry = TransportGeometry(pair, h)
    if p is not None and not np.allclose(np.asarray(p, float), path.start):
        raise ValueError("p differs from the path start")
    x0 = path.start
    _, _, g0, _, _, _ = geometry.at(x0)
    X_cov = g0 @ np.asarray(X0, float)
    y = _pack(X_cov, np.asarray(omega0, float))
    t_total = 0.0
    drift0 = _drift_value(geometry, x0, y)
    drift = 0.0
    V = _lift_tangent(path.waypoints[1] - path.waypoints[0])
    for a, b in path.segments():
        d = b - a
        length = float(np.hypot(d[0], d[1]))
        if length == 0.0:
            continue
        V = _lift_tangent(d / length)

        def f(t, y, a=a, V3=V, d=d, length=length):
            x = a + (t / length) * d
            return _rhs(geometry, x, V3, y)

        y, _ = _integrate(f, 0.0, length, y, tol)
        t_total += length
        drift = max(drift, abs(_drift_value(geometry, b, y) - drift0))
    xe = path.end
    _, _, _, ginv_e, _, _ = geometry.at(xe)
    X_cov, omega = _unpack(y)
    return TransportState(x=np.asarray(xe, float), V=V, X=ginv_e @ X_cov,
                          X_cov=X_cov, omega=omega, t=t_total,
                          drift=drift / max(t_total, 1e-300))


# ----------------------------------------------------------------------------
# the geodesic gauge along the normal congruence
# ----------------------------------------------------------------------------

def _initial_omega(h0, n_vec, n_cov):
    """Initial omega on the boundary from h: omega(e_a, nu) = h(e_a, nu),
    omega(nu, nu) = h(nu, nu)/2, other blocks zero (first index is the
    covector slot of nabla X)."""
    hn = h0 @ n_vec                             # h_{kl} n^l
    hnn = float(n_vec @ hn)
    tang = hn - hnn * n_cov                     # tangential part of h(., nu)
    return (np.outer(tang, n_cov) + 0.5 * hnn * np.outer(n_cov, n_cov))


def geodesic_gauge_vector(pair: StaticPair, h, i_r_max=None,
                          theta_indices=None, tol=1e-9,
                          geometry: TransportGeometry = None):
    """Vector field X with X = 0 on the inner boundary and
    L_X g(nu, .) = h(nu, .) along the normal geodesic congruence.

    Integrates geodesics radially from the boundary (the affine tangent V
    is part of the state, so nabla_V V = 0 holds to integrator tolerance)
    together with the (X, omega) transport, recording X at every radial
    node.  Returns (X field, report).
    """
    grid = pair.grid
    if i_r_max is None:
        i_r_max = len(grid.r) - 1
    if i_r_max < 2:
        raise CollarTooThin("need at least three radial rows")
    if theta_indices is None:
        theta_indices = range(len(grid.theta))
    geom = geometry if geometry is not None else TransportGeometry(pair, h)
    jet = pair.jet
    B = bgeo.boundary_restriction(jet, check=False)
    X_out = np.zeros(grid.shape + (3,))
    max_theta_drift = 0.0
    max_vnorm_drift = 0.0
    for j in theta_indices:
        x0 = np.array([grid.r_sigma, grid.theta[j]])
        n_vec = B.nu[j]
        n_cov = B.nu_cov[j]
        omega0 = _initial_omega(h.comps[0, j], n_vec, n_cov)
        # state: (theta, V(3), X_cov(3), omega(9)); independent variable r
        y = np.concatenate([[grid.theta[j]], n_vec, np.zeros(3),
                            omega0.ravel()])

        def f(r, y):
            x = np.array([r, y[0]])
            V = y[1:4]
            gamma, riem, _, _, t_low, _ = geom.at(x)
            if V[0] <= 0:
                raise PathLeftDomain("congruence turned inward")
            dV = -np.einsum("ijk,j,k->i", gamma, V, V) / V[0]
            dtheta = V[1] / V[0]
            dy_xo = _rhs(geom, x, V, y[4:]) / V[0]
            return np.concatenate([[dtheta], dV, dy_xo])

        targets = [float(rv) for rv in grid.r[1:i_r_max + 1]]
        _, recorded = _integrate(f, float(grid.r_sigma), targets[-1], y, tol,
                                 outputs=targets)
        for (rv, ystate), i in zip(recorded, range(1, i_r_max + 1)):
            theta_i = ystate[0]
            max_theta_drift = max(max_theta_drift,
                                  abs(theta_i - grid.theta[j]))
            _, _, gi, ginv_i, _, _ = geom.at(np.array([rv, theta_i]))
            Vi = ystate[1:4]
            max_vnorm_drift = max(max_vnorm_drift,
                                  abs(float(Vi @ gi @ Vi) - 1.0))
            X_out[i, j] = ginv_i @ ystate[4:7]
    X_field = TensorField(grid, ("u",), X_out)
    report = {"theta_drift": float(max_theta_drift),
              "speed_drift": float(max_vnorm_drift),
              "tol": tol}
    return X_field, report


# ----------------------------------------------------------------------------
# extension by path continuation
# ----------------------------------------------------------------------------

def _nearest_node(grid, x):
    i = int(np.argmin(np.abs(grid.r - x[0])))
    j = int(np.argmin(np.abs(grid.theta - x[1])))
    return i, j


def extend_h_killing(pair: StaticPair, X_local, h, targets, anchor=None,
                     strict=True, tol=1e-9,
                     geometry: TransportGeometry = None,
                     omega_local=None):
    """Extend approximate Killing data from an anchor to the whole chart.

    Takes initial data (X, nabla X) from ``X_local`` at ``anchor`` (a chart
    point; defaults to the chart center), transports it along coordinate
    paths to every node, and checks two L-shaped paths per explicit
    ``target``.  Returns (X field, report); with ``strict`` a two-path
    disagreement beyond 10x tolerance raises InconsistentContinuation.
    """
    grid = pair.grid
    if X_local.grid != grid:
        raise GridMismatch("X_local and pair on different grids")
    geom = geometry if geometry is not None else TransportGeometry(pair, h)
    jet = pair.jet
    if anchor is None:
        anchor = np.array([grid.r[len(grid.r) // 2],
                           grid.theta[len(grid.theta) // 2]])
    anchor = np.asarray(anchor, float)
    ia, ja = _nearest_node(grid, anchor)
    anchor = np.array([grid.r[ia], grid.theta[ja]])

    X_cov_field = ct.lower_index(jet, X_local, 0)
    if omega_local is not None:
        omega_field = np.asarray(omega_local, float)
    else:
        omega_field = ct.cov_deriv(jet, X_cov_field).comps
    layers = min(ct._THETA_HALO, len(grid.theta))
    th_ext = _extended_theta(grid, layers)
    sp_X = _Spline2D(grid.r, th_ext, _extend(grid, X_cov_field.comps, 1,
                                             layers))
    sp_om = _Spline2D(grid.r, th_ext,
                      _extend(grid, omega_field, 2, layers))
    X0_cov = sp_X(anchor[0], anchor[1])
    om0 = sp_om(anchor[0], anchor[1])
    y0 = _pack(X0_cov, om0)

    # sweep theta at the anchor radius, then radially at each theta node
    states_theta = {ja: y0}

    def theta_f(r):
        def f(t, y):
            return _rhs(geom, np.array([r, t]), np.array([0.0, 1.0, 0.0]), y)
        return f

    for j in range(ja + 1, len(grid.theta)):
        y_prev = states_theta[j - 1]
        y, _ = _integrate(theta_f(anchor[0]), grid.theta[j - 1],
                          grid.theta[j], y_prev, tol)
        states_theta[j] = y
    for j in range(ja - 1, -1, -1):
        y_prev = states_theta[j + 1]

        def f(t, y):
            return _rhs(geom, np.array([anchor[0], -t]),
                        -np.array([0.0, 1.0, 0.0]), y)

        y, _ = _integrate(f, -grid.theta[j + 1], -grid.theta[j], y_prev, tol)
        states_theta[j] = y

    X_out = np.zeros(grid.shape + (3,))
    max_drift = 0.0
    for j in range(len(grid.theta)):
        yj = states_theta[j]
        xj = np.array([anchor[0], grid.theta[j]])
        drift0 = _drift_value(geom, xj, yj)

        def radial_f(t, y, thj=grid.theta[j], sgn=+1.0):
            return sgn * _rhs(geom, np.array([sgn * t, thj]),
                              np.array([1.0, 0.0, 0.0]), y)

        # outward
        targets_r = [float(rv) for rv in grid.r[ia + 1:]]
        if targets_r:
            _, rec = _integrate(radial_f, float(anchor[0]), targets_r[-1],
                                yj, tol, outputs=targets_r)
            for (rv, ystate), i in zip(rec, range(ia + 1, len(grid.r))):
                _, _, _, ginv_i, _, _ = geom.at(np.array([rv, grid.theta[j]]))
                X_out[i, j] = ginv_i @ ystate[:3]
                max_drift = max(max_drift, abs(
                    _drift_value(geom, np.array([rv, grid.theta[j]]), ystate)
                    - drift0) / (rv - anchor[0]))
        # inward (integrate in s = -r so the parameter increases)
        targets_in = [float(-rv) for rv in grid.r[ia - 1::-1]]
        if targets_in:
            def f_in(t, y, thj=grid.theta[j]):
                # d y / d(-r) = -rhs with V = -e_r gives dy/ds, s = -r
                return -_rhs(geom, np.array([-t, thj]),
                             np.array([1.0, 0.0, 0.0]), y)

            _, rec = _integrate(f_in, float(-anchor[0]), targets_in[-1],
                                yj, tol, outputs=targets_in)
            for (sv, ystate), i in zip(rec, range(ia - 1, -1, -1)):
                rv = -sv
                _, _, _, ginv_i, _, _ = geom.at(np.array([rv, grid.theta[j]]))
                X_out[i, j] = ginv_i @ ystate[:3]
                max_drift = max(max_drift, abs(
                    _drift_value(geom, np.array([rv, grid.theta[j]]), ystate)
                    - drift0) / (anchor[0] - rv))
        # the anchor-radius node itself
        _, _, _, ginv_j, _, _ = geom.at(xj)
        X_out[ia, j] = ginv_j @ yj[:3]

    # two-path consistency per explicit target
    target_reports = []
    worst = 0.0
    _, _, _, ginv_a, _, _ = geom.at(anchor)
    X0_vec = ginv_a @ X0_cov
    for tgt in targets:
        tgt = np.asarray(tgt, float)
        p1 = GeodesicPath([anchor, [tgt[0], anchor[1]], tgt])
        p2 = GeodesicPath([anchor, [anchor[0], tgt[1]], tgt])
        s1 = transport(pair, None, X0_vec, om0, p1, h=h, tol=tol,
                       geometry=geom)
        s2 = transport(pair, None, X0_vec, om0, p2, h=h, tol=tol,
                       geometry=geom)
        dis = max(float(np.max(np.abs(s1.X_cov - s2.X_cov))),
                  float(np.max(np.abs(s1.omega - s2.omega))))
        worst = max(worst, dis)
        target_reports.append({"target": tgt.tolist(), "disagreement": dis,
                               "drift": max(s1.drift, s2.drift)})
    scale = 1.0 + float(np.max(np.abs(X0_cov))) + float(np.max(np.abs(om0)))
    if strict and worst > 10.0 * tol * scale:
        raise InconsistentContinuation(
            "two-path disagreement %g exceeds 10x tolerance" % worst)

    X_field = TensorField(grid, ("u",), X_out)
    lie = ct.lie_derivative(jet, X_field, jet.field).comps
    lie_residual = float(np.max(np.abs(lie - h.comps)))
    report = {"targets": target_reports,
              "max_disagreement": worst,
              "drift": float(max_drift),
              "lie_residual": lie_residual}
    return X_field, report
