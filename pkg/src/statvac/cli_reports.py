"""Experiment configs, reports, and the command line interface.

An ExperimentConfig (JSON on disk) selects one experiment kind, a
background, a grid, a seed, and kind-specific parameters; unknown keys
anywhere in the config are errors.  ``run`` executes the experiment
deterministically (bit-identical outputs for a fixed config, modulo wall
clock) and returns a Report of named check records; ``Report.save`` writes
``report.json`` plus ``checks.csv``, and ``export_plot_data`` writes
plot-ready CSVs with a stable column schema:

* ``newton_trace.csv``: iter, residual, damping, W_norm
* ``family_sweep.csv``: t, r, kernel_dim, sigma_min_gap
* ``convergence.csv``: delta, residual, slope

Exit codes: 0 all checks pass, 1 a check failed, 2 config error, 3 solver
error.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
import warnings
from dataclasses import dataclass, field

import click
import numpy as np

from . import assembly_solve as asm
from . import boundary_geometry as bgeo
from . import chart_tensor as ct
from . import diagnostics as dg
from . import gauge
from . import killing_transport as kt
from . import linearized_ops as lin
from . import testfields as tf
from .backgrounds import (BackgroundSpec, make_background, save_pair,
                          static_vacuum_residual)
from .errors import ConfigInvalid, StatvacError

KINDS = ("verify-formulas", "kernel-scan", "solve-extension", "mass",
         "killing-transport", "family-sweep", "identity-suite")

_SOLVER_ERRORS = tuple(
    getattr(__import__("statvac.errors", fromlist=[n]), n)
    for n in ("SolverDiverged", "MaxIterations", "LineSearchFailed",
              "StepSizeUnderflow", "SingularAssembly", "NoSpectralGap",
              "OutsideNeighborhood", "InconsistentContinuation"))


# ----------------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------------

_TOP_KEYS = {"schema", "kind", "seed", "background", "grid", "params"}
_BG_KEYS = {"kind", "m", "n", "path"}
_GRID_KEYS = {"regime", "r_sigma", "r_out", "num_r", "num_theta", "grading"}

_DEFAULTS = {
    "verify-formulas": {
        "background": {"kind": "schwarzschild", "m": 0.5},
        "grid": {"regime": "radial1d", "r_sigma": 1.5, "r_out": 20.0,
                 "num_r": 512},
        "params": {"levels": 5, "tol_finest": 1e-6, "order_target": 2.0,
                   "order_slack": 0.3, "fd_epsilons": [1e-3, 1e-4],
                   "fd_order_min": 1.8, "fd_num_r": 64,
                   "fd_amplitude": 20.0},
    },
    "kernel-scan": {
        "background": {"kind": "schwarzschild", "m": 0.5},
        "grid": {"regime": "axisym2d", "r_sigma": 1.5, "r_out": 2.5,
                 "num_r": 40, "num_theta": 24},
        "params": {"tol_gap": 10.0, "k": 6},
    },
    "solve-extension": {
        "background": {"kind": "schwarzschild", "m": 0.5},
        "grid": {"regime": "axisym2d", "r_sigma": 2.0, "r_out": 6.0,
                 "num_r": 40, "num_theta": 24},
        "params": {"eps": 1e-3, "max_iter": 10, "tol": 1e-9, "tol_W": 1e-8,
                   "tol_gauge": 1e-8, "tol_data": 1e-8},
    },
    "mass": {
        "background": {"kind": "schwarzschild", "m": 0.5},
        "grid": {"regime": "radial1d", "r_sigma": 1.5, "r_out": 48.0,
                 "num_r": 160},
        "params": {"m_values": [0.25, 0.5, 1.0], "radii": [8.0, 16.0, 32.0],
                   "rel_tol": 0.01, "linearity_tol": 0.02},
    },
    "killing-transport": {
        "background": {"kind": "euclidean"},
        "grid": {"regime": "axisym2d", "r_sigma": 1.5, "r_out": 6.0,
                 "num_r": 40, "num_theta": 48},
        "params": {"tol": 1e-10, "recovery_tol": 1e-6, "drift_tol": 1e-8,
                   "twopath_factor": 10.0},
    },
    "family-sweep": {
        "background": {"kind": "schwarzschild", "m": 0.5},
        "grid": {"regime": "axisym2d", "r_sigma": 1.5, "r_out": 2.5,
                 "num_r": 40, "num_theta": 24},
        "params": {"t_range": [1.5, 3.0], "num_steps": 8,
                   "annulus_width": 1.0, "tol_gap": 10.0,
                   "retry_shape": [56, 32], "budget_factor": 10.0},
    },
    "identity-suite": {
        "background": {"kind": "schwarzschild", "m": 0.5},
        "grid": {"regime": "axisym2d", "r_sigma": 2.0, "r_out": 8.0,
                 "num_r": 32, "num_theta": 16},
        "params": {"budget_factor": 10.0, "shrink_factor": 3.0,
                   "floor_factor": 1e-3},
    },
}


def _check_keys(d, allowed, where):
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigInvalid("unknown %s key(s): %s (allowed: %s)"
                            % (where, ", ".join(unknown),
                               ", ".join(sorted(allowed))))


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    background: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigInvalid("config must be a JSON object")
        _check_keys(raw, _TOP_KEYS, "top-level")
        kind = raw.get("kind")
        if kind not in KINDS:
            raise ConfigInvalid("kind must be one of %s, got %r"
                                % (", ".join(KINDS), kind))
        schema = raw.get("schema", 1)
        if schema != 1:
            raise ConfigInvalid("unsupported schema %r" % (schema,))
        defaults = _DEFAULTS[kind]
        bg = dict(defaults["background"])
        bg.update(raw.get("background") or {})
        _check_keys(bg, _BG_KEYS, "background")
        grid = dict(defaults["grid"])
        grid.update(raw.get("grid") or {})
        _check_keys(grid, _GRID_KEYS, "grid")
        params = dict(defaults["params"])
        user_params = raw.get("params") or {}
        _check_keys(user_params, set(defaults["params"]), "params")
        params.update(user_params)
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigInvalid("seed must be a non-negative integer")
        return cls(kind=kind, seed=seed, background=bg, grid=grid,
                   params=params)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as e:
            raise ConfigInvalid("cannot read config %s: %s" % (path, e))
        except json.JSONDecodeError as e:
            raise ConfigInvalid("config %s is not valid JSON: %s" % (path, e))
        return cls.from_dict(raw)

    @classmethod
    def default(cls, kind):
        return cls.from_dict({"kind": kind})

    def to_dict(self):
        return {"schema": 1, "kind": self.kind, "seed": self.seed,
                "background": self.background, "grid": self.grid,
                "params": self.params}

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def make_grid(self, refine=1):
        g = self.grid
        try:
            if g.get("regime", "axisym2d") == "radial1d":
                return ct.radial_grid(g["r_sigma"], g["r_out"],
                                      refine * int(g["num_r"]),
                                      grading=g.get("grading", "log"))
            return ct.axisym_grid(g["r_sigma"], g["r_out"],
                                  refine * int(g["num_r"]),
                                  refine * int(g["num_theta"]),
                                  grading=g.get("grading", "log"))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigInvalid("bad grid config %r: %s" % (g, e))

    def make_background_spec(self):
        b = self.background
        try:
            return BackgroundSpec(kind=b["kind"], m=b.get("m", 0.0),
                                  n=b.get("n", 3), path=b.get("path"))
        except TypeError as e:
            raise ConfigInvalid("bad background config %r: %s" % (b, e))


# ----------------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------------

@dataclass
class CheckRecord:
    name: str
    value: float
    tolerance: float
    passed: bool
    tag: str = ""
    note: str = ""

    def line(self):
        return "[%s] %-44s value %.6g  tol %.3g%s" % (
            "PASS" if self.passed else "FAIL", self.name, self.value,
            self.tolerance, ("  (%s)" % self.note) if self.note else "")


@dataclass
class Report:
    experiment: str
    config: ExperimentConfig
    checks: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    duration_seconds: float = 0.0

    @property
    def config_hash(self):
        return self.config.config_hash()

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, value, tolerance, passed=None, tag="", note=""):
        value = float(value)
        if passed is None:
            passed = value <= tolerance
        self.checks.append(CheckRecord(name, value, float(tolerance),
                                       bool(passed), tag, note))

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "config": self.config.to_dict(),
            "config_hash": self.config_hash,
            "passed": self.passed,
            "duration_seconds": self.duration_seconds,
            "artifacts": list(self.artifacts),
            "checks": [{"name": c.name, "value": c.value,
                        "tolerance": c.tolerance, "passed": c.passed,
                        "tag": c.tag, "note": c.note}
                       for c in self.checks],
            "extras": _jsonable(self.extras),
        }

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
        with open(os.path.join(out_dir, "checks.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "value", "tolerance", "passed", "tag",
                        "note"])
            for c in self.checks:
                w.writerow([c.name, repr(c.value), repr(c.tolerance),
                            int(c.passed), c.tag, c.note])
        export_plot_data(self, out_dir)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def export_plot_data(report: Report, out_dir):
    """Write plot-ready CSVs for whatever trace data the report carries."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    trace = report.extras.get("newton_trace")
    if trace:
        p = os.path.join(out_dir, "newton_trace.csv")
        _write_csv(p, ["iter", "residual", "damping", "W_norm"], trace)
        written.append(p)
    sweep = report.extras.get("family_sweep")
    if sweep:
        p = os.path.join(out_dir, "family_sweep.csv")
        _write_csv(p, ["t", "r", "kernel_dim", "sigma_min_gap"], sweep)
        written.append(p)
    conv = report.extras.get("convergence")
    if conv:
        p = os.path.join(out_dir, "convergence.csv")
        _write_csv(p, ["delta", "residual", "slope"], conv)
        written.append(p)
    return written


# ----------------------------------------------------------------------------
# experiment implementations
# ----------------------------------------------------------------------------

def _residual_sup(pair):
    s1, s2 = static_vacuum_residual(pair)
    return max(float(np.max(ct.tensor_magnitude(pair.jet, s1))),
               float(np.max(np.abs(s2.comps))))


def _run_verify_formulas(cfg: ExperimentConfig, report, refine):
    p = cfg.params
    spec = cfg.make_background_spec()
    levels = int(p["levels"])
    deltas, residuals = [], []
    for k in range(levels):
        grid = cfg.make_grid(refine * 2 ** k)
        pair = make_background(spec, grid)
        deltas.append(float(np.mean(np.diff(grid.r))))
        residuals.append(_residual_sup(pair))
    slopes = [float(np.log(residuals[i] / residuals[i + 1])
                    / np.log(deltas[i] / deltas[i + 1]))
              for i in range(levels - 1)]
    report.extras["convergence"] = [
        (deltas[i], residuals[i],
         slopes[i - 1] if i > 0 else float("nan"))
        for i in range(levels)]
    order = float(np.median(slopes))
    report.add("residual-convergence-order-gap", abs(order - p["order_target"]),
               p["order_slack"], tag="convergence:background-residual",
               note="order %.3f" % order)
    report.add("residual-finest", residuals[-1], p["tol_finest"],
               tag="convergence:background-residual")

    # exact-linearization consistency: S'(h, v) against central differences.
    # Uses a modest grid on purpose: fine grids push the eps = 1e-4 central
    # difference of second-derivative stencils into the roundoff floor.
    grid = ct.radial_grid(cfg.grid["r_sigma"], cfg.grid["r_out"],
                          refine * int(p["fd_num_r"]))
    pair = make_background(spec, grid)
    d = tf.random_deformation(grid, cfg.seed, window="outer")
    # amplitude pushes the eps^2 truncation above the 1/eps roundoff floor
    # so the order is measurable at the smaller epsilon
    amp = p["fd_amplitude"] / float(np.max(np.abs(d.h.comps)))
    hc, vc = amp * d.h.comps, amp * d.v.comps
    sp = lin.S_prime(pair, hc, vc)
    errs = []
    for eps in p["fd_epsilons"]:
        gp = pair.g.comps + eps * hc
        gm = pair.g.comps - eps * hc
        up = pair.u.comps + eps * vc
        um = pair.u.comps - eps * vc
        from .backgrounds import StaticPair
        rp = static_vacuum_residual(StaticPair(
            ct.TensorField(grid, ("l", "l"), gp, sym=True),
            ct.TensorField(grid, (), up)))
        rm = static_vacuum_residual(StaticPair(
            ct.TensorField(grid, ("l", "l"), gm, sym=True),
            ct.TensorField(grid, (), um)))
        fd1 = (rp[0].comps - rm[0].comps) / (2 * eps)
        fd2 = (rp[1].comps - rm[1].comps) / (2 * eps)
        errs.append(max(float(np.max(np.abs(fd1 - sp[0].comps))),
                        float(np.max(np.abs(fd2 - sp[1].comps)))))
    fd_order = float(np.log(errs[0] / errs[1])
                     / np.log(p["fd_epsilons"][0] / p["fd_epsilons"][1]))
    report.add("linearization-fd-order", -fd_order, -p["fd_order_min"],
               tag="linearization:fd-consistency",
               note="order %.3f over eps %s" % (fd_order, p["fd_epsilons"]))


def _run_mass(cfg: ExperimentConfig, report, refine):
    p = cfg.params
    ratios = []
    for m in p["m_values"]:
        g = dict(cfg.grid)
        g["r_sigma"] = max(g["r_sigma"], 2.0 * m + 0.5)
        sub = ExperimentConfig(cfg.kind, cfg.seed, cfg.background, g,
                               cfg.params)
        grid = sub.make_grid(refine)
        pair = make_background(BackgroundSpec(kind="schwarzschild", m=m),
                               grid)
        res = dg.adm_mass(pair.g, p["radii"])
        report.add("adm-mass-relative-error-m-%g" % m,
                   abs(res["mass"] - m) / m, p["rel_tol"],
                   tag="mass:adm-surface-integral",
                   note="mass %.8f" % res["mass"])
        ratios.append(res["mass"] / m)
    spread = float(np.max(ratios) - np.min(ratios))
    report.add("adm-mass-linearity-spread", spread, p["linearity_tol"],
               tag="mass:linearity")


def _run_kernel_scan(cfg: ExperimentConfig, report, refine):
    p = cfg.params
    grid = cfg.make_grid(refine)
    pair = make_background(cfg.make_background_spec(), grid)
    basis = gauge.build_gauged_killing_basis(pair)
    op = asm.assemble_LG(pair, verify=False)
    probe = asm.kernel_probe(op, tol_gap=p["tol_gap"], k=int(p["k"]))
    report.extras["kernel"] = {
        "singular_values": [float(s) for s in probe["singular_values"]],
        "dimension": probe["dimension"],
        "oracle": basis.count,
        "gap_ratio": probe["gap_ratio"]}
    report.add("kernel-dimension-mismatch",
               abs(probe["dimension"] - basis.count), 0,
               tag="kernel:dimension",
               note="dim %d oracle %d" % (probe["dimension"], basis.count))
    report.add("kernel-gap-missing", 1.0 if probe["no_gap"] else 0.0, 0,
               tag="kernel:spectral-gap",
               note="gap ratio %.2f" % probe["gap_ratio"])


def _run_solve_extension(cfg: ExperimentConfig, report, refine, out_dir):
    p = cfg.params
    grid = cfg.make_grid(refine)
    pair = make_background(cfg.make_background_spec(), grid)
    bdata = bgeo.bartnik_data(pair.jet)
    p2 = 0.5 * (3.0 * np.cos(grid.theta) ** 2 - 1.0)
    tau = (1.0 + p["eps"] * p2)[:, None, None] * bdata.tau
    opts = asm.SolveOptions(max_iter=int(p["max_iter"]), tol=p["tol"],
                            tol_W=p["tol_W"], tol_gauge=p["tol_gauge"])
    solution, W, trace, info = asm.newton_solve_extension(
        pair, tau, bdata.phi, opts=opts)
    report.extras["newton_trace"] = [
        (i, rec.get("residual"), rec.get("damping"), rec.get("W_norm"))
        for i, rec in enumerate(trace.records)]
    report.add("newton-iterations", len(trace.residuals), p["max_iter"],
               tag="solve:newton")
    report.add("newton-residual", info["residual"], p["tol"],
               tag="solve:newton")
    report.add("boundary-data-mismatch",
               max(info["tau_mismatch"], info["phi_mismatch"]),
               p["tol_data"], tag="solve:bartnik-data")
    report.add("multiplier-field-norm", info["W_norm"], p["tol_W"],
               tag="solve:multiplier-vanishing")
    report.add("gauge-field-residual", info["gauge_residual"],
               p["tol_gauge"], tag="solve:gauge",
               note="O(Delta^2 eps) at this resolution")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        sol_path = os.path.join(out_dir, "solution_pair.stv")
        save_pair(sol_path, solution)
        w_path = os.path.join(out_dir, "multiplier_W.stv")
        ct.save_fields(w_path, {"W": W})
        report.artifacts += [sol_path, w_path]


def _run_killing_transport(cfg: ExperimentConfig, report, refine):
    p = cfg.params
    grid = cfg.make_grid(refine)
    pair = make_background(BackgroundSpec(kind="euclidean"), grid)
    case = tf.manufactured_transport_case(grid)
    geom = kt.TransportGeometry(pair, case["h"], degree=5,
                                overrides=case["overrides"])
    # the path checks need spline accuracy beyond what the extension grid
    # provides; the overrides are closed-form, so a finer geometry is cheap
    grid_f = ct.axisym_grid(grid.r_sigma, grid.r_out, 64, 96)
    pair_f = make_background(BackgroundSpec(kind="euclidean"), grid_f)
    case_f = tf.manufactured_transport_case(grid_f)
    geom_f = kt.TransportGeometry(pair_f, case_f["h"], degree=5,
                                  overrides=case_f["overrides"])
    lo, hi = grid.r_sigma, grid.r_out
    p0 = np.array([lo + 0.2 * (hi - lo), 0.9])
    p1 = np.array([lo + 0.8 * (hi - lo), 2.1])
    Y0, om0, _, _ = case["at_point"](p0)
    Y1, om1, _, _ = case["at_point"](p1)
    states = {}
    for name, path in [("r-first", kt.GeodesicPath([p0, [p1[0], p0[1]], p1])),
                       ("theta-first",
                        kt.GeodesicPath([p0, [p0[0], p1[1]], p1]))]:
        states[name] = kt.transport(pair_f, p0, Y0, om0, path, tol=p["tol"],
                                    geometry=geom_f)
    arclength = float(abs(p1[0] - p0[0]) + p0[0] * abs(p1[1] - p0[1]))
    for name, st in states.items():
        report.add("transport-recovery-%s" % name,
                   np.max(np.abs(st.X - Y1)) / np.max(np.abs(Y1)),
                   p["recovery_tol"], tag="transport:manufactured")
        report.add("omega-drift-%s" % name, st.drift / arclength,
                   p["drift_tol"], tag="transport:omega-drift")
    two = max(float(np.max(np.abs(states["r-first"].X
                                  - states["theta-first"].X))),
              float(np.max(np.abs(states["r-first"].omega
                                  - states["theta-first"].omega))))
    report.add("two-path-disagreement", two,
               p["twopath_factor"] * p["tol"], tag="transport:path-independence")
    Xe, rep = kt.extend_h_killing(
        pair, case["Y"], case["h"], targets=[p1],
        anchor=[0.5 * (lo + hi), np.pi / 2], tol=p["tol"], geometry=geom,
        omega_local=case["omega"], strict=False)
    rec = float(np.max(np.abs(Xe.comps - case["Y"].comps))
                / np.max(np.abs(case["Y"].comps)))
    report.add("extension-recovery", rec, p["recovery_tol"],
               tag="transport:manufactured")


def _run_family_sweep(cfg: ExperimentConfig, report, refine):
    p = cfg.params
    g = cfg.grid
    sweep = dg.family_sweep(
        cfg.make_background_spec(), tuple(p["t_range"]),
        num_steps=int(p["num_steps"]),
        grid_shape=(refine * int(g["num_r"]), refine * int(g["num_theta"])),
        annulus_width=p["annulus_width"], tol_gap=p["tol_gap"],
        retry_shape=tuple(p["retry_shape"]))
    report.extras["family_sweep"] = [
        (s["t"], s["r_sigma"], s["kernel_dim"], s["margin"])
        for s in sweep["steps"]]
    report.extras["sweep_steps"] = sweep["steps"]
    for s in sweep["steps"]:
        t = s["t"]
        report.add("kernel-dim-below-oracle-t-%.4g" % t,
                   max(0, s["oracle"] - s["kernel_dim"]), 0,
                   tag="sweep:kernel-dimension",
                   note="dim %d oracle %d%s" % (
                       s["kernel_dim"], s["oracle"],
                       " (refined retry)" if s["retried"] else ""))
        if s["kernel_dim"] > s["oracle"]:
            report.add("kernel-dim-above-oracle-t-%.4g" % t,
                       s["kernel_dim"] - s["oracle"], float("inf"),
                       passed=True, tag="sweep:finding",
                       note="reported finding: excess kernel dimension")
        budget = p["budget_factor"] * (max(s["kernel_residuals"] or [0.0])
                                       + s["delta_sq"])
        worst = max((max(b["A_prime"], b["ric_prime_tangential"])
                     for b in s["boundary_residuals"]), default=0.0)
        report.add("boundary-vanishing-residual-t-%.4g" % t, worst, budget,
                   tag="sweep:boundary-vanishing")


def _run_identity_suite(cfg: ExperimentConfig, report, refine):
    p = cfg.params
    spec = cfg.make_background_spec()
    results = {}
    for level, factor in (("coarse", refine), ("fine", 2 * refine)):
        grid = cfg.make_grid(factor)
        pair = make_background(spec, grid)
        recs = dg.identity_suite(pair, seed=cfg.seed)
        results[level] = {r["name"]: r["residual"] for r in recs}
        if level == "coarse":
            delta_sq = (float(np.mean(np.diff(grid.r))) ** 2
                        + grid.dtheta ** 2)
    budget = p["budget_factor"] * delta_sq
    floor = p["floor_factor"] * delta_sq
    conv_rows = []
    for name, coarse in results["coarse"].items():
        fine = results["fine"][name]
        report.add("identity-residual-%s" % name, coarse, budget,
                   tag="identity:%s" % name)
        shrink_ok = (fine <= coarse / p["shrink_factor"]) or (fine <= floor)
        note = "coarse %.3e fine %.3e" % (coarse, fine)
        if fine <= floor and not fine <= coarse / p["shrink_factor"]:
            note += " (below measurement floor %.1e)" % floor
        report.add("identity-shrink-%s" % name,
                   fine / (coarse + 1e-300), 1.0 / p["shrink_factor"],
                   passed=shrink_ok, tag="identity:%s" % name, note=note)
        slope = (np.log(coarse / fine) / np.log(2.0)
                 if fine > 0 and coarse > 0 else float("nan"))
        conv_rows.append((name, coarse, fine, slope))
    report.extras["identity_convergence"] = conv_rows


# ----------------------------------------------------------------------------
# runner
# ----------------------------------------------------------------------------

def run(config: ExperimentConfig, out_dir=None, grid_refine=1) -> Report:
    """Execute one experiment and return its Report (saved if out_dir)."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    if grid_refine < 1:
        raise ConfigInvalid("grid refine factor must be >= 1")
    report = Report(experiment=config.kind, config=config)
    t0 = time.time()
    np.random.seed(config.seed)  # legacy global state, for full determinism
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if config.kind == "verify-formulas":
            _run_verify_formulas(config, report, grid_refine)
        elif config.kind == "kernel-scan":
            _run_kernel_scan(config, report, grid_refine)
        elif config.kind == "solve-extension":
            _run_solve_extension(config, report, grid_refine, out_dir)
        elif config.kind == "mass":
            _run_mass(config, report, grid_refine)
        elif config.kind == "killing-transport":
            _run_killing_transport(config, report, grid_refine)
        elif config.kind == "family-sweep":
            _run_family_sweep(config, report, grid_refine)
        elif config.kind == "identity-suite":
            _run_identity_suite(config, report, grid_refine)
        else:  # pragma: no cover - guarded by ExperimentConfig
            raise ConfigInvalid("unknown kind %r" % config.kind)
    report.duration_seconds = time.time() - t0
    if out_dir:
        report.save(out_dir)
    return report


# ----------------------------------------------------------------------------
# command line interface
# ----------------------------------------------------------------------------

def _common_options(f):
    f = click.option("--config", "config_path", type=click.Path(),
                     default=None, help="JSON experiment config.")(f)
    f = click.option("--out", "out_dir", type=click.Path(), default=None,
                     help="Output directory for report and CSVs.")(f)
    f = click.option("--seed", type=int, default=None,
                     help="Override the config seed.")(f)
    f = click.option("--grid-refine", type=int, default=1,
                     help="Refine every grid dimension by this factor.")(f)
    return f


def _execute(kind, config_path, out_dir, seed, grid_refine):
    try:
        if config_path:
            config = ExperimentConfig.from_file(config_path)
            if config.kind != kind:
                raise ConfigInvalid(
                    "config kind %r does not match subcommand %r"
                    % (config.kind, kind))
        else:
            config = ExperimentConfig.default(kind)
        if seed is not None:
            if seed < 0:
                raise ConfigInvalid("seed must be non-negative")
            config.seed = seed
        report = run(config, out_dir=out_dir, grid_refine=grid_refine)
    except ConfigInvalid as e:
        click.echo("config error: %s" % e, err=True)
        raise SystemExit(2)
    except _SOLVER_ERRORS as e:
        click.echo("solver error: %s: %s" % (type(e).__name__, e), err=True)
        raise SystemExit(3)
    except StatvacError as e:
        click.echo("error: %s: %s" % (type(e).__name__, e), err=True)
        raise SystemExit(3)
    click.echo("experiment %s  config %s" % (report.experiment,
                                             report.config_hash[:12]))
    for c in report.checks:
        click.echo(c.line())
    click.echo("%s in %.1fs" % ("PASS" if report.passed else "FAIL",
                                report.duration_seconds))
    raise SystemExit(0 if report.passed else 1)


@click.group()
def main():
    """Static vacuum extension experiments and reports."""


def _make_command(kind):
    @main.command(name=kind)
    @_common_options
    def _cmd(config_path, out_dir, seed, grid_refine):
        _execute(kind, config_path, out_dir, seed, grid_refine)
    _cmd.__doc__ = "Run the %s experiment." % kind
    return _cmd


for _kind in KINDS:
    _make_command(_kind)


if __name__ == "__main__":
    main()
