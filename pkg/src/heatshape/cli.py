"""Command-line front end: ``heatshape <task> --scenario FILE --out DIR``.

Each run writes delimited grid outputs (17 significant digits), PNG figures
and a ``manifest.json`` with the resolved configuration, library versions,
timings and a checksum of every numeric output.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 stagnation.
"""

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from importlib import metadata

import numpy as np

from . import plotting
from .errors import (ClearanceError, DomainError, GeometryError, HeatShapeError, OracleError,
                     ScenarioError, SolverError, StagnationError)
from .geometry import ClosedCurve, ShapeMap
from .scenario import TASKS, boundary_data, direction_field, eval_time_table, load_scenario

log = logging.getLogger("heatshape")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_STAGNATION = 0, 2, 3, 4


def fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return "%.17g" % x


class Outputs:
    """Collects files written in the output directory."""

    def __init__(self, directory):
        self.dir = directory
        os.makedirs(directory, exist_ok=True)
        self.numeric = []
        self.figures = []

    def path(self, name):
        return os.path.join(self.dir, name)

    def table(self, name, header, rows):
        lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
        with open(self.path(name), "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        self.numeric.append(name)

    def grid_table(self, name, grid, theta, columns):
        """One row per (k, j): ``k, j, t, theta`` followed by the named columns."""
        names = list(columns)
        arrays = [np.asarray(columns[c]) for c in names]
        rows = []
        for k, t in enumerate(grid.times):
            for j, th in enumerate(theta):
                rows.append([k, j, t, th] + [a[k, j] for a in arrays])
        self.table(name, ["k", "j", "t", "theta"] + names, rows)

    def figure(self, name):
        self.figures.append(name)
        return self.path(name)

    def checksums(self):
        out = {}
        for name in self.numeric:
            with open(self.path(name), "rb") as fh:
                out[name] = hashlib.sha256(fh.read()).hexdigest()
        return out


def _problem(sc):
    from .system import AnnulusProblem

    outer, shape, grid = sc.outer(), sc.shape(), sc.grid()
    g_o, g_i, md = boundary_data(sc, outer, shape, grid)
    return AnnulusProblem(outer, shape, grid, g_o, g_i), md


def run_solve(sc, out):
    from .system import solve_problem

    prob, _ = _problem(sc)
    ops, mu = solve_problem(prob)
    out.grid_table("density_outer.csv", prob.grid, prob.outer.theta, {"mu": mu.outer})
    out.grid_table("density_inner.csv", prob.grid, prob.shape.reference.theta, {"mu": mu.inner})
    plotting.space_time_map(out.figure("density_outer.png"), prob.grid, prob.outer.theta, mu.outer,
                            "outer density", "mu")
    plotting.space_time_map(out.figure("density_inner.png"), prob.grid, prob.shape.reference.theta,
                            mu.inner, "inner density (reference parameter)", "mu")
    return {"lag0_condition": ops.M.cond, "max_abs_mu_outer": float(np.max(np.abs(mu.outer))),
            "max_abs_mu_inner": float(np.max(np.abs(mu.inner)))}


def run_dtn(sc, out):
    from .system import grid_norms, solve_problem

    prob, md = _problem(sc)
    ops, mu = solve_problem(prob)
    lam = ops.dtn(mu)
    cols = {"dtn": lam}
    summary = {"lag0_condition": ops.M.cond}
    curves = {"computed": lam[-1]}
    if md is not None:
        cols["exact"] = md.dtn
        cols["error"] = lam - md.dtn
        e_max, e_l2 = grid_norms(lam - md.dtn, prob.grid, prob.outer)
        s_max, s_l2 = grid_norms(md.dtn, prob.grid, prob.outer)
        summary.update(err_max=e_max, err_l2=e_l2, rel_max=e_max / s_max, rel_l2=e_l2 / s_l2)
        curves["exact"] = md.dtn[-1]
    out.grid_table("dtn.csv", prob.grid, prob.outer.theta, cols)
    plotting.space_time_map(out.figure("dtn.png"), prob.grid, prob.outer.theta, lam,
                            "outer Neumann trace", "du/dnu")
    plotting.trace_comparison(out.figure("dtn_final.png"), prob.outer.theta, curves,
                              f"Neumann trace at t = {prob.grid.horizon:g}", "du/dnu")
    return summary


def _fd_rows(base, h, eps, outer, grid, g_o, g_i):
    from . import shape as sh
    from .system import AnnulusOperators
    from .verify import fd_directional

    ops = base.operators
    mu_o, mu_i = base.densities
    data = sh.solve_dmu(base, h)

    def trace(name):
        def f(phi):
            o = AnnulusOperators(outer, phi, grid)
            if name == "V1":
                return o.V1.apply(mu_i)
            if name == "V2":
                return o.V2.apply(mu_i)
            if name == "V3":
                return o.V3.apply(mu_o)
            m = o.solve(g_o, g_i)
            return np.hstack(m) if name == "densities" else o.dtn(m)
        return f

    exact = {
        "V1": sh.dphi_V1_operator(ops, h).apply(mu_i),
        "V2": sh.dphi_V2_operator(ops, h).apply(mu_i),
        "V3": sh.dphi_V3_operator(ops, h).apply(mu_o),
        "densities": np.hstack(data.densities),
        "dtn": sh.dtn_shape_diff_formula(base, h, data),
    }
    rows = []
    for name, ex in exact.items():
        r = fd_directional(trace(name), base.problem.shape, h, eps, outer=outer, exact=ex)
        rows.append([name, eps[0], eps[1], r.errors[0], r.errors[1], r.ratio, r.slope,
                     float(np.max(np.abs(ex)))])
    return rows


def run_shape_diff(sc, out):
    from . import shape as sh

    prob, _ = _problem(sc)
    h = direction_field(sc)
    base = sh.solve_base(prob)
    formula = sh.dtn_shape_diff_formula(base, h)
    bvp = sh.dtn_shape_diff_bvp(base, h)
    scale = float(np.max(np.abs(formula)))
    summary = {"route_discrepancy": float(np.max(np.abs(formula - bvp)) / scale) if scale else 0.0,
               "max_abs_formula": scale}
    if not np.any(prob.g_inner):
        full = sh.bvp_inner_data(base, h)
        cky = sh.cky_inner_data(base, h)
        ref = float(np.max(np.abs(full)))
        summary["normal_only_data_discrepancy"] = float(np.max(np.abs(full - cky)) / ref) if ref else 0.0
    out.grid_table("shape_diff.csv", prob.grid, prob.outer.theta, {"formula": formula, "bvp": bvp})
    if sc.options["check_fd"]:
        rows = _fd_rows(base, h, sc.options["eps"], prob.outer, prob.grid, prob.g_outer, prob.g_inner)
        out.table("fd_check.csv", ["quantity", "eps_1", "eps_2", "err_1", "err_2", "ratio", "slope",
                                   "max_abs_exact"], rows)
        summary["fd_ratios"] = {r[0]: r[5] for r in rows}
    plotting.trace_comparison(out.figure("shape_diff_final.png"), prob.outer.theta,
                              {"differentiated representation": formula[-1], "auxiliary problem": bvp[-1]},
                              f"shape differential of the Neumann trace, t = {prob.grid.horizon:g}",
                              "d(du/dnu)")
    return summary


def run_verify(sc, out):
    from .verify import convergence_study, default_interior_targets, manufactured_run

    def run(n_o, n_i, m):
        outer, shape, grid = sc.outer(n_o), sc.shape(n_i), sc.grid(m)
        _, _, md = boundary_data(sc, outer, shape, grid)
        targets = default_interior_targets(outer, shape, grid.horizon)
        return manufactured_run(outer, shape, grid, md.solution, interior=targets)

    if sc.data["kind"] != "manufactured":
        raise ScenarioError("data.kind: task verify requires manufactured data")
    metrics = ("err_max", "err_l2", "rel_max", "rel_l2", "interior_rel")
    table = convergence_study(run, sc.options["ladder"], metrics)
    out.table("convergence.csv", table.header(), table.table())
    plotting.convergence_plot(out.figure("convergence.png"), table)
    return {"fitted_orders": table.fitted, "monotone_err_max": table.monotone("err_max"),
            "finest_interior_rel": table.rows[-1]["interior_rel"]}


def run_invert(sc, out):
    from .inverse import boundary_distance, reconstruct, synthetic_twin

    opts = sc.options
    d = sc.data
    inner_nonzero = d["kind"] == "tables" and any(v for rows in d["inner"][1:] for r in rows for v in r)
    if d["kind"] == "manufactured" or inner_nonzero:
        raise ScenarioError("data.kind: task invert requires zero inner data (use a profile or outer-only tables)")

    def g_outer(t, curve):
        if d["kind"] == "zero":
            return np.zeros(curve.n_nodes)
        if d["kind"] == "tables":
            return eval_time_table(d["outer"], t, curve.theta)
        th = curve.theta
        tilt = 1.0 + 0.3 * np.cos(th) + 0.2 * np.sin(th) if d["name"] == "quadratic-tilted" else 1.0
        return d["amplitude"] * t**2 * tilt * np.ones(curve.n_nodes)

    n_t, m_t = opts["truth_n"], opts["truth_steps"]
    truth = ShapeMap.identity(ClosedCurve(opts["truth"], n_t))
    rng = np.random.default_rng(sc.seed)
    data = synthetic_twin(sc.outer(n_t), truth, sc.grid(m_t), g_outer, sc.outer(), sc.grid(),
                          noise=opts["noise"], rng=rng)
    initial = ShapeMap.identity(ClosedCurve(opts["initial"], sc.n_inner))
    status = EXIT_OK
    try:
        res = reconstruct(data, initial, degree=opts["degree"], max_iter=opts["max_iter"], reg=opts["reg"])
    except StagnationError as exc:
        res, status = exc.result, EXIT_STAGNATION
        log.warning("%s", exc)
    out.table("residuals.csv", ["iteration", "residual", "step"],
              [[i, r, res.steps[i - 1] if i else None] for i, r in enumerate(res.residuals)])
    names = [f"{n}[{k}]" for n in ("cos_x", "sin_x", "cos_y", "sin_y") for k in range(opts["degree"] + 1)]
    out.table("coefficients.csv", ["coefficient", "value"], list(zip(names, res.shape.coeffs.ravel())))
    rec = res.shape.image
    th = rec.theta
    pt = truth.image.evaluate(th)
    out.table("boundary.csv", ["j", "theta", "x", "y", "x_truth", "y_truth"],
              [[j, th[j], rec.points[j, 0], rec.points[j, 1], pt[j, 0], pt[j, 1]] for j in range(len(th))])
    dist = boundary_distance(rec, truth.image)
    plotting.reconstruction_plot(out.figure("reconstruction.png"), sc.outer(), truth.image, rec,
                                 initial.image, res.residuals)
    summary = {"iterations": res.iterations, "final_residual": res.residuals[-1],
               "initial_residual": res.residuals[0], "max_boundary_distance": dist,
               "relative_distance": dist / sc.outer().diameter, "stop_reason": res.reason}
    return summary, status


RUNNERS = {"solve": run_solve, "dtn": run_dtn, "shape-diff": run_shape_diff,
           "verify": run_verify, "invert": run_invert}


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "matplotlib", "pyyaml", "threadpoolctl", "artifact"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def resolved_config(sc):
    return {
        "task": sc.task, "seed": sc.seed,
        "geometry": {"outer": sc.outer_coeffs, "inner": sc.inner_coeffs, "phi": sc.phi_coeffs},
        "discretization": {"n_outer": sc.n_outer, "n_inner": sc.n_inner, "steps": sc.steps,
                           "horizon": sc.horizon, "basis": sc.basis},
        "data": sc.data, "options": sc.options, "input": sc.raw,
    }


def execute(task, scenario_path, out_dir=None, threads=0):
    """Run one scenario; returns the exit status."""
    from threadpoolctl import threadpool_limits

    t0 = time.perf_counter()
    try:
        sc = load_scenario(scenario_path)
        if sc.task != task:
            raise ScenarioError(f"task: scenario declares {sc.task!r} but {task!r} was requested")
        out_dir = out_dir or sc.output
        if not out_dir:
            raise ScenarioError("output: no output directory (use --out or the output field)")
        out = Outputs(out_dir)
        with threadpool_limits(limits=threads if threads > 0 else None):
            result = RUNNERS[task](sc, out)
    except (ScenarioError, GeometryError, ClearanceError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, OracleError, HeatShapeError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    summary, status = result if isinstance(result, tuple) else (result, EXIT_OK)
    manifest = {
        "config": resolved_config(sc), "versions": _versions(),
        "timings": {"total_seconds": time.perf_counter() - t0},
        "summary": summary, "exit_status": status,
        "outputs": {"numeric": out.checksums(), "figures": out.figures},
    }
    with open(out.path("manifest.json"), "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for key, val in sorted(summary.items()):
        log.info("%s = %s", key, val)
    return status


def build_parser():
    parser = argparse.ArgumentParser(prog="heatshape", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        p = sub.add_parser(task, help=f"run a {task} scenario")
        p.add_argument("--scenario", required=True, help="YAML scenario file")
        p.add_argument("--out", default=None, help="output directory (overrides the scenario)")
        p.add_argument("--threads", type=int, default=0, help="BLAS threads (0 = library default)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_INVALID
    return execute(args.task, args.scenario, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
