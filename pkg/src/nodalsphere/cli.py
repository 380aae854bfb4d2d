"""Command line interface.

Subcommands cover the full pipeline:

  validate            parse and validate a problem configuration
  check-nonlinearity  sample the capped-source constraints at given eps
  ground-energy       tabulate limit-problem ground energies E(a)
  aux-potential       locate the minimizer of the concentration weight
  solve               one nodal solve at a given eps
  report              rebuild per-eps records from stored solutions
  sweep               full eps sweep: solve, report, figures
  nehari-diagnostics  projection surface, direction and coercivity checks

Global flags: --config PATH (problem file), --out DIR (output directory),
--jobs N (parallel solves in the sweep).  The cache directory defaults to
<out>/cache and can be overridden with the NODALSPHERE_CACHE environment
variable.  All outputs are deterministic for a fixed config: CSV floats
use the %.12g format, JSON keys are sorted, and nothing embeds a
timestamp; wall-clock timings go to a separate timings.txt.
"""

import argparse
import glob
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .diagnostics import (build_record, certify_original, decay_fit,
                          peak_admissibility, trend_summary,
                          write_concentration_csv)
from .energy import (coercivity_check, descent_direction_check,
                     make_energy_riesz_solver, psi_surface)
from .errors import ConfigurationError, SolverError, UsageError
from .geometry import SpherePoint, parse_config_file, validate_config
from .grid import read_field_bin, write_field_bin, write_field_csv
from .limit_problem import (aux_potential, build_ground_energy_table,
                            require_interior_min, write_aux_csv,
                            write_ground_energy_csv)
from .nonlinearity import build_penalized, verify_penalization
from .plots import emit_plot_data, render_figures
from .solver import build_model, default_centers, solve_nodal, \
    summarize_solution

DEFAULT_EPS_LIST = (0.5, 0.4, 0.3, 0.2, 0.15, 0.1)
VIOLATION_TOL = 1e-12


def _fmt(x) -> str:
    return "%.12g" % x


def _jsonable(obj):
    """Convert report objects to JSON-safe primitives."""
    if isinstance(obj, SpherePoint):
        return obj.to_list()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    return obj


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=1, sort_keys=True,
                  allow_nan=False)
        fh.write("\n")


def _config_hash(config) -> str:
    text = config.canonical_text()
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _cache_dir(args) -> str:
    path = os.environ.get("NODALSPHERE_CACHE")
    if not path:
        path = os.path.join(args.out, "cache")
    os.makedirs(path, exist_ok=True)
    return path


def _load_config(args):
    return validate_config(parse_config_file(args.config))


def _solution_paths(out_dir, prefix):
    base = os.path.join(out_dir, prefix)
    return base + ".json", base + ".bin", base + ".csv"


def _solution_payload(sol, config) -> dict:
    return {
        "config_hash": _config_hash(config),
        "eps": sol.eps,
        "d_eps": sol.energy,
        "eps_k_d_eps": sol.eps ** config.k * sol.energy,
        "residuals": {
            "pde": sol.residual,
            "nehari_plus": sol.nehari_plus,
            "nehari_minus": sol.nehari_minus,
            "projection_drift": sol.projection_drift,
        },
        "P1": sol.peak_plus,
        "P2": sol.peak_minus,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "nodal_domains": sol.nodal_domains,
        "message": sol.message,
    }


def _write_solution(sol, config, out_dir, prefix) -> None:
    json_path, bin_path, csv_path = _solution_paths(out_dir, prefix)
    write_field_bin(sol.model.grid, sol.values, bin_path)
    write_field_csv(sol.model.grid, sol.values, csv_path)
    _write_json(json_path, _solution_payload(sol, config))


def _load_solution(config, eps, out_dir, prefix):
    """Rebuild a solution summary from stored files; returns None when
    the files are absent or belong to a different configuration."""
    json_path, bin_path, _ = _solution_paths(out_dir, prefix)
    if not (os.path.exists(json_path) and os.path.exists(bin_path)):
        return None
    with open(json_path) as fh:
        payload = json.load(fh)
    if payload.get("config_hash") != _config_hash(config):
        return None
    if abs(payload.get("eps", -1.0) - eps) > 1e-12:
        return None
    meta, values = read_field_bin(bin_path)
    model = build_model(config, eps)
    if meta["dims"] != model.grid.shape:
        return None
    return summarize_solution(
        model, eps, values,
        iterations=int(payload.get("iterations", 0)),
        converged=bool(payload.get("converged", False)),
        projection_drift=float(
            payload["residuals"].get("projection_drift", 0.0)),
        message=str(payload.get("message", "")) or "loaded from cache")


def _eps_prefix(eps) -> str:
    return "solution_eps%s" % _fmt(eps)


def _cmd_validate(args) -> int:
    config = _load_config(args)
    print(config.canonical_text())
    print("derived: m=%d xprime_dim=%d V0=%s theta=%s"
          % (config.m, config.xprime_dim, _fmt(config.V0),
             _fmt(config.theta)))
    print("config ok")
    return 0


def _cmd_check_nonlinearity(args) -> int:
    config = _load_config(args)
    eps_values = args.eps if args.eps else [0.5, 0.2, 0.1]
    worst = 0.0
    for eps in eps_values:
        pn = build_penalized(eps, config)
        rows = verify_penalization(pn, theta=config.theta)
        path = os.path.join(args.out,
                            "check_nonlinearity_%s.csv" % _fmt(eps))
        lines = ["constraint,max_violation,arg_max"]
        for row in rows:
            lines.append(",".join([row.constraint, _fmt(row.max_violation),
                                   _fmt(row.arg_max)]))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        top = max(rows, key=lambda r: r.max_violation)
        worst = max(worst, top.max_violation)
        print("eps=%s: worst violation %.3e (%s); wrote %s"
              % (_fmt(eps), top.max_violation, top.constraint, path))
    if worst > VIOLATION_TOL:
        print("FAIL: constraint violation above %.0e" % VIOLATION_TOL)
        return 2
    print("all constraints within %.0e" % VIOLATION_TOL)
    return 0


def _cmd_ground_energy(args) -> int:
    config = _load_config(args)
    m = args.m if args.m is not None else config.m
    a_values = tuple(float(c) for c in args.a_values.split(","))
    table = build_ground_energy_table(m, config.p, a_values,
                                      cache_dir=_cache_dir(args))
    path = os.path.join(args.out, "ground_energy.csv")
    write_ground_energy_csv(table, path)
    print("m=%d p=%s: E(1)=%.10f exponent=%s; wrote %s"
          % (m, _fmt(config.p), table.E1, _fmt(table.sigma), path))
    return 0


def _cmd_aux_potential(args) -> int:
    config = _load_config(args)
    aux = aux_potential(config, cache_dir=_cache_dir(args))
    csv_path = os.path.join(args.out, "aux_potential.csv")
    write_aux_csv(aux, csv_path)
    payload = {"x0": aux.x0, "M0": aux.M0, "boundary_inf": aux.boundary_inf,
               "M1_satisfied": aux.M1_satisfied, "hperp_inf": aux.hperp_inf}
    json_path = os.path.join(args.out, "aux_potential.json")
    _write_json(json_path, payload)
    print("weight minimizer at r=%s, M0=%s, boundary inf=%s, "
          "interior condition %s"
          % (_fmt(aux.x0.r), _fmt(aux.M0), _fmt(aux.boundary_inf),
             "satisfied" if aux.M1_satisfied else "VIOLATED"))
    print("wrote %s and %s" % (csv_path, json_path))
    return 0


def _cmd_solve(args) -> int:
    config = _load_config(args)
    cache = _cache_dir(args)
    aux = aux_potential(config, cache_dir=cache)
    require_interior_min(aux)
    prefix = args.out_prefix or _eps_prefix(args.eps)
    sol = solve_nodal(config, args.eps, max_iters=args.max_iters,
                      tol_grad=args.tol_grad, aux=aux)
    _write_solution(sol, config, args.out, prefix)
    print("eps=%s: d_eps=%.6f residual=%.3e iterations=%d converged=%s"
          % (_fmt(args.eps), sol.energy, sol.residual, sol.iterations,
             sol.converged))
    print("wrote %s.{json,bin,csv} in %s" % (prefix, args.out))
    return 0 if sol.converged else 2


def _discover_solutions(config, out_dir):
    """Load every stored solution in out_dir that matches the config."""
    sols = []
    for json_path in sorted(glob.glob(os.path.join(out_dir,
                                                   "solution_eps*.json"))):
        with open(json_path) as fh:
            payload = json.load(fh)
        eps = float(payload.get("eps", -1.0))
        if eps <= 0:
            continue
        prefix = os.path.splitext(os.path.basename(json_path))[0]
        sol = _load_solution(config, eps, out_dir, prefix)
        if sol is not None:
            sols.append(sol)
    return sorted(sols, key=lambda s: -s.eps)


def _emit_report(config, aux, sols, out_dir):
    """Records, concentration.csv, trend summary, plot data, figures."""
    records = [build_record(s, config, aux) for s in sols]
    csv_path = os.path.join(out_dir, "concentration.csv")
    write_concentration_csv(records, csv_path)
    centers = default_centers(config, aux)
    trends = trend_summary(records, aux, config, centers)
    decay_sols = [s for s in sols if s.converged]
    written = [csv_path]
    if decay_sols:
        best = decay_sols[-1]
        peaks = [best.peak_plus.scaled(1.0 / best.eps),
                 best.peak_minus.scaled(1.0 / best.eps)]
        try:
            fit = decay_fit(best)
        except SolverError:
            fit = None
        written += emit_plot_data(records, aux.x0.r, out_dir,
                                  grid=best.model.grid, values=best.values,
                                  peaks=peaks)
        written += render_figures(records, aux.x0.r, out_dir,
                                  grid=best.model.grid, values=best.values,
                                  peaks=peaks, fit=fit, decay_eps=best.eps)
    else:
        written += emit_plot_data(records, aux.x0.r, out_dir)
        written += render_figures(records, aux.x0.r, out_dir)
    return records, trends, written


def _cmd_report(args) -> int:
    config = _load_config(args)
    aux = aux_potential(config, cache_dir=_cache_dir(args))
    sols = _discover_solutions(config, args.out)
    if not sols:
        raise UsageError("report: no stored solutions for this config "
                         f"in {args.out}; run solve or sweep first")
    records, trends, written = _emit_report(config, aux, sols, args.out)
    _write_json(os.path.join(args.out, "trend_summary.json"), trends)
    written.append(os.path.join(args.out, "trend_summary.json"))
    for rec in records:
        print("eps=%s ratio=%.4f certified=%s converged=%s"
              % (_fmt(rec.eps), rec.ratio, rec.certified, rec.converged))
    print("wrote " + ", ".join(sorted(written)))
    return 0


def _sweep_worker(config_path, eps, out_dir, max_iters, cache_path):
    """One eps solve in a separate process; returns a status dict."""
    config = parse_config_file(config_path)
    aux = aux_potential(config, cache_dir=cache_path)
    try:
        sol = solve_nodal(config, eps, max_iters=max_iters, aux=aux)
    except SolverError as exc:
        return {"eps": eps, "ok": False, "error": str(exc)}
    _write_solution(sol, config, out_dir, _eps_prefix(eps))
    return {"eps": eps, "ok": True, "converged": sol.converged,
            "iterations": sol.iterations, "residual": sol.residual}


def _parse_eps_list(text):
    try:
        values = tuple(float(c) for c in text.split(",") if c.strip())
    except ValueError:
        raise UsageError(f"sweep: could not parse eps list {text!r}")
    if not values:
        raise UsageError("sweep: empty eps list")
    if any(e <= 0 for e in values):
        raise UsageError("sweep: eps values must be positive")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise UsageError("sweep: eps list must be strictly decreasing")
    return values


def _check_smallness(config, eps_values) -> None:
    for eps in eps_values:
        cap = eps ** config.tau
        delta = eps ** (config.tau / (config.nu - 1.0))
        if cap >= config.V0:
            raise UsageError(
                f"sweep: eps={eps:g} breaks the smallness guard "
                f"eps^tau < V0 ({cap:g} >= {config.V0:g})")
        if delta ** (config.p - 1.0) >= cap:
            raise UsageError(
                f"sweep: eps={eps:g} breaks the smallness guard "
                f"delta^(p-1) < eps^tau")


def _cmd_sweep(args) -> int:
    t_start = time.time()
    config = _load_config(args)
    eps_values = _parse_eps_list(args.eps_list)
    _check_smallness(config, eps_values)
    cache = _cache_dir(args)
    aux = aux_potential(config, cache_dir=cache)
    require_interior_min(aux)

    timings = []
    status = {}
    to_solve = []
    for eps in eps_values:
        sol = _load_solution(config, eps, args.out, _eps_prefix(eps))
        if sol is not None:
            status[eps] = {"ok": True, "converged": sol.converged,
                           "iterations": sol.iterations,
                           "residual": sol.residual, "cached": True}
            print("eps=%s: loaded stored solution" % _fmt(eps))
        else:
            to_solve.append(eps)

    t0 = time.time()
    if to_solve and args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_sweep_worker, args.config, eps,
                                   args.out, args.max_iters, cache)
                       for eps in to_solve]
            results = [f.result() for f in futures]
    else:
        results = [_sweep_worker(args.config, eps, args.out,
                                 args.max_iters, cache)
                   for eps in to_solve]
    for res in results:
        eps = res.pop("eps")
        res["cached"] = False
        status[eps] = res
        if res["ok"]:
            print("eps=%s: solved, %d iterations, residual %.3e"
                  % (_fmt(eps), res["iterations"], res["residual"]))
        else:
            print("eps=%s: FAILED (%s)" % (_fmt(eps), res["error"]))
    timings.append(("solves", time.time() - t0))

    t0 = time.time()
    sols = []
    for eps in eps_values:
        if status[eps].get("ok"):
            sol = _load_solution(config, eps, args.out, _eps_prefix(eps))
            if sol is not None:
                sols.append(sol)
    records, trends, written = ([], {}, [])
    if sols:
        records, trends, written = _emit_report(config, aux, sols, args.out)
    timings.append(("report", time.time() - t0))

    summary = {
        "config_hash": _config_hash(config),
        "eps_list": list(eps_values),
        "per_eps": {_fmt(eps): status[eps] for eps in eps_values},
        "trends": trends,
    }
    summary_path = os.path.join(args.out, "summary.json")
    _write_json(summary_path, summary)
    timings.append(("total", time.time() - t_start))
    with open(os.path.join(args.out, "timings.txt"), "w") as fh:
        for name, dt in timings:
            fh.write("%s %.3f s\n" % (name, dt))

    n_ok = sum(1 for s in status.values() if s.get("ok"))
    print("sweep: %d/%d eps succeeded; wrote %s"
          % (n_ok, len(eps_values), summary_path))
    if n_ok == 0:
        return 1
    return 0 if n_ok == len(eps_values) else 2


def _cmd_nehari_diagnostics(args) -> int:
    config = _load_config(args)
    cache = _cache_dir(args)
    aux = aux_potential(config, cache_dir=cache)
    require_interior_min(aux)
    prefix = _eps_prefix(args.eps)
    sol = _load_solution(config, args.eps, args.out, prefix)
    if sol is None:
        sol = solve_nodal(config, args.eps, aux=aux)
        _write_solution(sol, config, args.out, prefix)
    surface = psi_surface(sol.model, sol.values)
    direction = descent_direction_check(sol.model, sol.values)
    coercivity = coercivity_check(sol.model, sol.values)

    csv_path = os.path.join(args.out, "nehari_diagnostics.csv")
    lines = ["t,s,psi"]
    for i, t in enumerate(surface.t_values):
        for j, s in enumerate(surface.s_values):
            lines.append(",".join([_fmt(t), _fmt(s),
                                   _fmt(surface.psi[i, j])]))
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    payload = {
        "argmax": list(surface.argmax),
        "hessian": surface.hessian,
        "residuals": {"plus": surface.residuals[0],
                      "minus": surface.residuals[1]},
        "direction": {"t": direction.t, "s": direction.s,
                      "passed": direction.passed,
                      "skipped": direction.skipped},
        "coercivity": {"constant": coercivity.constant,
                       "energy": coercivity.lhs,
                       "bound": coercivity.rhs,
                       "passed": coercivity.passed,
                       "skipped": coercivity.skipped},
    }
    json_path = os.path.join(args.out, "nehari_diagnostics.json")
    _write_json(json_path, payload)
    print("projection surface argmax at (t,s)=(%s,%s)"
          % (_fmt(surface.argmax[0]), _fmt(surface.argmax[1])))
    print("direction check: t=%s s=%s passed=%s"
          % (_fmt(direction.t), _fmt(direction.s), direction.passed))
    print("coercivity: energy %s >= %s * norm^2 = %s passed=%s"
          % (_fmt(coercivity.lhs), _fmt(coercivity.constant),
             _fmt(coercivity.rhs), coercivity.passed))
    print("wrote %s and %s" % (csv_path, json_path))
    ok = direction.passed and coercivity.passed
    return 0 if ok else 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nodalsphere",
        description="Sign-changing semiclassical bound states with "
                    "sphere concentration: solver and diagnostics.")
    parser.add_argument("--config", required=True,
                        help="problem configuration file")
    parser.add_argument("--out", default=".",
                        help="output directory (default: current)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel solves in the sweep (default 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="parse and validate the config")
    sp.set_defaults(func=_cmd_validate)

    sp = sub.add_parser("check-nonlinearity",
                        help="verify the capped-source constraints")
    sp.add_argument("--eps", type=float, action="append",
                    help="eps to check (repeatable; default 0.5 0.2 0.1)")
    sp.set_defaults(func=_cmd_check_nonlinearity)

    sp = sub.add_parser("ground-energy",
                        help="tabulate limit-problem ground energies")
    sp.add_argument("--m", type=int, default=None,
                    help="reduced dimension (default: N-k from config)")
    sp.add_argument("--a-values", default="0.5,1,2,4",
                    help="comma list of potential levels")
    sp.set_defaults(func=_cmd_ground_energy)

    sp = sub.add_parser("aux-potential",
                        help="map the concentration weight")
    sp.set_defaults(func=_cmd_aux_potential)

    sp = sub.add_parser("solve", help="one nodal solve")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--out-prefix", default=None)
    sp.add_argument("--max-iters", type=int, default=500)
    sp.add_argument("--tol-grad", type=float, default=None)
    sp.set_defaults(func=_cmd_solve)

    sp = sub.add_parser("report",
                        help="records and figures from stored solutions")
    sp.set_defaults(func=_cmd_report)

    sp = sub.add_parser("sweep", help="full eps sweep with report")
    sp.add_argument("--eps-list",
                    default=",".join(_fmt(e) for e in DEFAULT_EPS_LIST))
    sp.add_argument("--max-iters", type=int, default=500)
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("nehari-diagnostics",
                        help="projection surface and stability checks")
    sp.add_argument("--eps", type=float, default=0.2)
    sp.set_defaults(func=_cmd_nehari_diagnostics)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
