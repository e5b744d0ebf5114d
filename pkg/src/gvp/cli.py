"""Command-line entry point: ``gvp <command> --scenario <file> [--out <dir>] ...``.

Every command writes report.json into the output directory; ``solve`` also writes
minimizer.csv and ``sweep`` writes results.csv (plus cone_scan.csv when the scenario
carries an a_ell grid).

Exit codes: 0 success, 2 validation error, 3 solver non-convergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from contextlib import nullcontext
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .diagnostics import (
    ExhaustionRecord,
    coarse_bound_check,
    exhaustion_sweep,
    sigma_threshold,
    solvable_cone_scan,
)
from .energy import EnergyContext, gauss_value_shifted
from .kernel import IllConditionedError
from .measures import Condenser, SignedMeasure, ValidationError
from .projection import ProjectionError, balayage, equilibrium_measure, project_onto_cone
from .scenario import SPEC_VERSION, ScenarioError, ScenarioIssue, parse_scenario
from .selftest import run_selftest
from .solver import SolverError, SolverOptions, solve_auxiliary, solve_gauss

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGED = 3
EXIT_IO = 4

COMMANDS = ("solve", "project", "equilibrium", "capacity", "diagnose", "sweep", "selftest")


class NonConvergence(RuntimeError):
    pass


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"gvp": pkg, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def _float(x):
    """JSON-safe float rendered with 17 significant digits."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    return float(format(x, ".17g"))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(obj)
    return obj


def _options(sc, args) -> SolverOptions:
    s = sc.solver
    gap = args.gap_tol if args.gap_tol is not None else s["gap_tol"]
    iters = args.max_iters if args.max_iters is not None else s["max_iters"]
    return SolverOptions(gap_rtol=gap, max_iters=iters, kkt_rtol=s["kkt_rtol"])


def _context(sc):
    return EnergyContext.build(sc.condenser, sc.kernel, sigma=sc.solver["sigma"], ridge_max=sc.solver["ridge_max"])


def _context_info(ctx) -> dict:
    return {"nodes": ctx.size, "ridge": ctx.form.ridge, "cholesky_ok": ctx.form.cholesky_ok}


def _pick_plate(requested, fallback, name):
    if requested is not None:
        return int(requested)
    if fallback is not None:
        return int(fallback)
    raise _unspecified(f"{name}: choose a plate with --plate")


def _unspecified(message):
    return ScenarioError([ScenarioIssue("plate_unspecified", "$", message)])


# ---------------------------------------------------------------- commands


def cmd_solve(sc, args, out, outdir):
    ctx = _context(sc)
    opts = _options(sc, args)
    if args.mode == "aux":
        free = args.free if args.free else sc.condenser.unbounded_plates
        if not free:
            raise _unspecified("aux mode needs unconstrained plates (--free)")
        J = [i for i in range(len(sc.condenser.plates)) if i not in free]
        rep = solve_auxiliary(ctx, J, opts)
    else:
        rep = solve_gauss(ctx, opts)
    res = rep.to_json()
    res["identity_shifted"] = gauss_value_shifted(ctx, rep.minimizer) if args.mode == "full" else None
    residuals = {"duality_gap": rep.duality_gap, "feasibility": rep.feasibility_residuals}
    if rep.kkt is not None:
        residuals.update(
            kkt_lower=rep.kkt.max_lower_violation,
            kkt_support=rep.kkt.max_support_violation,
            sum_rule_error=rep.kkt.sum_rule_error,
            kkt_tol=rep.kkt.kkt_tol,
        )
    rows = [
        [i, j, format(w, ".17g")]
        for i, comp in enumerate(rep.minimizer.components)
        for j, w in enumerate(comp)
    ]
    _write(outdir / "minimizer.csv", _csv_text(("plate", "node", "weight"), rows))
    out["context"] = _context_info(ctx)
    out["results"] = res
    out["residuals"] = residuals
    if not rep.converged:
        raise NonConvergence(f"solve stopped at gap {rep.duality_gap:.3e} > {rep.gap_tol:.3e}")


def cmd_project(sc, args, out):
    c = sc.condenser
    plate = _pick_plate(args.plate, sc.data["project"]["plate"], "project")
    atoms = sc.data["project"].get("nu")
    nu = SignedMeasure([a["position"] for a in atoms], [a["weight"] for a in atoms]) if atoms else c.chi
    # source atoms get global indices by riding along as zero-weight chi atoms
    ext = Condenser(c.plates, c.a, c.g_values, SignedMeasure(
        np.concatenate([c.chi.positions, nu.positions]) if len(nu) else c.chi.positions,
        np.concatenate([c.chi.weights, np.zeros(len(nu))]) if len(nu) else c.chi.weights,
    ), c.min_gap, c.g_bounded)
    ctx = EnergyContext.build(ext, sc.kernel, sigma=sc.solver["sigma"], ridge_max=sc.solver["ridge_max"], check=False)
    v = ctx.signed_vector(nu)
    res = balayage(ctx, v, plate) if not np.any(v[ctx.plate_index[plate]]) else project_onto_cone(ctx, v, ctx.plate_index[plate])
    out["context"] = _context_info(ctx)
    out["results"] = {
        "plate": plate,
        "distance": res.distance,
        "swept_mass": res.swept_mass,
        "mass_bound": res.mass_bound,
        "mass_bound_ok": res.mass_bound_ok,
        "iterations": res.iterations,
        "weights": res.weights,
    }
    out["residuals"] = {
        "kkt_min": float(res.kkt_residuals.min()),
        "kkt_support_max": float(np.max(np.abs(res.kkt_residuals[res.weights > 0]), initial=0.0)),
        "complementarity": res.complementarity_residual,
        "kkt_tol": res.kkt_tol,
        "kkt_ok": res.kkt_ok(),
    }


def _target(sc, args):
    plates = [args.plate] if args.plate is not None else sc.data["equilibrium"].get("plates")
    if not plates:
        plates = list(range(len(sc.condenser.plates)))
    return plates


def cmd_equilibrium(sc, args, out, capacity_only=False):
    ctx = _context(sc)
    plates = _target(sc, args)
    eq = equilibrium_measure(ctx, ctx.plate_nodes_union(plates))
    out["context"] = _context_info(ctx)
    if capacity_only:
        out["results"] = {"plates": plates, "capacity": eq.capacity}
    else:
        out["results"] = {
            "plates": plates,
            "capacity": eq.capacity,
            "energy": eq.energy,
            "iterations": eq.iterations,
            "weights": eq.measure.weights,
            "potential_min": float(eq.potential_at_nodes.min()),
            "potential_max_on_support": float(eq.potential_at_nodes[eq.measure.weights > 0].max()),
        }
    out["residuals"] = {"identity_error": abs(eq.capacity - eq.energy), "identity_ok": eq.identity_ok()}


def _ell(sc, args, key):
    req = args.plate if args.plate is not None else sc.data[key].get("ell")
    return _pick_plate(req, sc.unbounded_plate(), key)


def cmd_diagnose(sc, args, out):
    ctx = _context(sc)
    ell = _ell(sc, args, "diagnose")
    rep = sigma_threshold(ctx, ell, _options(sc, args), sc.solver["verdict_rtol"])
    res = rep.to_json()
    try:
        cb = coarse_bound_check(ctx, ell)
        res["coarse_bound"] = {"bound": cb.bound, "triggered": cb.triggered, "caveat": cb.g_bounded_caveat}
    except ValueError as exc:
        res["coarse_bound"] = {"error": str(exc)}
    out["context"] = _context_info(ctx)
    out["results"] = res
    out["residuals"] = {"aux_gap": rep.aux.duality_gap, "aux_gap_tol": rep.aux.gap_tol}
    if not rep.aux.converged:
        raise NonConvergence("auxiliary solve did not converge")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_sweep(sc, args, out, outdir):
    sw = sc.sweep
    radii = sorted(float(r) for r in sw["radii"])
    if not radii:
        raise _unspecified("sweep needs sweep.radii")
    ell = _ell(sc, args, "sweep")
    opts = _options(sc, args)
    records = exhaustion_sweep(
        sc.condenser_at, sc.kernel, ell, radii,
        window_radius=sw["window_radius"], window_center=sw["window_center"], options=opts,
        sigma=sc.solver["sigma"], ridge_max=sc.solver["ridge_max"], verdict_rtol=sc.solver["verdict_rtol"],
    )
    text = _csv_text(ExhaustionRecord.CSV_COLUMNS, [r.csv_row() for r in records])
    _write(outdir / "results.csv", text)
    out["results"] = {"ell": ell, "records": [r.to_json() for r in records]}
    if sw["a_ell_grid"]:
        ctx = EnergyContext.build(sc.condenser_at(radii[-1]), sc.kernel, sigma=sc.solver["sigma"], ridge_max=sc.solver["ridge_max"])
        scan = solvable_cone_scan(ctx, ell, sw["a_ell_grid"], opts, sc.solver["verdict_rtol"])
        rows = [[format(a, ".17g"), v] for a, v in zip(scan.grid, scan.verdicts)]
        _write(outdir / "cone_scan.csv", _csv_text(("a_ell", "verdict"), rows))
        out["results"]["cone_scan"] = scan.to_json()
    failed = [r for r in records if r.error is not None or not r.converged]
    out["residuals"] = {"failed_radii": [r.R for r in failed]}
    if failed:
        raise NonConvergence(f"{len(failed)} sweep radii failed or did not converge")


# ---------------------------------------------------------------- driver


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _thread_limit():
    n = int(os.environ.get("GVP_THREADS", "0") or 0)
    if n <= 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gvp", description="Discrete Gauss variational problem on Riesz condensers")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", type=str, help="scenario JSON file")
    p.add_argument("--out", type=str, default=".", help="output directory (default: current)")
    p.add_argument("--gap-tol", type=float, default=None, help="relative Frank-Wolfe gap tolerance")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("full", "aux"), default="full")
    p.add_argument("--plate", type=int, default=None, help="target / unbounded plate index")
    p.add_argument("--free", type=int, action="append", default=None, help="unconstrained plate in aux mode")
    return p


def run(args) -> int:
    outdir = Path(args.out)
    t0 = time.perf_counter()
    report = {"spec_version": SPEC_VERSION, "command": args.command, "versions": _versions()}
    code = EXIT_OK
    try:
        if args.command == "selftest":
            passed, failed, details = run_selftest()
            report["results"] = {"passed": passed, "failed": failed, "details": details}
            for name, status in details.items():
                print(f"{name}: {'PASS' if status == 'ok' else 'FAIL'}")
            print(f"selftest: {passed} passed, {failed} failed")
            code = EXIT_OK if failed == 0 else 1
        else:
            if not args.scenario:
                print("error: --scenario is required", file=sys.stderr)
                return EXIT_VALIDATION
            sc = parse_scenario(args.scenario, seed=args.seed)
            report["seed"] = sc.seed
            report["inputs"] = sc.normalized
            with _thread_limit():
                if args.command == "solve":
                    cmd_solve(sc, args, report, outdir)
                elif args.command == "project":
                    cmd_project(sc, args, report)
                elif args.command == "equilibrium":
                    cmd_equilibrium(sc, args, report)
                elif args.command == "capacity":
                    cmd_equilibrium(sc, args, report, capacity_only=True)
                elif args.command == "diagnose":
                    cmd_diagnose(sc, args, report)
                elif args.command == "sweep":
                    cmd_sweep(sc, args, report, outdir)
    except ScenarioError as exc:
        report["errors"] = [{"name": i.name, "path": i.path, "message": i.message} for i in exc.issues]
        for i in exc.issues:
            print(f"validation error: {i}", file=sys.stderr)
        code = EXIT_VALIDATION
    except (ValidationError, ValueError, IllConditionedError, SolverError) as exc:
        report["errors"] = [{"name": type(exc).__name__, "path": "$", "message": str(exc)}]
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_VALIDATION
    except (NonConvergence, ProjectionError) as exc:
        report.setdefault("errors", []).append({"name": "non_convergence", "path": "$", "message": str(exc)})
        print(f"non-convergence: {exc}", file=sys.stderr)
        code = EXIT_NONCONVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    report["exit_code"] = code
    report["wallclock"] = time.perf_counter() - t0
    try:
        _write(outdir / "report.json", json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
