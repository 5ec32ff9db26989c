"""Command-line experiment runner: ``cplap <subcommand> --config cfg.json``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cf
from .coefficients import check_admissible, derivative_consistency
from .discretization import error_norms
from .mesh import FEFunction, RectGrid
from .regularity import decay_fit, grad_oscillation
from .sensitivity import Direction, RateTestError, rate_test
from .solver import SolverConfig, SolverError, solve_problem
from .structure import FluxParams, c1_of, c2_of, c3_search, check_structure_inequalities, sample_pairs

log = logging.getLogger("cplap")

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4


class InvariantViolation(RuntimeError):
    def __init__(self, msg, sample=None):
        super().__init__(msg)
        self.sample = sample


def threads() -> int:
    try:
        return max(1, int(os.environ.get("CPLAP_THREADS", "")))
    except ValueError:
        return os.cpu_count() or 1


def parallel_map(fn, items):
    items = list(items)
    n = min(threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _solver_cfg(cfg) -> SolverConfig:
    r = cfg["run"]
    return SolverConfig(tol=float(r["tol"]), max_picard=int(r["max_picard"]), max_newton=int(r["max_newton"]),
                        eps0_floor=bool(r["eps0_floor"]))


def run_solve(cfg, out: Path, checks: dict) -> None:
    problem = cf.build_problem(cfg)
    u, rep = solve_problem(problem, _solver_cfg(cfg))
    u.write_csv(out / "solution.csv")
    _dump(out / "report.json", rep.to_dict())
    _write_csv(out / "residual_history.csv", ["iteration", "residual"], enumerate(rep.residual_history))
    checks["converged"] = rep.converged
    if problem.exact is not None:
        checks["exact_error"] = error_norms(u, problem.exact, problem.exact_grad)


def structure_test(cfg, out: Path, checks: dict) -> None:
    r = cfg["run"]
    seed = int(r["seed"])
    legs = [(float(p), float(e), tuple(s)) for p in r["p_list"] for e in r["eps_list"] for s in r["shapes"]]

    def leg(args):
        p, eps, (N, n) = args
        params = FluxParams(p, eps)
        c3 = c3_search(params, int(r["samples"]), seed, N, n)
        rng = np.random.default_rng([seed, 1, int(p * 1000), int(eps * 1000), N, n])
        F, G = sample_pairs(rng, int(r["samples"]), N, n)
        res = check_structure_inequalities(params, F, G, c3.c3)
        res.update(p=p, eps=eps, N=N, n=n, c1=c1_of(p), c2=c2_of(p), c3_fixture=vars(c3))
        bad = res["str1_index"] + res["str2_index"] + res.get("str3_index", [])
        if bad or res["identity_max_rel"] > 1e-12:
            k = bad[0] if bad else 0
            res["violating_sample"] = {"F": F[k], "G": G[k]}
        return res

    results = parallel_map(leg, legs)
    _dump(out / "structure.json", {"seed": seed, "samples": r["samples"], "legs": results})
    checks["identity"] = all(x["identity_max_rel"] <= 1e-12 for x in results)
    checks["str1"] = all(x["str1_violations"] == 0 for x in results)
    checks["str2"] = all(x["str2_violations"] == 0 for x in results)
    checks["str3"] = all(x["str3_out_of_band"] == 0 for x in results)
    failed = [x for x in results if "violating_sample" in x]
    if failed:
        _dump(out / "violation.json", failed[0])
        raise InvariantViolation(f"structure inequality violated at p={failed[0]['p']} eps={failed[0]['eps']}")


def run_sensitivity(cfg, out: Path, checks: dict) -> None:
    problem = cf.build_problem(cfg)
    pc = cf.build_family(cfg, problem.a)
    r = cfg["run"]
    z = cf.as_complex(r["z"])
    # The derivative must be verified before any rate is meaningful.
    table = derivative_consistency(pc, z, [float(h) for h in r["h_list"]], problem.grid)
    _write_csv(out / "derivative_consistency.csv", ["h", "remainder_over_h"], [(abs(h), e) for h, e in table])
    errs = [e for _, e in table]
    ok = errs[-1] <= 1e-12 or all(b < a for a, b in zip(errs, errs[1:]))
    checks["derivative_consistency"] = ok
    if not ok:
        raise InvariantViolation("a'(z) does not match the difference quotients of a(z)", {"table": table})
    direction = Direction(cf.as_complex(r["theta"]))
    scfg = _solver_cfg(cfg)
    try:
        sol = rate_test(problem.grid, pc, z, direction, r["t_list"], problem.params, problem.F, scfg, problem.g)
        checks["rate"] = True
    except RateTestError as exc:
        _write_csv(out / "rate_table.csv", ["t", "err_over_t", "quotient_w12"], exc.table)
        checks["rate"] = False
        raise InvariantViolation(str(exc), {"table": exc.table}) from exc
    _write_csv(out / "rate_table.csv", ["t", "err_over_t", "quotient_w12"], sol.rate_table)
    sol.w_theta.write_csv(out / "w_theta.csv")
    _dump(out / "sensitivity.json", {"s_star": sol.s_star, "linear_residual": sol.linear_residual,
                                     "theta": direction.theta, "theta_twist": direction.theta_twist})


def run_regularity(cfg, out: Path, checks: dict) -> None:
    problem = cf.build_problem(cfg)
    r = cfg["run"]
    if r["input"]:
        u = FEFunction.read_csv(r["input"], problem.grid)
    else:
        u, _ = solve_problem(problem, _solver_cfg(cfg))
    center = tuple(float(c) for c in r["center"])
    prof = decay_fit(u, center, [float(x) for x in r["radii"]], problem.params.p)
    (out / "profile.csv").write_text(prof.to_csv())
    osc = {repr(rho): grad_oscillation(u, center, rho) for rho in prof.radii}
    _dump(out / "fit.json", {**json.loads(prof.to_json()), "oscillation": osc})
    checks["fit_r2_above_0.9"] = prof.fit_r2 > 0.9
    checks["beta_positive"] = prof.fitted_beta > 0


def convergence_study(cfg, out: Path | None = None) -> list:
    """Solve a manufactured problem on each mesh and tabulate errors and observed orders."""
    problem = cf.build_problem(cfg)
    if problem.exact is None:
        raise cf.ConfigError("convergence-study needs a manufactured source")
    scfg = _solver_cfg(cfg)
    (x0, x1), (y0, y1) = problem.grid.bounds

    def leg(m):
        grid = RectGrid(((x0, x1), (y0, y1)), (m, m))
        u, _ = solve_problem(problem.on(grid), scfg)
        e = error_norms(u, problem.exact, problem.exact_grad)
        return grid.h[0], e

    res = parallel_map(leg, [int(m) for m in cfg["run"]["meshes"]])
    rows = []
    for i, (h, e) in enumerate(res):
        if i == 0:
            rows.append((h, e["L2"], e["W12"], "", ""))
        else:
            hp, ep = res[i - 1]
            rows.append((h, e["L2"], e["W12"], np.log(ep["W12"] / e["W12"]) / np.log(hp / h),
                         np.log(ep["L2"] / e["L2"]) / np.log(hp / h)))
    if out is not None:
        _write_csv(out / "convergence.csv", ["h", "L2_err", "W12_err", "order", "L2_order"], rows)
    return rows


def run_convergence(cfg, out: Path, checks: dict) -> None:
    rows = convergence_study(cfg, out)
    if len(rows) < 2:
        checks["order_available"] = False
        return
    checks["W12_order"] = float(rows[-1][3])
    checks["L2_order"] = float(rows[-1][4])


RUNNERS = {"solve": run_solve, "structure-test": structure_test, "sensitivity": run_sensitivity,
           "regularity": run_regularity, "convergence-study": run_convergence}


def run(config, out_dir=None) -> int:
    """Run one experiment; returns the process exit status."""
    try:
        cfg = cf.load(config) if isinstance(config, (str, Path)) else cf.resolve(config)
    except cf.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(out_dir or cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "config.json", cfg)
    checks: dict = {}
    status = EXIT_OK
    try:
        problem = cf.build_problem(cfg)
        adm = check_admissible(problem.a, problem.grid, problem.params.p)
        _dump(out / "admissibility.json", adm.to_dict())
        RUNNERS[cfg["kind"]](cfg, out, checks)
    except ValueError as exc:  # config, admissibility, resolution and condition errors
        print(f"validation error: {exc}", file=sys.stderr)
        status = EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        if exc.report is not None:
            _dump(out / "report.json", exc.report.to_dict())
        status = EXIT_SOLVER
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        if exc.sample is not None:
            _dump(out / "violation_sample.json", exc.sample)
        status = EXIT_INVARIANT
    _dump(out / "summary.json", {"kind": cfg["kind"], "exit_status": status, "checks": checks})
    return status


def _parse_selection(text: str) -> dict:
    """``name:key=value,key=value`` -> {"name": ..., "params": {...}}."""
    name, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        params[k.strip()] = _parse_value(v.strip())
    return {"name": name.strip(), "params": params}


def _parse_value(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    try:
        z = complex(v)
        return [z.real, z.imag]
    except ValueError:
        return v


def _overrides(args) -> dict:
    pb, rn = {}, {}
    if args.p is not None:
        pb["p"] = args.p
    if args.eps is not None:
        pb["eps"] = args.eps
    if args.grid:
        nx, _, ny = args.grid.lower().partition("x")
        pb["grid"] = [int(nx), int(ny or nx)]
    if args.domain:
        x0, x1, y0, y1 = (float(v) for v in args.domain.split(","))
        pb["domain"] = [[x0, x1], [y0, y1]]
    for key, attr in (("coefficient", "coeff"), ("source", "source"), ("boundary", "boundary")):
        if getattr(args, attr):
            pb[key] = _parse_selection(getattr(args, attr))
    if args.tol is not None:
        rn["tol"] = args.tol
    if getattr(args, "z", None):
        rn["z"] = _parse_value(args.z)
    if getattr(args, "theta", None):
        rn["theta"] = _parse_value(args.theta)
    if getattr(args, "t_list", None):
        rn["t_list"] = [float(t) for t in args.t_list.split(",")]
    if getattr(args, "family", None):
        rn["family"] = _parse_selection(args.family)
    if getattr(args, "center", None):
        rn["center"] = [float(c) for c in args.center.split(",")]
    if getattr(args, "radii", None):
        rn["radii"] = [float(c) for c in args.radii.split(",")]
    if getattr(args, "input", None):
        rn["input"] = args.input
    if getattr(args, "seed", None) is not None:
        rn["seed"] = args.seed
    out = {}
    if pb:
        out["problem"] = pb
    if rn:
        out["run"] = rn
    if args.out:
        out["output"] = args.out
    return out


def _deep_update(base: dict, over: dict) -> dict:
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict) and not cf._is_selection(v):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cplap", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in cf.KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--p", type=float)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--grid", help="NxM cells")
        sp.add_argument("--domain", help="x0,x1,y0,y1")
        sp.add_argument("--coeff", help="name:key=value,...")
        sp.add_argument("--source", help="name:key=value,...")
        sp.add_argument("--boundary", help="name:key=value,...")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--out", help="output directory")
        if kind == "sensitivity":
            sp.add_argument("--z")
            sp.add_argument("--theta")
            sp.add_argument("--t-list", dest="t_list")
            sp.add_argument("--family", help="name:key=value,...")
        if kind == "regularity":
            sp.add_argument("--center", help="x,y")
            sp.add_argument("--radii", help="comma-separated half-widths")
            sp.add_argument("--input", help="solution dump (CSV)")
        if kind == "structure-test":
            sp.add_argument("--seed", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    if raw.get("kind", args.kind) != args.kind:
        print(f"config error: config kind {raw['kind']!r} does not match subcommand {args.kind!r}", file=sys.stderr)
        return EXIT_VALIDATION
    raw["kind"] = args.kind
    raw = _deep_update(raw, _overrides(args))
    return run(raw)


if __name__ == "__main__":
    sys.exit(main())
