"""Command-line front end.

Exit codes: 0 success, 1 internal error, 2 input error, 3 infeasible,
4 time or iteration limit reached.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

from . import evaluation, milp, scenarios as scen
from .data_model import SCHEMA_VERSION, PlanningProblem, ValidationError, load_problem
from .planning import VARIANTS, PlanSolution, solve_ccigd, solve_dt, solve_igd

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3, 4
CLI_GAP = 1e-4
DEFAULT_SCENARIOS = 20

log = logging.getLogger("migplan")


class InputError(Exception):
    pass


# ---- configuration -----------------------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None


def _setting(args, cfg: dict, name: str, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _problem(args, cfg) -> tuple[PlanningProblem, scen.ProfileSpec]:
    path = args.problem or cfg.get("problem")
    if not path:
        raise InputError("no problem file given")
    problem = load_problem(path)
    changes = {}
    for flag, fld in (("sigma", "deviation_factor"), ("epsilon", "risk_tolerance"),
                      ("alpha_cap", "alpha_cap")):
        v = _setting(args, cfg, flag)
        if v is not None:
            changes[fld] = float(v)
    if changes:
        problem = problem.with_overrides(**changes)
    doc = json.loads(Path(path).read_text())
    if "profile" in doc:
        profile = scen.ProfileSpec.from_dict(doc["profile"])
    else:
        profile = scen.default_profile(problem.typical_days, problem.hours)
    return problem, profile


def _scenario_set(args, cfg, problem, profile, count=None) -> scen.ScenarioSet:
    path = _setting(args, cfg, "scenarios")
    if path and count is None:
        s = scen.load(path)
        s.check_compatible(problem)
        return s
    n = count or int(_setting(args, cfg, "n_scenarios", DEFAULT_SCENARIOS))
    return scen.generate(profile, problem, n, int(_setting(args, cfg, "seed", 0)))


def _limits(args, cfg) -> tuple[float, float | None]:
    gap = float(_setting(args, cfg, "gap", CLI_GAP))
    tl = _setting(args, cfg, "time_limit_min")
    return gap, None if tl is None else float(tl) * 60.0


def _out_dir(args, cfg) -> Path:
    out = Path(_setting(args, cfg, "out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _risk_neutral_budget(args, cfg, problem, profile, gap, tl) -> tuple[float, PlanSolution | None]:
    lam = _setting(args, cfg, "lambda0")
    if lam is not None:
        return float(lam), None
    nominal = scen.nominal_scenarios(profile, problem)[0]
    dt = solve_dt(problem, nominal, gap, tl)
    if dt.status == "infeasible":
        raise _Infeasible("deterministic planning model is infeasible")
    if dt.plan is None:
        raise _Limit("deterministic model hit its limit without a plan")
    return dt.objective, dt


class _Infeasible(Exception):
    pass


class _Limit(Exception):
    pass


# ---- outputs ---------------------------------------------------------------------------

def _num(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows: list[list], extra_header: list[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        for line in extra_header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) for v in r])


SUMMARY_COLUMNS = ["variant", "status", "objective", "alpha", "iterations", "gap", "lambda0"]


def _summary_row(sol: PlanSolution) -> list:
    return [sol.variant, sol.status, sol.objective, sol.alpha, sol.iterations, sol.gap, sol.lambda0]


def _exit_for(status: str) -> int:
    return {"optimal": EXIT_OK, "infeasible": EXIT_INFEASIBLE}.get(status, EXIT_LIMIT)


def _run_variant(variant, problem, profile, sset, lam, gap, tl, max_iter, log_path=None,
                 linearization="bigm") -> PlanSolution:
    nominal = scen.nominal_scenarios(profile, problem)[0]
    if variant == "dt":
        return solve_dt(problem, nominal, gap, tl)
    if variant == "igd":
        return solve_igd(problem, nominal, lam, gap, tl)
    method = "oracle" if variant == "oracle" else variant.split("-", 1)[1]
    return solve_ccigd(problem, sset, lam, method, gap, tl, max_iter, log_path=log_path,
                       linearization=linearization)


# ---- commands -------------------------------------------------------------------------------

def cmd_solve(args, cfg) -> int:
    problem, profile = _problem(args, cfg)
    variant = _setting(args, cfg, "variant", "ccigd-sbd")
    if variant not in VARIANTS:
        raise InputError(f"variant must be one of {', '.join(VARIANTS)}")
    gap, tl = _limits(args, cfg)
    out = _out_dir(args, cfg)
    t0 = time.perf_counter()
    if variant == "dt":
        lam, sset = math.nan, None
    else:
        lam, _ = _risk_neutral_budget(args, cfg, problem, profile, gap, tl)
        sset = _scenario_set(args, cfg, problem, profile) if variant not in ("igd",) else None
    log_path = out / "iterations.jsonl"
    log_path.write_text("")
    sol = _run_variant(variant, problem, profile, sset, lam, gap, tl,
                       int(_setting(args, cfg, "max_iter", 100)), log_path,
                       _setting(args, cfg, "linearization", "bigm"))
    if variant == "dt":
        lam = sol.objective
    sol.save(out / "solution.json", problem)
    wall = time.perf_counter() - t0
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [_summary_row(sol)],
               [f"wall_time_s={wall:.3f}"])
    print(f"{variant}: status={sol.status} objective={_num(sol.objective)} "
          f"lambda0={_num(lam)} iterations={sol.iterations}")
    return _exit_for(sol.status)


def _label(sol: PlanSolution, wall: float) -> tuple[str, str]:
    if sol.status == "limit":
        gap = "N/A" if not math.isfinite(sol.gap) else f"{100 * sol.gap:.2f}%"
        return "T", gap
    return f"{wall / 60:.2f}", "" if sol.status != "optimal" else f"{100 * sol.gap:.2f}%"


def cmd_compare(args, cfg) -> int:
    problem, profile = _problem(args, cfg)
    gap, tl = _limits(args, cfg)
    out = _out_dir(args, cfg)
    variants = [v if v.startswith(("ccigd-", "oracle", "dt", "igd")) else f"ccigd-{v}"
                for v in _split(_setting(args, cfg, "variants", "sbd,obd,mono"))]
    for v in variants:
        if v not in VARIANTS:
            raise InputError(f"unknown variant {v}")
    counts = [int(c) for c in _split(_setting(args, cfg, "counts", "4"))]
    lam, _ = _risk_neutral_budget(args, cfg, problem, profile, gap, None)
    rows = []
    for n in counts:
        sset = _scenario_set(args, cfg, problem, profile, count=n)
        for v in variants:
            t0 = time.perf_counter()
            try:
                sol = _run_variant(v, problem, profile, sset, lam, gap, tl,
                                   int(_setting(args, cfg, "max_iter", 100)))
            except Exception as exc:  # recorded per row; the comparison continues
                log.error("%s with %d scenarios failed: %s", v, n, exc)
                rows.append([v, n, "error", "", "", "", ""])
                continue
            wall = time.perf_counter() - t0
            minutes, g = _label(sol, wall)
            alpha = "" if not math.isfinite(sol.alpha) else repr(sol.alpha)
            rows.append([v, n, sol.status, alpha, sol.iterations, minutes, g])
            print(f"{v:11s} N={n:<4d} alpha={alpha or '-':>20s} itr={sol.iterations:<4d} "
                  f"min={minutes:>6s} gap={g or '-'}")
    _write_csv(out / "compare.csv", ["variant", "scenarios", "status", "alpha", "itr", "min", "gap"],
               rows, [f"lambda0={lam!r}"])
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    problem, profile = _problem(args, cfg)
    out = _out_dir(args, cfg)
    path = Path(_setting(args, cfg, "solution", str(out / "solution.json")))
    if not path.exists():
        raise InputError(f"solution file {path} not found")
    sol = PlanSolution.load(path)
    if sol.plan is None:
        raise InputError(f"{path} holds no plan")
    alpha = float(_setting(args, cfg, "alpha", 0.0))
    count = _setting(args, cfg, "n_scenarios")
    sset = _scenario_set(args, cfg, problem, profile, count=None if count is None else int(count))
    cap = sol.budget_cap if math.isfinite(sol.budget_cap) else (
        problem.budget_multiplier * sol.lambda0 if math.isfinite(sol.lambda0) else math.inf)
    report = evaluation.evaluate_epb(problem, sol.plan, alpha, sset, cap, plan_id=sol.variant,
                                     strict=not args.allow_inadequate)
    evaluation.write_epb_csv(report, out / "epb_report.csv")
    (out / "epb_report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"EPB={report.epb:.2f} first_stage={report.first_stage_cost:.2f} "
          f"violation_rate={_num(report.violation_rate)} peak_served={report.peak_served:.1f} kW")
    return EXIT_OK


def _grid(text: str) -> list[float]:
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        n = int(round((hi - lo) / step))
        return [round(lo + i * step, 12) for i in range(n + 1)]
    return [float(x) for x in _split(text)]


def cmd_sweep(args, cfg) -> int:
    problem, profile = _problem(args, cfg)
    gap, tl = _limits(args, cfg)
    out = _out_dir(args, cfg)
    param = _setting(args, cfg, "param", "sigma")
    grid = _grid(str(_setting(args, cfg, "grid", "0.2:0.5:0.05")))
    variant = _setting(args, cfg, "variant", "ccigd-sbd")
    lam, _ = _risk_neutral_budget(args, cfg, problem, profile, gap, tl)
    sset = _scenario_set(args, cfg, problem, profile)

    def solver(p, s, lam):
        sol = _run_variant(variant, p, profile, s, lam, gap, tl,
                           int(_setting(args, cfg, "max_iter", 100)))
        return sol.status, sol.alpha

    points = evaluation.sensitivity_sweep(problem, sset, param, grid, lam, solver)
    evaluation.write_sweep_csv(points, out / f"sensitivity_{param}.csv")
    for p in points:
        print(f"{param}={p.value:g} status={p.status} alpha={_num(p.alpha)}")
    return EXIT_OK


def cmd_scen(args, cfg) -> int:
    if args.scen_cmd == "gen":
        problem, profile = _problem(args, cfg)
        s = scen.generate(profile, problem, int(args.count), int(_setting(args, cfg, "seed", 0)))
        scen.save(s, args.output)
        print(json.dumps(scen.summarize(s), indent=2))
    elif args.scen_cmd == "reduce":
        s = scen.reduce(scen.load(args.input), int(args.target), reweight=not args.uniform)
        scen.save(s, args.output)
        print(json.dumps(scen.summarize(s), indent=2))
    else:
        print(json.dumps(scen.summarize(scen.load(args.input)), indent=2))
    return EXIT_OK


def _split(v) -> list[str]:
    if isinstance(v, (list, tuple)):
        return [str(x) for x in v]
    return [x.strip() for x in str(v).split(",") if x.strip()]


# ---- parser --------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default settings")
    common.add_argument("--seed", type=int)
    common.add_argument("--time-limit-min", dest="time_limit_min", type=float)
    common.add_argument("--gap", type=float, help=f"relative MIP gap (default {CLI_GAP})")
    common.add_argument("--out", help="output directory (default .)")
    common.add_argument("--backend", choices=milp.available_backends() + ["highs"])
    common.add_argument("-v", "--verbose", action="store_true")

    problem_args = argparse.ArgumentParser(add_help=False)
    problem_args.add_argument("problem", nargs="?", help="problem JSON file")
    problem_args.add_argument("--sigma", type=float)
    problem_args.add_argument("--epsilon", type=float)
    problem_args.add_argument("--alpha-cap", dest="alpha_cap", type=float)
    problem_args.add_argument("--lambda0", type=float, help="skip the deterministic solve")
    problem_args.add_argument("--scenarios", help="scenario file (.json or binary)")
    problem_args.add_argument("--n-scenarios", dest="n_scenarios", type=int)
    problem_args.add_argument("--max-iter", dest="max_iter", type=int)

    p = argparse.ArgumentParser(prog="migplan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common, problem_args], help="solve one model variant")
    s.add_argument("--variant", choices=VARIANTS)
    s.add_argument("--linearization", choices=("bigm", "mccormick"))
    s.set_defaults(func=cmd_solve)
    c = sub.add_parser("compare", parents=[common, problem_args],
                       help="compare algorithms over scenario counts")
    c.add_argument("--variants", help="comma list, e.g. sbd,obd,mono")
    c.add_argument("--counts", help="comma list of scenario counts")
    c.set_defaults(func=cmd_compare)
    e = sub.add_parser("evaluate", parents=[common, problem_args], help="expected project budget")
    e.add_argument("--solution", help="solution.json to evaluate")
    e.add_argument("--alpha", type=float)
    e.add_argument("--allow-inadequate", action="store_true",
                   help="warn instead of failing when the plan lacks capacity at alpha")
    e.set_defaults(func=cmd_evaluate)
    w = sub.add_parser("sweep", parents=[common, problem_args], help="sensitivity sweep")
    w.add_argument("--param", choices=sorted(evaluation.SWEEP_PARAMETERS))
    w.add_argument("--grid", help="lo:hi:step or comma list")
    w.add_argument("--variant", choices=VARIANTS)
    w.set_defaults(func=cmd_sweep)
    sc = sub.add_parser("scen", help="scenario generation and reduction")
    ssub = sc.add_subparsers(dest="scen_cmd", required=True)
    g = ssub.add_parser("gen", parents=[common, problem_args])
    g.add_argument("--count", type=int, required=True)
    g.add_argument("-o", "--output", required=True)
    r = ssub.add_parser("reduce", parents=[common])
    r.add_argument("input")
    r.add_argument("--target", type=int, required=True)
    r.add_argument("--uniform", action="store_true", help="keep equal weights after reduction")
    r.add_argument("-o", "--output", required=True)
    i = ssub.add_parser("inspect", parents=[common])
    i.add_argument("input")
    sc.set_defaults(func=cmd_scen)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args.config)
        backend = args.backend or cfg.get("solver", {}).get("backend")
        if backend:
            milp.set_default_backend(backend)
        return args.func(args, cfg)
    except (InputError, ValidationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _Limit as exc:
        print(f"limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal-error code
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    finally:
        milp.set_default_backend(None)


if __name__ == "__main__":
    sys.exit(main())
