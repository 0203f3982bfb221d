"""Command-line interface.

Subcommands: parse, solve, derive, verify, demo, serve. Every subcommand
has a --format json mode whose payloads are produced by the same
serializers as the HTTP service. Exit codes: 0 success, 1 engine/domain
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import jsonio, verify, wheelcore
from .errors import DualityError
from .exprdsl import format_expr, parse_utility
from .families import parse_family_spec
from .numkit import PriceIncome, grid_oracle_budget, maximize_on_budget, minimize_expenditure
from .wheelcore import WheelSession


def _split_vector(text: str) -> np.ndarray:
    return np.asarray([float(v) for v in text.split(",")], dtype=float)


def parse_point(text: str) -> dict:
    """Parse the --at syntax: semicolon-separated fields, e.g. 'P=1,1;u=1'."""
    point: dict = {}
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        key, _, val = item.partition("=")
        key = key.strip()
        if key in ("P", "q", "p"):
            point[key] = _split_vector(val)
        elif key in ("M", "u"):
            point[key] = float(val)
        else:
            raise ValueError(f"unknown point field {key!r} (use P, M, u, q, p)")
    return point


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        print(jsonio.dumps(payload, indent=2))
    else:
        print(text)


def _session_from(args) -> WheelSession:
    if getattr(args, "family", None):
        inst = parse_family_spec(args.family)
        return WheelSession(inst.utility)
    if getattr(args, "utility", None):
        return WheelSession(args.utility)
    raise DualityError("either --utility or --family is required")


def cmd_parse(args) -> int:
    expr = parse_utility(args.utility)
    payload = {
        "utility": args.utility,
        "normalized": format_expr(expr),
        "n_goods": expr.n_goods,
    }
    _emit(args, payload, f"{format_expr(expr)}  (goods: {expr.n_goods})")
    return 0


def cmd_solve(args) -> int:
    expr = parse_utility(args.utility)
    if args.problem == "primal":
        if args.income is None:
            raise DualityError("primal problem needs --income")
        pi = PriceIncome(_split_vector(args.prices), args.income)
        res = maximize_on_budget(expr, pi)
        oracle = None
        if args.check_grid:
            oracle = grid_oracle_budget(expr, pi, 101).bundle
        payload = {
            "problem": "primal",
            "bundle": res.bundle,
            "value": res.value,
            "converged": res.converged,
            "iterations": res.iterations,
            "constraint_residual": res.constraint_residual,
        }
        if oracle is not None:
            payload["grid_seed"] = oracle
        _emit(args, payload, f"bundle: {jsonio.to_jsonable(res.bundle)}  utility: {jsonio.round_sig(res.value)}")
    else:
        if args.ulevel is None:
            raise DualityError("dual problem needs --ulevel")
        res = minimize_expenditure(expr, _split_vector(args.prices), args.ulevel)
        payload = {
            "problem": "dual",
            "bundle": res.bundle,
            "expenditure": res.value,
            "converged": res.converged,
            "iterations": res.iterations,
            "constraint_residual": res.constraint_residual,
        }
        _emit(args, payload, f"bundle: {jsonio.to_jsonable(res.bundle)}  expenditure: {jsonio.round_sig(res.value)}")
    return 0


def cmd_derive(args) -> int:
    session = _session_from(args)
    if args.via:
        path = [m.strip() for m in args.via.split(",") if m.strip()]
        methods = list(path)
    else:
        if not (args.src and args.dst):
            raise DualityError("derive needs --from/--to, or an explicit --via list")
        path = wheelcore.plan_path(args.src, args.dst)
        methods = [e.method for e in path]
    point = parse_point(args.at) if args.at else {}
    handle, trace = wheelcore.execute_path(session, path, point)
    payload = {
        "from": args.src,
        "to": args.dst,
        "path": methods,
        "trace": trace,
        "provenance": list(handle.provenance),
    }
    lines = [f"path: {' -> '.join(methods) or '(already there)'}"]
    for step in trace:
        val = jsonio.to_jsonable(step.get("value"))
        lines.append(f"  {step['transition']:<24} {step['node']:<5} {val}")
    _emit(args, payload, "\n".join(lines))
    return 0


def _retolerate(report, tolerance: float):
    entries = tuple(
        dataclasses.replace(e, passed=bool(e.residual <= tolerance))
        for e in report.entries
    )
    return dataclasses.replace(report, entries=entries, tolerance=tolerance)


def cmd_verify(args) -> int:
    session = _session_from(args)
    if args.identity:
        report = None
        for name in args.identity:
            rep = verify.check_identity(session, name, args.samples, args.seed)
            report = rep if report is None else report.merged_with(rep)
    else:
        report = verify.verify_all(session, args.samples, args.seed)
    if args.tolerance is not None:
        report = _retolerate(report, args.tolerance)
    payload = jsonio.residual_report_payload(report)
    _emit(args, payload, jsonio.residual_report_table(report))
    return 0 if not report.failures else 1


def cmd_demo(args) -> int:
    if args.what != "nonconvex":
        raise DualityError(f"unknown demo {args.what!r}")
    report = verify.demo_information_loss()
    payload = jsonio.info_loss_payload(report)
    lines = [
        "information loss under non-convex preferences (U = q1^2 + q2^2)",
        f"{'probe':<14} {'original':>10} {'recovered':>10}",
    ]
    for p, o, r in zip(report.probes, report.original_u_values, report.recovered_u_values):
        lines.append(f"{str(p):<14} {jsonio.round_sig(o):>10} {jsonio.round_sig(r):>10}")
    lines.append(f"ranking flips: {jsonio.to_jsonable(report.ranking_flips)}")
    lines.append(f"ambiguous inversions at: {jsonio.to_jsonable(report.ambiguous_probes)}")
    lines.append(f"convexified verdict: {report.convexified}")
    _emit(args, payload, "\n".join(lines))
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(port=args.port, frontend_dir=args.frontend)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="duality",
        description="Consumer-theory duality engine: solve, derive, verify.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a utility expression")
    p.add_argument("--utility", required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("solve", help="solve the primal or dual problem")
    p.add_argument("--utility", required=True)
    p.add_argument("--problem", choices=("primal", "dual"), default="primal")
    p.add_argument("--prices", required=True, help="comma-separated, e.g. 1,1")
    p.add_argument("--income", type=float, help="income M (primal)")
    p.add_argument("--ulevel", type=float, help="utility floor u (dual)")
    p.add_argument("--check-grid", action="store_true",
                   help="also report the coarse lattice-oracle bundle")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("derive", help="plan and execute a transition chain")
    p.add_argument("--utility")
    p.add_argument("--family")
    p.add_argument("--from", dest="src")
    p.add_argument("--to", dest="dst")
    p.add_argument("--via", help="explicit comma-separated transition list "
                                 "(skips the planner), e.g. t_roy")
    p.add_argument("--at", help="evaluation point, e.g. 'P=1,1;M=2' or 'q=1,1;u=1'")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("verify", help="run identity checks")
    p.add_argument("--utility")
    p.add_argument("--family", help="name:k=v,... e.g. cobb_douglas:a1=0.3")
    p.add_argument("--identity", action="append",
                   help="named identity (repeatable); omit with --all")
    p.add_argument("--all", action="store_true", help="run the full suite")
    p.add_argument("--samples", type=int, default=25)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tolerance", type=float,
                   help="override the pass threshold for all entries")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("demo", help="built-in demonstrations")
    p.add_argument("what", choices=("nonconvex",))
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("serve", help="run the JSON service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--frontend", help="directory with the built UI to mount at /")
    p.set_defaults(func=cmd_serve)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except DualityError as exc:
        print(f"error ({exc.kind}): {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
