"""Command line front end: ``gen``, ``solve``, ``validate``, ``refine`` and ``bench``."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import blockoracle
from .bench import SCENARIOS, InstanceSpec, bench, generate, parse_algorithm
from .gridcore import (dumps, instance_from_dict, instance_to_dict, plan_from_dict, plan_to_dict,
                       validate_plan)
from .pipeline2d import RegimeError, SolverOptions
from .refine import refine
from .shuffles import ContractError


def _dims(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.lower().replace(",", "x").split("x"))


def _read_json(path: str):
    if path == "-":
        return json.load(sys.stdin)
    with open(path) as fh:
        return json.load(fh)


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _obstacles(value: str):
    if value in ("none", "center-hole"):
        return value
    with open(value) as fh:
        return tuple(tuple(o) for o in json.load(fh))


def cmd_gen(args) -> int:
    spec = InstanceSpec(_dims(args.dims), Fraction(args.density), _obstacles(args.obstacles),
                        args.scenario, args.seed)
    _write(dumps(instance_to_dict(generate(spec))), args.out)
    return 0


def cmd_solve(args) -> int:
    inst = instance_from_dict(_read_json(args.instance))
    base = SolverOptions(mode=args.mode, matching=args.matching, refine=args.refine, seed=args.seed)
    solver, opts = parse_algorithm(args.algo, base)
    try:
        plan = solver(inst, opts)
    except (RegimeError, ContractError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    report = validate_plan(inst, plan)
    if not report.valid:
        print(f"invalid plan: {report.summary()}", file=sys.stderr)
        return 1
    _write(dumps(plan_to_dict(plan)), args.out)
    return 0


def cmd_validate(args) -> int:
    inst = instance_from_dict(_read_json(args.instance))
    plan = plan_from_dict(_read_json(args.plan), inst.space.ndim)
    report = validate_plan(inst, plan)
    print(report.summary())
    for v in report.violations[:20]:
        print(f"  {v.kind} t={v.time} robots={list(v.robots)}")
    return 0 if report.valid else 1


def cmd_refine(args) -> int:
    inst = instance_from_dict(_read_json(args.instance))
    plan = plan_from_dict(_read_json(args.plan), inst.space.ndim)
    report = validate_plan(inst, plan)
    if not report.valid:
        print(f"invalid plan: {report.summary()}", file=sys.stderr)
        return 1
    _write(dumps(plan_to_dict(refine(inst.subset(~inst.virtual), plan))), args.out)
    return 0


def cmd_bench(args) -> int:
    specs = [InstanceSpec(_dims(d), Fraction(args.density), _obstacles(args.obstacles), args.scenario)
             for d in args.dims]
    algos = args.algo or ["grh"]
    seeds = range(args.seed, args.seed + args.seeds)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        rows = bench(specs, algos, seeds, out, workers=args.workers)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cache-dir", default=argparse.SUPPRESS, help="directory for block oracle tables")
    p = argparse.ArgumentParser(prog="gridmrpp", parents=[common],
                                description="Rubik-table planners for dense grid robot routing")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate an instance")
    g.add_argument("--dims", required=True, help="e.g. 30x20 or 24x12x6")
    g.add_argument("--density", default="1/3")
    g.add_argument("--obstacles", default="none", help="none, center-hole or a JSON list file")
    g.add_argument("--scenario", default="random", choices=SCENARIOS)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", parents=[common], help="solve an instance")
    s.add_argument("instance", help="instance JSON path or - for stdin")
    s.add_argument("--algo", default="grh", help="grm, grh, grlm, grh3d with -lba/-pr suffixes or i prefix")
    s.add_argument("--mode", default="fast", choices=("fast", "faster"))
    s.add_argument("--matching", default="hall", choices=("hall", "lba"))
    s.add_argument("--refine", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", parents=[common], help="check a plan against an instance")
    v.add_argument("instance")
    v.add_argument("plan")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("refine", parents=[common], help="compress a plan keeping per-vertex visit order")
    r.add_argument("instance")
    r.add_argument("plan")
    r.add_argument("--out")
    r.set_defaults(func=cmd_refine)

    b = sub.add_parser("bench", parents=[common], help="benchmark sweep to CSV")
    b.add_argument("--dims", nargs="+", required=True)
    b.add_argument("--density", default="1/3")
    b.add_argument("--obstacles", default="none")
    b.add_argument("--scenario", default="random", choices=SCENARIOS)
    b.add_argument("--algo", nargs="+")
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--seeds", type=int, default=1, help="number of seeds")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "cache_dir", None):
        blockoracle.set_cache_dir(args.cache_dir)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
