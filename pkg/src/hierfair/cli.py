"""Command line: generate, solve, audit, bench.

Exit codes: 0 success, 2 invalid input, 3 enumeration budget or timeout
trouble.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from . import harness
from .oracle import OracleBudgetExceeded


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierfair",
        description="Fair allocation of indivisible items in agent hierarchies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="draw a random instance")
    gen.add_argument("--tree", choices=["balanced", "comb"], default="balanced")
    gen.add_argument("--nodes", type=int, default=7, help="node count n")
    gen.add_argument("--items", type=int, default=5, help="item count m")
    gen.add_argument("--p", type=float, default=0.5, help="approval probability")
    gen.add_argument("--pref", choices=["indep", "corr"], default="indep")
    gen.add_argument("--rho", type=float, default=0.8, help="copy probability in corr mode")
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument(
        "--families",
        default=",".join(harness.FAMILIES),
        help="comma-separated valuation families to draw from",
    )
    gen.add_argument(
        "--criteria",
        default="lorenz",
        help="criterion tag for every internal node, or 'random'",
    )
    gen.add_argument("-o", "--output", help="write instance JSON here (default stdout)")

    sol = sub.add_parser("solve", help="run an algorithm on an instance")
    sol.add_argument("--algorithm", choices=list(harness.ALGORITHMS), required=True)
    sol.add_argument("--instance", required=True)
    sol.add_argument("-o", "--output", help="write allocation JSON here (default stdout)")
    sol.add_argument(
        "--trace",
        action="store_true",
        help="write one JSON line per solver iteration to stderr",
    )
    sol.add_argument("--backend", choices=["auto", "c", "py"], default=None)

    aud = sub.add_parser("audit", help="re-check an allocation's fairness")
    aud.add_argument("--instance", required=True)
    aud.add_argument("--allocation", required=True)
    aud.add_argument(
        "--oracle",
        action="store_true",
        help="use exhaustive enumeration instead of the swap re-run",
    )
    aud.add_argument("--budget", type=int, default=None, help="oracle enumeration budget")

    ben = sub.add_parser("bench", help="run a benchmark matrix")
    ben.add_argument("--config", required=True, help="JSON benchmark description")
    ben.add_argument("-o", "--output", help="write the CSV here (default stdout)")
    ben.add_argument("--jobs", type=int, default=1)
    ben.add_argument("--timeout", type=float, default=None, help="per-run seconds")
    return parser


def _write_json(data: dict, path: Optional[str]) -> None:
    text = json.dumps(data, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _cmd_generate(args) -> int:
    seed = args.seed
    env_seed = os.environ.get(harness.SEED_ENV_VAR)
    if env_seed is not None:
        seed = int(env_seed)
    config = harness.GeneratorConfig(
        tree=args.tree,
        n=args.nodes,
        m=args.items,
        p=args.p,
        pref=args.pref,
        rho=args.rho,
        seed=seed,
        families=tuple(f.strip() for f in args.families.split(",") if f.strip()),
        criteria=args.criteria,
    )
    instance = harness.generate(config)
    _write_json(harness.instance_to_json(instance), args.output)
    return 0


def _cmd_solve(args) -> int:
    instance = harness.load_instance(args.instance)
    result = harness.solve(
        instance, args.algorithm, backend=args.backend, trace=args.trace
    )
    if args.trace and result.trace:
        for record in result.trace:
            sys.stderr.write(json.dumps(record.to_json()) + "\n")
    _write_json(harness.allocation_to_json(instance, result), args.output)
    return 0


def _cmd_audit(args) -> int:
    instance = harness.load_instance(args.instance)
    with open(args.allocation, "r", encoding="utf-8") as fh:
        alloc = harness.allocation_from_json(instance, json.load(fh))
    kwargs = {"use_oracle": args.oracle}
    if args.budget is not None:
        kwargs["budget"] = args.budget
    report = harness.audit(instance, alloc, **kwargs)
    _write_json(report.to_json(), None)
    return 0


def _cmd_bench(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    rows = harness.bench(config, jobs=args.jobs, timeout=args.timeout)
    if args.output is None:
        harness.write_rows_csv(rows, sys.stdout)
    else:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            harness.write_rows_csv(rows, fh)
    for summary in harness.aggregate_rows(rows):
        sys.stderr.write(json.dumps(summary) + "\n")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "audit": _cmd_audit,
    "bench": _cmd_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except OracleBudgetExceeded as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
