"""``semrob`` command line: run, validate and parse.

Exit codes: 0 success, 1 scenario error, 2 query error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .query import QueryError, ast_to_json, parse
from .scenario import STANDARD_PREFIXES, Problem, ScenarioError, load_scenario, run_scenario, unresolvable_topics, validate

EXIT_OK, EXIT_SCENARIO, EXIT_QUERY = 0, 1, 2


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.file)
    except ScenarioError as exc:
        for p in exc.problems:
            print(p, file=sys.stderr)
        return exc.exit_code
    if args.strict:
        missing = unresolvable_topics(scenario)
        for name, topic in missing:
            print(f"query error: {name}: UnresolvableStream: no node publishes {topic}", file=sys.stderr)
        if missing:
            return EXIT_QUERY
    result = run_scenario(scenario, seed=args.seed, mode=args.mode)
    out = Path(args.out) if args.out else Path("out") / scenario.name
    result.write(out)
    b = result.metrics["broker"]
    print(f"{scenario.name}: published {b['published']}, delivered {b['delivered']}; outputs in {out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    problems = validate(args.file)
    for p in problems:
        print(p)
    if not problems:
        print("ok")
        return EXIT_OK
    return EXIT_SCENARIO if any(p.startswith("scenario") for p in problems) else EXIT_QUERY


def _cmd_parse(args) -> int:
    prefixes = dict(STANDARD_PREFIXES)
    if args.scenario:
        try:
            prefixes = dict(load_scenario(args.scenario).prefixes)
        except ScenarioError as exc:
            print(exc, file=sys.stderr)
            return exc.exit_code
    try:
        text = Path(args.file).read_text(encoding="utf-8")
    except OSError as exc:
        print(Problem("scenario", f"cannot read {args.file}: {exc.strerror or exc}"), file=sys.stderr)
        return EXIT_SCENARIO
    try:
        ast = parse(text, prefixes)
    except QueryError as exc:
        print(f"query error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_QUERY
    print(ast_to_json(ast))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="semrob", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log warnings and debug output")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a scenario under virtual time")
    r.add_argument("file")
    r.add_argument("--strict", action="store_true", help="fail when a concrete stream has no publisher")
    r.add_argument("--seed", type=int, default=None, help="override the scenario's jitter seed")
    r.add_argument("--out", help="output directory (default: out/<scenario name>)")
    r.add_argument("--mode", choices=("ref", "threaded"), default="ref")
    r.set_defaults(fn=_cmd_run)

    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("file")
    v.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("parse", help="print a query's AST as JSON")
    p.add_argument("file")
    p.add_argument("--scenario", help="take the prefix table from this scenario file")
    p.set_defaults(fn=_cmd_parse)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
