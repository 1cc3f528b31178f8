"""Command line interface.

    whynot run      --scenario FILE   evaluate the query, print the result
    whynot explain  --scenario FILE   ranked why-not explanations
    whynot oracle   --scenario FILE   exact MSRs by brute force
    whynot compare  --scenario FILE   lineage baseline vs explanations

Exit codes: 0 success, 2 why-not precondition violated (the answer is not
missing), 3 no explanations found, 4 configuration or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys

from whynot.errors import PreconditionViolated, WhyNotError
from whynot.algebra.plan import plan_to_json
from whynot.baseline import picky_operators
from whynot.explain import whynot_pipeline
from whynot.model.values import value_to_json
from whynot.reparam import exact_explanations_oracle
from whynot.scenario import Scenario, load_scenario
from whynot.tracing import write_trace_dump

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_NO_EXPLANATIONS = 3
EXIT_CONFIG = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="whynot",
        description="Why-not explanations for queries over nested data")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("run", "evaluate the scenario's query"),
            ("explain", "compute ranked query-based explanations"),
            ("oracle", "exact explanations by exhaustive reparameterization"),
            ("compare", "lineage baseline vs. the explanation pipeline")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--dump-trace", metavar="DIR", default=None,
                       help="write each operator's annotated relation as "
                            "JSON-Lines into DIR")
        p.add_argument("--max-sas", type=int, default=16,
                       help="cap on surviving schema alternatives")
        p.add_argument("--oracle-budget", type=int, default=200_000,
                       help="cap on oracle grid combinations")
        fmt = p.add_mutually_exclusive_group()
        fmt.add_argument("--json", dest="pretty", action="store_false",
                         default=False, help="compact JSON output (default)")
        fmt.add_argument("--pretty", dest="pretty", action="store_true",
                         help="indented JSON output")
    return parser


def _emit(obj, pretty: bool) -> None:
    print(json.dumps(obj, indent=2 if pretty else None))


def _cmd_run(scenario: Scenario, args) -> int:
    from whynot.algebra.engine import evaluate
    result = evaluate(scenario.plan, scenario.db, scenario.db_schema)
    _emit([value_to_json(t) for t in result.instances()], args.pretty)
    return EXIT_OK


def _require_whynot(scenario: Scenario):
    if scenario.whynot is None:
        raise PreconditionViolated("the scenario has no why-not tuple")


def _cmd_explain(scenario: Scenario, args) -> int:
    _require_whynot(scenario)
    result = whynot_pipeline(scenario.question(), scenario.alternatives,
                             max_sas=args.max_sas)
    if args.dump_trace:
        write_trace_dump(result.traced, args.dump_trace)
    _emit([e.to_json(scenario.plan) for e in result.explanations], args.pretty)
    return EXIT_OK if result.explanations else EXIT_NO_EXPLANATIONS


def _cmd_oracle(scenario: Scenario, args) -> int:
    _require_whynot(scenario)
    entries = exact_explanations_oracle(scenario.question(),
                                        budget=args.oracle_budget)
    _emit([{"ops": sorted(e.ops), "d": e.d,
            "witness": plan_to_json(e.witness)} for e in entries], args.pretty)
    return EXIT_OK if entries else EXIT_NO_EXPLANATIONS


def _cmd_compare(scenario: Scenario, args) -> int:
    _require_whynot(scenario)
    report = picky_operators(scenario.question())
    result = whynot_pipeline(scenario.question(), scenario.alternatives,
                             max_sas=args.max_sas)
    if args.dump_trace:
        write_trace_dump(result.traced, args.dump_trace)
    _emit({
        "baseline": report.to_json(),
        "explanations": [e.to_json(scenario.plan) for e in result.explanations],
    }, args.pretty)
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "explain": _cmd_explain,
    "oracle": _cmd_oracle,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        return _COMMANDS[args.command](scenario, args)
    except PreconditionViolated as e:
        print(json.dumps({"error": e.code, "message": e.message}),
              file=sys.stderr)
        return EXIT_PRECONDITION
    except WhyNotError as e:
        print(json.dumps({"error": e.code, "message": e.message}),
              file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
