"""Command-line entry point.

Subcommands: classify, rewrite, eval, check, gen, run.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import aggregates
from .attacks import build_attack_graph, to_dot
from .checking import run_check
from .classify import classify, fuxman_membership
from .errors import KeyraError
from .logic import formula_text, numeric_term_text
from .model import (
    NumericDomain,
    dump_instance,
    dump_schema,
    load_instance,
    load_schema,
    parse_rational,
)
from .oracle import (
    gen_2dm_instance,
    gen_maxcut_instance,
    maxcut_query_text,
    range_by_enumeration,
    two_dm_query_text,
)
from .query import freeze_free_vars, parse_query
from .rewriter import evaluate_groups, group_candidates, rewrite
from .sqlgen import emit_sql, run_script


def _domain(args) -> NumericDomain:
    return (
        NumericDomain.UNCONSTRAINED
        if getattr(args, "allow_negative", False)
        else NumericDomain.NON_NEGATIVE
    )


def _parse(args):
    schema = load_schema(args.schema)
    return schema, parse_query(args.query, schema)


def _targets(args) -> list[str]:
    return ["glb", "lub"] if args.target == "both" else [args.target]


def cmd_classify(args) -> int:
    schema, q = _parse(args)
    if args.dot:
        print(to_dot(build_attack_graph(freeze_free_vars(q).body)))
        return 0
    domain = _domain(args)
    results = {t: classify(q, t, domain) for t in _targets(args)}
    if args.json:
        payload = {t: v.to_dict() for t, v in results.items()}
        payload["fuxman_class"] = fuxman_membership(q)
        print(json.dumps(payload, indent=2))
    else:
        for t, v in results.items():
            route = f" via {v.route}" if v.route else ""
            print(f"{t}: {v.status}{route} [{v.citation}] — {v.reason}")
        print(f"join-forest class: {fuxman_membership(q)}")
    return 0


def cmd_rewrite(args) -> int:
    schema, q = _parse(args)
    rw = rewrite(q, args.target, _domain(args))
    if args.sql:
        print(emit_sql(rw, schema).text())
        return 0
    print(f"-- target: {args.target} route: {rw.route}")
    if rw.group_params:
        params = ", ".join(name for name, _ in rw.group_params)
        print(f"-- group parameters: {params}")
    print(f"guard: {formula_text(rw.guard)}")
    print(f"value: {numeric_term_text(rw.term)}")
    return 0


def cmd_eval(args) -> int:
    schema, q = _parse(args)
    db = load_instance(schema, args.instance, _domain(args))
    if q.free_vars:
        frozen = freeze_free_vars(q)
        params_of = dict(frozen.frozen_params)
        rows = []
        for values in group_candidates(db, q):
            bound = {params_of[v]: c for v, c in zip(q.free_vars, values)}
            glb, lub = range_by_enumeration(db, frozen, cap=args.cap, params=bound)
            rows.append((values, glb, lub))
        for values, glb, lub in rows:
            label = ", ".join(str(v) for v in values)
            print(f"({label}): glb={glb} lub={lub}")
        return 0
    glb, lub = range_by_enumeration(db, q, cap=args.cap)
    if args.json:
        print(json.dumps({"glb": repr(glb), "lub": repr(lub)}))
    else:
        for t in _targets(args):
            print(f"{t}: {glb if t == 'glb' else lub}")
    return 0


def cmd_check(args) -> int:
    schema, q = _parse(args)
    report = run_check(
        q,
        target=args.target,
        instance_count=args.count,
        seed=args.seed,
        max_facts=args.max_facts,
        cap=args.cap,
        numeric_domain=_domain(args),
        schema=schema,
    )
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(f"{report.checked} instances checked, {report.mismatches} mismatches")
    if report.failures and args.save_failures:
        base = Path(args.save_failures)
        for i, db in report.failures:
            dump_instance(db, base / f"failure-{i}")
            dump_schema(db.schema, base / f"failure-{i}" / "schema.json")
        print(f"failing instances written under {base}")
    return 0 if report.ok else 1


def cmd_gen(args) -> int:
    s, t = parse_rational(args.chain_s), parse_rational(args.chain_t)
    if args.kind == "2dm":
        pairs = [tuple(p.split(":")) for p in args.pairs.split(",") if p]
        db = gen_2dm_instance(pairs, s, t, _domain(args))
        query = two_dm_query_text(args.agg)
    else:
        vertices = [v for v in args.vertices.split(",") if v]
        edges = [tuple(e.split("-")) for e in args.edges.split(",") if e]
        penalty = parse_rational(args.penalty)
        db = gen_maxcut_instance(vertices, edges, s, t, penalty, _domain(args))
        query = maxcut_query_text(args.agg)
    out = Path(args.out)
    dump_instance(db, out)
    dump_schema(db.schema, out / "schema.json")
    print(f"instance written to {out}")
    print(f"query: {query}")
    return 0


def cmd_run(args) -> int:
    schema, q = _parse(args)
    db = load_instance(schema, args.instance, _domain(args))
    rw = rewrite(q, args.target, _domain(args))
    script = emit_sql(rw, schema)
    result = run_script(script, db, dsn=args.dsn)
    if isinstance(result, list):
        for values, answer in result:
            label = ", ".join(str(v) for v in values)
            print(f"({label}): {answer}")
    else:
        print(result)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keyra",
        description=(
            "Range-consistent answers for aggregation queries on databases "
            "that violate their primary keys"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--schema", required=True, help="schema JSON file")
    common.add_argument(
        "--allow-negative",
        action="store_true",
        help="allow negative numeric values (unconstrained domain)",
    )

    p = sub.add_parser("classify", parents=[common], help="rewritability verdict")
    p.add_argument("query")
    p.add_argument("--target", choices=["glb", "lub", "both"], default="both")
    p.add_argument("--json", action="store_true")
    p.add_argument("--dot", action="store_true", help="print the attack graph in DOT")
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("rewrite", parents=[common], help="construct the rewriting")
    p.add_argument("query")
    p.add_argument("--target", choices=["glb", "lub"], default="glb")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--show-logic", action="store_true")
    group.add_argument("--sql", action="store_true")
    p.set_defaults(fn=cmd_rewrite)

    p = sub.add_parser("eval", parents=[common], help="exhaustive oracle evaluation")
    p.add_argument("query")
    p.add_argument("--instance", required=True, help="instance CSV directory")
    p.add_argument("--cap", type=int, default=1_000_000)
    p.add_argument("--target", choices=["glb", "lub", "both"], default="both")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("check", parents=[common], help="differential testing")
    p.add_argument("query")
    p.add_argument("--target", choices=["glb", "lub"], default="glb")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-facts", type=int, default=12)
    p.add_argument("--cap", type=int, default=200_000)
    p.add_argument("--json", action="store_true")
    p.add_argument("--save-failures", help="directory for shrunken failing instances")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("gen", help="generate hardness-gadget instances")
    p.add_argument("kind", choices=["2dm", "maxcut"])
    p.add_argument("--pairs", default="", help='2dm pairs, e.g. "a1:b1,a2:b2"')
    p.add_argument("--vertices", default="", help='maxcut vertices, e.g. "u,v,w"')
    p.add_argument("--edges", default="", help='maxcut edges, e.g. "u-v,v-w"')
    p.add_argument("--agg", default=aggregates.AVG)
    p.add_argument("--chain-s", default="1")
    p.add_argument("--chain-t", default="0")
    p.add_argument("--penalty", default="8", help="self-loop penalty value")
    p.add_argument("--out", required=True)
    p.add_argument("--allow-negative", action="store_true")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("run", parents=[common], help="execute the SQL rewriting")
    p.add_argument("query")
    p.add_argument("--instance", required=True)
    p.add_argument("--dsn", default="sqlite:///:memory:")
    p.add_argument("--target", choices=["glb", "lub"], default="glb")
    p.set_defaults(fn=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except KeyraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
