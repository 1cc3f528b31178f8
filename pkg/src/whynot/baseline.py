"""Lineage-based picky-operator baseline.

Classic missing-answer tracing, adapted to nested data: compatible input
tuples are those matching the backtraced patterns of the unmodified
query; their successors are followed forward through the original
(non-instrumented) operators, keeping a successor only while it still
carries the compatible values (matching the pattern at that operator,
which is what member-level tracing amounts to).  The operators at which
the last surviving successors are filtered are reported as picky.

No schema alternatives, no reparameterization reasoning: the comparison
against the full pipeline is the point of this module.
"""

from __future__ import annotations

from dataclasses import dataclass

from whynot.algebra.engine import aggregate, eval_predicate, join_matches, project_paths
from whynot.algebra.schema import infer_schema, resolve_path, _row
from whynot.backtrace import schema_backtrace
from whynot.model.patterns import matches_nip
from whynot.model.values import Bag, Tup, null_tuple, sort_key
from whynot.question import WhyNotQuestion


@dataclass(frozen=True)
class PickyReport:
    compatibles: frozenset[int]  # base tuple ids
    picky_ops: frozenset[int]

    def to_json(self) -> dict:
        return {"compatibles": sorted(self.compatibles),
                "picky_ops": sorted(self.picky_ops)}


@dataclass
class _Row:
    iid: int
    value: object
    parents: frozenset[int]


def picky_operators(question: WhyNotQuestion) -> PickyReport:
    question.validate()
    bt = schema_backtrace(question)
    plan = question.plan
    schemas = infer_schema(plan, question.db_schema)

    next_iid = [0]

    def fresh() -> int:
        next_iid[0] += 1
        return next_iid[0]

    rows: dict[int, list[_Row]] = {}
    successors: dict[int, set[int]] = {}
    compatibles: set[int] = set()

    for op_id in plan.topological:
        node = plan.node(op_id)
        out = _forward(node, [rows[i] for i in node.inputs], question, schemas,
                       fresh)
        rows[op_id] = out
        succ: set[int] = set()
        if node.kind == "table_access":
            for r in out:
                if matches_nip(r.value, bt.nips[node.params.name]):
                    compatibles.add(r.iid)
                    succ.add(r.iid)
        else:
            upstream = set()
            for i in node.inputs:
                upstream |= successors[i]
            for r in out:
                if r.parents & upstream and \
                        matches_nip(r.value, bt.op_patterns[op_id]):
                    succ.add(r.iid)
        successors[op_id] = succ

    picky: set[int] = set()
    for op_id in plan.topological:
        node = plan.node(op_id)
        if node.kind == "table_access":
            continue
        has_input = any(successors[i] for i in node.inputs)
        if has_input and not successors[op_id]:
            picky.add(op_id)
    return PickyReport(frozenset(compatibles), frozenset(picky))


def _forward(node, ins: list[list[_Row]], question, schemas, fresh) -> list[_Row]:
    kind, p = node.kind, node.params

    if kind == "table_access":
        return [_Row(fresh(), t, frozenset())
                for t in sorted(question.db[p.name].instances(), key=sort_key)]

    if kind == "selection":
        return [_Row(fresh(), r.value, frozenset([r.iid]))
                for r in ins[0] if eval_predicate(p.theta, r.value)]

    if kind == "projection":
        return [_Row(fresh(), project_paths(r.value, p.attrs),
                     frozenset([r.iid])) for r in ins[0]]

    if kind == "renaming":
        return [_Row(fresh(), Tup((new for new, _ in p.pairs),
                                  (r.value.get(old) for _, old in p.pairs)),
                     frozenset([r.iid])) for r in ins[0]]

    if kind == "tuple_nest":
        out = []
        for r in ins[0]:
            nested = Tup(p.attrs, (r.value.get(a) for a in p.attrs))
            out.append(_Row(fresh(), r.value.drop(p.attrs).concat(
                Tup((p.target,), (nested,))), frozenset([r.iid])))
        return out

    if kind == "aggregation":
        return [_Row(fresh(), r.value.concat(Tup(
            (p.target,), (aggregate(p.func, r.value.path(p.source)),))),
            frozenset([r.iid])) for r in ins[0]]

    if kind == "flatten":
        row_type = _row(schemas[node.inputs[0]])
        attr_type = resolve_path(row_type, p.attr)
        out = []
        for r in ins[0]:
            v = r.value.path(p.attr)
            if p.kind == "tuple":
                padded = v if isinstance(v, Tup) else null_tuple(attr_type)
                out.append(_Row(fresh(), r.value.concat(padded),
                                frozenset([r.iid])))
                continue
            members = list(v.instances()) if isinstance(v, Bag) else []
            for u in members:
                out.append(_Row(fresh(), r.value.concat(u), frozenset([r.iid])))
            if not members and p.kind == "outer":
                out.append(_Row(fresh(), r.value.concat(
                    null_tuple(attr_type.element)), frozenset([r.iid])))
        return out

    if kind in ("join", "cross_product"):
        lrow = _row(schemas[node.inputs[0]])
        rrow = _row(schemas[node.inputs[1]])
        out = []
        lmatched: set[int] = set()
        rmatched: set[int] = set()
        for lr in ins[0]:
            for rr in ins[1]:
                if kind == "cross_product" or join_matches(p, lr.value, rr.value):
                    out.append(_Row(fresh(), lr.value.concat(rr.value),
                                    frozenset([lr.iid, rr.iid])))
                    lmatched.add(lr.iid)
                    rmatched.add(rr.iid)
        if kind == "join" and p.kind in ("left", "full"):
            pad = null_tuple(rrow)
            out.extend(_Row(fresh(), lr.value.concat(pad), frozenset([lr.iid]))
                       for lr in ins[0] if lr.iid not in lmatched)
        if kind == "join" and p.kind in ("right", "full"):
            pad = null_tuple(lrow)
            out.extend(_Row(fresh(), pad.concat(rr.value), frozenset([rr.iid]))
                       for rr in ins[1] if rr.iid not in rmatched)
        return out

    if kind == "relation_nest":
        groups: dict = {}
        for r in sorted(ins[0], key=lambda r: sort_key(r.value)):
            key = r.value.drop(p.attrs)
            groups.setdefault(key, []).append(r)
        out = []
        for key in sorted(groups, key=sort_key):
            members = groups[key]
            nested = Bag.from_iter(m.value.project(p.attrs) for m in members)
            out.append(_Row(fresh(), key.concat(Tup((p.target,), (nested,))),
                            frozenset(m.iid for m in members)))
        return out

    if kind == "union":
        return [_Row(fresh(), r.value, frozenset([r.iid]))
                for side in ins for r in side]

    if kind == "difference":
        pool = [r.value for r in ins[1]]
        out = []
        for r in sorted(ins[0], key=lambda r: (sort_key(r.value), r.iid)):
            for k, v in enumerate(pool):
                if v == r.value:
                    pool.pop(k)
                    break
            else:
                out.append(_Row(fresh(), r.value, frozenset([r.iid])))
        return out

    if kind == "dedup":
        seen: dict = {}
        for r in ins[0]:
            seen.setdefault(r.value, []).append(r.iid)
        return [_Row(fresh(), v, frozenset(iids))
                for v, iids in sorted(seen.items(),
                                      key=lambda kv: sort_key(kv[0]))]

    raise AssertionError(f"unhandled kind {kind}")
