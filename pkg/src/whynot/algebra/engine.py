"""Bag-semantics evaluation of query plans.

Multiplicities are exact: projection sums the multiplicities of collapsing
tuples, joins multiply them, union adds, dedup resets to one, relation
nesting emits one tuple per group.  Any comparison involving null is
false, so outer-join and outer-flatten padding never satisfies a
predicate.
"""

from __future__ import annotations

from whynot.errors import KindMismatch
from whynot.algebra.plan import Comparison, Predicate, QueryPlan, Ref
from whynot.algebra.schema import DbSchema, infer_schema, resolve_path, _row
from whynot.model.types import BagType, TupleType
from whynot.model.values import Bag, Tup, null_tuple

Database = dict[str, Bag]


def compare(lhs, op: str, rhs) -> bool:
    if lhs is None or rhs is None:
        return False
    if op == "=":
        return lhs == rhs
    if op == "!=":
        return lhs != rhs
    if isinstance(lhs, bool):
        lhs = int(lhs)
    if isinstance(rhs, bool):
        rhs = int(rhs)
    if op == "<":
        return lhs < rhs
    if op == "<=":
        return lhs <= rhs
    if op == ">":
        return lhs > rhs
    return lhs >= rhs


def eval_predicate(theta: Predicate, t: Tup) -> bool:
    def eval_cmp(c: Comparison) -> bool:
        lhs = t.path(c.lhs.path)
        rhs = t.path(c.rhs.path) if isinstance(c.rhs, Ref) else c.rhs.value
        return compare(lhs, c.op, rhs)

    return all(any(eval_cmp(c) for c in clause) for clause in theta.clauses)


def join_matches(params, l: Tup, r: Tup) -> bool:
    for lk, rk in zip(params.left_keys, params.right_keys):
        a, b = l.path(lk), r.path(rk)
        if a is None or b is None or a != b:
            return False
    return True


def aggregate(func: str, bag) -> object:
    """Apply an aggregation function to a bag of unary tuples.

    count counts member tuples; the numeric functions skip nulls; over an
    empty (or all-null) input count yields 0, sum yields 0, min/max/avg
    yield null.  avg truncates towards zero, keeping results integral.
    """
    members = list(bag.instances()) if isinstance(bag, Bag) else []
    if func == "count":
        return len(members)
    values = [m.values[0] for m in members if m is not None and m.values[0] is not None]
    if func == "sum":
        return sum(values) if values else 0
    if not values:
        return None
    if func == "min":
        return min(values)
    if func == "max":
        return max(values)
    return int(sum(values) / len(values))


def project_paths(t: Tup, attrs) -> Tup:
    return Tup((a[-1] for a in attrs), (t.path(a) for a in attrs))


def evaluate(plan: QueryPlan, db: Database, db_schema: DbSchema) -> Bag:
    return evaluate_all(plan, db, db_schema)[plan.root_id]


def evaluate_all(plan: QueryPlan, db: Database, db_schema: DbSchema) -> dict[int, Bag]:
    """Evaluate bottom-up, returning every operator's output."""
    schemas = infer_schema(plan, db_schema)
    out: dict[int, Bag] = {}
    for op_id in plan.topological:
        node = plan.node(op_id)
        in_types = [schemas[i] for i in node.inputs]
        ins = [out[i] for i in node.inputs]
        out[op_id] = eval_node(node, ins, db, in_types)
    return out


def eval_node(node, ins: list[Bag], db: Database, in_types: list[BagType]) -> Bag:
    kind, p = node.kind, node.params

    if kind == "table_access":
        if p.name not in db:
            raise KindMismatch(f"unknown relation {p.name!r}")
        return db[p.name]

    if kind == "projection":
        return Bag((project_paths(t, p.attrs), c) for t, c in ins[0])

    if kind == "renaming":
        return Bag((Tup((new for new, _ in p.pairs),
                        (t.get(old) for _, old in p.pairs)), c)
                   for t, c in ins[0])

    if kind == "selection":
        return Bag((t, c) for t, c in ins[0] if eval_predicate(p.theta, t))

    if kind == "join":
        return _eval_join(p, ins[0], ins[1], _row(in_types[0]), _row(in_types[1]))

    if kind == "cross_product":
        return Bag((l.concat(r), cl * cr) for l, cl in ins[0] for r, cr in ins[1])

    if kind == "flatten":
        return _eval_flatten(p, ins[0], _row(in_types[0]))

    if kind == "tuple_nest":
        out = []
        for t, c in ins[0]:
            nested = Tup(p.attrs, (t.get(a) for a in p.attrs))
            out.append((t.drop(p.attrs).concat(Tup((p.target,), (nested,))), c))
        return Bag(out)

    if kind == "relation_nest":
        return _eval_relation_nest(p, ins[0])

    if kind == "aggregation":
        return Bag((t.concat(Tup((p.target,),
                                 (aggregate(p.func, t.path(p.source)),))), c)
                   for t, c in ins[0])

    if kind == "union":
        return ins[0].union(ins[1])

    if kind == "difference":
        return ins[0].difference(ins[1])

    if kind == "dedup":
        return ins[0].dedup()

    raise KindMismatch(f"unknown operator kind {kind!r}")


def _eval_join(p, left: Bag, right: Bag, lrow: TupleType, rrow: TupleType) -> Bag:
    out = []
    left_matched: set = set()
    right_matched: set = set()
    for l, cl in left:
        for r, cr in right:
            if join_matches(p, l, r):
                out.append((l.concat(r), cl * cr))
                left_matched.add(l)
                right_matched.add(r)
    if p.kind in ("left", "full"):
        rpad = null_tuple(rrow)
        out.extend((l.concat(rpad), cl) for l, cl in left if l not in left_matched)
    if p.kind in ("right", "full"):
        lpad = null_tuple(lrow)
        out.extend((lpad.concat(r), cr) for r, cr in right if r not in right_matched)
    return Bag(out)


def _eval_flatten(p, rel: Bag, row: TupleType) -> Bag:
    attr_type = resolve_path(row, p.attr)
    out = []
    for t, c in rel:
        v = t.path(p.attr)
        if p.kind == "tuple":
            out.append((t.concat(v if isinstance(v, Tup) else null_tuple(attr_type)), c))
            continue
        members = list(v.instances()) if isinstance(v, Bag) else []
        if members:
            out.extend((t.concat(u), c) for u in members)
        elif p.kind == "outer":
            out.append((t.concat(null_tuple(attr_type.element)), c))
    return Bag(out)


def _eval_relation_nest(p, rel: Bag) -> Bag:
    groups: dict = {}
    order: list = []
    for t, c in rel:
        key = t.drop(p.attrs)
        nested = t.project(p.attrs)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append((nested, c))
    return Bag((key.concat(Tup((p.target,), (Bag(groups[key]),))), 1)
               for key in order)


def active_domain(bag: Bag, row: TupleType) -> dict[tuple[str, ...], list]:
    """Values present per primitive dot-path of a relation, sorted.

    Paths reach through nested tuples; bag members are not descended into
    (their domains belong to the operator that flattens them).
    """
    from whynot.model.types import PrimitiveType
    from whynot.model.values import sort_key

    paths: list[tuple[tuple[str, ...], bool]] = []

    def collect(t: TupleType, prefix: tuple[str, ...]):
        for n, ft in t.fields:
            if isinstance(ft, PrimitiveType):
                paths.append((prefix + (n,), True))
            elif isinstance(ft, TupleType):
                collect(ft, prefix + (n,))

    collect(row, ())
    domains: dict[tuple[str, ...], set] = {p: set() for p, _ in paths}
    for t, _ in bag:
        for path, _ in paths:
            v = t.path(path)
            if v is not None:
                domains[path].add(v)
    return {p: sorted(vs, key=sort_key) for p, vs in domains.items()}
