"""Static typing of query plans: output relation type per operator."""

from __future__ import annotations

from whynot.errors import (
    AggregationOnNonBag,
    DuplicateAttribute,
    KindMismatch,
    TypeMismatch,
    UnknownAttribute,
)
from whynot.algebra.plan import Const, Path, Predicate, QueryPlan, Ref, path_str
from whynot.model.types import (
    BOOL,
    BagType,
    BottomType,
    INT,
    NestedType,
    PrimitiveType,
    TupleType,
    same_type,
)

DbSchema = dict[str, BagType]


def resolve_path(t: TupleType, path: Path) -> NestedType:
    """Type of a dot-path; traverses tuple attributes only."""
    cur: NestedType = t
    for i, seg in enumerate(path):
        if not isinstance(cur, TupleType):
            raise KindMismatch(
                f"path {path_str(path)} traverses non-tuple at {path_str(path[:i])}")
        if not cur.has(seg):
            raise UnknownAttribute(f"no attribute {path_str(path[:i + 1])}")
        cur = cur.field(seg)
    return cur


def concat_tuple_types(a: TupleType, b: TupleType) -> TupleType:
    clash = set(a.names) & set(b.names)
    if clash:
        raise DuplicateAttribute(f"attribute name clash: {sorted(clash)}")
    return TupleType(a.fields + b.fields)


def check_predicate(theta: Predicate, row: TupleType) -> None:
    for c in theta.comparisons():
        lt = resolve_path(row, c.lhs.path)
        if not isinstance(lt, PrimitiveType):
            raise KindMismatch(f"comparison over non-primitive {c.lhs!r}")
        if isinstance(c.rhs, Ref):
            rt = resolve_path(row, c.rhs.path)
        else:
            from whynot.model.values import type_of
            rt = type_of(c.rhs.value)
        if isinstance(rt, BottomType):
            continue
        if not isinstance(rt, PrimitiveType) or not same_type(lt, rt):
            raise TypeMismatch(f"comparison {c!r} mixes {lt!r} and {rt!r}")


def infer_schema(plan: QueryPlan, db_schema: DbSchema) -> dict[int, BagType]:
    """Output type of every operator, per the algebra's typing rules."""
    out: dict[int, BagType] = {}
    for op_id in plan.topological:
        node = plan.node(op_id)
        ins = [out[i] for i in node.inputs]
        out[op_id] = _infer_node(node, ins, db_schema)
    return out


def _row(t: BagType) -> TupleType:
    if not isinstance(t.element, TupleType):
        raise KindMismatch("relation with no tuple element type")
    return t.element


def _infer_node(node, ins: list[BagType], db_schema: DbSchema) -> BagType:
    kind, p = node.kind, node.params

    if kind == "table_access":
        if p.name not in db_schema:
            raise UnknownAttribute(f"unknown relation {p.name!r}")
        return db_schema[p.name]

    if kind == "projection":
        row = _row(ins[0])
        fields = []
        for path in p.attrs:
            t = resolve_path(row, path)
            fields.append((path[-1], t))
        names = [n for n, _ in fields]
        if len(set(names)) != len(names):
            raise DuplicateAttribute(f"duplicate projection output names {names}")
        return BagType(TupleType(tuple(fields)))

    if kind == "renaming":
        row = _row(ins[0])
        olds = [old for _, old in p.pairs]
        if sorted(olds) != sorted(row.names):
            raise UnknownAttribute(f"renaming must cover the schema, got {olds}")
        news = [new for new, _ in p.pairs]
        if len(set(news)) != len(news):
            raise DuplicateAttribute(f"duplicate renaming outputs {news}")
        return BagType(TupleType(tuple((new, row.field(old)) for new, old in p.pairs)))

    if kind == "selection":
        check_predicate(p.theta, _row(ins[0]))
        return ins[0]

    if kind == "join":
        lrow, rrow = _row(ins[0]), _row(ins[1])
        for lk, rk in zip(p.left_keys, p.right_keys):
            lt, rt = resolve_path(lrow, lk), resolve_path(rrow, rk)
            if not isinstance(lt, PrimitiveType) or not same_type(lt, rt):
                raise TypeMismatch(f"join keys {path_str(lk)} and {path_str(rk)} "
                                   f"have incompatible types")
        return BagType(concat_tuple_types(lrow, rrow))

    if kind == "cross_product":
        return BagType(concat_tuple_types(_row(ins[0]), _row(ins[1])))

    if kind == "flatten":
        row = _row(ins[0])
        t = resolve_path(row, p.attr)
        if p.kind == "tuple":
            if not isinstance(t, TupleType):
                raise KindMismatch(f"tuple flatten needs a tuple attribute, "
                                   f"{path_str(p.attr)} is {t!r}")
            member = t
        else:
            if not isinstance(t, BagType):
                raise KindMismatch(f"relation flatten needs a bag attribute, "
                                   f"{path_str(p.attr)} is {t!r}")
            if not isinstance(t.element, TupleType):
                raise KindMismatch("cannot flatten an untyped empty relation")
            member = t.element
        return BagType(concat_tuple_types(row, member))

    if kind in ("tuple_nest", "relation_nest"):
        row = _row(ins[0])
        for a in p.attrs:
            if not row.has(a):
                raise UnknownAttribute(f"no attribute {a!r} to nest")
        key_fields = tuple((n, t) for n, t in row.fields if n not in p.attrs)
        nested = TupleType(tuple((n, t) for n, t in row.fields if n in p.attrs))
        inner: NestedType = nested if kind == "tuple_nest" else BagType(nested)
        return BagType(concat_tuple_types(
            TupleType(key_fields), TupleType(((p.target, inner),))))

    if kind == "aggregation":
        row = _row(ins[0])
        t = resolve_path(row, p.source)
        if not isinstance(t, BagType):
            raise AggregationOnNonBag(f"aggregation source {path_str(p.source)} "
                                      f"is {t!r}, not a bag")
        elem = t.element
        if isinstance(elem, BottomType):
            value_type: NestedType = BottomType()
        elif isinstance(elem, TupleType) and len(elem.fields) == 1:
            value_type = elem.fields[0][1]
        else:
            raise AggregationOnNonBag("aggregation source must hold unary tuples")
        out_type = _aggregate_type(p.func, value_type)
        return BagType(concat_tuple_types(row, TupleType(((p.target, out_type),))))

    if kind in ("union", "difference"):
        if not same_type(ins[0], ins[1]) or _row(ins[0]).names != _row(ins[1]).names:
            raise TypeMismatch(f"{kind} requires union-compatible inputs")
        return ins[0]

    if kind == "dedup":
        return ins[0]

    raise KindMismatch(f"unknown operator kind {kind!r}")


def _aggregate_type(func: str, value_type: NestedType) -> NestedType:
    if func == "count":
        return INT
    if isinstance(value_type, BottomType):
        return BottomType()
    if not isinstance(value_type, PrimitiveType):
        raise AggregationOnNonBag(f"cannot aggregate over {value_type!r}")
    if func in ("sum", "avg"):
        if value_type.kind not in ("int", "date"):
            raise AggregationOnNonBag(f"{func} needs numeric input")
        return INT
    # min/max work on any ordered primitive
    return value_type


def root_type(plan: QueryPlan, db_schema: DbSchema) -> BagType:
    return infer_schema(plan, db_schema)[plan.root_id]
