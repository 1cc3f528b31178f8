"""Step 2: enumerate and prune schema alternatives.

An attribute-alternative set maps a source attribute to same-relation,
same-type substitutes.  Every red association from the backtrace
identifies a parameter slot with the source attribute it currently
references; a schema alternative chooses one source per slot.  Choices
are realized by rewriting the plan bottom-up while tracking, for every
column path of every intermediate schema, which source attribute it
carries.  A combination is pruned when some slot's chosen source is not
addressable at its operator (e.g. the year of an address relation that
was never flattened) or when the rewritten plan's root type differs from
the original.

Substitutions only change a parameter when the chosen source requires a
different column reference: flattening ``address1`` instead of
``address2`` changes the flatten parameter, while the selection over
``year`` is unchanged even though its source moved.  The set of operators
with actually-changed parameters is the alternative's SR prefix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

from whynot.errors import BadAlternative, TooManyAlternatives, WhyNotError
from whynot.algebra.plan import (
    AggregationParams,
    Comparison,
    FlattenParams,
    JoinParams,
    Path,
    ProjectionParams,
    QueryPlan,
    Ref,
    RelationNestParams,
    RenamingParams,
    SelectionParams,
    TupleNestParams,
    parse_path,
    path_str,
)
from whynot.algebra.schema import DbSchema, infer_schema, resolve_path, root_type, _row
from whynot.backtrace import Association, BacktraceResult, backtrace_plan
from whynot.model.types import BagType, NestedType, PrimitiveType, TupleType, same_type

Source = tuple[str, Path]  # (relation, attribute path, possibly through bags)


def shape_compatible(a: NestedType, b: NestedType) -> bool:
    """Structural type equality with attribute names ignored: an
    alternative may carry different member names (the root-schema pruning
    rejects combinations where that leaks into the output)."""
    if isinstance(a, PrimitiveType) and isinstance(b, PrimitiveType):
        return same_type(a, b)
    if isinstance(a, TupleType) and isinstance(b, TupleType):
        return len(a.fields) == len(b.fields) and all(
            shape_compatible(ta, tb)
            for (_, ta), (_, tb) in zip(a.fields, b.fields))
    if isinstance(a, BagType) and isinstance(b, BagType):
        return shape_compatible(a.element, b.element)
    return type(a) is type(b)


def nested_paths(row: TupleType, prefix: Path = ()) -> list[tuple[Path, NestedType]]:
    """All attribute paths including those through bag members."""
    out: list[tuple[Path, NestedType]] = []
    for n, t in row.fields:
        path = prefix + (n,)
        out.append((path, t))
        if isinstance(t, TupleType):
            out.extend(nested_paths(t, path))
        elif isinstance(t, BagType) and isinstance(t.element, TupleType):
            out.extend(nested_paths(t.element, path))
    return out


def tuple_paths(row: TupleType, prefix: Path = ()) -> list[tuple[Path, NestedType]]:
    """Attribute paths addressable by operators (no bag traversal)."""
    out: list[tuple[Path, NestedType]] = []
    for n, t in row.fields:
        path = prefix + (n,)
        out.append((path, t))
        if isinstance(t, TupleType):
            out.extend(tuple_paths(t, path))
    return out


def resolve_alternatives(config: dict[str, list[str]],
                         db_schema: DbSchema) -> dict[Source, list[Path]]:
    """Validate the config: every alternative must live in the same relation
    as its source and have the same type."""
    resolved: dict[Source, list[Path]] = {}
    for src_text, alt_texts in config.items():
        src = parse_path(src_text)
        hits = []
        for rel, rel_type in db_schema.items():
            paths = dict(nested_paths(_row(rel_type)))
            if src in paths:
                hits.append((rel, paths))
        if not hits:
            raise BadAlternative(f"source attribute {src_text!r} not found "
                                 f"in any relation")
        for rel, paths in hits:
            alt_paths = []
            for alt_text in alt_texts:
                alt = parse_path(alt_text)
                if alt not in paths:
                    raise BadAlternative(
                        f"alternative {alt_text!r} for {src_text!r} does not "
                        f"exist in relation {rel!r}")
                if not shape_compatible(paths[alt], paths[src]):
                    raise BadAlternative(
                        f"alternative {alt_text!r} for {src_text!r} has type "
                        f"{paths[alt]!r}, expected {paths[src]!r}")
                alt_paths.append(alt)
            if alt_paths:
                resolved[(rel, src)] = alt_paths
    return resolved


@dataclass
class SchemaAlternative:
    index: int  # 1-based; 1 is the original
    plan: QueryPlan  # substituted plan, same structure and ids
    nips: dict[str, object]
    op_patterns: dict[int, object]
    associations: list[Association]
    substitutions: dict[tuple[int, str], Source]  # non-original slot choices
    changed_ops: frozenset[int]  # SR prefix: ops with changed params

    @property
    def label(self) -> str:
        return f"S{self.index}"


def enumerate_sas(bt: BacktraceResult, config: dict[str, list[str]],
                  plan: QueryPlan, db_schema: DbSchema,
                  max_sas: int = 16) -> list[SchemaAlternative]:
    resolved = resolve_alternatives(config or {}, db_schema)
    original_root = root_type(plan, db_schema)

    # Slot order: operators bottom-up, slots in name order, choices in
    # config order with the original first.
    topo_pos = {op: i for i, op in enumerate(plan.topological)}
    slots: list[tuple[tuple[int, str], Source, list[Source]]] = []
    for a in sorted(bt.red(), key=lambda a: (topo_pos[a.label[0]], a.label[1])):
        slot = a.label
        source = (a.relation, a.path)
        choices = [source] + [(a.relation, alt)
                              for alt in resolved.get(source, [])]
        if any(s[0] == slot for s, _, _ in slots):
            continue  # one association per slot
        slots.append((slot, source, choices))

    sas: list[SchemaAlternative] = []
    seen_plans: set = set()
    for combo in itertools.product(*(choices for _, _, choices in slots)):
        assignment = {slot: choice
                      for (slot, _, _), choice in zip(slots, combo)}
        rewritten = _rewrite_plan(plan, db_schema, assignment)
        if rewritten is None:
            continue
        try:
            if root_type(rewritten, db_schema) != original_root:
                continue
        except WhyNotError:
            continue
        signature = tuple(sorted(
            (i, repr(rewritten.node(i).params)) for i in rewritten.nodes))
        if signature in seen_plans:
            continue
        seen_plans.add(signature)
        subs = {slot: choice for (slot, orig, _), choice
                in zip(slots, combo) if choice != orig}
        changed = frozenset(i for i in plan.nodes
                            if plan.node(i).params != rewritten.node(i).params)
        sub_bt = backtrace_plan(rewritten, db_schema, _root_pattern(bt, plan))
        sas.append(SchemaAlternative(
            index=len(sas) + 1,
            plan=rewritten,
            nips=sub_bt.nips,
            op_patterns=sub_bt.op_patterns,
            associations=sub_bt.associations,
            substitutions=subs,
            changed_ops=changed,
        ))
        if len(sas) > max_sas:
            raise TooManyAlternatives(
                f"more than {max_sas} schema alternatives survive pruning; "
                f"raise --max-sas or trim the alternative sets")
    return sas


def _root_pattern(bt: BacktraceResult, plan: QueryPlan):
    return bt.op_patterns[plan.root_id]


def _rewrite_plan(plan: QueryPlan, db_schema: DbSchema,
                  assignment: dict[tuple[int, str], Source]) -> QueryPlan | None:
    """Rewrite every slot's reference to a column carrying its assigned
    source; None when some slot cannot be realized."""
    current = plan
    prov: dict[int, dict[Path, Source | None]] = {}
    for op_id in plan.topological:
        node = current.node(op_id)
        try:
            schemas = infer_schema(current, db_schema)
        except WhyNotError:
            return None
        in_rows = [_row(schemas[i]) for i in node.inputs]
        in_provs = [prov[i] for i in node.inputs]

        new_params = _rewrite_params(node, op_id, in_rows, in_provs, assignment)
        if new_params is None:
            return None
        if new_params != node.params:
            current = current.with_params(op_id, new_params)
            try:
                schemas = infer_schema(current, db_schema)
            except WhyNotError:
                return None
        node = current.node(op_id)
        out_row = _row(schemas[op_id])
        prov[op_id] = _out_prov(node, in_rows, in_provs, out_row, db_schema)
    return current


def _candidates(in_row: TupleType, in_prov: dict[Path, Source | None],
                source: Source, want=None) -> list[Path]:
    out = []
    for path, t in tuple_paths(in_row):
        if in_prov.get(path) != source:
            continue
        if want == "bag" and not isinstance(t, BagType):
            continue
        if want == "tuple" and not isinstance(t, TupleType):
            continue
        if want == "primitive" and isinstance(t, (BagType, TupleType)):
            continue
        if want == "top" and len(path) != 1:
            continue
        out.append(path)
    return sorted(out, key=lambda p: (len(p), p))


def _pick(in_row, in_prov, assignment, op_id, slot, original_path, want):
    source = assignment.get((op_id, slot))
    if source is None:
        return original_path
    cands = _candidates(in_row, in_prov, source, want)
    if not cands:
        return None
    if original_path in cands:
        return original_path
    return cands[0]


def _rewrite_params(node, op_id, in_rows, in_provs, assignment):
    kind, p = node.kind, node.params
    if kind == "selection":
        theta = p.theta
        for k, c in enumerate(theta.comparisons()):
            lhs = _pick(in_rows[0], in_provs[0], assignment, op_id,
                        f"cmp[{k}].lhs", c.lhs.path, "primitive")
            if lhs is None:
                return None
            rhs = c.rhs
            if isinstance(c.rhs, Ref):
                rp = _pick(in_rows[0], in_provs[0], assignment, op_id,
                           f"cmp[{k}].rhs", c.rhs.path, "primitive")
                if rp is None:
                    return None
                rhs = Ref(rp)
            if lhs != c.lhs.path or rhs != c.rhs:
                theta = theta.replace_comparison(k, Comparison(Ref(lhs), c.op, rhs))
        return SelectionParams(theta)

    if kind == "projection":
        attrs = []
        for i, path in enumerate(p.attrs):
            q = _pick(in_rows[0], in_provs[0], assignment, op_id,
                      f"attrs[{i}]", path, None)
            if q is None:
                return None
            attrs.append(q)
        return ProjectionParams(tuple(attrs))

    if kind == "renaming":
        pairs = []
        for i, (new, old) in enumerate(p.pairs):
            q = _pick(in_rows[0], in_provs[0], assignment, op_id,
                      f"pairs[{i}]", (old,), "top")
            if q is None:
                return None
            pairs.append((new, q[0]))
        return RenamingParams(tuple(pairs))

    if kind == "join":
        lk, rk = [], []
        for i, key in enumerate(p.left_keys):
            q = _pick(in_rows[0], in_provs[0], assignment, op_id,
                      f"left_key[{i}]", key, "primitive")
            if q is None:
                return None
            lk.append(q)
        for i, key in enumerate(p.right_keys):
            q = _pick(in_rows[1], in_provs[1], assignment, op_id,
                      f"right_key[{i}]", key, "primitive")
            if q is None:
                return None
            rk.append(q)
        return JoinParams(p.kind, tuple(lk), tuple(rk))

    if kind == "flatten":
        want = "tuple" if p.kind == "tuple" else "bag"
        q = _pick(in_rows[0], in_provs[0], assignment, op_id, "attr",
                  p.attr, want)
        if q is None:
            return None
        return FlattenParams(p.kind, q)

    if kind in ("tuple_nest", "relation_nest"):
        cls = TupleNestParams if kind == "tuple_nest" else RelationNestParams
        attrs = []
        for i, a in enumerate(p.attrs):
            q = _pick(in_rows[0], in_provs[0], assignment, op_id,
                      f"attrs[{i}]", (a,), "top")
            if q is None:
                return None
            attrs.append(q[0])
        return cls(tuple(attrs), p.target)

    if kind == "aggregation":
        q = _pick(in_rows[0], in_provs[0], assignment, op_id, "source",
                  p.source, "bag")
        if q is None:
            return None
        return AggregationParams(p.func, q, p.target)

    return p


def _out_prov(node, in_rows, in_provs, out_row, db_schema) -> dict[Path, Source | None]:
    kind, p = node.kind, node.params

    if kind == "table_access":
        return {path: (p.name, path) for path, _ in nested_paths(out_row)}

    def sub(prov: dict, src_path: Path, dst_path: Path, out: dict):
        """Copy provenance of src_path and everything below it to dst_path."""
        for path, source in prov.items():
            if path[:len(src_path)] == src_path:
                out[dst_path + path[len(src_path):]] = source

    if kind in ("selection", "dedup", "difference"):
        return dict(in_provs[0])

    if kind == "union":
        left, right = in_provs
        return {path: (left.get(path) if left.get(path) == right.get(path)
                       else None)
                for path, _ in nested_paths(out_row)}

    if kind in ("join", "cross_product"):
        merged = dict(in_provs[0])
        merged.update(in_provs[1])
        return merged

    if kind == "projection":
        out: dict[Path, Source | None] = {}
        for path in p.attrs:
            sub(in_provs[0], path, (path[-1],), out)
        return out

    if kind == "renaming":
        out = {}
        for new, old in p.pairs:
            sub(in_provs[0], (old,), (new,), out)
        return out

    if kind == "flatten":
        out = dict(in_provs[0])
        member_names = [n for n in out_row.names if n not in in_rows[0].names]
        for m in member_names:
            sub(in_provs[0], p.attr + (m,), (m,), out)
        return out

    if kind in ("tuple_nest", "relation_nest"):
        out = {path: source for path, source in in_provs[0].items()
               if path[0] not in p.attrs}
        for a in p.attrs:
            sub(in_provs[0], (a,), (p.target, a), out)
        return out

    if kind == "aggregation":
        out = dict(in_provs[0])
        out[(p.target,)] = None
        return out

    return dict(in_provs[0])
