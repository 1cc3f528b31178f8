"""Admissible parameter changes, reparameterization, and the exact oracle.

A reparameterization changes operator parameters only; the plan's
structure, operator kinds and ids are preserved.  Admissible changes per
operator kind: selection and join comparisons may swap attribute
references (same type, same input), comparison operators, and constants;
joins may change their kind (equi-joins only, no theta generalization);
flatten may swap the attribute and toggle inner/outer; projection,
nesting and aggregation may swap referenced attributes; aggregation may
also change its function.  Union, difference, cross product, dedup and
table access are parameter-free.

Constant grids are adaptive: the candidates for a comparison are the
active domain of the referenced attribute *in the operator's input under
the upstream choices*, plus boundary-adjacent values.  With only the six
comparison operators, selections distinguishable by their result are
prefix/suffix/point sets of that ordered domain, so the grid is
result-complete.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

from whynot.errors import (
    BudgetExceeded,
    InadmissibleChange,
    PlanError,
    RootSchemaChanged,
    SchemaBroken,
    WhyNotError,
)
from whynot.algebra.engine import Database, eval_node, evaluate
from whynot.algebra.plan import (
    AggregationParams,
    Comparison,
    Const,
    FlattenParams,
    JoinParams,
    PARAMETER_FREE_KINDS,
    Path,
    ProjectionParams,
    QueryPlan,
    Ref,
    RenamingParams,
    RelationNestParams,
    SelectionParams,
    TupleNestParams,
    path_str,
)
from whynot.algebra.schema import DbSchema, infer_schema, resolve_path, root_type, _row
from whynot.model.distance import result_distance
from whynot.model.patterns import matches_nip
from whynot.model.types import (
    BagType,
    NestedType,
    PrimitiveType,
    TupleType,
    same_type,
)
from whynot.model.values import Bag, sort_key
from whynot.question import WhyNotQuestion


@dataclass(frozen=True)
class ParamChange:
    """One admissible change: the full replacement params for an operator."""
    op_id: int
    params: object
    descriptor: str

    def __repr__(self):
        return f"ParamChange(op {self.op_id}: {self.descriptor})"


def all_paths(row: TupleType, prefix: Path = ()) -> list[tuple[Path, NestedType]]:
    """Every dot-path reachable through nested tuples, with its type."""
    out: list[tuple[Path, NestedType]] = []
    for n, t in row.fields:
        path = prefix + (n,)
        out.append((path, t))
        if isinstance(t, TupleType):
            out.extend(all_paths(t, path))
    return out


def _boundaries(values: list) -> list:
    if not values:
        return []
    lo, hi = values[0], values[-1]
    if isinstance(lo, bool):
        return [False, True]
    if isinstance(lo, int):
        return [lo - 1, hi + 1]
    if isinstance(lo, str):
        return ["", hi + "~"]
    return []


def _const_grid(domain: list) -> list:
    seen, out = set(), []
    for v in list(domain) + _boundaries(domain):
        if v not in seen:
            seen.add(v)
            out.append(v)
    return out


def admissible_changes(node, input_schemas: list[BagType],
                       active_domains: list[dict[Path, list]]) -> list[ParamChange]:
    """All atomic admissible changes of one operator (one slot differs)."""
    changes: list[ParamChange] = []
    for params, desc in _param_choices(node, input_schemas, active_domains,
                                       atomic=True):
        if params != node.params:
            changes.append(ParamChange(node.op_id, params, desc))
    return changes


def _param_choices(node, input_schemas, active_domains, atomic=False):
    """Yield (params, descriptor) including the original.  With
    ``atomic=False`` the full cross-product grid of slot choices is
    produced; with ``atomic=True`` only single-slot deviations."""
    kind, p = node.kind, node.params
    if kind in PARAMETER_FREE_KINDS:
        yield p, "unchanged"
        return
    row = _row(input_schemas[0]) if input_schemas else None

    if kind == "selection":
        yield from _predicate_choices(
            p.theta, row, active_domains[0], atomic,
            lambda theta: SelectionParams(theta))
        return

    if kind == "join":
        lrow, rrow = _row(input_schemas[0]), _row(input_schemas[1])
        slots = [("kind", [k for k in ("inner", "left", "right", "full")],
                  p.kind)]
        for i, key in enumerate(p.left_keys):
            t = resolve_path(lrow, key)
            opts = [q for q, qt in all_paths(lrow)
                    if isinstance(qt, PrimitiveType) and same_type(qt, t)]
            slots.append((f"left_key[{i}]", opts, key))
        for i, key in enumerate(p.right_keys):
            t = resolve_path(rrow, key)
            opts = [q for q, qt in all_paths(rrow)
                    if isinstance(qt, PrimitiveType) and same_type(qt, t)]
            slots.append((f"right_key[{i}]", opts, key))

        def build(choice):
            nl = len(p.left_keys)
            return JoinParams(choice[0], tuple(choice[1:1 + nl]),
                              tuple(choice[1 + nl:]))
        yield from _combine(slots, build, atomic)
        return

    if kind == "flatten":
        if p.kind == "tuple":
            attr_opts = [q for q, t in all_paths(row) if isinstance(t, TupleType)]
            kind_opts = ["tuple"]
        else:
            attr_opts = [q for q, t in all_paths(row) if isinstance(t, BagType)]
            kind_opts = ["inner", "outer"]
        slots = [("kind", kind_opts, p.kind), ("attr", attr_opts, p.attr)]
        yield from _combine(slots, lambda c: FlattenParams(c[0], c[1]), atomic)
        return

    if kind == "projection":
        slots = []
        for i, attr in enumerate(p.attrs):
            t = resolve_path(row, attr)
            opts = [q for q, qt in all_paths(row) if same_type(qt, t)]
            slots.append((f"attr[{i}]", opts, attr))
        yield from _combine(slots, lambda c: ProjectionParams(tuple(c)), atomic)
        return

    if kind == "renaming":
        news = [new for new, _ in p.pairs]
        yield p.__class__(p.pairs), "unchanged"
        if len(news) <= 4:
            for perm in itertools.permutations(news):
                if list(perm) == news:
                    continue
                yield (RenamingParams(tuple((n, old) for n, (_, old)
                                            in zip(perm, p.pairs))),
                       f"outputs permuted to {perm}")
        return

    if kind in ("tuple_nest", "relation_nest"):
        cls = TupleNestParams if kind == "tuple_nest" else RelationNestParams
        slots = []
        for i, a in enumerate(p.attrs):
            t = row.field(a)
            opts = [n for n, nt in row.fields if same_type(nt, t)]
            slots.append((f"attrs[{i}]", opts, a))
        yield from _combine(
            slots, lambda c: cls(tuple(c), p.target), atomic)
        return

    if kind == "aggregation":
        t = resolve_path(row, p.source)
        elem = t.element if isinstance(t, BagType) else None
        source_opts = [q for q, qt in all_paths(row) if same_type(qt, t)]
        func_opts = [f for f in ("count", "sum", "min", "max", "avg")
                     if _func_applies(f, elem)]
        slots = [("func", func_opts, p.func), ("source", source_opts, p.source)]
        yield from _combine(
            slots, lambda c: AggregationParams(c[0], c[1], p.target), atomic)
        return

    raise PlanError(f"unknown operator kind {kind!r}")


def _func_applies(func: str, elem) -> bool:
    if func == "count":
        return True
    if not isinstance(elem, TupleType) or len(elem.fields) != 1:
        return False
    vt = elem.fields[0][1]
    if not isinstance(vt, PrimitiveType):
        return False
    if func in ("sum", "avg"):
        return vt.kind in ("int", "date")
    return True


def _combine(slots, build, atomic):
    """slots: (name, options, original) triples.  Yields built params."""
    originals = [orig for _, _, orig in slots]
    yield build(list(originals)), "unchanged"
    if atomic:
        for i, (name, opts, orig) in enumerate(slots):
            for o in opts:
                if o == orig:
                    continue
                choice = list(originals)
                choice[i] = o
                yield build(choice), f"{name}: {_fmt(orig)}→{_fmt(o)}"
        return
    option_lists = [list(dict.fromkeys([orig] + list(opts)))
                    for _, opts, orig in slots]
    first = True
    for combo in itertools.product(*option_lists):
        if first:
            first = False
            continue  # originals already yielded
        if list(combo) == originals:
            continue
        desc = ", ".join(f"{name}={_fmt(v)}" for (name, _, _), v in zip(slots, combo))
        yield build(list(combo)), desc


def _fmt(v):
    if isinstance(v, tuple):
        return path_str(v)
    return repr(v)


def _predicate_choices(theta, row, adom, atomic, wrap):
    comparisons = theta.comparisons()
    slots = []
    for k, c in enumerate(comparisons):
        t = resolve_path(row, c.lhs.path)
        lhs_opts = [q for q, qt in all_paths(row)
                    if isinstance(qt, PrimitiveType) and same_type(qt, t)]
        op_opts = ["=", "!=", "<", "<=", ">", ">="]
        if isinstance(c.rhs, Const):
            slots.append((f"cmp[{k}]", c, lhs_opts, op_opts, None))
        else:
            rt = resolve_path(row, c.rhs.path)
            rhs_opts = [q for q, qt in all_paths(row)
                        if isinstance(qt, PrimitiveType) and same_type(qt, rt)]
            slots.append((f"cmp[{k}]", c, lhs_opts, op_opts, rhs_opts))

    def comparison_options(slot):
        name, c, lhs_opts, op_opts, rhs_opts = slot
        out = []
        for lhs in lhs_opts:
            for op in op_opts:
                if rhs_opts is None:
                    for const in _const_grid(adom.get(lhs, [])) or [c.rhs.value]:
                        out.append((Comparison(Ref(lhs), op, Const(const)),
                                    f"{name}: {path_str(lhs)} {op} {const!r}"))
                else:
                    for rhs in rhs_opts:
                        out.append((Comparison(Ref(lhs), op, Ref(rhs)),
                                    f"{name}: {path_str(lhs)} {op} {path_str(rhs)}"))
        # The original belongs in the grid even if its constant is outside
        # the current active domain.
        if all(opt != c for opt, _ in out):
            out.insert(0, (c, f"{name}: unchanged"))
        return out

    yield wrap(theta), "unchanged"
    if atomic:
        for k, slot in enumerate(slots):
            for cmp_new, desc in comparison_options(slot):
                if cmp_new == comparisons[k]:
                    continue
                yield wrap(theta.replace_comparison(k, cmp_new)), desc
        return
    per_slot = [comparison_options(s) for s in slots]
    first = True
    for combo in itertools.product(*per_slot):
        new_theta = theta
        descs = []
        changed = False
        for k, (cmp_new, desc) in enumerate(combo):
            if cmp_new != comparisons[k]:
                changed = True
                descs.append(desc)
            new_theta = new_theta.replace_comparison(k, cmp_new)
        if first:
            first = False
            if not changed:
                continue
        if changed:
            yield wrap(new_theta), "; ".join(descs)


# --- applying changes --------------------------------------------------------

def apply_changes(plan: QueryPlan, changes, db_schema: DbSchema) -> QueryPlan:
    """Apply a sequence of ParamChange; validates structure, schemas, and
    that the root output type is unchanged."""
    original_root = root_type(plan, db_schema)
    current = plan
    for ch in changes:
        if ch.op_id not in current.nodes:
            raise InadmissibleChange(f"no operator {ch.op_id}")
        node = current.node(ch.op_id)
        if type(ch.params) is not type(node.params):
            raise InadmissibleChange(
                f"op {ch.op_id} ({node.kind}) cannot take {type(ch.params).__name__}")
        if node.kind in PARAMETER_FREE_KINDS and ch.params != node.params:
            raise InadmissibleChange(f"{node.kind} is parameter-free")
        candidate = current.with_params(ch.op_id, ch.params)
        try:
            infer_schema(candidate, db_schema)
        except WhyNotError as e:
            raise SchemaBroken(
                f"change {ch.descriptor!r} breaks the plan: {e.message}") from e
        current = candidate
    new_root = root_type(current, db_schema)
    if new_root != original_root:
        raise RootSchemaChanged(
            f"reparameterization changes the output type to {new_root!r}")
    return current


def changed_set(original: QueryPlan, reparameterized: QueryPlan) -> frozenset[int]:
    return frozenset(i for i in original.nodes
                     if original.node(i).params != reparameterized.node(i).params)


def is_successful(plan2: QueryPlan, db: Database, db_schema: DbSchema, t) -> bool:
    """Does the reparameterized plan's result contain a tuple matching t?"""
    result = evaluate(plan2, db, db_schema)
    return any(matches_nip(v, t) for v, _ in result)


# --- the exact brute-force oracle ---------------------------------------------

@dataclass(frozen=True)
class OracleEntry:
    ops: frozenset[int]
    d: int
    witness: QueryPlan


def enumerate_reparameterizations(plan: QueryPlan, db: Database,
                                  db_schema: DbSchema, budget: int):
    """Yield (changed_ops, plan', root_bag) for every grid reparameterization
    whose schema is valid and whose root type matches the original.

    Operators are processed bottom-up; each operator's parameter grid is
    built against its concrete input under the upstream choices, so
    constant grids follow attribute swaps upstream.  Raises BudgetExceeded
    when more than ``budget`` combinations would be visited.
    """
    topo = plan.topological
    original_root = root_type(plan, db_schema)
    visited = 0

    def rec(idx: int, current: QueryPlan, outs: dict[int, Bag],
            types: dict[int, BagType], changed: frozenset[int]):
        nonlocal visited
        if idx == len(topo):
            if types[plan.root_id] == original_root:
                yield changed, current, outs[plan.root_id]
            return
        op_id = topo[idx]
        node = plan.node(op_id)
        in_types = [types[i] for i in node.inputs]
        in_bags = [outs[i] for i in node.inputs]
        adoms = [dict() for _ in node.inputs]
        if node.kind in ("selection",):
            from whynot.algebra.engine import active_domain
            adoms = [active_domain(b, _row(t)) for b, t in zip(in_bags, in_types)]
        for params, _desc in _param_choices(node, in_types, adoms, atomic=False):
            visited += 1
            if visited > budget:
                raise BudgetExceeded(
                    f"oracle budget of {budget} combinations exceeded")
            cand_node = replace(node, params=params)
            try:
                from whynot.algebra.schema import _infer_node
                out_type = _infer_node(cand_node, in_types, db_schema)
                out_bag = eval_node(cand_node, in_bags, db, in_types)
            except WhyNotError:
                continue
            plan2 = current.with_params(op_id, params)
            nxt = changed | {op_id} if params != node.params else changed
            types2 = dict(types)
            types2[op_id] = out_type
            outs2 = dict(outs)
            outs2[op_id] = out_bag
            yield from rec(idx + 1, plan2, outs2, types2, nxt)

    yield from rec(0, plan, {}, {}, frozenset())


def exact_explanations_oracle(question: WhyNotQuestion,
                              budget: int = 200_000) -> list[OracleEntry]:
    """Exhaustive MSR computation: enumerate grid reparameterizations,
    filter successful ones, keep the minimal-d witness per changed set,
    retain the sets minimal under the (subset, distance) partial order."""
    if len(question.plan) > 8:
        raise BudgetExceeded("oracle is limited to plans of at most 8 operators")
    question.validate()
    original = question.result()
    best: dict[frozenset[int], tuple[int, QueryPlan]] = {}
    for changed, plan2, result in enumerate_reparameterizations(
            question.plan, question.db, question.db_schema, budget):
        if not changed:
            continue
        if not any(matches_nip(v, question.tuple) for v, _ in result):
            continue
        d = result_distance(original, result)
        if changed not in best or d < best[changed][0]:
            best[changed] = (d, plan2)
    entries = [OracleEntry(ops, d, witness) for ops, (d, witness) in best.items()]
    msrs = [e for e in entries if not _dominated(e, entries)]
    for e in msrs:
        assert is_successful(e.witness, question.db, question.db_schema,
                             question.tuple)
    return sorted(msrs, key=lambda e: (len(e.ops), e.d, sorted(e.ops)))


def _dominated(e: OracleEntry, entries: list[OracleEntry]) -> bool:
    for other in entries:
        if other.ops <= e.ops and other.d <= e.d and \
                (other.ops < e.ops or other.d < e.d):
            return True
    return False
