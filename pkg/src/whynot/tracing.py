"""Step 3: instrumented evaluation across all schema alternatives.

Each operator's tracing procedure consumes an annotated relation and
produces one, keeping per schema alternative and per top-level tuple:

* ``payload``: the tuple's value under the alternative with every
  relaxation applied (selections pass everything through, flattens and
  joins run as their outer variants, nests group all valid rows),
* ``kept``: the value the tuple has under the *original* operator
  parameters of the alternative, or None when the original pipeline drops
  it — restricting an operator's rows to non-None kept values reproduces
  a standalone evaluation of the prefix plan exactly,
* ``valid``: does the tuple exist under the alternative,
* ``consistent``: can it still contribute to the missing answer, i.e.
  does it match the alternative's backtraced pattern at this operator,
* ``retained``: does it survive the operator as originally parameterized
  (only selections, joins, flattens and aggregations add this flag).

Tuples of one alternative are merged with their counterparts from the
others by input id; missing concatenation partners are padded with nulls
and annotations of padded slots are zero.  Fresh ids are assigned by
flatten, join, nesting, and dedup; the other operators keep their input
ids.  Lineage is recorded explicitly per operator and alternative.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from whynot.errors import DuplicateLabel
from whynot.algebra.engine import aggregate, eval_predicate, join_matches, project_paths
from whynot.algebra.plan import QueryPlan
from whynot.algebra.schema import DbSchema, infer_schema, _row
from whynot.alternatives import SchemaAlternative
from whynot.model.patterns import matches_nip
from whynot.model.values import Bag, Tup, null_tuple, sort_key, value_to_json

# --- annotation labels -------------------------------------------------------

_LABEL_RE = re.compile(r"^(valid|consistent|retained)S(\d+)_(\d+)$")


def render_label(base: str, sa_index: int, op_id: int) -> str:
    return f"{base}S{sa_index}_{op_id}"


def parse_label(label: str) -> tuple[str, int, int]:
    m = _LABEL_RE.match(label)
    if not m:
        raise ValueError(f"not an annotation label: {label!r}")
    return m.group(1), int(m.group(2)), int(m.group(3))


def annotate(row: dict, av_map, sa_index: int, op_id: int) -> dict:
    """Append one labelled annotation column per (base, bit) pair."""
    out = dict(row)
    for base, bit in av_map:
        label = render_label(base, sa_index, op_id)
        if label in out:
            raise DuplicateLabel(f"annotation {label} already present")
        out[label] = bit
    return out


# --- annotated relations -----------------------------------------------------

@dataclass
class TracedRow:
    rid: int
    payload: dict[int, object]  # sa index → value | None
    kept: dict[int, object]  # sa index → value | None (original semantics)
    valid: dict[int, bool]
    consistent: dict[int, bool]
    retained: dict[int, bool] | None  # None when the op adds no flag
    parents: dict[int, tuple[tuple[int, int], ...]]  # sa → ((child_op, rid)…)


@dataclass
class OpTrace:
    op_id: int
    kind: str
    rows: list[TracedRow]
    adds_retained: bool
    _by_rid: dict[int, TracedRow] | None = None

    def row(self, rid: int) -> TracedRow:
        if self._by_rid is None:
            self._by_rid = {r.rid: r for r in self.rows}
        return self._by_rid[rid]


@dataclass
class TraceResult:
    plan: QueryPlan
    sas: list[SchemaAlternative]
    snapshots: dict[int, OpTrace]
    _closure: dict[tuple[int, int, int], bool] = field(default_factory=dict)

    @property
    def root_id(self) -> int:
        return self.plan.root_id

    def root_rows(self) -> list[TracedRow]:
        return self.snapshots[self.root_id].rows

    def lineage_map(self) -> dict[int, dict[int, set[int]]]:
        """Per operator: output id → union of input ids over all SAs."""
        out: dict[int, dict[int, set[int]]] = {}
        for op_id, trace in self.snapshots.items():
            out[op_id] = {
                r.rid: {p for ps in r.parents.values() for _, p in ps}
                for r in trace.rows}
        return out

    def retained_closure(self, op_id: int, rid: int, sa: int) -> bool:
        """All retained flags along the row's per-SA derivation are set."""
        key = (op_id, rid, sa)
        if key in self._closure:
            return self._closure[key]
        trace = self.snapshots[op_id]
        row = trace.row(rid)
        ok = row.valid.get(sa, False)
        if ok and row.retained is not None:
            ok = row.retained.get(sa, False)
        if ok:
            for child_op, parent in row.parents.get(sa, ()):
                if not self.retained_closure(child_op, parent, sa):
                    ok = False
                    break
        self._closure[key] = ok
        return ok

    def has_zero_flag(self, op_id: int, rid: int, sa: int,
                      ops: frozenset[int]) -> bool:
        """Does the row's per-SA derivation carry a retained flag of 0 at
        one of the given operators?"""
        stack = [(op_id, rid)]
        seen: set[tuple[int, int]] = set()
        while stack:
            op, cur = stack.pop()
            if (op, cur) in seen:
                continue
            seen.add((op, cur))
            trace = self.snapshots[op]
            row = trace.row(cur)
            if (op in ops and trace.adds_retained and row.valid.get(sa)
                    and not (row.retained or {}).get(sa, True)):
                return True
            stack.extend(row.parents.get(sa, ()))
        return False

    def restricted(self, op_id: int, sa: int) -> Bag:
        """Original-semantics view: the bag of kept values — equals a
        standalone evaluation of the prefix plan under the alternative."""
        return Bag((r.kept[sa], 1) for r in self.snapshots[op_id].rows
                   if r.kept.get(sa) is not None)

    def flag_restricted(self, op_id: int, sa: int) -> Bag:
        """Flag-based view: valid rows whose retained flags are all set."""
        return Bag((r.payload[sa], 1) for r in self.snapshots[op_id].rows
                   if r.valid.get(sa) and r.payload.get(sa) is not None
                   and self.retained_closure(op_id, r.rid, sa))

    def reachable_from_consistent(self, sa: int) -> dict[int, set[int]]:
        """Per operator, the ids lying in the per-SA lineage of a valid and
        consistent root tuple."""
        reach: dict[int, set[int]] = {op: set() for op in self.snapshots}
        root = self.snapshots[self.root_id]
        reach[self.root_id] = {r.rid for r in root.rows
                               if r.valid.get(sa) and r.consistent.get(sa)}
        for op_id in reversed(self.plan.topological):
            trace = self.snapshots[op_id]
            for r in trace.rows:
                if r.rid in reach[op_id]:
                    for child_op, parent in r.parents.get(sa, ()):
                        reach[child_op].add(parent)
        return reach

    def dump_rows(self, op_id: int) -> list[dict]:
        """JSON-friendly rendering with inline annotation columns."""
        trace = self.snapshots[op_id]
        out = []
        for r in trace.rows:
            row: dict = {"id": r.rid}
            for sa in self.sas:
                i = sa.index
                row[f"payload{sa.label}"] = value_to_json(r.payload.get(i)) \
                    if r.payload.get(i) is not None else None
            for sa in self.sas:
                i = sa.index
                av = [("valid", int(r.valid.get(i, False))),
                      ("consistent", int(r.consistent.get(i, False)))]
                if trace.adds_retained:
                    av.append(("retained", int((r.retained or {}).get(i, False))))
                row = annotate(row, av, i, op_id)
            out.append(row)
        return out


# --- tracing driver ----------------------------------------------------------

RETAINED_KINDS = ("selection", "join", "flatten", "aggregation")


class _Tracer:
    def __init__(self, plan: QueryPlan, db, db_schema: DbSchema,
                 sas: list[SchemaAlternative]):
        self.plan = plan
        self.db = db
        self.db_schema = db_schema
        self.sas = sas
        self.next_rid = 1
        self.snapshots: dict[int, OpTrace] = {}

    def fresh(self) -> int:
        rid = self.next_rid
        self.next_rid += 1
        return rid

    def pattern(self, sa: SchemaAlternative, op_id: int):
        return sa.op_patterns[op_id]

    def consistent(self, sa: SchemaAlternative, op_id: int, payload) -> bool:
        if payload is None:
            return False
        return matches_nip(payload, self.pattern(sa, op_id))

    def run(self) -> TraceResult:
        for op_id in self.plan.topological:
            node = self.plan.node(op_id)
            handler = getattr(self, f"_trace_{node.kind}", None)
            if handler is None:
                raise AssertionError(f"no tracing procedure for {node.kind}")
            rows = handler(op_id)
            self.snapshots[op_id] = OpTrace(
                op_id, node.kind, rows, node.kind in RETAINED_KINDS)
        return TraceResult(self.plan, self.sas, self.snapshots)

    # -- leaf ------------------------------------------------------------

    def _trace_table_access(self, op_id: int) -> list[TracedRow]:
        name = self.plan.node(op_id).params.name
        rows = []
        for t in sorted(self.db[name].instances(), key=sort_key):
            rows.append(TracedRow(
                rid=self.fresh(),
                payload={sa.index: t for sa in self.sas},
                kept={sa.index: t for sa in self.sas},
                valid={sa.index: True for sa in self.sas},
                consistent={sa.index: matches_nip(t, sa.nips[name])
                            for sa in self.sas},
                retained=None,
                parents={sa.index: () for sa in self.sas},
            ))
        return rows

    # -- per-tuple operators ----------------------------------------------

    def _per_tuple(self, op_id: int, transform, retained=None) -> list[TracedRow]:
        """Payload/kept transforms that keep ids; ``transform(sa, value)``
        maps one tuple (None-safe), ``retained(sa, row)`` computes the new
        flag if the operator adds one."""
        child = self.plan.node(op_id).inputs[0]
        out = []
        for r in self.snapshots[child].rows:
            payload = {}
            kept = {}
            valid = {}
            consistent = {}
            for sa in self.sas:
                i = sa.index
                payload[i] = transform(sa, r.payload.get(i)) \
                    if r.valid.get(i) and r.payload.get(i) is not None else None
                kept[i] = transform(sa, r.kept.get(i)) \
                    if r.kept.get(i) is not None else None
                valid[i] = r.valid.get(i, False)
                consistent[i] = valid[i] and self.consistent(sa, op_id, payload[i])
            row = TracedRow(
                rid=r.rid, payload=payload, kept=kept, valid=valid,
                consistent=consistent, retained=None,
                parents={sa.index: ((child, r.rid),) for sa in self.sas})
            if retained is not None:
                row.retained = {sa.index: retained(sa, r, row) for sa in self.sas}
            out.append(row)
        return out

    def _trace_projection(self, op_id: int) -> list[TracedRow]:
        return self._per_tuple(op_id, lambda sa, t: project_paths(
            t, sa.plan.node(op_id).params.attrs))

    def _trace_renaming(self, op_id: int) -> list[TracedRow]:
        def transform(sa, t):
            pairs = sa.plan.node(op_id).params.pairs
            return Tup((new for new, _ in pairs), (t.get(old) for _, old in pairs))
        return self._per_tuple(op_id, transform)

    def _trace_tuple_nest(self, op_id: int) -> list[TracedRow]:
        def transform(sa, t):
            p = sa.plan.node(op_id).params
            nested = Tup(p.attrs, (t.get(a) for a in p.attrs))
            return t.drop(p.attrs).concat(Tup((p.target,), (nested,)))
        return self._per_tuple(op_id, transform)

    def _trace_selection(self, op_id: int) -> list[TracedRow]:
        def transform(sa, t):
            return t

        rows = self._per_tuple(op_id, transform)
        child = self.plan.node(op_id).inputs[0]
        child_rows = {r.rid: r for r in self.snapshots[child].rows}
        for row in rows:
            row.retained = {}
            for sa in self.sas:
                i = sa.index
                theta = sa.plan.node(op_id).params.theta
                row.retained[i] = bool(row.valid.get(i) and row.payload.get(i)
                                       is not None
                                       and eval_predicate(theta, row.payload[i]))
                kept_in = child_rows[row.rid].kept.get(i)
                row.kept[i] = kept_in if kept_in is not None and \
                    eval_predicate(theta, kept_in) else None
        return rows

    def _trace_aggregation(self, op_id: int) -> list[TracedRow]:
        def transform(sa, t):
            p = sa.plan.node(op_id).params
            return t.concat(Tup((p.target,), (aggregate(p.func, t.path(p.source)),)))

        def retained(sa, r_in, row):
            # The whole aggregate counts as non-retained as soon as its
            # input group contains a tuple the original pipeline dropped.
            i = sa.index
            if row.kept.get(i) is None or not row.valid.get(i):
                return False
            p = sa.plan.node(op_id).params
            return r_in.payload[i].path(p.source) == r_in.kept[i].path(p.source)

        return self._per_tuple(op_id, transform, retained=retained)

    # -- flatten -----------------------------------------------------------

    def _trace_flatten(self, op_id: int) -> list[TracedRow]:
        child = self.plan.node(op_id).inputs[0]
        schemas = {sa.index: infer_schema(sa.plan, self.db_schema) for sa in self.sas}
        out: list[TracedRow] = []
        for r in self.snapshots[child].rows:
            per_sa: dict[int, list[tuple[object, object, bool]]] = {}
            for sa in self.sas:
                i = sa.index
                p = sa.plan.node(op_id).params
                member_row = self._flatten_member_type(sa, op_id, schemas[i])
                per_sa[i] = _expand_flatten(
                    r.payload.get(i) if r.valid.get(i) else None,
                    r.kept.get(i), p, member_row)
            width = max((len(v) for v in per_sa.values()), default=0)
            for k in range(width):
                payload = {}
                kept = {}
                valid = {}
                consistent = {}
                retained = {}
                for sa in self.sas:
                    i = sa.index
                    if k < len(per_sa[i]):
                        pv, kv, is_member = per_sa[i][k]
                    else:
                        pv, kv, is_member = None, None, False
                    payload[i] = pv
                    kept[i] = kv
                    valid[i] = pv is not None
                    consistent[i] = valid[i] and self.consistent(sa, op_id, pv)
                    kind = sa.plan.node(op_id).params.kind
                    retained[i] = bool(valid[i] and (is_member or kind != "inner"))
                out.append(TracedRow(
                    rid=self.fresh(), payload=payload, kept=kept, valid=valid,
                    consistent=consistent, retained=retained,
                    parents={sa.index: ((child, r.rid),) for sa in self.sas}))
        return out

    def _flatten_member_type(self, sa: SchemaAlternative, op_id: int, schemas):
        p = sa.plan.node(op_id).params
        from whynot.algebra.schema import resolve_path
        row = _row(schemas[self.plan.node(op_id).inputs[0]])
        t = resolve_path(row, p.attr)
        return t if p.kind == "tuple" else t.element

    # -- join ---------------------------------------------------------------

    def _trace_join(self, op_id: int) -> list[TracedRow]:
        node = self.plan.node(op_id)
        lchild, rchild = node.inputs
        lrows = self.snapshots[lchild].rows
        rrows = self.snapshots[rchild].rows
        schemas = {sa.index: infer_schema(sa.plan, self.db_schema)
                   for sa in self.sas}

        keys: dict[tuple, dict] = {}  # (l_rid, r_rid|None) / (None, r_rid)

        def slot(key):
            if key not in keys:
                keys[key] = {"payload": {}, "kept": {}, "valid": {},
                             "retained": {}}
            return keys[key]

        for sa in self.sas:
            i = sa.index
            p = sa.plan.node(op_id).params
            lrow_t = _row(schemas[i][lchild])
            rrow_t = _row(schemas[i][rchild])
            lpad, rpad = null_tuple(lrow_t), null_tuple(rrow_t)
            lvalid = [r for r in lrows if r.valid.get(i) and r.payload.get(i) is not None]
            rvalid = [r for r in rrows if r.valid.get(i) and r.payload.get(i) is not None]
            lmatched, rmatched = set(), set()
            for lr in lvalid:
                for rr in rvalid:
                    if join_matches(p, lr.payload[i], rr.payload[i]):
                        s = slot((lr.rid, rr.rid))
                        s["payload"][i] = lr.payload[i].concat(rr.payload[i])
                        s["valid"][i] = True
                        s["retained"][i] = True
                        lmatched.add(lr.rid)
                        rmatched.add(rr.rid)
            for lr in lvalid:
                if lr.rid not in lmatched:
                    s = slot((lr.rid, None))
                    s["payload"][i] = lr.payload[i].concat(rpad)
                    s["valid"][i] = True
                    s["retained"][i] = p.kind in ("left", "full")
            for rr in rvalid:
                if rr.rid not in rmatched:
                    s = slot((None, rr.rid))
                    s["payload"][i] = lpad.concat(rr.payload[i])
                    s["valid"][i] = True
                    s["retained"][i] = p.kind in ("right", "full")

            # kept level: pair original tuples under the original join kind
            lkept = [(r.rid, r.kept[i]) for r in lrows if r.kept.get(i) is not None]
            rkept = [(r.rid, r.kept[i]) for r in rrows if r.kept.get(i) is not None]
            lk_matched, rk_matched = set(), set()
            for lid, lv in lkept:
                for rid_, rv in rkept:
                    if join_matches(p, lv, rv):
                        slot((lid, rid_))["kept"][i] = lv.concat(rv)
                        lk_matched.add(lid)
                        rk_matched.add(rid_)
            if p.kind in ("left", "full"):
                for lid, lv in lkept:
                    if lid not in lk_matched:
                        slot((lid, None))["kept"][i] = lv.concat(rpad)
            if p.kind in ("right", "full"):
                for rid_, rv in rkept:
                    if rid_ not in rk_matched:
                        slot((None, rid_))["kept"][i] = lpad.concat(rv)

        out = []
        for key in sorted(keys, key=lambda k: (k[0] is None, k[0] or 0,
                                               k[1] is None, k[1] or 0)):
            s = keys[key]
            lid, rid_ = key
            payload = {sa.index: s["payload"].get(sa.index) for sa in self.sas}
            row = TracedRow(
                rid=self.fresh(),
                payload=payload,
                kept={sa.index: s["kept"].get(sa.index) for sa in self.sas},
                valid={sa.index: bool(s["valid"].get(sa.index))
                       for sa in self.sas},
                consistent={sa.index: bool(s["valid"].get(sa.index)) and
                            self.consistent(sa, op_id, payload[sa.index])
                            for sa in self.sas},
                retained={sa.index: bool(s["retained"].get(sa.index, False))
                          for sa in self.sas},
                parents={sa.index: tuple(
                    ((lchild, lid),) * (lid is not None) +
                    ((rchild, rid_),) * (rid_ is not None))
                    for sa in self.sas},
            )
            out.append(row)
        return out

    # -- relation nesting -----------------------------------------------------

    def _trace_relation_nest(self, op_id: int) -> list[TracedRow]:
        child = self.plan.node(op_id).inputs[0]
        rows = self.snapshots[child].rows
        merged: dict[object, dict] = {}
        order: list = []

        def slot(key):
            if key not in merged:
                merged[key] = {"payload": {}, "kept": {}, "members": {}}
                order.append(key)
            return merged[key]

        for sa in self.sas:
            i = sa.index
            p = sa.plan.node(op_id).params
            groups: dict = {}
            members: dict = {}
            for r in sorted((r for r in rows if r.valid.get(i)
                             and r.payload.get(i) is not None),
                            key=lambda r: sort_key(r.payload[i])):
                key = r.payload[i].drop(p.attrs)
                groups.setdefault(key, []).append(r.payload[i].project(p.attrs))
                members.setdefault(key, []).append(r.rid)
            for key, nested in groups.items():
                s = slot(key)
                s["payload"][i] = key.concat(
                    Tup((p.target,), (Bag.from_iter(nested),)))
                s["members"][i] = tuple(members[key])
            kept_groups: dict = {}
            kept_members: dict = {}
            for r in sorted((r for r in rows if r.kept.get(i) is not None),
                            key=lambda r: sort_key(r.kept[i])):
                key = r.kept[i].drop(p.attrs)
                kept_groups.setdefault(key, []).append(r.kept[i].project(p.attrs))
                kept_members.setdefault(key, []).append(r.rid)
            for key, nested in kept_groups.items():
                s = slot(key)
                s["kept"][i] = key.concat(
                    Tup((p.target,), (Bag.from_iter(nested),)))
                s["members"].setdefault(i, ())
                s["members"][i] = tuple(dict.fromkeys(
                    s["members"][i] + tuple(kept_members[key])))

        out = []
        for key in sorted(order, key=sort_key):
            s = merged[key]
            payload = {}
            valid = {}
            consistent = {}
            for sa in self.sas:
                i = sa.index
                p = sa.plan.node(op_id).params
                if i in s["payload"]:
                    payload[i] = s["payload"][i]
                    valid[i] = True
                else:
                    # group missing under this SA: pad the nested relation
                    # with ∅ when the key tuple fits the SA's key schema
                    payload[i] = _pad_group(key, p.target, s, i)
                    valid[i] = False
                consistent[i] = valid[i] and self.consistent(sa, op_id, payload[i])
            out.append(TracedRow(
                rid=self.fresh(),
                payload=payload,
                kept={sa.index: s["kept"].get(sa.index) for sa in self.sas},
                valid=valid, consistent=consistent, retained=None,
                parents={sa.index: tuple((child, m) for m in
                                         s["members"].get(sa.index, ()))
                         for sa in self.sas}))
        return out

    # -- remaining binary / bag operators --------------------------------------

    def _trace_union(self, op_id: int) -> list[TracedRow]:
        lchild, rchild = self.plan.node(op_id).inputs
        out = []
        for child in (lchild, rchild):
            for r in self.snapshots[child].rows:
                out.append(TracedRow(
                    rid=r.rid, payload=dict(r.payload), kept=dict(r.kept),
                    valid=dict(r.valid),
                    consistent={sa.index: bool(r.valid.get(sa.index)) and
                                self.consistent(sa, op_id, r.payload.get(sa.index))
                                for sa in self.sas},
                    retained=None,
                    parents={sa.index: ((child, r.rid),) for sa in self.sas}))
        return out

    def _trace_difference(self, op_id: int) -> list[TracedRow]:
        lchild, rchild = self.plan.node(op_id).inputs
        lrows = self.snapshots[lchild].rows
        rrows = self.snapshots[rchild].rows
        out = []
        survivors: dict[int, dict[int, bool]] = {}
        kept_surv: dict[int, dict[int, bool]] = {}
        for sa in self.sas:
            i = sa.index
            right_pool = [r.payload[i] for r in rrows
                          if r.valid.get(i) and r.payload.get(i) is not None]
            survivors[i] = _subtract([(r.rid, r.payload.get(i)) for r in lrows
                                      if r.valid.get(i)], right_pool)
            kept_pool = [r.kept[i] for r in rrows if r.kept.get(i) is not None]
            kept_surv[i] = _subtract([(r.rid, r.kept.get(i)) for r in lrows],
                                     kept_pool)
        for r in lrows:
            valid = {sa.index: bool(survivors[sa.index].get(r.rid))
                     for sa in self.sas}
            kept = {sa.index: r.kept.get(sa.index)
                    if kept_surv[sa.index].get(r.rid) else None
                    for sa in self.sas}
            out.append(TracedRow(
                rid=r.rid, payload=dict(r.payload), kept=kept, valid=valid,
                consistent={sa.index: valid[sa.index] and
                            self.consistent(sa, op_id, r.payload.get(sa.index))
                            for sa in self.sas},
                retained=None,
                parents={sa.index: ((lchild, r.rid),) for sa in self.sas}))
        return out

    def _trace_cross_product(self, op_id: int) -> list[TracedRow]:
        lchild, rchild = self.plan.node(op_id).inputs
        out = []
        for lr in self.snapshots[lchild].rows:
            for rr in self.snapshots[rchild].rows:
                payload = {}
                kept = {}
                valid = {}
                consistent = {}
                for sa in self.sas:
                    i = sa.index
                    ok = (lr.valid.get(i) and rr.valid.get(i)
                          and lr.payload.get(i) is not None
                          and rr.payload.get(i) is not None)
                    payload[i] = lr.payload[i].concat(rr.payload[i]) if ok else None
                    kv = (lr.kept.get(i), rr.kept.get(i))
                    kept[i] = kv[0].concat(kv[1]) \
                        if kv[0] is not None and kv[1] is not None else None
                    valid[i] = bool(ok)
                    consistent[i] = valid[i] and self.consistent(sa, op_id, payload[i])
                out.append(TracedRow(
                    rid=self.fresh(), payload=payload, kept=kept, valid=valid,
                    consistent=consistent, retained=None,
                    parents={sa.index: ((lchild, lr.rid), (rchild, rr.rid))
                             for sa in self.sas}))
        return out

    def _trace_dedup(self, op_id: int) -> list[TracedRow]:
        child = self.plan.node(op_id).inputs[0]
        rows = self.snapshots[child].rows
        per_sa: dict[int, list] = {}
        kept_per_sa: dict[int, dict] = {}
        for sa in self.sas:
            i = sa.index
            seen: dict = {}
            for r in rows:
                if r.valid.get(i) and r.payload.get(i) is not None:
                    seen.setdefault(r.payload[i], []).append(r.rid)
            per_sa[i] = sorted(seen.items(), key=lambda kv: sort_key(kv[0]))
            kept_seen: dict = {}
            for r in rows:
                if r.kept.get(i) is not None:
                    kept_seen.setdefault(r.kept[i], []).append(r.rid)
            kept_per_sa[i] = kept_seen
        width = max((len(v) for v in per_sa.values()), default=0)
        out = []
        kept_used: dict[int, set] = {sa.index: set() for sa in self.sas}
        for k in range(width):
            payload = {}
            kept = {}
            valid = {}
            consistent = {}
            parents = {}
            for sa in self.sas:
                i = sa.index
                if k < len(per_sa[i]):
                    value, rids = per_sa[i][k]
                    payload[i] = value
                    valid[i] = True
                    parents[i] = tuple((child, rid) for rid in rids)
                    if value in kept_per_sa[i]:
                        kept[i] = value
                        kept_used[i].add(value)
                    else:
                        kept[i] = None
                else:
                    payload[i] = None
                    kept[i] = None
                    valid[i] = False
                    parents[i] = ()
                consistent[i] = valid[i] and self.consistent(sa, op_id, payload[i])
            out.append(TracedRow(
                rid=self.fresh(), payload=payload, kept=kept, valid=valid,
                consistent=consistent, retained=None, parents=parents))
        # kept-only values (every carrier invalid): keep them flowing
        for sa in self.sas:
            i = sa.index
            for value, rids in sorted(kept_per_sa[i].items(),
                                      key=lambda kv: sort_key(kv[0])):
                if value in kept_used[i]:
                    continue
                out.append(TracedRow(
                    rid=self.fresh(),
                    payload={s.index: None for s in self.sas},
                    kept={s.index: value if s.index == i else None
                          for s in self.sas},
                    valid={s.index: False for s in self.sas},
                    consistent={s.index: False for s in self.sas},
                    retained=None,
                    parents={s.index: tuple((child, rid) for rid in rids)
                             if s.index == i else () for s in self.sas}))
        return out


def _expand_flatten(payload, kept, params, member_row):
    """Rows one input tuple produces under a flatten, as (payload, kept,
    is_member) triples; kept follows the original flatten kind."""
    out: list[tuple[object, object, bool]] = []
    if params.kind == "tuple":
        if payload is None and kept is None:
            return out
        def one(t):
            if t is None:
                return None
            v = t.path(params.attr)
            return t.concat(v if isinstance(v, Tup) else null_tuple(member_row))
        out.append((one(payload), one(kept), True))
        return out

    pad = null_tuple(member_row)
    kept_pool: list = []
    if kept is not None:
        kv = kept.path(params.attr)
        kept_pool = list(kv.instances()) if isinstance(kv, Bag) else []
    kept_bag_empty = kept is not None and not kept_pool
    members: list = []
    if payload is not None:
        pv = payload.path(params.attr)
        members = sorted(pv.instances(), key=sort_key) if isinstance(pv, Bag) else []
    for u in members:
        kept_row = None
        if kept is not None and _consume(kept_pool, u):
            kept_row = kept.concat(u)
        out.append((payload.concat(u), kept_row, True))
    payload_pad = payload is not None and not members
    if payload_pad or (kept_bag_empty and params.kind == "outer"):
        kept_row = kept.concat(pad) if kept_bag_empty and \
            params.kind == "outer" else None
        out.append((payload.concat(pad) if payload_pad else None, kept_row, False))
    return out


def _consume(pool: list, value) -> bool:
    for k, v in enumerate(pool):
        if v == value:
            pool.pop(k)
            return True
    return False


def _subtract(left: list[tuple[int, object]], right_pool: list) -> dict[int, bool]:
    """Bag difference at instance granularity: mark the left instances that
    survive; equal instances are consumed in canonical order."""
    pool = list(right_pool)
    survivors: dict[int, bool] = {}
    for rid, value in sorted(left, key=lambda kv: (sort_key(kv[1])
                                                   if kv[1] is not None else (0,),
                                                   kv[0])):
        if value is None:
            survivors[rid] = False
        else:
            survivors[rid] = not _consume(pool, value)
    return survivors


def _pad_group(key, target, slot_data, sa_index):
    """∅-padded payload for an SA missing a group, when the key fits."""
    try:
        return key.concat(Tup((target,), (Bag([]),)))
    except Exception:
        return None


def trace(plan: QueryPlan, db, db_schema: DbSchema,
          sas: list[SchemaAlternative]) -> TraceResult:
    """Compose the per-operator tracing procedures bottom-up."""
    return _Tracer(plan, db, db_schema, sas).run()


def write_trace_dump(result: TraceResult, directory) -> None:
    import json
    from pathlib import Path as FsPath
    directory = FsPath(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for op_id in result.plan.topological:
        kind = result.snapshots[op_id].kind
        path = directory / f"op{op_id}_{kind}.jsonl"
        with open(path, "w") as f:
            for row in result.dump_rows(op_id):
                f.write(json.dumps(row) + "\n")
