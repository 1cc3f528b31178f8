"""Step 1: rewrite the missing answer into per-input-relation patterns.

The why-not tuple is pushed top-down through the plan.  Constants travel
through projection and renaming (path rewrite), are re-nested under the
flattened attribute when passing a flatten, and become "some group member
carries the value" constraints when passing a relation nesting.
Selection and join conditions never weaken the pattern (their parameters
may be reparameterized away); they only contribute red associations.
Constraints on aggregation outputs cannot be inverted and are relaxed to
``?`` with a warning.

Two kinds of associations are collected: blue ones link a source
attribute to the why-not attribute whose value it produces; red ones link
a source attribute to an operator parameter slot that references it.  The
pattern over every operator's output edge is also recorded; the tracing
step revalidates intermediate tuples against exactly these patterns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from whynot.algebra.plan import Path, QueryPlan, Ref, path_str
from whynot.algebra.schema import DbSchema, infer_schema, _row
from whynot.model.patterns import ANY, NipBag, NipTuple
from whynot.model.types import TupleType
from whynot.model.values import Bag, Tup
from whynot.question import WhyNotQuestion

BLUE = "blue"
RED = "red"


@dataclass(frozen=True)
class Association:
    relation: str
    path: Path  # source attribute path within the relation
    kind: str  # BLUE or RED
    label: object  # blue: dotted path into t; red: (op_id, slot name)

    def __repr__(self):
        origin = (f"t.{self.label}" if self.kind == BLUE
                  else f"op{self.label[0]}.{self.label[1]}")
        return f"{origin} ↦ {self.relation}.{path_str(self.path)}"


class PNode:
    """Mutable pattern node carrying association tags while backtracing."""

    __slots__ = ("kind", "const", "names", "parts", "elements", "star",
                 "soft", "tags")

    def __init__(self, kind, const=None, names=(), parts=(), elements=(),
                 star=False, soft=False, tags=None):
        self.kind = kind  # any | const | tuple | bag
        self.const = const
        self.names = list(names)
        self.parts = list(parts)
        self.elements = list(elements)
        self.star = star
        self.soft = soft  # synthesized during inversion; prunable when vacuous
        self.tags = set(tags or ())

    @classmethod
    def any(cls, tags=None) -> "PNode":
        return cls("any", tags=tags)

    def part(self, name: str) -> "PNode":
        if self.kind == "tuple" and name in self.names:
            return self.parts[self.names.index(name)]
        return PNode.any()

    def set_part(self, name: str, node: "PNode"):
        self.parts[self.names.index(name)] = node

    def clone(self) -> "PNode":
        return PNode(self.kind, self.const, list(self.names),
                     [p.clone() for p in self.parts],
                     [e.clone() for e in self.elements],
                     self.star, self.soft, set(self.tags))

    def has_value_constraint(self) -> bool:
        if self.kind == "const":
            return True
        if self.kind == "tuple":
            return any(p.has_value_constraint() for p in self.parts)
        if self.kind == "bag":
            return (any(e.has_value_constraint() for e in self.elements)
                    or any(not e.soft for e in self.elements))
        return False

    def __repr__(self):
        if self.kind == "any":
            return "?"
        if self.kind == "const":
            return repr(self.const)
        if self.kind == "tuple":
            return "⟨" + ", ".join(f"{n}: {p!r}" for n, p in
                                   zip(self.names, self.parts)) + "⟩"
        inner = ", ".join(repr(e) for e in self.elements)
        return "{" + inner + (", *" if self.star else "") + "}"


def pnode_from_pattern(p, t_path: str | None = None) -> PNode:
    """Build a tagged PNode from a Nip; nodes are blue-tagged with their
    dotted position inside the why-not tuple."""
    tags = {(BLUE, t_path)} if t_path else set()
    if p is ANY:
        return PNode.any(tags=tags)
    if isinstance(p, NipTuple):
        return PNode("tuple", names=p.names,
                     parts=[pnode_from_pattern(q, f"{t_path}.{n}" if t_path else n)
                            for n, q in p.items()],
                     tags=tags)
    if isinstance(p, NipBag):
        return PNode("bag", star=p.star, tags=tags,
                     elements=[pnode_from_pattern(e, t_path) for e in p.elements])
    if isinstance(p, Tup):
        return pnode_from_pattern(NipTuple(p.names, p.values), t_path)
    if isinstance(p, Bag):
        return pnode_from_pattern(NipBag(list(p.instances())), t_path)
    return PNode("const", const=p, tags=tags)


def to_nip(node: PNode):
    """Strip tags and prune vacuous synthesized constraints."""
    if node.kind == "any":
        return ANY
    if node.kind == "const":
        return node.const
    if node.kind == "tuple":
        parts = [to_nip(p) for p in node.parts]
        if all(q is ANY for q in parts):
            return ANY
        return NipTuple(node.names, parts)
    elements = [e for e in node.elements
                if not (e.soft and not e.has_value_constraint())]
    if not elements:
        return ANY if (node.star or node.soft) else NipBag((), star=False)
    return NipBag([to_nip(e) for e in elements], star=node.star)


@dataclass
class BacktraceResult:
    nips: dict[str, object]  # relation name → Nip
    associations: list[Association]
    op_patterns: dict[int, object]  # op_id → Nip over that operator's output
    warnings: list[str] = field(default_factory=list)

    def blue(self) -> list[Association]:
        return [a for a in self.associations if a.kind == BLUE]

    def red(self) -> list[Association]:
        return [a for a in self.associations if a.kind == RED]

    def to_json(self) -> list[dict]:
        """Fraction-notation dump: one entry per source attribute."""
        grouped: dict[tuple[str, Path], dict] = {}
        for a in self.associations:
            entry = grouped.setdefault((a.relation, a.path), {
                "src": f"{a.relation}.{path_str(a.path)}", "blue": [], "red": []})
            if a.kind == BLUE:
                entry["blue"].append(f"t.{a.label}")
            else:
                entry["red"].append(f"op{a.label[0]}.{a.label[1]}")
        for entry in grouped.values():
            entry["blue"].sort()
            entry["red"].sort()
        return [grouped[k] for k in sorted(grouped)]


def schema_backtrace(question: WhyNotQuestion) -> BacktraceResult:
    return backtrace_plan(question.plan, question.db_schema, question.tuple)


def backtrace_plan(plan: QueryPlan, db_schema: DbSchema, t) -> BacktraceResult:
    """Top-down traversal from the root pattern; see module docstring."""
    schemas = infer_schema(plan, db_schema)
    nip_nodes: dict[str, PNode] = {}
    op_patterns: dict[int, object] = {}
    warnings: list[str] = []
    associations: list[Association] = []

    def visit(op_id: int, pattern: PNode):
        node = plan.node(op_id)
        row = _row(schemas[op_id])
        pattern = _as_tuple(pattern, row)
        op_patterns[op_id] = to_nip(pattern)
        kind, p = node.kind, node.params

        if kind == "table_access":
            name = p.name
            if name in nip_nodes:
                nip_nodes[name] = _generalize(nip_nodes[name], pattern, warnings)
            else:
                nip_nodes[name] = pattern
            _collect_associations(name, pattern, (), associations)
            return

        in_rows = [_row(schemas[i]) for i in node.inputs]

        if kind in ("selection", "dedup"):
            inp = pattern
            if kind == "selection":
                for k, c in enumerate(p.theta.comparisons()):
                    _node_at(inp, c.lhs.path, in_rows[0]).tags.add(
                        (RED, (op_id, f"cmp[{k}].lhs")))
                    if isinstance(c.rhs, Ref):
                        _node_at(inp, c.rhs.path, in_rows[0]).tags.add(
                            (RED, (op_id, f"cmp[{k}].rhs")))
            visit(node.inputs[0], inp)
            return

        if kind == "projection":
            inp = _blank(in_rows[0])
            for i, path in enumerate(p.attrs):
                part = pattern.part(path[-1]).clone()
                part.tags.add((RED, (op_id, f"attrs[{i}]")))
                _merge_at(inp, path, part, in_rows[0], warnings)
            visit(node.inputs[0], inp)
            return

        if kind == "renaming":
            inp = _blank(in_rows[0])
            for i, (new, old) in enumerate(p.pairs):
                part = pattern.part(new).clone()
                part.tags.add((RED, (op_id, f"pairs[{i}]")))
                inp.set_part(old, part)
            visit(node.inputs[0], inp)
            return

        if kind in ("join", "cross_product"):
            lnames = set(in_rows[0].names)
            left = _blank(in_rows[0])
            right = _blank(in_rows[1])
            for n in pattern.names:
                (left if n in lnames else right).set_part(n, pattern.part(n))
            if kind == "join":
                for i, key in enumerate(p.left_keys):
                    _node_at(left, key, in_rows[0]).tags.add(
                        (RED, (op_id, f"left_key[{i}]")))
                for i, key in enumerate(p.right_keys):
                    _node_at(right, key, in_rows[1]).tags.add(
                        (RED, (op_id, f"right_key[{i}]")))
            visit(node.inputs[0], left)
            visit(node.inputs[1], right)
            return

        if kind == "union":
            visit(node.inputs[0], pattern)
            visit(node.inputs[1], pattern.clone())
            return

        if kind == "difference":
            visit(node.inputs[0], pattern)
            visit(node.inputs[1], _blank(in_rows[1]))
            return

        if kind == "flatten":
            inp = _blank(in_rows[0])
            member_names = [n for n in pattern.names if n not in in_rows[0].names]
            for n in in_rows[0].names:
                inp.set_part(n, pattern.part(n))
            member = PNode("tuple", names=member_names,
                           parts=[pattern.part(n) for n in member_names],
                           soft=True)
            if p.kind == "tuple":
                packed: PNode = member
            else:
                packed = PNode("bag", elements=[member], star=True, soft=True)
            _merge_at(inp, p.attr, packed, in_rows[0], warnings)
            _node_at(inp, p.attr, in_rows[0]).tags.add((RED, (op_id, "attr")))
            visit(node.inputs[0], inp)
            return

        if kind in ("tuple_nest", "relation_nest"):
            inp = _blank(in_rows[0])
            for n in in_rows[0].names:
                if n not in p.attrs:
                    inp.set_part(n, pattern.part(n))
            target_node = pattern.part(p.target)
            for i, a in enumerate(p.attrs):
                part = _unnest_part(target_node, a, kind, warnings)
                part.tags |= target_node.tags
                part.tags.add((RED, (op_id, f"attrs[{i}]")))
                part.tags.add((RED, (op_id, "target")))
                inp.set_part(a, part)
            visit(node.inputs[0], inp)
            return

        if kind == "aggregation":
            inp = _blank(in_rows[0])
            for n in in_rows[0].names:
                if n != p.target:
                    inp.set_part(n, pattern.part(n))
            out_node = pattern.part(p.target)
            if out_node.has_value_constraint():
                warnings.append(
                    f"op {op_id}: constraint on aggregate output {p.target!r} "
                    f"cannot be traced below the aggregation; relaxed to ?")
            source = _node_at(inp, p.source, in_rows[0])
            source.tags |= out_node.tags
            source.tags.add((RED, (op_id, "source")))
            visit(node.inputs[0], inp)
            return

        raise AssertionError(f"unhandled kind {kind}")

    visit(plan.root_id, pnode_from_pattern(t))
    nips = {name: to_nip(node) for name, node in nip_nodes.items()}
    return BacktraceResult(nips, associations, op_patterns, warnings)


def _blank(row: TupleType) -> PNode:
    return PNode("tuple", names=row.names,
                 parts=[PNode.any() for _ in row.names])


def _as_tuple(pattern: PNode, row: TupleType) -> PNode:
    """Ensure the pattern is an explicit tuple over the row's attributes."""
    if pattern.kind == "tuple":
        return pattern
    blank = _blank(row)
    blank.tags |= pattern.tags
    return blank


def _node_at(root: PNode, path: Path, row: TupleType) -> PNode:
    """Node at a dot-path, materializing tuple structure from the row type."""
    cur, cur_type = root, row
    for seg in path:
        cur_type = cur_type.field(seg)
        nxt = cur.part(seg)
        if nxt.kind == "any" and isinstance(cur_type, TupleType):
            materialized = _blank(cur_type)
            materialized.tags |= nxt.tags
            cur.set_part(seg, materialized)
            nxt = materialized
        elif cur.kind == "tuple" and seg in cur.names:
            pass
        else:
            return cur  # cannot descend further; tag the closest node
        cur = nxt
    return cur


def _merge_at(root: PNode, path: Path, node: PNode, row: TupleType,
              warnings: list[str]):
    """Place a constraint at ``path``; merge with anything already there."""
    if len(path) > 1:
        parent = _node_at(root, path[:-1], row)
    else:
        parent = root
    existing = parent.part(path[-1])
    merged = _merge_nodes(existing, node, warnings)
    parent.set_part(path[-1], merged)


def _merge_nodes(existing: PNode, incoming: PNode,
                 warnings: list[str]) -> PNode:
    """Combine two constraints on the same source.  An unconstrained side
    gives way; otherwise the existing (user-given) one wins and the
    incoming value constraints are dropped, which keeps the pattern an
    over-approximation."""
    if existing.kind == "any":
        incoming = incoming.clone() if incoming.parts or incoming.elements else incoming
        incoming.tags |= existing.tags
        return incoming
    if incoming.kind == "any":
        existing.tags |= incoming.tags
        return existing
    if incoming.has_value_constraint():
        warnings.append("conflicting constraints on one source attribute; "
                        "the weaker side was dropped")
    existing.tags |= incoming.tags
    return existing


def _unnest_part(target: PNode, attr: str, kind: str,
                 warnings: list[str]) -> PNode:
    if target.kind == "any":
        return PNode.any()
    if kind == "tuple_nest":
        return target.part(attr).clone()
    if target.kind == "bag":
        parts = [e.part(attr) for e in target.elements if e.kind == "tuple"]
        if not parts:
            return PNode.any()
        merged = parts[0].clone()
        for q in parts[1:]:
            merged = _generalize(merged, q, warnings)
        return merged
    return PNode.any()


def _generalize(a: PNode, b: PNode, warnings: list[str]) -> PNode:
    """Least-constrained common pattern; tags are unioned."""
    tags = a.tags | b.tags
    if a.kind == "const" and b.kind == "const" and a.const == b.const:
        return PNode("const", const=a.const, tags=tags)
    if a.kind == "tuple" and b.kind == "tuple" and a.names == b.names:
        return PNode("tuple", names=a.names,
                     parts=[_generalize(x, y, warnings)
                            for x, y in zip(a.parts, b.parts)],
                     tags=tags)
    if a.kind == "any":
        out = b.clone()
        out.tags |= tags
        return out
    if b.kind == "any":
        out = a.clone()
        out.tags |= tags
        return out
    if a.kind == "bag" and b.kind == "bag":
        out = PNode("bag", elements=[e.clone() for e in a.elements + b.elements],
                    star=True, soft=a.soft and b.soft, tags=tags)
        warnings.append("bag constraints from two traces widened")
        return out
    warnings.append("conflicting constraints generalized to ?")
    return PNode.any(tags=tags)


def _collect_associations(relation: str, node: PNode, path: Path,
                          out: list[Association]):
    for kind, label in node.tags:
        assoc = Association(relation, path, kind, label)
        if assoc not in out:
            out.append(assoc)
    if node.kind == "tuple":
        for n, part in zip(node.names, node.parts):
            _collect_associations(relation, part, path + (n,), out)
    elif node.kind == "bag":
        for e in node.elements:
            _collect_associations(relation, e, path, out)
