"""Query plans: identified operators over nested relations.

A plan is a tree of operator nodes; leaves are table accesses, exactly one
node is the root.  Operator ids are stable: reparameterization replaces a
node's params but never its id, kind or children.

Attribute references are dot-paths into nested tuples (``("address2",
"city")``); paths never traverse bag boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from whynot.errors import NonEquiJoin, PlanError

Path = tuple[str, ...]

COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")


def parse_path(text: str) -> Path:
    return tuple(text.split("."))


def path_str(path: Path) -> str:
    return ".".join(path)


@dataclass(frozen=True)
class Const:
    value: object

    def __repr__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Ref:
    path: Path

    def __repr__(self):
        return path_str(self.path)


@dataclass(frozen=True)
class Comparison:
    lhs: Ref
    op: str
    rhs: Ref | Const

    def __post_init__(self):
        if self.op not in COMPARISON_OPS:
            raise PlanError(f"unknown comparison operator {self.op!r}")

    def __repr__(self):
        return f"{self.lhs!r} {self.op} {self.rhs!r}"


@dataclass(frozen=True)
class Predicate:
    """Boolean combination of comparisons: conjunction of disjunctions.

    A single comparison is a one-clause conjunction.  Comparisons are
    addressed by a flat slot index (left-to-right) for reparameterization.
    """
    clauses: tuple[tuple[Comparison, ...], ...]

    @classmethod
    def comparison(cls, lhs: str | Path, op: str, rhs) -> "Predicate":
        lp = parse_path(lhs) if isinstance(lhs, str) else lhs
        r = rhs if isinstance(rhs, (Ref, Const)) else Const(rhs)
        return cls(((Comparison(Ref(lp), op, r),),))

    @classmethod
    def true(cls) -> "Predicate":
        return cls(())

    def comparisons(self) -> list[Comparison]:
        return [c for clause in self.clauses for c in clause]

    def replace_comparison(self, slot: int, comparison: Comparison) -> "Predicate":
        out, k = [], 0
        for clause in self.clauses:
            row = []
            for c in clause:
                row.append(comparison if k == slot else c)
                k += 1
            out.append(tuple(row))
        return Predicate(tuple(out))

    def __repr__(self):
        if not self.clauses:
            return "true"
        return " ∧ ".join(
            "(" + " ∨ ".join(repr(c) for c in clause) + ")"
            if len(clause) > 1 else repr(clause[0])
            for clause in self.clauses)


# --- operator params --------------------------------------------------------

@dataclass(frozen=True)
class TableAccessParams:
    name: str


@dataclass(frozen=True)
class ProjectionParams:
    attrs: tuple[Path, ...]  # output attribute name = last path segment


@dataclass(frozen=True)
class RenamingParams:
    pairs: tuple[tuple[str, str], ...]  # (new_name, old_name), covering the schema


@dataclass(frozen=True)
class SelectionParams:
    theta: Predicate


@dataclass(frozen=True)
class JoinParams:
    kind: str  # inner | left | right | full
    left_keys: tuple[Path, ...]
    right_keys: tuple[Path, ...]

    def __post_init__(self):
        if self.kind not in ("inner", "left", "right", "full"):
            raise PlanError(f"unknown join kind {self.kind!r}")
        if len(self.left_keys) != len(self.right_keys):
            raise NonEquiJoin("equi-join requires paired key lists")


@dataclass(frozen=True)
class FlattenParams:
    kind: str  # tuple | inner | outer
    attr: Path

    def __post_init__(self):
        if self.kind not in ("tuple", "inner", "outer"):
            raise PlanError(f"unknown flatten kind {self.kind!r}")


@dataclass(frozen=True)
class TupleNestParams:
    attrs: tuple[str, ...]  # top-level attributes moved into the new tuple
    target: str


@dataclass(frozen=True)
class RelationNestParams:
    attrs: tuple[str, ...]  # nested attributes; the rest is the grouping key
    target: str


@dataclass(frozen=True)
class AggregationParams:
    func: str  # count | sum | min | max | avg
    source: Path  # bag-of-unary-tuples attribute
    target: str

    def __post_init__(self):
        if self.func not in ("count", "sum", "min", "max", "avg"):
            raise PlanError(f"unknown aggregation function {self.func!r}")


@dataclass(frozen=True)
class UnionParams:
    pass


@dataclass(frozen=True)
class DifferenceParams:
    pass


@dataclass(frozen=True)
class CrossProductParams:
    pass


@dataclass(frozen=True)
class DedupParams:
    pass


_PARAM_TYPES = {
    "table_access": TableAccessParams,
    "projection": ProjectionParams,
    "renaming": RenamingParams,
    "selection": SelectionParams,
    "join": JoinParams,
    "flatten": FlattenParams,
    "tuple_nest": TupleNestParams,
    "relation_nest": RelationNestParams,
    "aggregation": AggregationParams,
    "union": UnionParams,
    "difference": DifferenceParams,
    "cross_product": CrossProductParams,
    "dedup": DedupParams,
}

PARAMETER_FREE_KINDS = ("table_access", "union", "difference", "cross_product", "dedup")

_ARITY = {
    "table_access": 0,
    "join": 2, "union": 2, "difference": 2, "cross_product": 2,
}


@dataclass(frozen=True)
class OperatorNode:
    op_id: int
    kind: str
    params: object
    inputs: tuple[int, ...]

    def __post_init__(self):
        expected = _PARAM_TYPES.get(self.kind)
        if expected is None:
            raise PlanError(f"unknown operator kind {self.kind!r}")
        if not isinstance(self.params, expected):
            raise PlanError(f"{self.kind} node got params {type(self.params).__name__}")
        if len(self.inputs) != _ARITY.get(self.kind, 1):
            raise PlanError(f"{self.kind} takes {_ARITY.get(self.kind, 1)} input(s)")


class QueryPlan:
    """An operator tree indexed by op_id, with a deterministic topological
    order (children before parents)."""

    def __init__(self, nodes):
        self.nodes: dict[int, OperatorNode] = {}
        for node in nodes:
            if node.op_id in self.nodes:
                raise PlanError(f"duplicate op_id {node.op_id}")
            self.nodes[node.op_id] = node
        referenced: list[int] = []
        for node in self.nodes.values():
            for child in node.inputs:
                if child not in self.nodes:
                    raise PlanError(f"op {node.op_id} references unknown op {child}")
                if child in referenced:
                    raise PlanError(f"op {child} has two parents; plans are trees")
                referenced.append(child)
        roots = [i for i in self.nodes if i not in referenced]
        if len(roots) != 1:
            raise PlanError(f"plan must have exactly one root, found {roots}")
        self.root_id = roots[0]
        self._topo = self._toposort()

    def _toposort(self) -> tuple[int, ...]:
        order: list[int] = []

        def visit(i: int):
            for child in self.nodes[i].inputs:
                visit(child)
            order.append(i)

        visit(self.root_id)
        if len(order) != len(self.nodes):
            raise PlanError("plan contains unreachable operators")
        return tuple(order)

    @property
    def topological(self) -> tuple[int, ...]:
        return self._topo

    def node(self, op_id: int) -> OperatorNode:
        return self.nodes[op_id]

    def root(self) -> OperatorNode:
        return self.nodes[self.root_id]

    def __len__(self):
        return len(self.nodes)

    def with_params(self, op_id: int, params) -> "QueryPlan":
        """Same structure and ids, one node reparameterized."""
        return QueryPlan([
            replace(n, params=params) if n.op_id == op_id else n
            for n in self.nodes.values()])

    def table_names(self) -> list[str]:
        return [n.params.name for n in self.nodes.values()
                if n.kind == "table_access"]

    def __eq__(self, other):
        return isinstance(other, QueryPlan) and self.nodes == other.nodes

    def __repr__(self):
        return "QueryPlan(" + ", ".join(
            f"{i}:{self.nodes[i].kind}" for i in self._topo) + ")"


# --- JSON --------------------------------------------------------------------

def _predicate_to_json(p: Predicate):
    def cmp_json(c: Comparison):
        rhs = ({"ref": path_str(c.rhs.path)} if isinstance(c.rhs, Ref)
               else {"const": c.rhs.value})
        return {"lhs": path_str(c.lhs.path), "op": c.op, **rhs}
    return [[cmp_json(c) for c in clause] for clause in p.clauses]


def _predicate_from_json(obj) -> Predicate:
    def cmp_parse(c) -> Comparison:
        rhs = Ref(parse_path(c["ref"])) if "ref" in c else Const(c["const"])
        return Comparison(Ref(parse_path(c["lhs"])), c["op"], rhs)
    return Predicate(tuple(tuple(cmp_parse(c) for c in clause) for clause in obj))


def params_to_json(kind: str, params) -> dict:
    if kind == "table_access":
        return {"name": params.name}
    if kind == "projection":
        return {"attrs": [path_str(p) for p in params.attrs]}
    if kind == "renaming":
        return {"pairs": [[new, old] for new, old in params.pairs]}
    if kind == "selection":
        return {"theta": _predicate_to_json(params.theta)}
    if kind == "join":
        return {"kind": params.kind,
                "left_keys": [path_str(p) for p in params.left_keys],
                "right_keys": [path_str(p) for p in params.right_keys]}
    if kind == "flatten":
        return {"kind": params.kind, "attr": path_str(params.attr)}
    if kind in ("tuple_nest", "relation_nest"):
        return {"attrs": list(params.attrs), "target": params.target}
    if kind == "aggregation":
        return {"func": params.func, "source": path_str(params.source),
                "target": params.target}
    return {}


def params_from_json(kind: str, obj: dict):
    if kind == "table_access":
        return TableAccessParams(obj["name"])
    if kind == "projection":
        return ProjectionParams(tuple(parse_path(p) for p in obj["attrs"]))
    if kind == "renaming":
        return RenamingParams(tuple((new, old) for new, old in obj["pairs"]))
    if kind == "selection":
        return SelectionParams(_predicate_from_json(obj["theta"]))
    if kind == "join":
        return JoinParams(obj["kind"],
                          tuple(parse_path(p) for p in obj["left_keys"]),
                          tuple(parse_path(p) for p in obj["right_keys"]))
    if kind == "flatten":
        return FlattenParams(obj["kind"], parse_path(obj["attr"]))
    if kind == "tuple_nest":
        return TupleNestParams(tuple(obj["attrs"]), obj["target"])
    if kind == "relation_nest":
        return RelationNestParams(tuple(obj["attrs"]), obj["target"])
    if kind == "aggregation":
        return AggregationParams(obj["func"], parse_path(obj["source"]), obj["target"])
    if kind in _PARAM_TYPES:
        return _PARAM_TYPES[kind]()
    raise PlanError(f"unknown operator kind {kind!r}")


def plan_to_json(plan: QueryPlan) -> list:
    return [{"id": i, "kind": n.kind, "params": params_to_json(n.kind, n.params),
             "inputs": list(n.inputs)}
            for i in plan.topological for n in [plan.node(i)]]


def plan_from_json(obj) -> QueryPlan:
    nodes = [OperatorNode(item["id"], item["kind"],
                          params_from_json(item["kind"], item.get("params", {})),
                          tuple(item.get("inputs", ())))
             for item in obj]
    return QueryPlan(nodes)
