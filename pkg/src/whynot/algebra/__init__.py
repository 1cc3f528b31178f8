"""Typed query plans and bag-semantics evaluation."""

from whynot.algebra.engine import (
    Database,
    active_domain,
    aggregate,
    compare,
    eval_predicate,
    evaluate,
    evaluate_all,
    join_matches,
    project_paths,
)
from whynot.algebra.plan import (
    AggregationParams,
    Comparison,
    Const,
    CrossProductParams,
    DedupParams,
    DifferenceParams,
    FlattenParams,
    JoinParams,
    OperatorNode,
    PARAMETER_FREE_KINDS,
    Path,
    Predicate,
    ProjectionParams,
    QueryPlan,
    Ref,
    RelationNestParams,
    RenamingParams,
    SelectionParams,
    TableAccessParams,
    TupleNestParams,
    UnionParams,
    parse_path,
    path_str,
    plan_from_json,
    plan_to_json,
)
from whynot.algebra.schema import (
    DbSchema,
    check_predicate,
    concat_tuple_types,
    infer_schema,
    resolve_path,
    root_type,
)
