"""Schema inference and bag-semantics evaluation."""

from __future__ import annotations

import random

import pytest

import generators as gen
from whynot.errors import (
    AggregationOnNonBag,
    DuplicateAttribute,
    KindMismatch,
    TypeMismatch,
    UnknownAttribute,
)
from whynot.algebra.engine import evaluate, evaluate_all
from whynot.algebra.plan import (
    Ref,
    AggregationParams,
    CrossProductParams,
    DedupParams,
    FlattenParams,
    JoinParams,
    OperatorNode,
    Predicate,
    ProjectionParams,
    QueryPlan,
    RelationNestParams,
    SelectionParams,
    TableAccessParams,
    TupleNestParams,
    UnionParams,
    plan_from_json,
    plan_to_json,
)
from whynot.algebra.schema import infer_schema, root_type
from whynot.fixtures import ADDRESS_TYPE, PERSON_TYPE, person_plan, person_table
from whynot.model import Bag, BagType, INT, STRING, Tup, TupleType

DB = {"person": person_table()}
SCHEMA = {"person": PERSON_TYPE}


def chain(*steps) -> QueryPlan:
    nodes = [OperatorNode(1, "table_access", TableAccessParams("person"), ())]
    for k, (kind, params) in enumerate(steps, start=2):
        nodes.append(OperatorNode(k, kind, params, (k - 1,)))
    return QueryPlan(nodes)


# --- infer_schema -----------------------------------------------------------

def test_fixture_root_type():
    want = BagType(TupleType((
        ("city", STRING),
        ("nList", BagType(TupleType((("name", STRING),)))))))
    assert root_type(person_plan(), SCHEMA) == want


def test_table_access_schema_unchanged():
    plan = chain()
    assert root_type(plan, SCHEMA) == PERSON_TYPE


def test_inner_flatten_keeps_flattened_attribute():
    plan = chain(("flatten", FlattenParams("inner", ("address2",))))
    row = root_type(plan, SCHEMA).element
    assert row.names == ("name", "address1", "address2", "city", "year")
    assert row.field("address2") == ADDRESS_TYPE


def test_flatten_name_clash_rejected():
    plan = chain(("flatten", FlattenParams("inner", ("address2",))),
                 ("flatten", FlattenParams("inner", ("address1",))))
    with pytest.raises(DuplicateAttribute):
        infer_schema(plan, SCHEMA)


def test_flatten_kind_mismatch():
    plan = chain(("flatten", FlattenParams("inner", ("name",))))
    with pytest.raises(KindMismatch):
        infer_schema(plan, SCHEMA)
    plan = chain(("flatten", FlattenParams("tuple", ("address1",))))
    with pytest.raises(KindMismatch):
        infer_schema(plan, SCHEMA)


def test_unknown_attribute():
    plan = chain(("projection", ProjectionParams((("nope",),))))
    with pytest.raises(UnknownAttribute):
        infer_schema(plan, SCHEMA)


def test_duplicate_projection_names_rejected():
    plan = chain(("projection", ProjectionParams((("name",), ("name",)))))
    with pytest.raises(DuplicateAttribute):
        infer_schema(plan, SCHEMA)


def test_aggregation_requires_unary_bag():
    plan = chain(("aggregation", AggregationParams("count", ("address2",), "n")))
    with pytest.raises(AggregationOnNonBag):
        infer_schema(plan, SCHEMA)


def test_predicate_type_check():
    plan = chain(("selection",
                  SelectionParams(Predicate.comparison("name", ">=", 2019))))
    with pytest.raises(TypeMismatch):
        infer_schema(plan, SCHEMA)


def test_plan_json_round_trip():
    plan = person_plan()
    assert plan_from_json(plan_to_json(plan)) == plan


# --- evaluation -------------------------------------------------------------

def test_fixture_result_single_tuple():
    result = evaluate(person_plan(), DB, SCHEMA)
    want = Bag.of(Tup(("city", "nList"),
                      ("LA", Bag.of(Tup(("name",), ("Sue",))))))
    assert result == want


def test_true_selection_and_identity_projection():
    plan = chain(("selection", SelectionParams(Predicate.true())))
    assert evaluate(plan, DB, SCHEMA) == person_table()
    plan = chain(("projection", ProjectionParams(
        (("name",), ("address1",), ("address2",)))))
    assert evaluate(plan, DB, SCHEMA) == person_table()


def test_relation_nest_groups_on_remaining_attributes():
    rel = Bag.of(Tup(("k", "v"), ("a", 1)), Tup(("k", "v"), ("a", 2)),
                 Tup(("k", "v"), ("b", 1)))
    db = {"r": rel}
    schema = {"r": BagType(TupleType((("k", STRING), ("v", INT))))}
    plan = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("r"), ()),
        OperatorNode(2, "relation_nest", RelationNestParams(("v",), "c"), (1,)),
    ])
    result = evaluate(plan, db, schema)
    want = Bag.of(
        Tup(("k", "c"), ("a", Bag.of(Tup(("v",), (1,)), Tup(("v",), (2,))))),
        Tup(("k", "c"), ("b", Bag.of(Tup(("v",), (1,))))))
    assert result == want
    # every group has multiplicity one
    assert all(c == 1 for _, c in result)


def test_left_join_with_vacuous_condition_pads():
    left = Bag([(Tup.of(a=1), 2)])
    right = Bag.of(Tup.of(c=5))
    db = {"l": left, "r": right}
    schema = {"l": BagType(TupleType((("a", INT),))),
              "r": BagType(TupleType((("c", INT),)))}
    plan = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("l"), ()),
        OperatorNode(2, "table_access", TableAccessParams("r"), ()),
        OperatorNode(3, "selection",
                     SelectionParams(Predicate.comparison("c", "=", 99)), (2,)),
        OperatorNode(4, "join", JoinParams("left", (("a",),), (("c",),)), (1, 3)),
    ])
    result = evaluate(plan, db, schema)
    assert result == Bag([(Tup(("a", "c"), (1, None)), 2)])


def test_join_multiplicities_multiply():
    db = {"l": Bag([(Tup.of(a=1), 2)]), "r": Bag([(Tup.of(c=1), 3)])}
    schema = {"l": BagType(TupleType((("a", INT),))),
              "r": BagType(TupleType((("c", INT),)))}
    plan = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("l"), ()),
        OperatorNode(2, "table_access", TableAccessParams("r"), ()),
        OperatorNode(3, "join", JoinParams("inner", (("a",),), (("c",),)), (1, 2)),
    ])
    assert evaluate(plan, db, schema) == Bag([(Tup(("a", "c"), (1, 1)), 6)])


def test_projection_sums_multiplicities():
    plan = chain(("projection", ProjectionParams((("name",),))),
                 ("projection", ProjectionParams((("name",),))))
    out = evaluate(plan, DB, SCHEMA)
    assert out.total == person_table().total


def test_outer_flatten_pads_empty_bags():
    empty = Tup(("name", "address1", "address2"),
                ("Zed", Bag([]), Bag([])))
    db = {"person": Bag.of(empty)}
    inner = chain(("flatten", FlattenParams("inner", ("address2",))))
    outer = chain(("flatten", FlattenParams("outer", ("address2",))))
    assert evaluate(inner, db, SCHEMA).is_empty()
    out = evaluate(outer, db, SCHEMA)
    assert out.total == 1
    padded = next(out.members())
    assert padded.get("city") is None and padded.get("year") is None


def test_aggregation_functions():
    rel = Bag.of(
        Tup(("g",), (Bag.of(Tup.of(v=1), Tup.of(v=3)),)),
        Tup(("g",), (Bag([]),)),
    )
    db = {"r": rel}
    schema = {"r": BagType(TupleType((
        ("g", BagType(TupleType((("v", INT),)))),)))}

    def agg(func):
        plan = QueryPlan([
            OperatorNode(1, "table_access", TableAccessParams("r"), ()),
            OperatorNode(2, "aggregation",
                         AggregationParams(func, ("g",), "out"), (1,)),
        ])
        return {t.get("g"): t.get("out")
                for t in evaluate(plan, db, schema).members()}

    full = Bag.of(Tup.of(v=1), Tup.of(v=3))
    empty = Bag([])
    assert agg("count") == {full: 2, empty: 0}
    assert agg("sum") == {full: 4, empty: 0}
    assert agg("min") == {full: 1, empty: None}
    assert agg("max") == {full: 3, empty: None}
    assert agg("avg") == {full: 2, empty: None}


def test_null_comparisons_are_false():
    db = {"person": Bag.of(Tup(("name", "address1", "address2"),
                               (None, Bag([]), Bag([]))))}
    for op in ("=", "!=", "<", ">=", "<=", ">"):
        plan = chain(("selection", SelectionParams(
            Predicate.comparison("name", op, "Sue"))))
        assert evaluate(plan, db, SCHEMA).is_empty()


# --- engine properties on random plans --------------------------------------

def _random_property_checks(seed: int) -> None:
    rng = random.Random(seed)
    db, schema = gen.random_db(rng, rng.randint(1, 8), allow_empty_bags=True)
    rel = db["r0"]

    # dedup idempotence, union commutativity/associativity
    other = Bag.from_iter(gen.random_base_tuple(rng, True)
                          for _ in range(rng.randint(0, 4)))
    third = Bag.from_iter(gen.random_base_tuple(rng, True)
                          for _ in range(rng.randint(0, 4)))
    assert rel.dedup().dedup() == rel.dedup()
    assert rel.union(other) == other.union(rel)
    assert rel.union(other).union(third) == rel.union(other.union(third))

    # inner join == cross product + selection
    db2 = dict(db)
    db2["r1"] = Bag.from_iter(
        Tup(("c", "d"), (rng.choice(gen.INTS), rng.choice(gen.STRS)))
        for _ in range(rng.randint(0, 5)))
    schema2 = dict(schema)
    schema2["r1"] = gen.SIDE
    join_plan = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("r0"), ()),
        OperatorNode(2, "table_access", TableAccessParams("r1"), ()),
        OperatorNode(3, "join", JoinParams("inner", (("a",),), (("c",),)), (1, 2)),
    ])
    cross_plan = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("r0"), ()),
        OperatorNode(2, "table_access", TableAccessParams("r1"), ()),
        OperatorNode(3, "cross_product", CrossProductParams(), (1, 2)),
        OperatorNode(4, "selection", SelectionParams(
            Predicate.comparison("a", "=", Ref(("c",)))), (3,)),
    ])
    assert evaluate(join_plan, db2, schema2) == evaluate(cross_plan, db2, schema2)

    # outer flatten contains inner flatten; equal without empty bags
    inner = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("r0"), ()),
        OperatorNode(2, "flatten", FlattenParams("inner", ("g1",)), (1,)),
    ])
    outer = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("r0"), ()),
        OperatorNode(2, "flatten", FlattenParams("outer", ("g1",)), (1,)),
    ])
    fi = evaluate(inner, db, schema)
    fo = evaluate(outer, db, schema)
    assert all(fo.multiplicity(t) >= c for t, c in fi)
    if all(not t.get("g1").is_empty() for t in rel.members()):
        assert fi == fo

    # projection conserves multiplicities
    proj = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("r0"), ()),
        OperatorNode(2, "projection", ProjectionParams((("a",), ("b",))), (1,)),
    ])
    assert evaluate(proj, db, schema).total == rel.total


def test_engine_properties_random_sample():
    for seed in range(40):
        _random_property_checks(seed)


def test_nest_flatten_round_trip():
    rng = random.Random(99)
    for _ in range(20):
        base = Bag.from_iter(gen.random_base_tuple(rng, True)
                             for _ in range(rng.randint(1, 6))).dedup()
        db = {"r0": base}
        plan = QueryPlan([
            OperatorNode(1, "table_access", TableAccessParams("r0"), ()),
            OperatorNode(2, "relation_nest",
                         RelationNestParams(("a", "b"), "c"), (1,)),
            OperatorNode(3, "flatten", FlattenParams("inner", ("c",)), (2,)),
            OperatorNode(4, "projection", ProjectionParams(
                (("a",), ("a2",), ("b",), ("g1",), ("g2",))), (3,)),
        ])
        assert evaluate(plan, db, {"r0": gen.BASE}) == base
