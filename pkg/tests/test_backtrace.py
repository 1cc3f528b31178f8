"""Schema backtracing: fixture patterns, associations, over-approximation."""

from __future__ import annotations

from whynot.algebra.plan import (
    JoinParams,
    OperatorNode,
    Predicate,
    ProjectionParams,
    QueryPlan,
    SelectionParams,
    TableAccessParams,
)
from whynot.backtrace import BLUE, RED, schema_backtrace, backtrace_plan
from whynot.fixtures import PERSON_TYPE, question
from whynot.model import ANY, Bag, INT, BagType, NipBag, NipTuple, STRING, \
    Tup, TupleType, matches_nip
from whynot.question import WhyNotQuestion

import generators as gen


def test_fixture_person_nip():
    bt = schema_backtrace(question())
    want = NipTuple(
        ("name", "address1", "address2"),
        (ANY, ANY,
         NipBag((NipTuple(("city", "year"), ("NY", ANY)),), star=True)))
    assert bt.nips["person"] == want
    assert bt.warnings == []


def test_fixture_associations():
    bt = schema_backtrace(question())
    blue = {(a.path, a.label) for a in bt.blue()}
    assert blue == {(("name",), "nList"), (("address2", "city"), "city")}
    red = {(a.label, a.path) for a in bt.red()}
    assert red == {
        ((2, "attr"), ("address2",)),
        ((3, "cmp[0].lhs"), ("address2", "year")),
        ((4, "attrs[0]"), ("name",)),
        ((4, "attrs[1]"), ("address2", "city")),
        ((5, "attrs[0]"), ("name",)),
        ((5, "target"), ("name",)),
    }
    # one association per (op, slot)
    slots = [a.label for a in bt.red()]
    assert len(slots) == len(set(slots))


def test_identity_plan_nip_is_the_tuple_itself():
    plan = QueryPlan([OperatorNode(1, "table_access",
                                   TableAccessParams("person"), ())])
    t = NipTuple(("name", "address1", "address2"), ("Sue", ANY, ANY))
    bt = backtrace_plan(plan, {"person": PERSON_TYPE}, t)
    assert bt.nips["person"] == t
    assert {(a.path, a.label) for a in bt.blue()} == {
        (("name",), "name"), (("address1",), "address1"),
        (("address2",), "address2")}


def test_join_plan_right_side_unconstrained():
    """A why-not tuple constraining only left-side outputs leaves the right
    relation's pattern all-? while matching left tuples can appear under
    admissible changes."""
    db_schema = {"r0": gen.BASE, "r1": gen.SIDE}
    plan = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("r0"), ()),
        OperatorNode(2, "table_access", TableAccessParams("r1"), ()),
        OperatorNode(3, "join", JoinParams("inner", (("a",),), (("c",),)), (1, 2)),
    ])
    t = NipTuple(("a", "a2", "b", "g1", "g2", "c", "d"),
                 (2, ANY, "p", ANY, ANY, ANY, ANY))
    bt = backtrace_plan(plan, db_schema, t)
    assert bt.nips["r1"] is ANY
    assert bt.nips["r0"] == NipTuple(
        ("a", "a2", "b", "g1", "g2"), (2, ANY, "p", ANY, ANY))
    red = {(a.relation, a.path, a.label) for a in bt.red()}
    assert ("r0", ("a",), (3, "left_key[0]")) in red
    assert ("r1", ("c",), (3, "right_key[0]")) in red


def test_selection_does_not_filter_the_pattern():
    """The predicate's constant never narrows the backtraced pattern; only
    a red association is recorded."""
    plan = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("r0"), ()),
        OperatorNode(2, "selection",
                     SelectionParams(Predicate.comparison("a", "=", 1)), (1,)),
    ])
    t = NipTuple(("a", "a2", "b", "g1", "g2"), (ANY, ANY, "q", ANY, ANY))
    bt = backtrace_plan(plan, {"r0": gen.BASE}, t)
    assert bt.nips["r0"] == NipTuple(
        ("a", "a2", "b", "g1", "g2"), (ANY, ANY, "q", ANY, ANY))


def test_aggregation_output_constraint_relaxed_with_warning():
    from whynot.algebra.plan import AggregationParams, RelationNestParams
    plan = QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("r0"), ()),
        OperatorNode(2, "projection", ProjectionParams((("a",), ("b",))), (1,)),
        OperatorNode(3, "relation_nest", RelationNestParams(("a",), "grp"), (2,)),
        OperatorNode(4, "aggregation",
                     AggregationParams("count", ("grp",), "cnt"), (3,)),
    ])
    t = NipTuple(("b", "grp", "cnt"), (ANY, ANY, 5))
    bt = backtrace_plan(plan, {"r0": gen.BASE}, t)
    assert bt.warnings and "aggregate" in bt.warnings[0]
    assert bt.nips["r0"] is ANY  # the count constraint cannot be inverted
    red = {a.label for a in bt.red()}
    assert (4, "source") in red


def test_determinism():
    a = schema_backtrace(question())
    b = schema_backtrace(question())
    assert a.nips == b.nips
    assert a.associations == b.associations
    assert a.op_patterns == b.op_patterns


def test_over_approximation_on_oracle_witnesses():
    """Backtracing the *witness* plan of an oracle MSR must leave at least
    one compatible base tuple per relation: the witness provably derives
    the missing answer, so the over-approximation cannot be empty."""
    from whynot.reparam import exact_explanations_oracle

    checked = 0
    seed = 2000
    while checked < 6 and seed < 2400:
        inst = gen.random_question(seed, n_ops=3, n_tuples=5,
                                   with_alternatives=False,
                                   pool=("selection", "flatten", "projection"))
        seed += 1
        if inst is None:
            continue
        q = inst.question
        entries = exact_explanations_oracle(q, budget=300_000)
        if not entries:
            continue
        for e in entries:
            bt = backtrace_plan(e.witness, q.db_schema, q.tuple)
            for name, nip in bt.nips.items():
                assert any(matches_nip(t, nip) for t in q.db[name].members()), \
                    f"seed {inst.seed}: no compatible tuple in {name}"
        checked += 1
    assert checked == 6


def test_fixture_compatibles_per_alternative():
    """Under the original schema only Sue can contribute; under the
    swapped-address alternative only Peter can."""
    from whynot.alternatives import enumerate_sas
    from whynot.fixtures import attribute_alternatives, person_table

    q = question()
    bt = schema_backtrace(q)
    sas = enumerate_sas(bt, attribute_alternatives(), q.plan, q.db_schema)
    by_name = {t.get("name"): t for t in person_table().members()}
    assert matches_nip(by_name["Sue"], sas[0].nips["person"])
    assert not matches_nip(by_name["Peter"], sas[0].nips["person"])
    assert matches_nip(by_name["Peter"], sas[1].nips["person"])
    assert not matches_nip(by_name["Sue"], sas[1].nips["person"])
