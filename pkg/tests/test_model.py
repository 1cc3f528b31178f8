"""Types, values, canonicalization, serialization."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from whynot.errors import HeterogeneousBag, TypeMismatch
from whynot.fixtures import PERSON_TYPE, person_table
from whynot.model import (
    BOTTOM,
    BagType,
    INT,
    STRING,
    Tup,
    TupleType,
    Bag,
    conforms,
    type_from_json,
    type_of,
    type_to_json,
    value_from_json,
    value_to_json,
)


def test_type_of_primitives():
    assert type_of(5) == INT
    assert type_of("Sue") == STRING
    assert type_of(None) == BOTTOM


def test_type_of_tuple():
    assert type_of(Tup.of(name="Sue")) == TupleType((("name", STRING),))


def test_type_of_fixture_person():
    addr = BagType(TupleType((("city", STRING), ("year", INT))))
    want = TupleType((("name", STRING), ("address1", addr), ("address2", addr)))
    for t in person_table().members():
        assert type_of(t) == want
        assert conforms(t, PERSON_TYPE.element)


def test_heterogeneous_bag_rejected():
    with pytest.raises(HeterogeneousBag):
        type_of(Bag.of(Tup.of(a=1), Tup.of(a="x")))


def test_bag_members_must_be_tuples():
    with pytest.raises(HeterogeneousBag):
        type_of(Bag([(5, 1)]))


def test_tuple_equality_ignores_attribute_order():
    assert Tup(("a", "b"), (1, 2)) == Tup(("b", "a"), (2, 1))
    assert hash(Tup(("a", "b"), (1, 2))) == hash(Tup(("b", "a"), (2, 1)))


def test_bag_canonicalization():
    t1, t2 = Tup.of(a=1), Tup.of(a=2)
    left = Bag([(t2, 1), (t1, 2)])
    right = Bag([(t1, 1), (t2, 1), (t1, 1)])
    assert left == right
    assert left.multiplicity(t1) == 2
    assert left.multiplicity(Tup.of(a=9)) == 0


def test_bag_difference_and_union():
    t1, t2 = Tup.of(a=1), Tup.of(a=2)
    r = Bag([(t1, 3), (t2, 1)])
    s = Bag([(t1, 1)])
    assert r.difference(s) == Bag([(t1, 2), (t2, 1)])
    assert r.union(s).multiplicity(t1) == 4
    assert r.dedup() == Bag([(t1, 1), (t2, 1)])


def test_value_json_round_trip_fixture():
    for t in person_table().members():
        back = value_from_json(value_to_json(t), PERSON_TYPE.element)
        assert back == t


def test_bag_json_repeats_duplicates():
    bag = Bag([(Tup.of(a=1), 2)])
    assert value_to_json(bag) == [{"a": 1}, {"a": 1}]


def test_null_serializes_as_none():
    t = Tup.of(name=None)
    assert value_to_json(t) == {"name": None}
    assert value_from_json({"name": None},
                           TupleType((("name", STRING),))) == t


def test_type_json_round_trip():
    assert type_from_json(type_to_json(PERSON_TYPE)) == PERSON_TYPE


def test_value_from_json_type_errors():
    with pytest.raises(TypeMismatch):
        value_from_json({"name": 3}, TupleType((("name", STRING),)))
    with pytest.raises(TypeMismatch):
        value_from_json([1, 2], TupleType((("name", STRING),)))


# A modest value strategy: nested tuples and bags over small domains.
members = st.builds(lambda x, y: Tup(("x", "y"), (x, y)),
                    st.integers(0, 3) | st.none(),
                    st.sampled_from(["p", "q"]) | st.none())
values = st.builds(
    lambda a, bag: Tup(("a", "g"), (a, Bag.from_iter(bag))),
    st.integers(0, 3) | st.none(),
    st.lists(members, max_size=4))


@given(values)
def test_serialization_round_trip(v):
    schema = TupleType((("a", INT),
                        ("g", BagType(TupleType((("x", INT), ("y", STRING)))))))
    assert value_from_json(value_to_json(v), schema) == v


@given(st.lists(members, max_size=5), st.lists(members, max_size=5))
def test_bag_equality_is_order_insensitive(xs, ys):
    assert Bag.from_iter(xs + ys) == Bag.from_iter(ys + xs)
