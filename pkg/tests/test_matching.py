"""Pattern matching: definition examples, invariants, oracle agreement."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import exhaustive_match
from whynot.errors import InvalidPattern, TypeMismatch
from whynot.model import ANY, STAR, Bag, NipBag, NipTuple, Tup, matches_nip


def member(name):
    return Tup(("name",), (name,))


def city_tuple():
    return Tup(("city", "nList"),
               ("NY", Bag([(member("Sue"), 2), (member("Peter"), 1)])))


def test_star_absorbs_extra_tuples():
    p = NipTuple(("city", "nList"), ("NY", NipBag((ANY,), star=True)))
    assert matches_nip(city_tuple(), p)


def test_two_any_slots_cannot_take_three_tuples():
    p = NipTuple(("city", "nList"), ("NY", NipBag((ANY, ANY))))
    assert not matches_nip(city_tuple(), p)


def test_any_matches_everything():
    assert matches_nip(5, ANY)
    assert matches_nip(None, ANY)
    assert matches_nip(city_tuple(), ANY)


def test_empty_bag_star_vs_any():
    assert matches_nip(Bag([]), NipBag((), star=True))
    assert not matches_nip(Bag([]), NipBag((ANY,)))


def test_concrete_pattern_is_equality():
    assert matches_nip(5, 5)
    assert not matches_nip(5, 6)
    t = member("Sue")
    assert matches_nip(t, t)
    assert not matches_nip(member("Sue"), member("Peter"))


def test_techreport_example_sue():
    sue = Tup(("name", "address1", "address2"),
              ("Sue",
               Bag.of(Tup(("city", "year"), ("LA", 2010))),
               Bag.of(Tup(("city", "year"), ("LA", 2019)),
                      Tup(("city", "year"), ("NY", 2018)))))
    p = NipTuple(("name", "address1", "address2"),
                 ("Sue", ANY,
                  NipBag((NipTuple(("city", "year"), (ANY, 2019)), STAR))))
    assert matches_nip(sue, p)
    # without the star the second address2 member has nowhere to go
    p2 = NipTuple(("name", "address1", "address2"),
                  ("Sue", ANY,
                   NipBag((NipTuple(("city", "year"), (ANY, 2019)),))))
    assert not matches_nip(sue, p2)


def test_multiplicity_accounting():
    bag = Bag([(member("Sue"), 2)])
    assert matches_nip(bag, NipBag((ANY, ANY)))
    assert not matches_nip(bag, NipBag((ANY,)))
    assert matches_nip(bag, NipBag((ANY,), star=True))
    assert matches_nip(bag, NipBag((member("Sue"), member("Sue"))))
    assert not matches_nip(bag, NipBag((member("Sue"), member("Peter"))))


def test_null_does_not_match_constants():
    assert not matches_nip(None, 5)
    assert not matches_nip(Tup.of(a=None), NipTuple(("a",), (5,)))


def test_star_outside_bag_rejected():
    with pytest.raises(InvalidPattern):
        NipTuple(("a",), (STAR,))
    with pytest.raises(InvalidPattern):
        NipBag((STAR, STAR))
    with pytest.raises(InvalidPattern):
        NipBag((STAR,), star=True)


def test_shape_mismatch_raises():
    with pytest.raises(TypeMismatch):
        matches_nip(5, NipBag((ANY,)))
    with pytest.raises(TypeMismatch):
        matches_nip(Bag([]), NipTuple(("a",), (ANY,)))


# --- random agreement with the exhaustive-assignment oracle ---------------

def random_value(rng: random.Random, depth=0):
    fields = [("u", rng.choice([0, 1, 2, None])),
              ("v", rng.choice(["p", "q", None]))]
    if depth == 0:
        fields.append(("w", Bag.from_iter(
            random_value(rng, 1) for _ in range(rng.randint(0, 4)))))
    return Tup((n for n, _ in fields), (v for _, v in fields))


def random_pattern(rng: random.Random, value, depth=0):
    if isinstance(value, Tup):
        parts = []
        for _, v in value.items():
            parts.append(random_pattern(rng, v, depth))
        return NipTuple(value.names, parts)
    if isinstance(value, Bag):
        members = list(value.instances())
        roll = rng.random()
        if roll < 0.2:
            return ANY
        k = rng.randint(0, min(len(members) + 1, 3))
        elems = []
        for _ in range(k):
            if members and rng.random() < 0.8:
                elems.append(random_pattern(rng, rng.choice(members), depth + 1))
            else:
                elems.append(ANY)
        return NipBag(elems, star=rng.random() < 0.5)
    roll = rng.random()
    if roll < 0.3:
        return ANY
    if roll < 0.8:
        return value
    # a decoy constant
    return 9 if not isinstance(value, str) else "z"


def test_matching_agrees_with_exhaustive_oracle():
    rng = random.Random(20240817)
    agree = 0
    for _ in range(1000):
        v = random_value(rng)
        p = random_pattern(rng, v)
        assert matches_nip(v, p) == exhaustive_match(v, p)
        agree += 1
    assert agree == 1000


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_matching_permutation_invariant(data):
    rng = random.Random(data.draw(st.integers(0, 10 ** 6)))
    members = [random_value(rng, 1) for _ in range(rng.randint(0, 5))]
    bag = Bag.from_iter(members)
    pattern_elems = [random_pattern(rng, rng.choice(members), 1) if members
                     else ANY for _ in range(rng.randint(0, 3))]
    star = rng.random() < 0.5
    shuffled = list(pattern_elems)
    rng.shuffle(shuffled)
    assert matches_nip(bag, NipBag(pattern_elems, star=star)) == \
        matches_nip(bag, NipBag(shuffled, star=star))


def test_matches_own_concrete_pattern():
    rng = random.Random(7)
    for _ in range(100):
        v = random_value(rng)
        assert matches_nip(v, v)
