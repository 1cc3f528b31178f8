"""The canonical person/cities scenario used throughout the test suite.

Two people, each with two nested address relations.  The query flattens
``address2``, keeps rows with ``year >= 2019``, projects name and city,
and nests names per city.  Its result is the single tuple
``⟨city: LA, nList: {⟨Sue⟩}⟩``; the stock why-not question asks for NY.
"""

from __future__ import annotations

import json
from pathlib import Path

from whynot.algebra.plan import (
    FlattenParams,
    OperatorNode,
    Predicate,
    ProjectionParams,
    QueryPlan,
    RelationNestParams,
    SelectionParams,
    TableAccessParams,
    plan_to_json,
)
from whynot.model.patterns import ANY, NipBag, NipTuple
from whynot.model.types import BagType, DATE, STRING, TupleType
from whynot.model.values import Bag, Tup, value_to_json
from whynot.question import WhyNotQuestion

ADDRESS_TYPE = BagType(TupleType((("city", STRING), ("year", DATE))))

PERSON_TYPE = BagType(TupleType((
    ("name", STRING),
    ("address1", ADDRESS_TYPE),
    ("address2", ADDRESS_TYPE),
)))


def _addr(*pairs) -> Bag:
    return Bag.of(*(Tup(("city", "year"), (c, y)) for c, y in pairs))


def person_table() -> Bag:
    peter = Tup(
        ("name", "address1", "address2"),
        ("Peter",
         _addr(("NY", 2010), ("LA", 2019), ("SF", 2008)),
         _addr(("SF", 2018), ("SF", 2016))))
    sue = Tup(
        ("name", "address1", "address2"),
        ("Sue",
         _addr(("LA", 2010)),
         _addr(("LA", 2019), ("NY", 2018))))
    return Bag.of(peter, sue)


def person_plan() -> QueryPlan:
    return QueryPlan([
        OperatorNode(1, "table_access", TableAccessParams("person"), ()),
        OperatorNode(2, "flatten", FlattenParams("inner", ("address2",)), (1,)),
        OperatorNode(3, "selection",
                     SelectionParams(Predicate.comparison("year", ">=", 2019)), (2,)),
        OperatorNode(4, "projection",
                     ProjectionParams((("name",), ("city",))), (3,)),
        OperatorNode(5, "relation_nest", RelationNestParams(("name",), "nList"), (4,)),
    ])


def whynot_ny():
    """``⟨city: NY, nList: {?, *}⟩`` — NY with at least one person."""
    return NipTuple(("city", "nList"), ("NY", NipBag((ANY,), star=True)))


def attribute_alternatives() -> dict[str, list[str]]:
    return {
        "address2": ["address1"],
        "address2.city": ["address1.city"],
        "address2.year": ["address1.year"],
    }


def question() -> WhyNotQuestion:
    return WhyNotQuestion(
        plan=person_plan(),
        db={"person": person_table()},
        db_schema={"person": PERSON_TYPE},
        tuple=whynot_ny(),
    )


def write_scenario(directory: Path) -> Path:
    """Write the scenario files (data, schema, plan, config); returns the
    scenario config path."""
    from whynot.model.types import type_to_json
    from whynot.model.patterns import nip_to_json

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    with open(directory / "persons.jsonl", "w") as f:
        for t in person_table().instances():
            f.write(json.dumps(value_to_json(t)) + "\n")
    (directory / "person.schema.json").write_text(
        json.dumps(type_to_json(PERSON_TYPE), indent=2) + "\n")
    (directory / "plan.json").write_text(
        json.dumps(plan_to_json(person_plan()), indent=2) + "\n")
    scenario = {
        "data": {"person": {"path": "persons.jsonl",
                            "schema": "person.schema.json"}},
        "plan": "plan.json",
        "whynot": nip_to_json(whynot_ny()),
        "alternatives": attribute_alternatives(),
    }
    path = directory / "scenario.json"
    path.write_text(json.dumps(scenario, indent=2) + "\n")
    return path
