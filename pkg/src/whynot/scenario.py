"""Scenario files: data, schemas, plan, why-not tuple, alternatives.

A scenario is one JSON object::

    {
      "data": {"person": {"path": "persons.jsonl",
                           "schema": "person.schema.json"}},
      "plan": "plan.json",
      "whynot": {"city": "NY", "nList": [{"$any": true}, {"$star": true}]},
      "alternatives": {"address2.city": ["address1.city"]}
    }

``schema``, ``plan`` and ``whynot`` may be inline JSON instead of file
references; relative paths resolve against the scenario file's directory.
Relation data is JSON-Lines, one tuple per line, duplicates repeated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from whynot.errors import ConfigError, ParseError, SchemaViolation, WhyNotError
from whynot.algebra.plan import QueryPlan, plan_from_json
from whynot.algebra.schema import DbSchema, root_type
from whynot.model.patterns import nip_from_json
from whynot.model.types import BagType, type_from_json
from whynot.model.values import Bag, value_from_json
from whynot.question import WhyNotQuestion


@dataclass
class Scenario:
    db: dict[str, Bag]
    db_schema: DbSchema
    plan: QueryPlan
    whynot: object
    alternatives: dict[str, list[str]]

    def question(self) -> WhyNotQuestion:
        return WhyNotQuestion(self.plan, self.db, self.db_schema, self.whynot)


def load_relation(path: Path, schema: BagType) -> Bag:
    """Parse a JSON-Lines file into a typed, multiplicity-aggregated bag."""
    tuples = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
            try:
                tuples.append(value_from_json(obj, schema.element))
            except WhyNotError as e:
                raise SchemaViolation(f"{path}:{lineno}: {e.message}") from e
    return Bag.from_iter(tuples)


def _resolve(base: Path, ref):
    """A string is a file reference relative to the scenario; anything else
    is inline JSON."""
    if isinstance(ref, str):
        path = base / ref
        if not path.exists():
            raise ConfigError(f"referenced file not found: {path}")
        return json.loads(path.read_text())
    return ref


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"scenario file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from e
    base = path.parent

    if not isinstance(spec, dict) or "data" not in spec or "plan" not in spec:
        raise ConfigError("scenario needs at least 'data' and 'plan'")

    db_schema: DbSchema = {}
    db: dict[str, Bag] = {}
    for name, entry in spec["data"].items():
        schema = type_from_json(_resolve(base, entry["schema"]))
        if not isinstance(schema, BagType):
            raise ConfigError(f"schema of {name!r} must be a bag type")
        db_schema[name] = schema
        db[name] = load_relation(base / entry["path"], schema)

    plan = plan_from_json(_resolve(base, spec["plan"]))
    out = root_type(plan, db_schema)

    whynot = None
    if "whynot" in spec:
        whynot = nip_from_json(_resolve(base, spec["whynot"]), out.element)

    alternatives = spec.get("alternatives", {}) or {}
    if not isinstance(alternatives, dict):
        raise ConfigError("'alternatives' must map attribute paths to lists")
    return Scenario(db, db_schema, plan, whynot, alternatives)
