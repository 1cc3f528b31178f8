"""Why-not questions: a plan, a database, and the missing-answer pattern."""

from __future__ import annotations

from dataclasses import dataclass, field

from whynot.errors import PreconditionViolated, TypeMismatch
from whynot.algebra.engine import Database, evaluate
from whynot.algebra.plan import QueryPlan
from whynot.algebra.schema import DbSchema, root_type
from whynot.model.patterns import matches_nip, pattern_conforms
from whynot.model.values import Bag


@dataclass
class WhyNotQuestion:
    plan: QueryPlan
    db: Database
    db_schema: DbSchema
    tuple: object  # a Nip over the plan's output tuple type
    _result: Bag | None = field(default=None, repr=False)

    def validate(self) -> None:
        """Type-check the pattern and require that no result tuple matches it."""
        out = root_type(self.plan, self.db_schema)
        if not pattern_conforms(self.tuple, out.element):
            raise TypeMismatch(
                f"why-not tuple is not a pattern over the output type {out!r}")
        if any(matches_nip(t, self.tuple) for t, _ in self.result()):
            raise PreconditionViolated(
                "a result tuple already matches the why-not tuple")

    def result(self) -> Bag:
        if self._result is None:
            self._result = evaluate(self.plan, self.db, self.db_schema)
        return self._result
