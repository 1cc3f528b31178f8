"""Exception hierarchy shared by all modules.

Every error carries a module-qualified ``code`` so the CLI can surface
failures uniformly (e.g. ``engine.unknown_attribute``).
"""

from __future__ import annotations


class WhyNotError(Exception):
    code = "whynot.error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


# --- nested_model ---------------------------------------------------------

class HeterogeneousBag(WhyNotError):
    code = "model.heterogeneous_bag"


class TypeMismatch(WhyNotError):
    code = "model.type_mismatch"


class InvalidPattern(WhyNotError):
    code = "model.invalid_pattern"


# --- nrab_engine ----------------------------------------------------------

class PlanError(WhyNotError):
    code = "engine.plan"


class UnknownAttribute(PlanError):
    code = "engine.unknown_attribute"


class KindMismatch(PlanError):
    code = "engine.kind_mismatch"


class DuplicateAttribute(PlanError):
    code = "engine.duplicate_attribute"


class AggregationOnNonBag(PlanError):
    code = "engine.aggregation_on_non_bag"


class NonEquiJoin(PlanError):
    code = "engine.non_equi_join"


# --- reparam --------------------------------------------------------------

class InadmissibleChange(WhyNotError):
    code = "reparam.inadmissible_change"


class SchemaBroken(WhyNotError):
    code = "reparam.schema_broken"


class RootSchemaChanged(WhyNotError):
    code = "reparam.root_schema_changed"


class BudgetExceeded(WhyNotError):
    code = "reparam.budget_exceeded"


# --- backtrace ------------------------------------------------------------

class UnsupportedConstraint(WhyNotError):
    code = "backtrace.unsupported_constraint"


# --- alternatives ---------------------------------------------------------

class BadAlternative(WhyNotError):
    code = "alternatives.bad_alternative"


class TooManyAlternatives(WhyNotError):
    code = "alternatives.too_many"


# --- tracing --------------------------------------------------------------

class DuplicateLabel(WhyNotError):
    code = "tracing.duplicate_label"


# --- pipeline / cli -------------------------------------------------------

class PreconditionViolated(WhyNotError):
    code = "explain.precondition_violated"


class ParseError(WhyNotError):
    code = "cli.parse_error"


class SchemaViolation(WhyNotError):
    code = "cli.schema_violation"


class ConfigError(WhyNotError):
    code = "cli.config_error"
