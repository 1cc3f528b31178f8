"""Nested relation schemas: primitive, tuple and bag types.

A nested relation is a bag of tuples whose attributes are primitives,
tuples, or nested relations again.  ``type_of`` computes the minimal type
of a value; ``Null`` conforms to every type and by itself has the
distinguished bottom type, which unifies with anything.
"""

from __future__ import annotations

from dataclasses import dataclass

from whynot.errors import HeterogeneousBag, TypeMismatch

PRIMITIVE_KINDS = ("int", "string", "bool", "date")


@dataclass(frozen=True)
class PrimitiveType:
    kind: str  # one of PRIMITIVE_KINDS

    def __repr__(self):
        return self.kind


@dataclass(frozen=True)
class BottomType:
    """Type of the null value; unifies with any type."""

    def __repr__(self):
        return "⊥"


@dataclass(frozen=True)
class TupleType:
    fields: tuple[tuple[str, "NestedType"], ...]

    def __post_init__(self):
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise TypeMismatch(f"duplicate attribute names in tuple type: {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.fields)

    def field(self, name: str) -> "NestedType":
        for n, t in self.fields:
            if n == name:
                return t
        raise KeyError(name)

    def has(self, name: str) -> bool:
        return any(n == name for n, _ in self.fields)

    def __repr__(self):
        return "⟨" + ", ".join(f"{n}: {t!r}" for n, t in self.fields) + "⟩"


@dataclass(frozen=True)
class BagType:
    element: "NestedType"  # TupleType, or BottomType for an empty bag

    def __repr__(self):
        return f"{{{self.element!r}}}"


NestedType = PrimitiveType | BottomType | TupleType | BagType

BOTTOM = BottomType()
INT = PrimitiveType("int")
STRING = PrimitiveType("string")
BOOL = PrimitiveType("bool")
DATE = PrimitiveType("date")

# Dates are modelled as integers (e.g. plain years); int and date unify.
_NUMERIC = {"int", "date"}


def is_primitive(t: NestedType) -> bool:
    return isinstance(t, PrimitiveType)


def unify(a: NestedType, b: NestedType) -> NestedType:
    """Least upper type of two types; raises HeterogeneousBag on conflict."""
    if isinstance(a, BottomType):
        return b
    if isinstance(b, BottomType):
        return a
    if isinstance(a, PrimitiveType) and isinstance(b, PrimitiveType):
        if a.kind == b.kind:
            return a
        if a.kind in _NUMERIC and b.kind in _NUMERIC:
            return INT
        raise HeterogeneousBag(f"cannot unify {a!r} with {b!r}")
    if isinstance(a, TupleType) and isinstance(b, TupleType):
        if a.names != b.names:
            raise HeterogeneousBag(f"cannot unify {a!r} with {b!r}")
        return TupleType(tuple(
            (n, unify(ta, tb)) for (n, ta), (_, tb) in zip(a.fields, b.fields)))
    if isinstance(a, BagType) and isinstance(b, BagType):
        return BagType(unify(a.element, b.element))
    raise HeterogeneousBag(f"cannot unify {a!r} with {b!r}")


def compatible(a: NestedType, b: NestedType) -> bool:
    """True when the two types unify (e.g. a value type vs. a declared one)."""
    try:
        unify(a, b)
        return True
    except HeterogeneousBag:
        return False


def same_type(a: NestedType, b: NestedType) -> bool:
    """Structural equality up to int/date identification."""
    if isinstance(a, PrimitiveType) and isinstance(b, PrimitiveType):
        return a.kind == b.kind or (a.kind in _NUMERIC and b.kind in _NUMERIC)
    return compatible(a, b) and _shape(a) == _shape(b)


def _shape(t: NestedType):
    if isinstance(t, TupleType):
        return ("tuple", tuple((n, _shape(ft)) for n, ft in t.fields))
    if isinstance(t, BagType):
        return ("bag", _shape(t.element))
    return ("leaf",)


def type_to_json(t: NestedType):
    if isinstance(t, PrimitiveType):
        return t.kind
    if isinstance(t, BottomType):
        return "null"
    if isinstance(t, TupleType):
        return {"tuple": [[n, type_to_json(ft)] for n, ft in t.fields]}
    return {"bag": type_to_json(t.element)}


def type_from_json(obj) -> NestedType:
    if isinstance(obj, str):
        if obj == "null":
            return BOTTOM
        if obj in PRIMITIVE_KINDS:
            return PrimitiveType(obj)
        raise TypeMismatch(f"unknown primitive type {obj!r}")
    if isinstance(obj, dict) and "tuple" in obj:
        return TupleType(tuple((n, type_from_json(ft)) for n, ft in obj["tuple"]))
    if isinstance(obj, dict) and "bag" in obj:
        elem = type_from_json(obj["bag"])
        if not isinstance(elem, (TupleType, BottomType)):
            raise TypeMismatch("bag element type must be a tuple type")
        return BagType(elem)
    raise TypeMismatch(f"malformed type JSON: {obj!r}")
