"""Nested values: primitives, null, tuples and bags with multiplicities.

Values are immutable and hashable so they can serve as bag members and
grouping keys.  Bags canonicalize their contents (structurally sorted
``(member, multiplicity)`` entries) which makes equality, hashing and
multiplicity lookup deterministic.  Tuple equality is by name/value pairs;
attribute order only matters for serialization.
"""

from __future__ import annotations

import json
from typing import Iterable, Iterator

from whynot.errors import HeterogeneousBag, TypeMismatch
from whynot.model.types import (
    BOTTOM,
    BOOL,
    BagType,
    INT,
    NestedType,
    PrimitiveType,
    STRING,
    TupleType,
    unify,
)

Value = int | str | bool | None  # plus Tup and Bag, defined below


class Tup:
    """An immutable named tuple value."""

    __slots__ = ("names", "values", "_hash")

    def __init__(self, names: Iterable[str], values: Iterable["Value"]):
        self.names = tuple(names)
        self.values = tuple(values)
        if len(self.names) != len(self.values):
            raise TypeMismatch("tuple arity mismatch")
        self._hash = None

    @classmethod
    def of(cls, **attrs) -> "Tup":
        return cls(attrs.keys(), attrs.values())

    def get(self, name: str):
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def has(self, name: str) -> bool:
        return name in self.names

    def path(self, path: tuple[str, ...]):
        """Follow a dot-path through nested tuples; null propagates."""
        v = self
        for seg in path:
            if v is None:
                return None
            if not isinstance(v, Tup):
                raise TypeMismatch(f"path {'.'.join(path)} traverses a non-tuple")
            v = v.get(seg)
        return v

    def project(self, names: Iterable[str]) -> "Tup":
        return Tup(names, (self.get(n) for n in names))

    def drop(self, names: Iterable[str]) -> "Tup":
        dropped = set(names)
        kept = [(n, v) for n, v in zip(self.names, self.values) if n not in dropped]
        return Tup((n for n, _ in kept), (v for _, v in kept))

    def concat(self, other: "Tup") -> "Tup":
        return Tup(self.names + other.names, self.values + other.values)

    def replace(self, name: str, value) -> "Tup":
        i = self.names.index(name)
        return Tup(self.names, self.values[:i] + (value,) + self.values[i + 1:])

    def items(self):
        return zip(self.names, self.values)

    def __eq__(self, other):
        if not isinstance(other, Tup):
            return NotImplemented
        if self.names == other.names:
            return self.values == other.values
        return sorted(self.items(), key=lambda p: p[0]) == \
            sorted(other.items(), key=lambda p: p[0])

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(sorted(
                ((n, sort_key(v)) for n, v in self.items()), key=lambda p: p[0])))
        return self._hash

    def __repr__(self):
        return "⟨" + ", ".join(f"{n}: {v!r}" for n, v in self.items()) + "⟩"


class Bag:
    """A bag of tuple values with positive multiplicities, canonically ordered."""

    __slots__ = ("entries", "_hash")

    def __init__(self, entries: Iterable[tuple["Value", int]]):
        counted: dict = {}
        order: list = []
        for member, count in entries:
            if count < 0:
                raise TypeMismatch("negative multiplicity")
            if count == 0:
                continue
            if member in counted:
                counted[member] += count
            else:
                counted[member] = count
                order.append(member)
        order.sort(key=sort_key)
        self.entries = tuple((m, counted[m]) for m in order)
        self._hash = None

    @classmethod
    def of(cls, *members) -> "Bag":
        return cls((m, 1) for m in members)

    @classmethod
    def from_iter(cls, members: Iterable["Value"]) -> "Bag":
        return cls((m, 1) for m in members)

    def multiplicity(self, member) -> int:
        for m, c in self.entries:
            if m == member:
                return c
        return 0

    def instances(self) -> Iterator["Value"]:
        for m, c in self.entries:
            for _ in range(c):
                yield m

    def members(self) -> Iterator["Value"]:
        for m, _ in self.entries:
            yield m

    @property
    def total(self) -> int:
        return sum(c for _, c in self.entries)

    def is_empty(self) -> bool:
        return not self.entries

    def union(self, other: "Bag") -> "Bag":
        return Bag(self.entries + other.entries)

    def difference(self, other: "Bag") -> "Bag":
        return Bag((m, c - other.multiplicity(m)) for m, c in self.entries)

    def dedup(self) -> "Bag":
        return Bag((m, 1) for m, _ in self.entries)

    def __eq__(self, other):
        if not isinstance(other, Bag):
            return NotImplemented
        return self.entries == other.entries

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple((sort_key(m), c) for m, c in self.entries))
        return self._hash

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __repr__(self):
        parts = []
        for m, c in self.entries:
            parts.append(f"{m!r}" + (f"^{c}" if c > 1 else ""))
        return "{" + ", ".join(parts) + "}"


def sort_key(v):
    """Total structural order over values; drives bag canonicalization."""
    if v is None:
        return (0,)
    if isinstance(v, bool):
        return (1, v)
    if isinstance(v, int):
        return (2, v)
    if isinstance(v, str):
        return (3, v)
    if isinstance(v, Tup):
        return (4, tuple(sorted((n, sort_key(x)) for n, x in v.items())))
    if isinstance(v, Bag):
        return (5, tuple((sort_key(m), c) for m, c in v.entries))
    raise TypeMismatch(f"not a value: {v!r}")


def type_of(v) -> NestedType:
    """Minimal type of a well-formed value; bags must be homogeneous."""
    if v is None:
        return BOTTOM
    if isinstance(v, bool):
        return BOOL
    if isinstance(v, int):
        return INT
    if isinstance(v, str):
        return STRING
    if isinstance(v, Tup):
        return TupleType(tuple((n, type_of(x)) for n, x in v.items()))
    if isinstance(v, Bag):
        elem: NestedType = BOTTOM
        for m, _ in v.entries:
            t = type_of(m)
            if not isinstance(t, (TupleType,)) and t != BOTTOM:
                raise HeterogeneousBag(f"bag member is not a tuple: {m!r}")
            elem = unify(elem, t)
        return BagType(elem)
    raise TypeMismatch(f"not a value: {v!r}")


def conforms(v, t: NestedType) -> bool:
    """Does a value inhabit the declared type?  Null conforms to anything."""
    if v is None:
        return True
    if isinstance(t, PrimitiveType):
        if t.kind == "bool":
            return isinstance(v, bool)
        if t.kind == "string":
            return isinstance(v, str)
        return isinstance(v, int) and not isinstance(v, bool)
    if isinstance(t, TupleType):
        if not isinstance(v, Tup) or v.names != t.names:
            return False
        return all(conforms(x, ft) for x, (_, ft) in zip(v.values, t.fields))
    if isinstance(t, BagType):
        if not isinstance(v, Bag):
            return False
        return all(conforms(m, t.element) for m, _ in v.entries)
    return False


def null_tuple(t: TupleType) -> Tup:
    """A tuple of the given type with every attribute set to null."""
    return Tup(t.names, (None,) * len(t.names))


# --- JSON serialization ----------------------------------------------------
# Null ↔ null, tuples ↔ objects, bags ↔ arrays with duplicates repeated.

def value_to_json(v):
    if v is None or isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, Tup):
        return {n: value_to_json(x) for n, x in v.items()}
    if isinstance(v, Bag):
        return [value_to_json(m) for m in v.instances()]
    raise TypeMismatch(f"not a value: {v!r}")


def value_from_json(obj, t: NestedType):
    """Parse a JSON object as a value of the declared type."""
    if obj is None:
        return None
    if isinstance(t, PrimitiveType):
        ok = (isinstance(obj, bool) if t.kind == "bool"
              else isinstance(obj, str) if t.kind == "string"
              else isinstance(obj, int) and not isinstance(obj, bool))
        if not ok:
            raise TypeMismatch(f"{obj!r} is not of type {t!r}")
        return obj
    if isinstance(t, TupleType):
        if not isinstance(obj, dict):
            raise TypeMismatch(f"expected an object for {t!r}, got {obj!r}")
        extra = set(obj) - set(t.names)
        if extra:
            raise TypeMismatch(f"unexpected attributes {sorted(extra)}")
        return Tup(t.names, (value_from_json(obj.get(n), ft) for n, ft in t.fields))
    if isinstance(t, BagType):
        if not isinstance(obj, list):
            raise TypeMismatch(f"expected an array for {t!r}, got {obj!r}")
        return Bag.from_iter(value_from_json(m, t.element) for m in obj)
    if obj is None:
        return None
    raise TypeMismatch(f"cannot parse {obj!r} into {t!r}")


def dumps(v, **kwargs) -> str:
    return json.dumps(value_to_json(v), **kwargs)
