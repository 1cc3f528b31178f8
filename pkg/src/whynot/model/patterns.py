"""Nested instances with placeholders and the matching relation.

A pattern is either a concrete value, the instance placeholder ``?`` (ANY,
standing in for any single instance), a tuple of patterns, or a bag of
tuple-typed patterns optionally closed by the multiplicity placeholder
``*`` (STAR, absorbing zero or more further tuples).  At most one star per
bag; stars appear only as bag elements.

Matching a bag against a bag pattern requires an assignment of value
instances to pattern elements that respects multiplicities on both sides:
every value instance must be assigned somewhere, every non-star pattern
element must receive exactly its multiplicity, and the star (if present)
absorbs the rest.  This is decided with a small bipartite max-flow.
"""

from __future__ import annotations

from dataclasses import dataclass

from whynot.errors import InvalidPattern, TypeMismatch
from whynot.model.types import BagType, NestedType, PrimitiveType, TupleType
from whynot.model.values import Bag, Tup, sort_key


class _Any:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "?"


class _Star:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "*"


ANY = _Any()
STAR = _Star()


class NipTuple:
    """Tuple pattern: one sub-pattern per attribute."""

    __slots__ = ("names", "parts")

    def __init__(self, names, parts):
        self.names = tuple(names)
        self.parts = tuple(parts)
        if any(p is STAR for p in self.parts):
            raise InvalidPattern("star may only appear as a bag element")

    @classmethod
    def of(cls, **parts) -> "NipTuple":
        return cls(parts.keys(), parts.values())

    def part(self, name: str):
        return self.parts[self.names.index(name)]

    def items(self):
        return zip(self.names, self.parts)

    def __eq__(self, other):
        return (isinstance(other, NipTuple) and self.names == other.names
                and self.parts == other.parts)

    def __hash__(self):
        return hash((self.names, self.parts))

    def __repr__(self):
        return "⟨" + ", ".join(f"{n}: {p!r}" for n, p in self.items()) + "⟩"


class NipBag:
    """Bag pattern: tuple-typed element patterns plus an optional star."""

    __slots__ = ("elements", "star")

    def __init__(self, elements, star: bool = False):
        elems = []
        star_count = 1 if star else 0
        for e in elements:
            if e is STAR:
                star_count += 1
            else:
                elems.append(e)
        if star_count > 1:
            raise InvalidPattern("at most one star per bag")
        self.elements = tuple(elems)
        self.star = star_count == 1

    def __eq__(self, other):
        return (isinstance(other, NipBag) and self.star == other.star
                and sorted(map(repr, self.elements)) == sorted(map(repr, other.elements)))

    def __hash__(self):
        return hash((self.star, tuple(sorted(map(repr, self.elements)))))

    def __repr__(self):
        parts = [repr(e) for e in self.elements]
        if self.star:
            parts.append("*")
        return "{" + ", ".join(parts) + "}"


# A Nip is ANY, a concrete value, a NipTuple, or a NipBag; STAR only inside bags.
Nip = object


def is_concrete(p) -> bool:
    """True when the pattern contains no placeholder."""
    if p is ANY or p is STAR:
        return False
    if isinstance(p, NipTuple):
        return all(is_concrete(x) for x in p.parts)
    if isinstance(p, NipBag):
        return not p.star and all(is_concrete(e) for e in p.elements)
    return True


def matches_nip(v, p) -> bool:
    """Does instance ``v`` match pattern ``p``?"""
    if p is ANY:
        return True
    if p is STAR:
        raise InvalidPattern("star may only appear as a bag element")
    if isinstance(p, NipTuple):
        if v is None:
            return False
        if not isinstance(v, Tup):
            raise TypeMismatch(f"tuple pattern against non-tuple {v!r}")
        if set(v.names) != set(p.names):
            raise TypeMismatch(
                f"attribute mismatch: {v.names} vs {p.names}")
        return all(matches_nip(v.get(n), q) for n, q in p.items())
    if isinstance(p, NipBag):
        if v is None:
            return False
        if not isinstance(v, Bag):
            raise TypeMismatch(f"bag pattern against non-bag {v!r}")
        return _bag_assignment_exists(v, p)
    if isinstance(p, (Tup, Bag)):
        # Concrete nested values still match structurally (their attributes
        # may be compared against null-padded instances).
        if isinstance(p, Tup):
            return matches_nip(v, NipTuple(p.names, p.values))
        return matches_nip(v, NipBag(list(p.instances())))
    return v == p


def _bag_assignment_exists(v: Bag, p: NipBag) -> bool:
    """Feasibility of the multiplicity-respecting assignment of Def.-style
    bag matching, via max-flow with exact demands on pattern elements."""
    left = list(v.entries)  # (member, multiplicity)
    # Group equal pattern elements so their multiplicities add up.
    groups: list[list] = []
    counts: list[int] = []
    for e in p.elements:
        for i, g in enumerate(groups):
            if _same_pattern(g, e):
                counts[i] += 1
                break
        else:
            groups.append(e)
            counts.append(1)

    total_v = sum(c for _, c in left)
    total_p = sum(counts)
    if p.star:
        if total_p > total_v:
            return False
    elif total_p != total_v:
        return False

    edges = [[matches_nip(m, g) for g in groups] for m, _ in left]
    flow = _max_flow([c for _, c in left], counts, edges)
    return flow == total_p


def _same_pattern(a, b) -> bool:
    if a is b:
        return True
    if isinstance(a, NipTuple) and isinstance(b, NipTuple):
        return a == b
    if isinstance(a, NipBag) and isinstance(b, NipBag):
        return a == b
    if type(a) is type(b) or (not isinstance(a, (NipTuple, NipBag))
                              and not isinstance(b, (NipTuple, NipBag))):
        return a == b
    return False


def _max_flow(supply: list[int], demand: list[int], edges: list[list[bool]]) -> int:
    """Max flow from left nodes (capacities ``supply``) to right nodes
    (capacities ``demand``) over boolean edges.  Capacities are expanded to
    unit nodes and solved with Kuhn's augmenting paths; bag patterns are
    tiny, so this is plenty."""
    lefts = [i for i, s in enumerate(supply) for _ in range(s)]
    rights = [j for j, d in enumerate(demand) for _ in range(d)]
    match_of: list[int | None] = [None] * len(rights)  # right unit -> left unit

    def augment(u: int, seen: list[bool]) -> bool:
        for r, j in enumerate(rights):
            if not edges[lefts[u]][j] or seen[r]:
                continue
            seen[r] = True
            if match_of[r] is None or augment(match_of[r], seen):
                match_of[r] = u
                return True
        return False

    total = 0
    for u in range(len(lefts)):
        if augment(u, [False] * len(rights)):
            total += 1
    return total


# --- typing and serialization ----------------------------------------------

def pattern_conforms(p, t: NestedType) -> bool:
    """Is ``p`` a NIP of type ``t``?"""
    if p is ANY:
        return True
    if p is STAR:
        return False
    if isinstance(p, NipTuple):
        if not isinstance(t, TupleType) or p.names != t.names:
            return False
        return all(pattern_conforms(q, ft) for q, (_, ft) in zip(p.parts, t.fields))
    if isinstance(p, NipBag):
        if not isinstance(t, BagType):
            return False
        return all(pattern_conforms(e, t.element) for e in p.elements)
    if p is None:
        return True
    if isinstance(p, (Tup, Bag)):
        from whynot.model.values import conforms
        return conforms(p, t)
    if isinstance(t, PrimitiveType):
        from whynot.model.values import conforms
        return conforms(p, t)
    return False


def nip_to_json(p):
    if p is ANY:
        return {"$any": True}
    if p is STAR:
        return {"$star": True}
    if isinstance(p, NipTuple):
        return {n: nip_to_json(q) for n, q in p.items()}
    if isinstance(p, NipBag):
        out = [nip_to_json(e) for e in p.elements]
        if p.star:
            out.append({"$star": True})
        return out
    from whynot.model.values import value_to_json
    return value_to_json(p)


def nip_from_json(obj, t: NestedType):
    """Parse a pattern typed over ``t``; ``{"$any"}`` and ``{"$star"}`` mark
    the placeholders, everything else follows the value encoding."""
    if isinstance(obj, dict) and obj.get("$any"):
        return ANY
    if isinstance(obj, dict) and obj.get("$star"):
        return STAR
    if obj is None:
        return None
    if isinstance(t, TupleType):
        if not isinstance(obj, dict):
            raise TypeMismatch(f"expected an object for {t!r}")
        extra = set(obj) - set(t.names)
        if extra:
            raise TypeMismatch(f"unexpected attributes {sorted(extra)}")
        parts = [nip_from_json(obj[n], ft) if n in obj else ANY
                 for n, ft in t.fields]
        if all(not _has_placeholder(q) for q in parts):
            return Tup(t.names, parts)
        return NipTuple(t.names, parts)
    if isinstance(t, BagType):
        if not isinstance(obj, list):
            raise TypeMismatch(f"expected an array for {t!r}")
        elems = [nip_from_json(e, t.element) for e in obj]
        if all(not _has_placeholder(e) for e in elems):
            return Bag.from_iter(elems)
        return NipBag(elems)
    from whynot.model.values import value_from_json
    return value_from_json(obj, t)


def _has_placeholder(p) -> bool:
    return not is_concrete(p)
