"""Independent oracles used to validate the production implementations.

``exhaustive_match`` re-implements pattern matching from the definition:
bag matching enumerates all assignments of value instances to pattern
element slots (plus a star sink) by backtracking, instead of the flow
construction used by the engine.
"""

from __future__ import annotations

from whynot.model.patterns import ANY, STAR, NipBag, NipTuple
from whynot.model.values import Bag, Tup


def exhaustive_match(v, p) -> bool:
    if p is ANY:
        return True
    if isinstance(p, NipTuple):
        if not isinstance(v, Tup):
            return False
        return all(exhaustive_match(v.get(n), q) for n, q in p.items())
    if isinstance(p, NipBag):
        if not isinstance(v, Bag):
            return False
        return _assignments_exist(list(v.instances()), list(p.elements), p.star)
    if isinstance(p, Tup):
        return exhaustive_match(v, NipTuple(p.names, p.values))
    if isinstance(p, Bag):
        return exhaustive_match(v, NipBag(list(p.instances())))
    return v == p


def _assignments_exist(instances: list, slots: list, star: bool) -> bool:
    """Backtracking over all ways to give every slot exactly one instance;
    leftovers must go to the star."""
    if len(slots) > len(instances):
        return False
    if not star and len(slots) != len(instances):
        return False

    def assign(k: int, remaining: list) -> bool:
        if k == len(slots):
            return True  # leftovers absorbed by star (or none left)
        for i, inst in enumerate(remaining):
            if exhaustive_match(inst, slots[k]):
                if assign(k + 1, remaining[:i] + remaining[i + 1:]):
                    return True
        return False

    return assign(0, instances)
