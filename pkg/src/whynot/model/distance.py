"""Result distance between two relations of the same bag type.

The distance is the size of the symmetric bag difference of top-level
tuples, counting multiplicities: every top-level tuple added, removed or
replaced counts one per occurrence.  This is a proper metric (L1 on
multiplicity vectors) and is what the side-effect bounds count as well.
"""

from __future__ import annotations

from whynot.errors import TypeMismatch
from whynot.model.values import Bag


def result_distance(r1: Bag, r2: Bag) -> int:
    if not isinstance(r1, Bag) or not isinstance(r2, Bag):
        raise TypeMismatch("result_distance expects two bags")
    members = {m for m, _ in r1.entries} | {m for m, _ in r2.entries}
    return sum(abs(r1.multiplicity(m) - r2.multiplicity(m)) for m in members)
