"""Step 4: approximate MSRs from the trace, bound side effects, rank.

The queue walks operators top-down per schema alternative, starting from
the alternative's substitution prefix.  An operator joins the running SR
when its snapshot holds a valid tuple that is consistent, not retained,
and lies in the lineage of a consistent output tuple; the walk continues
without the operator when a valid tuple with all its local annotations
set exists.  SRs are emitted at the first operator.

Side-effect bounds follow the counting scheme over the annotated result:
the upper bound on added tuples counts valid result tuples whose
derivation carries a zero retained flag at one of the explanation's
operators (for the original alternative) or whose values differ from
every original result tuple (for the others); the upper bound on removed
tuples is the original result size minus the tuples that provably keep
their value under the alternative.  Lower bounds are zero as soon as a
selection or join is involved, since some concrete reparameterization may
avoid the side effects entirely.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from whynot.alternatives import SchemaAlternative, enumerate_sas
from whynot.backtrace import schema_backtrace
from whynot.model.values import Bag
from whynot.question import WhyNotQuestion
from whynot.tracing import TraceResult, trace


@dataclass(frozen=True)
class BoundsBreakdown:
    lb_plus: int
    lb_minus: int
    ub_plus: int
    ub_minus: int

    @property
    def lb(self) -> int:
        return self.lb_plus + self.lb_minus

    @property
    def ub(self) -> int:
        return self.ub_plus + self.ub_minus


@dataclass
class Explanation:
    ops: frozenset[int]
    sa_index: int
    lb: int = 0
    ub: int = 0
    breakdown: BoundsBreakdown | None = None
    rank: int = 0

    def to_json(self, plan) -> dict:
        return {
            "rank": self.rank,
            "ops": [{"id": i, "kind": plan.node(i).kind}
                    for i in sorted(self.ops)],
            "sa": self.sa_index,
            "lb": self.lb,
            "ub": self.ub,
        }


def approximate_msrs(traced: TraceResult, sas: list[SchemaAlternative],
                     question: WhyNotQuestion) -> list[Explanation]:
    """Queue-based top-down SR construction; unranked, deduplicated."""
    order = list(traced.plan.topological)
    emitted: list[tuple[frozenset[int], int]] = []
    for sa in sas:
        i = sa.index
        reach = traced.reachable_from_consistent(i)
        queue: deque[tuple[int, frozenset[int]]] = deque()
        queue.append((len(order) - 1, frozenset(sa.changed_ops)))
        seen: set[tuple[int, frozenset[int]]] = set()
        while queue:
            pos, sr = queue.popleft()
            if (pos, sr) in seen:
                continue
            seen.add((pos, sr))
            op_id = order[pos]
            snap = traced.snapshots[op_id]

            extend = False
            if snap.adds_retained:
                for r in snap.rows:
                    if (r.valid.get(i) and r.consistent.get(i)
                            and not (r.retained or {}).get(i, True)
                            and r.rid in reach[op_id]):
                        extend = True
                        break
            all_ones = any(
                r.valid.get(i) and r.consistent.get(i)
                and ((r.retained or {}).get(i, False)
                     if snap.adds_retained else True)
                for r in snap.rows)

            if pos > 0:
                if extend:
                    queue.append((pos - 1, sr | {op_id}))
                if all_ones:
                    queue.append((pos - 1, sr))
            else:
                if extend and (sr | {op_id}, i) not in emitted:
                    emitted.append((sr | {op_id}, i))
                if all_ones and sr and (sr, i) not in emitted:
                    emitted.append((sr, i))
    return [Explanation(ops=ops, sa_index=i) for ops, i in emitted]


def side_effect_bounds(expl: Explanation, traced: TraceResult,
                       original_result: Bag) -> BoundsBreakdown:
    roots = traced.root_rows()
    root_op = traced.root_id
    i = expl.sa_index
    n_q = original_result.total

    originals = [r for r in roots if r.valid.get(1)
                 and traced.retained_closure(root_op, r.rid, 1)]
    all_ones = [r for r in roots
                if all(r.valid.get(sa.index)
                       and traced.retained_closure(root_op, r.rid, sa.index)
                       for sa in traced.sas)]

    if i == 1:
        ub_plus = sum(
            1 for r in roots if r.valid.get(i)
            and traced.has_zero_flag(root_op, r.rid, i, expl.ops))
    else:
        ub_plus = sum(
            1 for r in roots if r.valid.get(i)
            and all(r.payload[i] != o.payload[1] for o in originals))

    safe = sum(1 for r in roots if r.valid.get(i)
               and any(r.payload[i] == o.payload[1] for o in all_ones))
    ub_minus = max(n_q - safe, 0)

    kinds = {traced.plan.node(op).kind for op in expl.ops}
    if kinds & {"selection", "join"}:
        lb_plus = lb_minus = 0
    else:
        n_vr = traced.restricted(root_op, i).total
        lb_plus = max(n_vr - n_q, 0)
        lb_minus = max(n_q - n_vr, 0)
    return BoundsBreakdown(lb_plus, lb_minus, ub_plus, ub_minus)


def order_explanations(expls: list[Explanation]) -> list[Explanation]:
    """Linear extension of the (operator subset, side effect) partial
    order: fewer operators first, then smaller bounds; stable."""
    best: dict[frozenset[int], Explanation] = {}
    for e in expls:
        key = e.ops
        if key not in best or _sort_key(e) < _sort_key(best[key]):
            best[key] = e
    ordered = sorted(best.values(), key=_sort_key)
    for rank, e in enumerate(ordered, start=1):
        e.rank = rank
    return ordered


def _sort_key(e: Explanation):
    return (len(e.ops), e.ub, e.lb, sorted(e.ops), e.sa_index)


@dataclass
class PipelineResult:
    explanations: list[Explanation]
    traced: TraceResult
    sas: list[SchemaAlternative]
    backtrace: object


def whynot_pipeline(question: WhyNotQuestion,
                    alternatives_config: dict[str, list[str]] | None,
                    max_sas: int = 16) -> PipelineResult:
    """backtrace → schema alternatives → tracing → MSRs → bounds → rank."""
    question.validate()
    bt = schema_backtrace(question)
    sas = enumerate_sas(bt, alternatives_config or {}, question.plan,
                        question.db_schema, max_sas=max_sas)
    traced = trace(question.plan, question.db, question.db_schema, sas)
    expls = approximate_msrs(traced, sas, question)
    original = question.result()
    for e in expls:
        e.breakdown = side_effect_bounds(e, traced, original)
        e.lb = e.breakdown.lb
        e.ub = e.breakdown.ub
    return PipelineResult(order_explanations(expls), traced, sas, bt)
