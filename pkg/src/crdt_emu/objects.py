"""Pluggable CRDT object definitions.

An op-based object supplies ``prep``/``effect``/``query`` over message
payloads; a state-based object supplies ``update``/``join``/``query`` over a
join-semilattice.  Shipped objects: the grow-only set in both styles and a
grow-only counter, plus the history-carrying augmentation combinator used by
the strong-convergence transfer check.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Callable

from .core import FrozenDict, Op, QueryId, ReplicaId

# Message identity regimes for op-based objects.  "id" is the normal case:
# messages are distinct by (origin, seq).  "value" is used by guests whose
# messages *are* lattice states: buffer membership and delivery dedup then key
# on the payload value, mirroring the state-based dedup premise.
IDENTITY_ID = "id"
IDENTITY_VALUE = "value"


@dataclass(frozen=True)
class OpObject:
    name: str
    initial: Any
    ops: tuple[Op, ...]
    queries: tuple[QueryId, ...]
    prep: Callable[[ReplicaId, Op, Any], Any]
    effect: Callable[[Any, Any], Any]
    query: Callable[[QueryId, Any], Any]
    message_identity: str = IDENTITY_ID


@dataclass(frozen=True)
class StObject:
    name: str
    initial: Any
    ops: tuple[Op, ...]
    queries: tuple[QueryId, ...]
    update: Callable[[ReplicaId, Op, Any], Any]
    join: Callable[[Any, Any], Any]
    query: Callable[[QueryId, Any], Any]


def st_leq(obj: StObject, a: Any, b: Any) -> bool:
    """Lattice order induced by join: a <= b iff a ⊔ b = b."""
    return obj.join(a, b) == b


# --- shipped objects ----------------------------------------------------------


def _sum_query(q: QueryId, s: frozenset) -> int:
    return sum(s)


def gset_op(values: tuple[int, ...] = (5, 42)) -> OpObject:
    """Op-based grow-only integer set: add[k] broadcasts an insert-k payload,
    query sums the elements."""
    return OpObject(
        name="gset-op",
        initial=frozenset(),
        ops=tuple(("add", k) for k in values),
        queries=("sum",),
        prep=lambda r, op, s: op[1],
        effect=lambda payload, s: s | {payload},
        query=_sum_query,
    )


def gset_st(values: tuple[int, ...] = (5, 42)) -> StObject:
    """State-based grow-only integer set: (P(N), ∪) with sum query."""
    return StObject(
        name="gset-st",
        initial=frozenset(),
        ops=tuple(("add", k) for k in values),
        queries=("sum",),
        update=lambda r, op, s: s | {op[1]},
        join=lambda a, b: a | b,
        query=_sum_query,
    )


def _gcounter_join(a: FrozenDict, b: FrozenDict) -> FrozenDict:
    m = dict(a.items())
    for r, n in b.items():
        m[r] = max(m.get(r, 0), n)
    return FrozenDict(m)


def gcounter_st() -> StObject:
    """State-based grow-only counter: replica->count maps joined pointwise."""
    return StObject(
        name="gcounter-st",
        initial=FrozenDict(),
        ops=(("inc",),),
        queries=("sum",),
        update=lambda r, op, s: s.set(r, s.get(r, 0) + 1),
        join=_gcounter_join,
        query=lambda q, s: sum(n for _, n in s.items()),
    )


BUILTIN_OBJECTS: dict[str, Callable[..., OpObject | StObject]] = {
    "gset-op": gset_op,
    "gset-st": gset_st,
    "gcounter-st": gcounter_st,
}


# --- history augmentation ------------------------------------------------------
#
# States become (s, h) where h is a set of operation occurrences.  Occurrences
# are made unique by tagging with (replica, per-replica occurrence index, op);
# the index is recovered from the history itself, since a replica's own
# occurrences always reach its local history immediately.


def _occurrence(r: ReplicaId, op: Op, h: frozenset) -> tuple:
    n = sum(1 for tok in h if tok[0] == r)
    return (r, n + 1, op)


def augment_history_op(o: OpObject) -> OpObject:
    def prep(r: ReplicaId, op: Op, state: tuple) -> tuple:
        s, h = state
        return (o.prep(r, op, s), frozenset({_occurrence(r, op, h)}))

    def effect(payload: tuple, state: tuple) -> tuple:
        mp, h2 = payload
        s, h = state
        return (o.effect(mp, s), h | h2)

    def query(q: QueryId, state: tuple) -> tuple:
        s, h = state
        return (o.query(q, s), h)

    return OpObject(
        name=o.name + "+hist",
        initial=(o.initial, frozenset()),
        ops=o.ops,
        queries=o.queries,
        prep=prep,
        effect=effect,
        query=query,
        message_identity=o.message_identity,
    )


def augment_history_st(o: StObject) -> StObject:
    def update(r: ReplicaId, op: Op, state: tuple) -> tuple:
        s, h = state
        return (o.update(r, op, s), h | {_occurrence(r, op, h)})

    def join(a: tuple, b: tuple) -> tuple:
        return (o.join(a[0], b[0]), a[1] | b[1])

    def query(q: QueryId, state: tuple) -> tuple:
        s, h = state
        return (o.query(q, s), h)

    return StObject(
        name=o.name + "+hist",
        initial=(o.initial, frozenset()),
        ops=o.ops,
        queries=o.queries,
        update=update,
        join=join,
        query=query,
    )


def strip_history_value(v: Any) -> Any:
    """Project an augmented query value (v, h) back to the base value."""
    return v[0]


def break_query(o: StObject, value: Any = 0) -> StObject:
    """Pathological guest for negative tests: queries return a constant."""
    return replace(o, name=o.name + "+broken", query=lambda q, s: value)


# --- concurrent commutation ----------------------------------------------------


@dataclass(frozen=True)
class CommutationReport:
    pairs_checked: int
    violations: tuple[tuple, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_concurrent_commutation(obj: OpObject, configs) -> CommutationReport:
    """For every sampled configuration, every replica and every pair of
    concurrent messages buffered there: both delivery orders must agree."""
    from .core import concurrent

    checked = 0
    violations = []
    for cfg in configs:
        by_replica: dict[ReplicaId, list] = {}
        for r, m in sorted(cfg.buffer, key=lambda rm: (rm[0], rm[1].sort_key())):
            by_replica.setdefault(r, []).append(m)
        for r, msgs in by_replica.items():
            s = cfg.states[r]
            for i, m1 in enumerate(msgs):
                for m2 in msgs[i + 1 :]:
                    if not concurrent(m1, m2):
                        continue
                    checked += 1
                    one = obj.effect(m2.payload, obj.effect(m1.payload, s))
                    two = obj.effect(m1.payload, obj.effect(m2.payload, s))
                    if one != two:
                        violations.append((r, m1, m2, one, two))
    return CommutationReport(checked, tuple(violations))
