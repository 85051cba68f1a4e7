"""The two emulation transformers and the message-set interpretation.

Op-based to state-based: guest states are finite message sets under union;
a guest update interprets its current set back into a host state, preps a
fresh message against it, and inserts it.  The minted message carries the
same (origin, seq) id and clock the op-based host would have minted in the
matched execution: both are recoverable from the message set itself, because
a replica's state holds exactly the messages it has consumed.

State-based to op-based: guest messages *are* host states; effect is join,
so all message effects commute and identity is by payload value.
"""

from __future__ import annotations

import itertools
import weakref
from typing import Any, Iterator

from .core import Message, MessageId, Op, QueryId, ReplicaId, VectorClock, happens_before
from .objects import IDENTITY_VALUE, OpObject, StObject

MessageSetState = frozenset  # frozenset[Message]

# Interpretation results per object, keyed by the exact message set.  The
# checker interprets heavily-overlapping sets, so the peel-one-recurse shape
# makes most calls a single lookup.
_interp_memo: "weakref.WeakKeyDictionary[OpObject, dict]" = weakref.WeakKeyDictionary()


def max_set(h: MessageSetState) -> frozenset[Message]:
    """Causally maximal members of h; any two of them are concurrent."""
    return frozenset(
        m for m in h if not any(happens_before(m, m2) for m2 in h)
    )


def interp(h: MessageSetState, obj: OpObject) -> Any:
    """Fold a message set into a host state by repeatedly peeling a maximal
    message (smallest id first, for reproducibility) and applying its effect
    on top of the interpretation of the rest.

    Concurrent effects commute for a law-abiding object, so the result does
    not depend on the peeling choice; the checker verifies that separately
    rather than assuming it.
    """
    if not h:
        return obj.initial
    memo = _interp_memo.setdefault(obj, {})
    cached = memo.get(h)
    if cached is not None or h in memo:
        return cached
    m = min(max_set(h), key=lambda m: m.sort_key())
    result = obj.effect(m.payload, interp(h - {m}, obj))
    memo[h] = result
    return result


def linear_extensions(h: MessageSetState) -> Iterator[tuple[Message, ...]]:
    """All orderings of h consistent with the happens-before order."""
    msgs = sorted(h, key=lambda m: m.sort_key())

    def rec(remaining: list[Message], acc: list[Message]) -> Iterator[tuple[Message, ...]]:
        if not remaining:
            yield tuple(acc)
            return
        for m in remaining:
            if any(happens_before(m2, m) for m2 in remaining if m2 is not m):
                continue
            rest = [m2 for m2 in remaining if m2 is not m]
            acc.append(m)
            yield from rec(rest, acc)
            acc.pop()

    yield from rec(msgs, [])


def interp_under_order(order: tuple[Message, ...], obj: OpObject) -> Any:
    s = obj.initial
    for m in order:
        s = obj.effect(m.payload, s)
    return s


def interp_is_order_independent(h: MessageSetState, obj: OpObject) -> bool:
    """Brute-force check that every linear extension of the causal order
    yields the same interpretation (and that interp agrees with them)."""
    expected = interp(h, obj)
    return all(
        interp_under_order(order, obj) == expected for order in linear_extensions(h)
    )


def _mint(r: ReplicaId, h: MessageSetState, payload: Any) -> Message:
    own = sum(1 for m in h if m.id.origin == r)
    clock = VectorClock()
    for m in h:
        clock = clock.join(m.clock)
    return Message(MessageId(r, own + 1), clock.tick(r), payload)


def op_to_st(obj: OpObject) -> StObject:
    """Construct the state-based guest of an op-based host: message sets under
    union, with updates inserting freshly prepped messages."""
    memo = _interp_memo.setdefault(obj, {})

    def interp_local(h: MessageSetState) -> Any:
        if not h:
            return obj.initial
        cached = memo.get(h)
        if cached is not None or h in memo:
            return cached
        m = min(max_set(h), key=lambda m: m.sort_key())
        result = obj.effect(m.payload, interp_local(h - {m}))
        memo[h] = result
        return result

    def update(r: ReplicaId, op: Op, h: MessageSetState) -> MessageSetState:
        payload = obj.prep(r, op, interp_local(h))
        return h | {_mint(r, h, payload)}

    def query(q: QueryId, h: MessageSetState) -> Any:
        return obj.query(q, interp_local(h))

    return StObject(
        name=obj.name + "->st",
        initial=frozenset(),
        ops=obj.ops,
        queries=obj.queries,
        update=update,
        join=lambda a, b: a | b,
        query=query,
    )


def st_to_op(obj: StObject) -> OpObject:
    """Construct the op-based guest of a state-based host: messages are host
    states, prep is the host update and effect is the join.  Message identity
    is by payload value, matching the state-based delivery dedup."""
    return OpObject(
        name=obj.name + "->op",
        initial=obj.initial,
        ops=obj.ops,
        queries=obj.queries,
        prep=lambda r, op, s: obj.update(r, op, s),
        effect=lambda payload, s: obj.join(s, payload),
        query=obj.query,
        message_identity=IDENTITY_VALUE,
    )


def subsets_smallest_first(items: list, max_size: int | None = None) -> Iterator[tuple]:
    """Deterministic subset enumeration in increasing size order."""
    n = len(items) if max_size is None else min(len(items), max_size)
    for k in range(n + 1):
        yield from itertools.combinations(items, k)
