"""Identifiers, vector clocks, messages, events, traces and the causal-order
machinery shared by the op-based and state-based semantics.

Everything here is an immutable value; traces are persistent cons lists so
exploration branches share structure instead of copying.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Any, Iterator, Mapping

ReplicaId = str
Op = tuple          # operation token, e.g. ("add", 5) or ("inc",)
QueryId = str


class Ordering(Enum):
    EQUAL = "equal"
    LESS = "less"
    GREATER = "greater"
    CONCURRENT = "concurrent"


class FrozenDict(Mapping):
    """Immutable, hashable mapping with deterministic (sorted-key) iteration."""

    __slots__ = ("_map", "_items", "_hash")

    def __init__(self, mapping: Mapping | tuple = ()):
        m = dict(mapping)
        self._map = m
        self._items = tuple(sorted(m.items(), key=lambda kv: kv[0]))
        self._hash = hash(self._items)

    @classmethod
    def _from_sorted(cls, items: tuple) -> "FrozenDict":
        self = cls.__new__(cls)
        self._map = dict(items)
        self._items = items
        self._hash = hash(items)
        return self

    def __getitem__(self, key):
        return self._map[key]

    def __iter__(self) -> Iterator:
        return iter(k for k, _ in self._items)

    def __len__(self) -> int:
        return len(self._map)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, FrozenDict):
            return self._hash == other._hash and self._items == other._items
        return NotImplemented

    def set(self, key, value) -> "FrozenDict":
        # Items stay sorted; splice without re-sorting.
        items = self._items
        for i, (k, _) in enumerate(items):
            if k == key:
                return FrozenDict._from_sorted(items[:i] + ((key, value),) + items[i + 1 :])
            if k > key:
                return FrozenDict._from_sorted(items[:i] + ((key, value),) + items[i:])
        return FrozenDict._from_sorted(items + ((key, value),))

    def get(self, key, default=None):
        return self._map.get(key, default)

    def items(self):
        return self._items

    def __repr__(self) -> str:
        body = ", ".join(f"{k!r}: {v!r}" for k, v in self._items)
        return "{" + body + "}"


@dataclass(frozen=True, slots=True)
class VectorClock:
    """Per-replica counters; absent entries read as 0.

    Pointwise comparison of clocks is the partial order used for the
    happens-before relation on messages.
    """

    entries: tuple[tuple[ReplicaId, int], ...] = ()

    @staticmethod
    def of(mapping: Mapping[ReplicaId, int]) -> "VectorClock":
        return VectorClock(tuple(sorted((r, n) for r, n in mapping.items() if n > 0)))

    def get(self, r: ReplicaId) -> int:
        for rr, n in self.entries:
            if rr == r:
                return n
        return 0

    def tick(self, r: ReplicaId) -> "VectorClock":
        entries = self.entries
        for i, (rr, n) in enumerate(entries):
            if rr == r:
                return VectorClock(entries[:i] + ((r, n + 1),) + entries[i + 1 :])
            if rr > r:
                return VectorClock(entries[:i] + ((r, 1),) + entries[i:])
        return VectorClock(entries + ((r, 1),))

    def join(self, other: "VectorClock") -> "VectorClock":
        if not other.entries:
            return self
        if not self.entries:
            return other
        m = dict(self.entries)
        for r, n in other.entries:
            if n > m.get(r, 0):
                m[r] = n
        return VectorClock(tuple(sorted(m.items())))

    def compare(self, other: "VectorClock") -> Ordering:
        le = ge = True
        keys = {r for r, _ in self.entries} | {r for r, _ in other.entries}
        for r in keys:
            a, b = self.get(r), other.get(r)
            if a < b:
                ge = False
            elif a > b:
                le = False
        if le and ge:
            return Ordering.EQUAL
        if le:
            return Ordering.LESS
        if ge:
            return Ordering.GREATER
        return Ordering.CONCURRENT

    def as_dict(self) -> dict[ReplicaId, int]:
        return dict(self.entries)


def vc_compare(a: VectorClock, b: VectorClock) -> Ordering:
    """Decide the pointwise partial order between two clocks."""
    return a.compare(b)


@dataclass(frozen=True, slots=True)
class MessageId:
    origin: ReplicaId
    seq: int

    def sort_key(self) -> tuple:
        return (self.origin, self.seq)


@dataclass(frozen=True, slots=True)
class Message:
    """A broadcast payload stamped with a unique (origin, seq) id and the
    sender's clock at send time.

    Within a single execution ids are never reused, so id equality and
    structural equality coincide there; structural equality is used so that
    messages from different exploration branches never collide.
    """

    id: MessageId
    clock: VectorClock
    payload: Any
    _hash: int = dc_field(init=False, repr=False, compare=False, default=0)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.id, self.clock, self.payload)))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Message):
            return NotImplemented
        if self._hash != other._hash:
            return False
        return (
            self.id == other.id
            and self.clock == other.clock
            and self.payload == other.payload
        )

    def sort_key(self) -> tuple:
        return self.id.sort_key()


def happens_before(m1: Message, m2: Message) -> bool:
    """m1 is a strict causal predecessor of m2 (clock strictly below)."""
    return vc_compare(m1.clock, m2.clock) is Ordering.LESS


def concurrent(m1: Message, m2: Message) -> bool:
    return not happens_before(m1, m2) and not happens_before(m2, m1)


# --- events -----------------------------------------------------------------

IN_NONE = "none"
IN_UPD = "upd"
IN_QRY = "qry"
IN_DLVR = "dlvr"

OUT_NONE = "none"
OUT_RET = "ret"
OUT_SEND = "send"


@dataclass(frozen=True, slots=True)
class Input:
    kind: str
    op: Op | None = None
    query: QueryId | None = None
    message: Message | None = None

    @staticmethod
    def none() -> "Input":
        return INPUT_NONE

    @staticmethod
    def upd(op: Op) -> "Input":
        return Input(IN_UPD, op=op)

    @staticmethod
    def qry(q: QueryId) -> "Input":
        return Input(IN_QRY, query=q)

    @staticmethod
    def dlvr(m: Message) -> "Input":
        return Input(IN_DLVR, message=m)


@dataclass(frozen=True, slots=True)
class Output:
    kind: str
    value: Any = None
    message: Message | None = None

    @staticmethod
    def none() -> "Output":
        return OUTPUT_NONE

    @staticmethod
    def ret(v: Any) -> "Output":
        return Output(OUT_RET, value=v)

    @staticmethod
    def send(m: Message) -> "Output":
        return Output(OUT_SEND, message=m)


INPUT_NONE = Input(IN_NONE)
OUTPUT_NONE = Output(OUT_NONE)


@dataclass(frozen=True, slots=True)
class Event:
    """One replica transition: (replica, input, output)."""

    replica: ReplicaId
    input: Input
    output: Output


@dataclass(frozen=True, slots=True, eq=False)
class Trace:
    """Append-only event trace as a persistent cons list (newest at head)."""

    head: Event | None
    tail: "Trace | None"
    length: int

    def append(self, e: Event) -> "Trace":
        return Trace(e, self, self.length + 1)

    def events(self) -> tuple[Event, ...]:
        """Materialize oldest-first."""
        out = []
        node = self
        while node.head is not None:
            out.append(node.head)
            node = node.tail  # type: ignore[assignment]
        out.reverse()
        return tuple(out)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events())

    def __len__(self) -> int:
        return self.length


TRACE_EMPTY = Trace(None, None, 0)


# --- labels -----------------------------------------------------------------

LBL_UPDATE = "update"
LBL_QUERY = "query"
LBL_TAU = "tau"


@dataclass(frozen=True, slots=True)
class Label:
    """System-level transition label; tau labels are the silent ones."""

    kind: str
    replica: ReplicaId | None = None
    op: Op | None = None
    query: QueryId | None = None
    value: Any = None
    silent: str | None = None  # "dlvr" | "send"

    @staticmethod
    def update(r: ReplicaId, op: Op) -> "Label":
        return Label(LBL_UPDATE, replica=r, op=op)

    @staticmethod
    def qry(r: ReplicaId, q: QueryId, v: Any) -> "Label":
        return Label(LBL_QUERY, replica=r, query=q, value=v)

    @staticmethod
    def tau(kind: str, r: ReplicaId) -> "Label":
        return Label(LBL_TAU, replica=r, silent=kind)

    @property
    def is_silent(self) -> bool:
        return self.kind == LBL_TAU

    def obs_key(self) -> tuple | None:
        """Observable identity used for weak matching; None for tau."""
        if self.kind == LBL_UPDATE:
            return (LBL_UPDATE, self.replica, self.op)
        if self.kind == LBL_QUERY:
            return (LBL_QUERY, self.replica, self.query, self.value)
        return None


# --- trace-level causal machinery -------------------------------------------


def sent(t: Trace) -> frozenset[Message]:
    """All messages carried by a send output anywhere in the trace."""
    out = set()
    for e in t:
        if e.output.kind == OUT_SEND:
            out.add(e.output.message)
    return frozenset(out)


def delivered(r: ReplicaId, t: Trace) -> frozenset[Message]:
    """Messages r consumed: dlvr events plus messages r generated and
    self-applied during upd events."""
    out = set()
    for e in t:
        if e.replica != r:
            continue
        if e.input.kind == IN_DLVR:
            out.add(e.input.message)
        elif e.input.kind == IN_UPD and e.output.kind == OUT_SEND:
            out.add(e.output.message)
    return frozenset(out)


def downset_of(m: Message, sent_set: frozenset[Message]) -> frozenset[Message]:
    return frozenset(m2 for m2 in sent_set if happens_before(m2, m)) | {m}


def downset(m: Message, t: Trace) -> frozenset[Message]:
    """m together with its causal predecessors among the sent messages."""
    s = sent(t)
    if m not in s:
        raise ValueError(f"downset: message {m.id} was never sent in this trace")
    return downset_of(m, s)


def enabled(r: ReplicaId, m: Message, t: Trace) -> bool:
    """Deliverability of m at r: not yet delivered there, and every causal
    predecessor already consumed by r (delivered or self-generated)."""
    dlvrd = set()
    for e in t:
        if e.replica == r and e.input.kind == IN_DLVR:
            dlvrd.add(e.input.message)
    if m in dlvrd:
        return False
    consumed = delivered(r, t)
    for m2 in sent(t):
        if happens_before(m2, m) and m2 not in consumed:
            return False
    return True


def satisfies_causal_delivery(t: Trace) -> bool:
    """No replica's dlvr events invert the causal order (brute force over
    all pairs of dlvr events per replica)."""
    per_replica: dict[ReplicaId, list[Message]] = {}
    for e in t:
        if e.input.kind == IN_DLVR:
            per_replica.setdefault(e.replica, []).append(e.input.message)
    for msgs in per_replica.values():
        for i, mi in enumerate(msgs):
            for mj in msgs[i + 1 :]:
                if happens_before(mj, mi):
                    return False
    return True


def buffer_add(
    buffer: frozenset[tuple[ReplicaId, Message]],
    dest: ReplicaId,
    m: Message,
    by_value: bool,
) -> frozenset[tuple[ReplicaId, Message]]:
    if by_value:
        for r2, m2 in buffer:
            if r2 == dest and m2.payload == m.payload:
                return buffer
    return buffer | {(dest, m)}


def bcast(
    r: ReplicaId,
    m: Message,
    buffer: frozenset[tuple[ReplicaId, Message]],
    roster: tuple[ReplicaId, ...],
    by_value: bool = False,
) -> frozenset[tuple[ReplicaId, Message]]:
    """Add one copy of m per destination replica other than the sender."""
    out = buffer
    for r2 in roster:
        if r2 != r:
            out = buffer_add(out, r2, m, by_value)
    return out


# --- canonical ordering / rendering ------------------------------------------


def canon_key(v: Any) -> tuple:
    """Total, deterministic sort key over the value shapes used in states,
    payloads and stores."""
    if v is None:
        return (0,)
    if isinstance(v, bool):
        return (1, int(v))
    if isinstance(v, int):
        return (2, v)
    if isinstance(v, str):
        return (3, v)
    if isinstance(v, MessageId):
        return (4, v.origin, v.seq)
    if isinstance(v, VectorClock):
        return (5, v.entries)
    if isinstance(v, Message):
        return (6, v.id.origin, v.id.seq, v.clock.entries, canon_key(v.payload))
    if isinstance(v, tuple):
        return (7, tuple(canon_key(x) for x in v))
    if isinstance(v, frozenset):
        return (8, tuple(sorted(canon_key(x) for x in v)))
    if isinstance(v, FrozenDict):
        return (9, tuple((k, canon_key(x)) for k, x in v.items()))
    raise TypeError(f"canon_key: unsupported value {v!r}")


def render(v: Any) -> Any:
    """Render a value as JSON-compatible data, deterministically ordered."""
    if v is None or isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, MessageId):
        return {"origin": v.origin, "seq": v.seq}
    if isinstance(v, VectorClock):
        return {r: n for r, n in v.entries}
    if isinstance(v, Message):
        return {
            "origin": v.id.origin,
            "seq": v.id.seq,
            "clock": render(v.clock),
            "payload": render(v.payload),
        }
    if isinstance(v, tuple):
        return [render(x) for x in v]
    if isinstance(v, frozenset):
        return [render(x) for x in sorted(v, key=canon_key)]
    if isinstance(v, FrozenDict):
        return {str(k): render(x) for k, x in v.items()}
    raise TypeError(f"render: unsupported value {v!r}")


def render_input(i: Input) -> dict:
    out: dict[str, Any] = {"kind": i.kind}
    if i.kind == IN_UPD:
        out["op"] = list(i.op)  # type: ignore[arg-type]
    elif i.kind == IN_QRY:
        out["query"] = i.query
    elif i.kind == IN_DLVR:
        out["message"] = render(i.message)
    return out


def render_output(o: Output) -> dict:
    out: dict[str, Any] = {"kind": o.kind}
    if o.kind == OUT_RET:
        out["value"] = render(o.value)
    elif o.kind == OUT_SEND:
        out["message"] = render(o.message)
    return out


def render_event(e: Event) -> dict:
    return {
        "replica": e.replica,
        "input": render_input(e.input),
        "output": render_output(e.output),
    }
