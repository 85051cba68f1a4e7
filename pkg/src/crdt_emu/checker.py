"""Bounded checking of the paired CRDT transition systems.

The checker explores configuration LTSs to a step bound, decides membership
in the candidate simulation relations, and verifies weak simulations and the
weak bisimulation by playing the matching game: for each reachable related
pair and each single step of the simulated side it finds a saturated matching
step on the other side that lands back in the relation.  Constructive
matchers (the moves the relations were designed around) are tried first; a
bounded search over weak successors is the fallback.  All verdicts are
evidence at the stated bounds, not unbounded guarantees.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Iterable

from .core import (
    Event,
    Label,
    Message,
    QueryId,
    ReplicaId,
    Trace,
    canon_key,
    downset_of,
    happens_before,
    render,
    render_event,
)
from .emulation import interp, subsets_smallest_first
from .objects import OpObject, StObject, check_concurrent_commutation
from .opsem import OpConfig, OpSystem, op_mk_deliver, op_mk_query, op_mk_update
from .stsem import (
    ATOMIC_BROADCAST,
    StConfig,
    StSystem,
    st_mk_deliver,
    st_mk_query,
    st_mk_send,
    st_mk_update,
)

PASS = "pass"
COUNTEREXAMPLE = "counterexample"
BOUND_EXHAUSTED = "bound-exhausted"

OP_TO_ST = "op-to-st"
ST_TO_OP = "st-to-op"

HOST_BY_GUEST = "host-by-guest"
GUEST_BY_HOST = "guest-by-host"

# Relation id -> (sort of first component, sort of second, direction)
RELATION_SORTS: dict[str, tuple[str, str, str]] = {
    "R1": ("host", "guest", OP_TO_ST),
    "R2": ("guest", "host", OP_TO_ST),
    "Q1": ("host", "guest", ST_TO_OP),
    "Q2": ("guest", "host", ST_TO_OP),
    "bowtie": ("host", "guest", OP_TO_ST),
}


@dataclass(frozen=True)
class PairedSystem:
    """Host and guest LTSs sharing a roster and op/query universes."""

    host: OpSystem | StSystem
    guest: OpSystem | StSystem
    direction: str

    def side(self, name: str) -> OpSystem | StSystem:
        return self.host if name == "host" else self.guest


@dataclass
class Verdict:
    outcome: str
    stats: dict
    bounds: dict
    witness: dict | None = None
    raw: Any = None
    detail: str | None = None

    @property
    def passed(self) -> bool:
        return self.outcome == PASS

    def to_report(self) -> dict:
        out = {"outcome": self.outcome, "stats": self.stats, "bounds": self.bounds}
        if self.witness is not None:
            out["witness"] = self.witness
        if self.detail is not None:
            out["detail"] = self.detail
        return out


def render_label(l: Label) -> dict:
    out: dict[str, Any] = {"kind": l.kind}
    if l.replica is not None:
        out["replica"] = l.replica
    if l.op is not None:
        out["op"] = list(l.op)
    if l.query is not None:
        out["query"] = l.query
    if l.kind == "query":
        out["value"] = render(l.value)
    if l.silent is not None:
        out["silent"] = l.silent
    return out


# --- exploration ---------------------------------------------------------------


@dataclass
class Graph:
    nodes: list
    edges: list[tuple[int, Label, int]]
    depths: list[int]
    parents: list[tuple[int, Event] | None]
    truncated: bool

    @property
    def stats(self) -> dict:
        return {
            "states": len(self.nodes),
            "edges": len(self.edges),
            "max_depth": max(self.depths, default=0),
            "truncated": self.truncated,
        }

    def path_events(self, idx: int) -> list[Event]:
        out: list[Event] = []
        while True:
            link = self.parents[idx]
            if link is None:
                break
            idx, e = link
            out.append(e)
        out.reverse()
        return out


def explore(
    system,
    step_bound: int,
    prune: bool = True,
    max_states: int | None = None,
    workers: int = 1,
) -> Graph:
    """Breadth-first exploration of all configurations reachable within
    step_bound steps.  With pruning, configurations are identified by their
    behavior-determining summary; without it the result is the raw tree.
    With workers > 1, successor lists for each frontier batch are computed by
    a thread pool; results are consumed in order, so the graph is identical
    for any worker count."""
    if step_bound < 0:
        raise ValueError("explore: negative step bound")
    init = system.init()
    nodes = [init]
    depths = [0]
    parents: list[tuple[int, Event] | None] = [None]
    keys: dict = {system.summary(init): 0} if prune else {}
    edges: list[tuple[int, Label, int]] = []
    truncated = False
    queue = deque([0])
    pool = None
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        pool = ThreadPoolExecutor(max_workers=workers)
    while queue:
        if pool is not None:
            # warm the per-configuration successor caches for the whole
            # frontier; steps() is idempotent, so this is a pure speedup
            batch = [nodes[i] for i in queue if depths[i] < step_bound]
            list(pool.map(system.steps, batch))
        level = list(queue)
        queue.clear()
        for i in level:
            if truncated or depths[i] >= step_bound:
                continue
            for label, c2 in system.steps(nodes[i]):
                if prune:
                    key = system.summary(c2)
                    j = keys.get(key)
                    if j is None:
                        j = len(nodes)
                        keys[key] = j
                        nodes.append(c2)
                        depths.append(depths[i] + 1)
                        parents.append((i, c2.trace.head))
                        queue.append(j)
                else:
                    j = len(nodes)
                    nodes.append(c2)
                    depths.append(depths[i] + 1)
                    parents.append((i, c2.trace.head))
                    queue.append(j)
                edges.append((i, label, j))
                if max_states is not None and len(nodes) > max_states:
                    truncated = True
                    break
    if pool is not None:
        pool.shutdown()
    return Graph(nodes, edges, depths, parents, truncated)


# --- weak successors -------------------------------------------------------------


def _cached_steps(system, cfg):
    """Successor list shared between configurations with equal summaries.
    Sound because the summary determines the applicable rules (a tested
    lemma); the representatives' traces may differ, which only shows in
    bookkeeping fields of reported events."""
    cache = getattr(system, "_steps_by_summary", None)
    if cache is None:
        cache = {}
        object.__setattr__(system, "_steps_by_summary", cache)
    key = system.summary(cfg)
    hit = cache.get(key)
    if hit is None:
        hit = system.steps(cfg)
        cache[key] = hit
    return hit


def _silent_ball(system, cfg, budget: int) -> list[tuple[Any, tuple[Event, ...]]]:
    """Configurations reachable by at most budget silent steps, including cfg
    itself, in BFS order, deduplicated by summary."""
    cache = getattr(system, "_balls_by_summary", None)
    if cache is None:
        cache = {}
        object.__setattr__(system, "_balls_by_summary", cache)
    ball_key = (system.summary(cfg), budget)
    hit = cache.get(ball_key)
    if hit is not None:
        return hit
    out = [(cfg, ())]
    seen = {system.summary(cfg)}
    frontier = [(cfg, ())]
    for _ in range(budget):
        nxt = []
        for c, evs in frontier:
            for label, c2 in _cached_steps(system, c):
                if not label.is_silent:
                    continue
                key = system.summary(c2)
                if key in seen:
                    continue
                seen.add(key)
                item = (c2, evs + (c2.trace.head,))
                out.append(item)
                nxt.append(item)
        if not nxt:
            break
        frontier = nxt
    cache[ball_key] = out
    return out


def weak_matches(
    system,
    cfg,
    label: Label,
    tau_budget: int,
    accept: Callable[[Any], bool],
    first_only: bool = True,
) -> list[tuple[Any, tuple[Event, ...]]]:
    """Weak transitions cfg ==label==> cfg' with accept(cfg'), where the total
    number of silent steps is bounded by tau_budget.  Silent labels may be
    matched by zero steps."""
    results: list[tuple[Any, tuple[Event, ...]]] = []
    seen_landings = set()

    def emit(c2, evs) -> bool:
        key = system.summary(c2)
        if key in seen_landings:
            return False
        if accept(c2):
            seen_landings.add(key)
            results.append((c2, evs))
            return first_only
        return False

    ball = _silent_ball(system, cfg, tau_budget)
    if label.is_silent:
        for c1, evs in ball:
            if emit(c1, evs):
                return results
        return results

    want = label.obs_key()
    for c1, evs in ball:
        used = len(evs)
        for l2, c2 in _cached_steps(system, c1):
            if l2.obs_key() != want:
                continue
            mid_evs = evs + (c2.trace.head,)
            for c3, evs3 in _silent_ball(system, c2, tau_budget - used):
                if emit(c3, mid_evs + evs3):
                    return results
    return results


def weak_successors(system, cfg, label: Label | None, tau_budget: int) -> list:
    """All weak successors of cfg under the given label (None or a silent
    label meaning tau), deduplicated by summary."""
    lab = label if label is not None else Label.tau("dlvr", "")
    found = weak_matches(system, cfg, lab, tau_budget, lambda _: True, first_only=False)
    return [c for c, _ in found]


def attainable_query_values(system, cfg, r: ReplicaId, q: QueryId, tau_budget: int) -> list:
    """Query values weakly reachable at replica r (current value included)."""
    vals = []
    seen = set()
    for c1, _ in _silent_ball(system, cfg, tau_budget):
        v = system.query_value(c1, r, q)
        k = canon_key(v)
        if k not in seen:
            seen.add(k)
            vals.append(v)
    return sorted(vals, key=canon_key)


# --- deliverable / mergeable ------------------------------------------------------


def _deliverable_ordering(
    U: frozenset[Message],
    r: ReplicaId,
    buffer: frozenset,
    sent: frozenset[Message],
    consumed: frozenset[Message],
) -> tuple[Message, ...] | None:
    """A linearization of U deliverable at r: each element buffered for r and
    enabled once the previous prefix has been delivered."""
    for m in U:
        if (r, m) not in buffer:
            return None
    done: list[Message] = []
    have = set(consumed)
    remaining = set(U)
    while remaining:
        pick = None
        for m in sorted(remaining, key=lambda m: m.sort_key()):
            if m in have:
                return None  # would re-deliver
            if all(m2 in have for m2 in sent if happens_before(m2, m)):
                pick = m
                break
        if pick is None:
            return None
        done.append(pick)
        have.add(pick)
        remaining.remove(pick)
    return tuple(done)


def deliverable_check(
    U: Iterable[Message], r: ReplicaId, t: Trace, b: frozenset
) -> tuple[Message, ...] | None:
    """Spec surface over a raw trace and buffer."""
    from .core import delivered, sent

    return _deliverable_ordering(frozenset(U), r, b, sent(t), delivered(r, t))


def mergeable_check(C: Iterable, r: ReplicaId, b: frozenset) -> bool:
    """Every state in C is buffered for r (compared by payload value)."""
    at_r = {canon_key(m.payload) for r2, m in b if r2 == r}
    return all(canon_key(s) in at_r for s in C)


def downclose(U: Iterable[Message], sent: frozenset[Message]) -> frozenset[Message]:
    out: set[Message] = set()
    for m in U:
        out |= downset_of(m, sent)
    return frozenset(out)


# --- relations --------------------------------------------------------------------


class Relation:
    """Membership test for one of the candidate relations, with the first
    failing clause reported for diagnostics."""

    def __init__(self, rel_id: str, paired: PairedSystem):
        sort_a, sort_b, direction = RELATION_SORTS[rel_id]
        if paired.direction != direction:
            raise ValueError(f"relation {rel_id} pairs with direction {direction}")
        self.id = rel_id
        self.paired = paired
        self.a_side = sort_a
        self.b_side = sort_b
        self.roster = paired.host.roster
        self._downsets: dict = {}
        self._unions: dict = {}

    def clause(self, a, b) -> str | None:
        if self.id == "R1":
            return self._r1(a, b)
        if self.id == "R2":
            return self._r2(a, b)
        if self.id == "Q1":
            return self._q1(a, b)
        if self.id == "Q2":
            return self._q2(a, b)
        return self._bowtie(a, b)

    def holds(self, a, b) -> bool:
        return self.clause(a, b) is None

    # helpers

    def _op_obj(self) -> OpObject:
        sys = self.paired.host if self.paired.direction == OP_TO_ST else self.paired.guest
        return sys.obj  # type: ignore[return-value]

    def _downset(self, m: Message, sent: frozenset[Message]) -> frozenset[Message]:
        key = (m, sent)
        cached = self._downsets.get(key)
        if cached is None:
            cached = downset_of(m, sent)
            self._downsets[key] = cached
        return cached

    def _union_sent(self, st_c: StConfig) -> frozenset[Message]:
        cached = self._unions.get(st_c.sent_values)
        if cached is None:
            cached = frozenset().union(*st_c.sent_values) if st_c.sent_values else frozenset()
            self._unions[st_c.sent_values] = cached
        return cached

    # R1: op host simulated by message-set guest

    def _r1(self, op_c: OpConfig, st_c: StConfig) -> str | None:
        if op_c.sent != self._union_sent(st_c):
            return "sent-agreement"
        for r in self.roster:
            if op_c.delivered[r] != st_c.states[r]:
                return "delivered-agreement"
        obj = self._op_obj()
        for r in self.roster:
            if op_c.states[r] != interp(st_c.states[r], obj):
                return "state-agreement"
        buffered: dict[ReplicaId, set] = {}
        for r, m in st_c.buffer:
            buffered.setdefault(r, set()).add(m.payload)
        for r, m in op_c.buffer:
            ds = self._downset(m, op_c.sent)
            if ds not in buffered.get(r, ()):
                return "buffer-downset"
        return None

    # R2: message-set guest simulated by op host

    def _r2(self, st_c: StConfig, op_c: OpConfig) -> str | None:
        # Inclusion, not equality: the update matcher makes the op side send
        # first, and only the inclusion is needed for (and preserved by) the
        # delivery argument.
        if not self._union_sent(st_c) <= op_c.sent:
            return "sent-agreement"
        for r in self.roster:
            if st_c.states[r] != op_c.delivered[r]:
                return "delivered-agreement"
        obj = self._op_obj()
        for r in self.roster:
            if interp(st_c.states[r], obj) != op_c.states[r]:
                return "state-agreement"
        for r, m in st_c.buffer:
            if not self._deliverable_merge_exists(m.payload, r, op_c):
                return "buffer-deliverable"
        return None

    def _deliverable_merge_exists(self, H: frozenset, r: ReplicaId, op_c: OpConfig) -> bool:
        # There must be a deliverable set whose delivery simulates merging H:
        # Delivered(r) ∪ U = Delivered(r) ∪ H.  (A deliverable set is disjoint
        # from Delivered(r), so effectively U is the undelivered part of H.)
        have = op_c.delivered[r]
        target = have | H
        candidates = sorted(
            (m for r2, m in op_c.buffer if r2 == r and m in H),
            key=lambda m: m.sort_key(),
        )
        for U in subsets_smallest_first(candidates):
            Uf = frozenset(U)
            if have | Uf != target:
                continue
            if (
                _deliverable_ordering(Uf, r, op_c.buffer, op_c.sent, have)
                is not None
            ):
                return True
        return False

    # Q1: state-based host simulated by join-guest

    def _q1(self, st_c: StConfig, op_c: OpConfig) -> str | None:
        for r in self.roster:
            if st_c.states[r] != op_c.states[r]:
                return "state-agreement"
        obj: StObject = self.paired.host.obj  # type: ignore[assignment]
        payloads: dict[ReplicaId, list] = {}
        for r, m in sorted(op_c.buffer, key=lambda rm: (rm[0], rm[1].sort_key())):
            payloads.setdefault(r, []).append(m.payload)
        for r, m in st_c.buffer:
            target = obj.join(st_c.states[r], m.payload)
            if target == st_c.states[r]:
                continue
            base = op_c.states[r]
            found = False
            for C in subsets_smallest_first(payloads.get(r, [])):
                acc = base
                for s in C:
                    acc = obj.join(acc, s)
                if acc == target:
                    found = True
                    break
            if not found:
                return "buffer-mergeable"
        return None

    # Q2: join-guest simulated by state-based host (identity matching)

    def _q2(self, op_c: OpConfig, st_c: StConfig) -> str | None:
        for r in self.roster:
            if op_c.states[r] != st_c.states[r]:
                return "state-agreement"
        op_vals = frozenset((r, canon_key(m.payload)) for r, m in op_c.buffer)
        st_vals = frozenset((r, canon_key(m.payload)) for r, m in st_c.buffer)
        if op_vals != st_vals:
            return "buffer-agreement"
        return None

    # bowtie: R1 with the buffer clause made two-way.  The forward direction
    # keeps the exact pending-downset form; the converse asks that delivering
    # any pending state is matchable, which tolerates stale entries whose
    # content was already delivered out of order.

    def _bowtie(self, op_c: OpConfig, st_c: StConfig) -> str | None:
        bad = self._r1(op_c, st_c)
        if bad is not None:
            return bad
        for r, m in st_c.buffer:
            if not self._deliverable_merge_exists(m.payload, r, op_c):
                return "buffer-deliverable-converse"
        return None


def in_relation(paired: PairedSystem, rel_id: str, host_cfg, guest_cfg) -> bool:
    """Spec surface: membership with arguments given as (host, guest)."""
    rel = Relation(rel_id, paired)
    if rel.a_side == "host":
        return rel.holds(host_cfg, guest_cfg)
    return rel.holds(guest_cfg, host_cfg)


# --- constructive matchers ---------------------------------------------------------


def _op_deliver_chain(D, cfg, r: ReplicaId, wanted) -> list | None:
    """Deliver exactly `wanted` at r through enabled OpDeliver steps,
    smallest-first among those currently enabled."""
    chain: list = []
    cur = cfg
    remaining = set(wanted)
    while remaining:
        step = None
        for m in sorted(remaining, key=lambda m: m.sort_key()):
            step = op_mk_deliver(D.obj, cur, r, m, D.discipline)
            if step is not None:
                break
        if step is None:
            return None
        chain.append(step)
        cur = step[1]
        remaining.discard(cur.trace.head.input.message)
    return chain


def _st_deliver_of_payload(D, cfg, r: ReplicaId, payload) -> list | None:
    for r2, m in sorted(cfg.buffer, key=lambda rm: (rm[0], rm[1].sort_key())):
        if r2 == r and m.payload == payload:
            step = st_mk_deliver(D.obj, cfg, r, m)
            return [step] if step is not None else None
    return None


def constructive_match(
    rel: Relation,
    defender_system,
    a_cfg,
    label: Label,
    a2_cfg,
    b_cfg,
) -> list | None:
    """The canonical defender moves for each attacker step; returns the
    chain of defender steps or None when the recipe does not apply."""
    rel_id = rel.id
    event = a2_cfg.trace.head
    r = label.replica
    D = defender_system

    if label.kind == "update":
        if not D.repeat_ops and (r, label.op) in b_cfg.used_ops:
            return None
        if rel_id in ("R2", "Q1"):
            return [op_mk_update(D.obj, D.roster, b_cfg, r, label.op)]
        if rel_id == "bowtie" and D.mode == ATOMIC_BROADCAST:
            return [st_mk_update(D.obj, D.roster, b_cfg, r, label.op, D.mode)]
        # R1/Q2 (and bowtie in separate mode): update then send
        step1 = st_mk_update(D.obj, D.roster, b_cfg, r, label.op, D.mode)
        step2 = st_mk_send(D.roster, step1[1], r)
        return [step1, step2]

    if label.kind == "query":
        if D.kind == "op":
            step = op_mk_query(D.obj, b_cfg, r, label.query)
        else:
            step = st_mk_query(D.obj, b_cfg, r, label.query)
        return [step] if step[0].obs_key() == label.obs_key() else None

    # silent attacker steps
    if event.output.kind == "send" and event.input.kind == "none":
        # StSend matched by the reflexive step (R2/Q1)
        return []

    if event.input.kind != "dlvr":
        return None
    m = event.input.message

    if rel_id in ("R1", "bowtie"):
        return _st_deliver_of_payload(D, b_cfg, r, downset_of(m, a_cfg.sent))

    if rel_id == "R2":
        return _op_deliver_chain(D, b_cfg, r, set(m.payload) - set(b_cfg.delivered[r]))

    if rel_id == "Q1":
        obj: StObject = rel.paired.host.obj  # type: ignore[assignment]
        target = obj.join(a_cfg.states[r], m.payload)
        if target == b_cfg.states[r]:
            return []
        chain: list = []
        cur = b_cfg
        while True:
            step = None
            for r2, m2 in sorted(cur.buffer, key=lambda rm: (rm[0], rm[1].sort_key())):
                if r2 != r or obj.join(target, m2.payload) != target:
                    continue
                step = op_mk_deliver(D.obj, cur, r, m2, D.discipline)
                if step is not None:
                    break
            if step is None:
                return None
            chain.append(step)
            cur = step[1]
            if cur.states[r] == target:
                return chain

    if rel_id == "Q2":
        return _st_deliver_of_payload(D, b_cfg, r, m.payload)

    return None


# bowtie obligations in the guest-to-host direction reuse the R2 recipes
def _bowtie_guest_match(defender_system, defender_cfg, label, attacker_post):
    event = attacker_post.trace.head
    r = label.replica
    D = defender_system
    if label.kind == "update":
        if not D.repeat_ops and (r, label.op) in defender_cfg.used_ops:
            return None
        return [op_mk_update(D.obj, D.roster, defender_cfg, r, label.op)]
    if label.kind == "query":
        step = op_mk_query(D.obj, defender_cfg, r, label.query)
        return [step] if step[0].obs_key() == label.obs_key() else None
    if event.input.kind == "dlvr":
        H = event.input.message.payload
        wanted = set(H) - set(defender_cfg.delivered[r])
        return _op_deliver_chain(D, defender_cfg, r, wanted)
    if event.output.kind == "send":
        return []
    return None


# --- weak simulation check ----------------------------------------------------------


def _evidence(attacker_system, a2_cfg, defender_system, b_cfg, label: Label, tau_budget: int):
    """Query-level explanation of an unmatched step: the value now observable
    on the attacker side versus what the defender could still offer."""
    r = label.replica
    if r is None:
        return None
    queries = (label.query,) if label.kind == "query" else attacker_system.obj.queries
    for q in queries:
        if q is None:
            continue
        attacker_value = attacker_system.query_value(a2_cfg, r, q)
        options = attainable_query_values(defender_system, b_cfg, r, q, tau_budget)
        if any(canon_key(v) == canon_key(attacker_value) for v in options):
            continue
        current = defender_system.query_value(b_cfg, r, q)
        return {
            "replica": r,
            "query": q,
            "attacker_value": render(attacker_value),
            "defender_current": render(current),
            "defender_options": [
                render(v) for v in options if canon_key(v) != canon_key(current)
            ],
        }
    return None


@dataclass
class SimCounterexample:
    a_events: tuple[Event, ...]
    b_events: tuple[Event, ...]
    unmatched_label: Label
    unmatched_event: Event | None
    clause: str | None
    evidence: dict | None

    def to_witness(self, a_name: str, b_name: str) -> dict:
        out = {
            a_name + "_events": [render_event(e) for e in self.a_events],
            b_name + "_events": [render_event(e) for e in self.b_events],
            "unmatched": {
                "side": a_name,
                "label": render_label(self.unmatched_label),
                "event": render_event(self.unmatched_event)
                if self.unmatched_event
                else None,
            },
        }
        if self.clause:
            out["failed_clause"] = self.clause
        if self.evidence:
            out["distinguishing_query"] = self.evidence
        return out


def default_tau_budget(paired: PairedSystem) -> int:
    return 2 * len(paired.host.roster)


def check_weak_simulation(
    paired: PairedSystem,
    rel_id: str | None = None,
    which: str = HOST_BY_GUEST,
    step_bound: int = 8,
    tau_budget: int | None = None,
    max_pairs: int = 2_000_000,
    audit_matchers: bool = False,
) -> Verdict:
    """Check that the candidate relation is a weak simulation on all related
    pairs co-reachable within step_bound attacker steps."""
    if which not in (HOST_BY_GUEST, GUEST_BY_HOST):
        raise ValueError(f"unknown direction {which!r}")
    if rel_id is None:
        if which == HOST_BY_GUEST:
            rel_id = "R1" if paired.direction == OP_TO_ST else "Q1"
        else:
            rel_id = "R2" if paired.direction == OP_TO_ST else "Q2"
    rel = Relation(rel_id, paired)
    a_name = rel.a_side
    b_name = rel.b_side
    expect_a = "host" if which == HOST_BY_GUEST else "guest"
    if a_name != expect_a:
        raise ValueError(f"relation {rel_id} checks the {a_name}-by-{b_name} direction")
    A = paired.side(a_name)
    B = paired.side(b_name)
    if tau_budget is None:
        tau_budget = default_tau_budget(paired)

    bounds = {"step_bound": step_bound, "tau_budget": tau_budget, "relation": rel_id}
    a0, b0 = A.init(), B.init()
    stats = {
        "pairs": 0,
        "obligations": 0,
        "max_depth": 0,
        "matcher_matched": 0,
        "fallback_matched": 0,
        "matcher_fallback_disagreements": 0,
    }
    clause0 = rel.clause(a0, b0)
    if clause0 is not None:
        return Verdict(
            COUNTEREXAMPLE,
            stats,
            bounds,
            witness={"failed_clause": clause0, "at": "initial-configurations"},
            detail="initial configurations are not related",
        )

    key0 = (A.summary(a0), B.summary(b0))
    visited = {key0}
    parents: dict = {key0: None}
    queue = deque([(a0, b0, 0, key0)])
    stats["pairs"] = 1

    def path_events(key) -> tuple[tuple[Event, ...], tuple[Event, ...]]:
        a_evs: list[Event] = []
        b_evs: list[Event] = []
        while parents[key] is not None:
            key, a_e, b_es = parents[key]
            a_evs.append(a_e)
            b_evs.extend(reversed(b_es))
        a_evs.reverse()
        b_evs.reverse()
        return tuple(a_evs), tuple(b_evs)

    while queue:
        a, b, depth, key = queue.popleft()
        stats["max_depth"] = max(stats["max_depth"], depth)
        if depth >= step_bound:
            continue
        for label, a2 in A.steps(a):
            stats["obligations"] += 1
            landing = None
            chain_events: tuple[Event, ...] = ()
            chain = constructive_match(rel, B, a, label, a2, b)
            if chain is not None:
                cand = chain[-1][1] if chain else b
                if rel.clause(a2, cand) is None:
                    landing = cand
                    chain_events = tuple(c.trace.head for _, c in chain)
                    stats["matcher_matched"] += 1
                    if audit_matchers:
                        found = weak_matches(
                            B, b, label, tau_budget, lambda bb: rel.holds(a2, bb)
                        )
                        if not found:
                            stats["matcher_fallback_disagreements"] += 1
            if landing is None:
                found = weak_matches(
                    B, b, label, tau_budget, lambda bb: rel.holds(a2, bb)
                )
                if found:
                    landing, chain_events = found[0]
                    stats["fallback_matched"] += 1
                else:
                    a_evs, b_evs = path_events(key)
                    near = chain[-1][1] if chain else b
                    cex = SimCounterexample(
                        a_events=a_evs + (a2.trace.head,),
                        b_events=b_evs,
                        unmatched_label=label,
                        unmatched_event=a2.trace.head,
                        clause=rel.clause(a2, near),
                        evidence=_evidence(A, a2, B, b, label, tau_budget),
                    )
                    return Verdict(
                        COUNTEREXAMPLE,
                        stats,
                        bounds,
                        witness=cex.to_witness(a_name, b_name),
                        raw=cex,
                        detail=f"unmatched {a_name} step",
                    )
            key2 = (A.summary(a2), B.summary(landing))
            if key2 not in visited:
                visited.add(key2)
                parents[key2] = (key, a2.trace.head, chain_events)
                stats["pairs"] += 1
                queue.append((a2, landing, depth + 1, key2))
                if stats["pairs"] > max_pairs:
                    return Verdict(
                        BOUND_EXHAUSTED,
                        stats,
                        bounds,
                        detail="pair budget exceeded",
                    )
    total = stats["matcher_matched"] + stats["fallback_matched"]
    stats["matcher_fraction"] = (
        stats["matcher_matched"] / total if total else 1.0
    )
    return Verdict(PASS, stats, bounds)


# --- weak bisimulation ---------------------------------------------------------------


@dataclass
class GameWitness:
    side: str                      # which system attacked: "host" | "guest"
    label: Label
    attacker_event: Event
    attacker_cfg: Any
    defender_cfg: Any
    responses: list                # [(events, sub GameWitness)]
    evidence: dict | None
    depth_needed: int


def _bisim_game(A, B, a0, b0, depth: int, tau_budget: int) -> GameWitness | None:
    """Bounded weak-bisimilarity game between the two systems.  Searched by
    iterative deepening on the attack depth, so the first witness found is a
    minimal distinguishing experiment (host-side attacks preferred on ties);
    in particular no attack on the spine can be an idle self-loop."""
    memo: dict = {}

    def dist(a, b, d: int) -> GameWitness | None:
        key = (A.summary(a), B.summary(b))
        hit = memo.get(key)
        if hit is not None:
            kind, val = hit
            if kind == "sep" and val.depth_needed <= d:
                return val
            if kind == "nosep" and val >= d:
                return None
        if d <= 0:
            return None
        for side, X, x, Y, y in (("host", A, a, B, b), ("guest", B, b, A, a)):
            for label, x2 in _cached_steps(X, x):
                responses = weak_matches(
                    Y, y, label, tau_budget, lambda _: True, first_only=False
                )
                subs = []
                survived = False
                needed = 1
                for y2, evs in responses:
                    na, nb = (x2, y2) if side == "host" else (y2, x2)
                    w = dist(na, nb, d - 1)
                    if w is None:
                        survived = True
                        break
                    subs.append((evs, w))
                    needed = max(needed, w.depth_needed + 1)
                if survived:
                    continue
                evidence = None
                if label.kind == "query" and not responses:
                    evidence = _evidence(X, x2, Y, y, label, tau_budget)
                witness = GameWitness(
                    side, label, x2.trace.head, x2, y, subs, evidence, needed
                )
                memo[key] = ("sep", witness)
                return witness
        prev = memo.get(key)
        if prev is None or (prev[0] == "nosep" and prev[1] < d):
            memo[key] = ("nosep", d)
        return None

    for d in range(1, depth + 1):
        w = dist(a0, b0, d)
        if w is not None:
            return w
    return None


def _witness_spine(w: GameWitness) -> tuple[list[tuple[str, Event, tuple[Event, ...]]], GameWitness]:
    """First-response spine of a game witness, ending at the losing leaf."""
    spine = []
    node = w
    while True:
        if not node.responses:
            spine.append((node.side, node.attacker_event, ()))
            return spine, node
        evs, sub = node.responses[0]
        spine.append((node.side, node.attacker_event, evs))
        node = sub


def check_weak_bisimulation(
    paired: PairedSystem,
    step_bound: int = 8,
    tau_budget: int | None = None,
    max_pairs: int = 2_000_000,
) -> Verdict:
    """Check the bowtie relation in both directions; if it fails, search for a
    genuine behavioral distinction to report."""
    if paired.direction != OP_TO_ST:
        raise ValueError("bisimulation check pairs an op host with a message-set guest")
    rel = Relation("bowtie", paired)
    A, B = paired.host, paired.guest
    if tau_budget is None:
        tau_budget = default_tau_budget(paired)
    bounds = {"step_bound": step_bound, "tau_budget": tau_budget, "relation": "bowtie"}
    a0, b0 = A.init(), B.init()
    stats = {"pairs": 0, "obligations": 0, "max_depth": 0, "matcher_matched": 0, "fallback_matched": 0}

    failure = None
    if rel.clause(a0, b0) is not None:
        failure = ("initial-configurations", rel.clause(a0, b0))
    else:
        key0 = (A.summary(a0), B.summary(b0))
        visited = {key0}
        queue = deque([(a0, b0, 0)])
        stats["pairs"] = 1
        while queue and failure is None:
            a, b, depth = queue.popleft()
            stats["max_depth"] = max(stats["max_depth"], depth)
            if depth >= step_bound:
                continue
            # host obligations
            for label, a2 in A.steps(a):
                stats["obligations"] += 1
                landing = None
                chain = constructive_match(rel, B, a, label, a2, b)
                if chain is not None:
                    cand = chain[-1][1] if chain else b
                    if rel.clause(a2, cand) is None:
                        landing = cand
                        stats["matcher_matched"] += 1
                if landing is None:
                    found = weak_matches(
                        B, b, label, tau_budget, lambda bb: rel.holds(a2, bb)
                    )
                    if found:
                        landing = found[0][0]
                        stats["fallback_matched"] += 1
                    else:
                        failure = ("host-step-unmatched", rel.clause(a2, b))
                        break
                key2 = (A.summary(a2), B.summary(landing))
                if key2 not in visited:
                    visited.add(key2)
                    stats["pairs"] += 1
                    queue.append((a2, landing, depth + 1))
            if failure is not None:
                break
            # guest obligations
            for label, b2 in B.steps(b):
                stats["obligations"] += 1
                landing = None
                chain = _bowtie_guest_match(A, a, label, b2)
                if chain is not None:
                    cand = chain[-1][1] if chain else a
                    if rel.clause(cand, b2) is None:
                        landing = cand
                        stats["matcher_matched"] += 1
                if landing is None:
                    found = weak_matches(
                        A, a, label, tau_budget, lambda aa: rel.holds(aa, b2)
                    )
                    if found:
                        landing = found[0][0]
                        stats["fallback_matched"] += 1
                    else:
                        failure = ("guest-step-unmatched", rel.clause(a, b2))
                        break
                key2 = (A.summary(landing), B.summary(b2))
                if key2 not in visited:
                    visited.add(key2)
                    stats["pairs"] += 1
                    queue.append((landing, b2, depth + 1))
            if stats["pairs"] > max_pairs:
                return Verdict(BOUND_EXHAUSTED, stats, bounds, detail="pair budget exceeded")

    if failure is None:
        total = stats["matcher_matched"] + stats["fallback_matched"]
        stats["matcher_fraction"] = stats["matcher_matched"] / total if total else 1.0
        return Verdict(PASS, stats, bounds)

    game = _bisim_game(A, B, a0, b0, step_bound, tau_budget)
    if game is None:
        return Verdict(
            COUNTEREXAMPLE,
            stats,
            bounds,
            witness={"failed_clause": failure[1], "at": failure[0]},
            detail="relation fails at bound; no behavioral distinction found at bound",
        )
    spine, leaf = _witness_spine(game)
    host_events: list[Event] = []
    guest_events: list[Event] = []
    play = []
    for side, attacker_event, defender_events in spine:
        (host_events if side == "host" else guest_events).append(attacker_event)
        (guest_events if side == "host" else host_events).extend(defender_events)
        play.append(
            {
                "attacker": side,
                "event": render_event(attacker_event),
                "response": [render_event(e) for e in defender_events],
            }
        )
    evidence = leaf.evidence
    if evidence is None and leaf.label.kind == "query":
        X = A if leaf.side == "host" else B
        Y = B if leaf.side == "host" else A
        evidence = _evidence(X, leaf.attacker_cfg, Y, leaf.defender_cfg, leaf.label, tau_budget)
    witness = {
        "host_events": [render_event(e) for e in host_events],
        "guest_events": [render_event(e) for e in guest_events],
        "play": play,
        "unmatched": {
            "side": leaf.side,
            "label": render_label(leaf.label),
            "event": render_event(leaf.attacker_event),
        },
        "failed_clause": failure[1],
    }
    if evidence:
        witness["distinguishing_query"] = evidence
    return Verdict(
        COUNTEREXAMPLE,
        stats,
        bounds,
        witness=witness,
        raw=game,
        detail="initial configurations are not weakly bisimilar at bound",
    )


# --- weak traces ------------------------------------------------------------------


def weak_traces(system, max_len: int, step_bound: int) -> frozenset[tuple]:
    """All observable label sequences of length <= max_len realizable within
    step_bound raw steps.

    Computed over the summary-quotient graph with memoized suffix sets; a node
    is unexpanded only at graph depth step_bound, where no raw budget can
    remain on any path, so the quotient loses no traces."""
    if max_len > step_bound:
        raise ValueError("weak_traces: max_len exceeds step_bound")
    graph = explore(system, step_bound)
    adj: dict[int, list] = {}
    for i, label, j in graph.edges:
        adj.setdefault(i, []).append((label.obs_key(), j))
    memo: dict = {}

    def suffixes(i: int, budget: int) -> frozenset:
        key = (i, budget)
        hit = memo.get(key)
        if hit is not None:
            return hit
        out = {()}
        if budget > 0:
            for obs, j in adj.get(i, ()):
                sub = suffixes(j, budget - 1)
                if obs is None:
                    out |= sub
                elif max_len > 0:
                    out.add((obs,))
                    for t in sub:
                        if len(t) < max_len:
                            out.add((obs,) + t)
        result = frozenset(out)
        memo[key] = result
        return result

    return suffixes(0, step_bound)


def _render_trace(tr: tuple) -> list:
    out = []
    for obs in tr:
        if obs[0] == "update":
            out.append({"kind": "update", "replica": obs[1], "op": list(obs[2])})
        else:
            out.append(
                {"kind": "query", "replica": obs[1], "query": obs[2], "value": render(obs[3])}
            )
    return out


def check_trace_equivalence(
    paired: PairedSystem, max_len: int = 3, step_bound: int = 10
) -> Verdict:
    """Weak trace sets of host and guest initial configurations must agree."""
    bounds = {"max_trace_len": max_len, "step_bound": step_bound}
    th = weak_traces(paired.host, max_len, step_bound)
    tg = weak_traces(paired.guest, max_len, step_bound)
    stats = {"host_traces": len(th), "guest_traces": len(tg)}
    if th == tg:
        return Verdict(PASS, stats, bounds)
    diff = sorted(th.symmetric_difference(tg), key=canon_key)
    tr = diff[0]
    side = "host" if tr in th else "guest"
    return Verdict(
        COUNTEREXAMPLE,
        stats,
        bounds,
        witness={"trace": _render_trace(tr), "only_in": side},
        raw=(tr, side),
        detail=f"trace realizable only by the {side}",
    )


# --- convergence and causal sweeps ---------------------------------------------------


def check_strong_convergence(
    system,
    step_bound: int = 8,
    max_states: int | None = None,
    workers: int = 1,
    prune: bool = True,
) -> Verdict:
    """On a history-augmented object: replicas with equal history components
    must report equal value components, at every reachable configuration."""
    graph = explore(system, step_bound, prune=prune, max_states=max_states, workers=workers)
    bounds = {"step_bound": step_bound}
    stats = dict(graph.stats)
    probe = system.query_value(graph.nodes[0], system.roster[0], system.obj.queries[0])
    if not (isinstance(probe, tuple) and len(probe) == 2):
        raise ValueError("strong-convergence sweep requires a history-augmented object")
    checked = 0
    for idx, cfg in enumerate(graph.nodes):
        for q in system.obj.queries:
            seen: dict = {}
            for r in system.roster:
                v, h = system.query_value(cfg, r, q)
                checked += 1
                other = seen.get(h)
                if other is not None and other[1] != v:
                    witness = {
                        "events": [render_event(e) for e in graph.path_events(idx)],
                        "replicas": [other[0], r],
                        "query": q,
                        "values": [render(other[1]), render(v)],
                        "history": render(h),
                    }
                    stats["checked"] = checked
                    return Verdict(
                        COUNTEREXAMPLE, stats, bounds, witness=witness,
                        detail="replicas with equal histories disagree",
                    )
                seen.setdefault(h, (r, v))
    stats["checked"] = checked
    if graph.truncated:
        return Verdict(BOUND_EXHAUSTED, stats, bounds, detail="state budget exceeded")
    return Verdict(PASS, stats, bounds)


def check_causal_safety(
    system, step_bound: int = 8, max_states: int | None = None, prune: bool = True
) -> Verdict:
    """Every reachable trace satisfies causal delivery order.  The sweep is
    breadth-first and stops at the first violating configuration."""
    from .core import satisfies_causal_delivery

    if system.kind != "op":
        raise ValueError("causal safety sweep runs on an op-based system")
    bounds = {"step_bound": step_bound, "discipline": system.discipline}
    init = system.init()
    seen = {system.summary(init)}
    queue = deque([(init, 0)])
    states = edges = 0
    truncated = False
    while queue:
        cfg, d = queue.popleft()
        states += 1
        # Only the newest event can introduce a violation, but the check is
        # the full pairwise definition for fidelity.
        if not satisfies_causal_delivery(cfg.trace):
            return Verdict(
                COUNTEREXAMPLE,
                {"states": states, "edges": edges},
                bounds,
                witness={"events": [render_event(e) for e in cfg.trace.events()]},
                raw=cfg,
                detail="reachable trace violates causal delivery order",
            )
        if d >= step_bound:
            continue
        for _, c2 in system.steps(cfg):
            edges += 1
            if prune:
                key = system.summary(c2)
                if key in seen:
                    continue
                seen.add(key)
            queue.append((c2, d + 1))
        if max_states is not None and states > max_states:
            truncated = True
            break
    stats = {"states": states, "edges": edges}
    if truncated:
        return Verdict(BOUND_EXHAUSTED, stats, bounds, detail="state budget exceeded")
    return Verdict(PASS, stats, bounds)


def check_commutation(
    system,
    step_bound: int = 8,
    max_states: int | None = None,
    workers: int = 1,
    prune: bool = True,
) -> Verdict:
    """Concurrent buffered messages commute at every explored configuration."""
    if system.kind != "op":
        raise ValueError("commutation sweep runs on an op-based system")
    graph = explore(system, step_bound, prune=prune, max_states=max_states, workers=workers)
    bounds = {"step_bound": step_bound}
    report = check_concurrent_commutation(system.obj, graph.nodes)
    stats = dict(graph.stats)
    stats["pairs_checked"] = report.pairs_checked
    if report.ok:
        if graph.truncated:
            return Verdict(BOUND_EXHAUSTED, stats, bounds, detail="state budget exceeded")
        return Verdict(PASS, stats, bounds)
    r, m1, m2, one, two = report.violations[0]
    return Verdict(
        COUNTEREXAMPLE,
        stats,
        bounds,
        witness={
            "replica": r,
            "messages": [render(m1), render(m2)],
            "results": [render(one), render(two)],
        },
        detail="concurrent effects fail to commute",
    )


# --- witness replay -------------------------------------------------------------------


def replay_simulation_counterexample(
    paired: PairedSystem, rel_id: str, which: str, cex: SimCounterexample, tau_budget: int
) -> bool:
    """Re-execute a counterexample's paths from the initial configurations and
    confirm the reported obligation still fails."""
    rel = Relation(rel_id, paired)
    A = paired.side(rel.a_side)
    B = paired.side(rel.b_side)
    a = A.replay(cex.a_events[:-1])
    b = B.replay(cex.b_events)
    if rel.clause(a, b) is not None:
        return False
    steps = [(l, c) for l, c in A.steps(a) if c.trace.head == cex.a_events[-1]]
    if len(steps) != 1:
        return False
    label, a2 = steps[0]
    found = weak_matches(B, b, label, tau_budget, lambda bb: rel.holds(a2, bb))
    return not found
