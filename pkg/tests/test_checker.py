from __future__ import annotations

import json

from crdt_emu.checker import (
    GUEST_BY_HOST,
    HOST_BY_GUEST,
    PairedSystem,
    Relation,
    check_causal_safety,
    check_commutation,
    check_strong_convergence,
    check_trace_equivalence,
    check_weak_bisimulation,
    check_weak_simulation,
    deliverable_check,
    explore,
    in_relation,
    mergeable_check,
    replay_simulation_counterexample,
    weak_successors,
    weak_traces,
)
from crdt_emu.core import Event, Input, Label, Output, TRACE_EMPTY
from crdt_emu.emulation import op_to_st, st_to_op
from crdt_emu.objects import augment_history_op, break_query, gcounter_st, gset_op, gset_st
from crdt_emu.opsem import RELIABLE_ONLY, OpSystem
from crdt_emu.stsem import ATOMIC_BROADCAST, StSystem
from conftest import msg

import pytest

ROSTER2 = ("r1", "r2")


def paired_gset(values=(5, 42), roster=ROSTER2, discipline="causal", mode="separate-send"):
    obj = gset_op(values)
    host = OpSystem(obj, roster, discipline=discipline)
    guest = StSystem(op_to_st(obj), roster, mode=mode)
    return PairedSystem(host=host, guest=guest, direction="op-to-st")


def paired_gcounter(roster=ROSTER2):
    obj = gcounter_st()
    host = StSystem(obj, roster)
    guest = OpSystem(st_to_op(obj), roster)
    return PairedSystem(host=host, guest=guest, direction="st-to-op")


# --- explore -------------------------------------------------------------------


def test_explore_depth_zero():
    p = paired_gset()
    graph = explore(p.host, 0)
    assert len(graph.nodes) == 1
    assert not graph.edges


def test_explore_edge_count_matches_successors_at_depth_one():
    p = paired_gset()
    graph = explore(p.host, 1)
    assert len(graph.edges) == len(p.host.steps(p.host.init()))


def test_explore_contains_ex_2_4_prefix():
    p = paired_gset()
    graph = explore(p.host, 2)
    states = {cfg.states["r1"] for cfg in graph.nodes}
    assert frozenset() in states
    assert frozenset({5}) in states
    assert frozenset({5, 42}) in states


def test_explore_no_prune_is_a_tree():
    p = paired_gset((5,))
    pruned = explore(p.host, 3)
    tree = explore(p.host, 3, prune=False)
    assert len(tree.nodes) >= len(pruned.nodes)
    # every non-root tree node has exactly one parent
    assert all(tree.parents[i] is not None for i in range(1, len(tree.nodes)))


def test_summary_determines_successors():
    """The dedup summary is behavior-determining: configs with equal summaries
    have identical successor (label, summary) sets."""
    p = paired_gset((1, 2))
    for system in (p.host, p.guest):
        tree = explore(system, 4, prune=False)
        by_summary = {}
        for cfg in tree.nodes:
            succ = frozenset(
                (l.obs_key() or ("tau",), system.summary(c2)) for l, c2 in system.steps(cfg)
            )
            key = system.summary(cfg)
            if key in by_summary:
                assert by_summary[key] == succ
            else:
                by_summary[key] = succ


# --- weak successors ---------------------------------------------------------------


def test_weak_tau_successors_include_self():
    p = paired_gset()
    init = p.host.init()
    succ = weak_successors(p.host, init, None, tau_budget=4)
    assert any(p.host.summary(c) == p.host.summary(init) for c in succ)


def test_weak_query_successor_after_silent_deliveries():
    p = paired_gset()
    guest = p.guest
    c = guest.init()
    for op in (("add", 5), ("add", 42)):
        c = next(c2 for l, c2 in guest.steps(c) if l.kind == "update" and l.op == op)
    c = next(c2 for l, c2 in guest.steps(c) if l.is_silent and l.silent == "send")
    hits = weak_successors(guest, c, Label.qry("r2", "sum", 47), tau_budget=4)
    assert hits


def test_no_weak_update_when_universe_exhausted():
    p = paired_gset((5,))
    host = p.host
    c = next(c2 for l, c2 in host.steps(host.init()) if l.kind == "update" and l.replica == "r1")
    hits = weak_successors(host, c, Label.update("r1", ("add", 5)), tau_budget=4)
    assert not hits


# --- relations ------------------------------------------------------------------------


def test_initial_configurations_related():
    p = paired_gset()
    assert in_relation(p, "R1", p.host.init(), p.guest.init())
    assert in_relation(p, "R2", p.host.init(), p.guest.init())
    q = paired_gcounter()
    assert in_relation(q, "Q1", q.host.init(), q.guest.init())
    assert in_relation(q, "Q2", q.host.init(), q.guest.init())


def test_ex_2_4_divergent_pair_violates_r1():
    """Op side with two buffered messages vs st side with one merged state,
    after r2 delivered only the first message."""
    p = paired_gset()
    host, guest = p.host, p.guest
    a = host.init()
    for op in (("add", 5), ("add", 42)):
        a = next(c2 for l, c2 in host.steps(a) if l.kind == "update" and l.op == op)
    a = next(  # deliver only m(5) at r2
        c2
        for l, c2 in host.steps(a)
        if l.is_silent and l.replica == "r2" and c2.trace.head.input.message.payload == 5
    )
    b = guest.init()
    for op in (("add", 5), ("add", 42)):
        b = next(c2 for l, c2 in guest.steps(b) if l.kind == "update" and l.op == op)
    b = next(c2 for l, c2 in guest.steps(b) if l.is_silent and l.silent == "send")
    rel = Relation("R1", p)
    assert rel.clause(a, b) is not None


def test_relation_direction_validation():
    p = paired_gset()
    with pytest.raises(ValueError):
        Relation("Q1", p)
    with pytest.raises(ValueError):
        check_weak_simulation(p, "R1", GUEST_BY_HOST, step_bound=2)


# --- deliverable / mergeable ------------------------------------------------------------


def test_deliverable_empty_set():
    assert deliverable_check((), "r1", TRACE_EMPTY, frozenset()) == ()


def test_deliverable_orders_downset_topologically():
    m1 = msg("r1", 1, {"r1": 1}, 1)
    m2 = msg("r2", 1, {"r1": 1, "r2": 1}, 2)
    t = TRACE_EMPTY
    t = t.append(Event("r1", Input.upd(("add", 1)), Output.send(m1)))
    t = t.append(Event("r2", Input.dlvr(m1), Output.none()))
    t = t.append(Event("r2", Input.upd(("add", 2)), Output.send(m2)))
    b = frozenset({("r3", m1), ("r3", m2)})
    assert deliverable_check({m1, m2}, "r3", t, b) == (m1, m2)
    # a message whose undelivered predecessor is outside U is not deliverable
    assert deliverable_check({m2}, "r3", t, b) is None


def test_mergeable_check_examples():
    s = frozenset({5})
    b = frozenset({("r1", msg("r2", 1, {}, s))})
    assert mergeable_check((), "r1", b)
    assert mergeable_check([s], "r1", b)
    assert not mergeable_check([frozenset({6})], "r1", b)


# --- weak simulation ---------------------------------------------------------------------


def test_r1_and_r2_pass_small():
    p = paired_gset()
    v1 = check_weak_simulation(p, "R1", HOST_BY_GUEST, step_bound=5)
    assert v1.passed and v1.stats["matcher_fraction"] == 1.0
    v2 = check_weak_simulation(p, "R2", GUEST_BY_HOST, step_bound=5)
    assert v2.passed


def test_q1_and_q2_pass_small():
    q = paired_gcounter()
    assert check_weak_simulation(q, "Q1", HOST_BY_GUEST, step_bound=5).passed
    assert check_weak_simulation(q, "Q2", GUEST_BY_HOST, step_bound=5).passed


def test_reliable_only_r1_counterexample_and_replay():
    p = paired_gset((1, 2), ("r1", "r2", "r3"), discipline=RELIABLE_ONLY)
    v = check_weak_simulation(p, "R1", HOST_BY_GUEST, step_bound=8)
    assert v.outcome == "counterexample"
    dq = v.witness["distinguishing_query"]
    assert dq["attacker_value"] == 2
    assert dq["defender_options"] == [1, 3]
    assert v.witness["failed_clause"] == "delivered-agreement"
    # the recorded witness replays to the same failing obligation
    assert replay_simulation_counterexample(p, "R1", HOST_BY_GUEST, v.raw, tau_budget=6)


def test_sim_counterexample_report_replays_from_rendered_events():
    """Round-trip: the JSON witness alone reproduces the failing obligation."""
    from crdt_emu.checker import Relation, weak_matches

    p = paired_gset((1, 2), ("r1", "r2", "r3"), discipline=RELIABLE_ONLY)
    v = check_weak_simulation(p, "R1", HOST_BY_GUEST, step_bound=8)
    host_events = _events(v.witness["host_events"])
    guest_events = _events(v.witness["guest_events"])
    a = p.host.replay(host_events[:-1])
    b = p.guest.replay(guest_events)
    rel = Relation("R1", p)
    assert rel.holds(a, b)
    steps = [(l, c) for l, c in p.host.steps(a) if c.trace.head == host_events[-1]]
    assert len(steps) == 1
    label, a2 = steps[0]
    assert not weak_matches(p.guest, b, label, 6, lambda bb: rel.holds(a2, bb))


def test_matcher_and_fallback_agree_when_audited():
    p = paired_gset((1, 2))
    v = check_weak_simulation(p, "R1", HOST_BY_GUEST, step_bound=4, audit_matchers=True)
    assert v.passed
    assert v.stats["matcher_fallback_disagreements"] == 0


def test_simulation_pass_implies_trace_inclusion():
    """Meta cross-check of the two checkers at a small bound."""
    p = paired_gset((1, 2))
    assert check_weak_simulation(p, "R1", HOST_BY_GUEST, step_bound=6).passed
    th = weak_traces(p.host, 2, 6)
    tg = weak_traces(p.guest, 2, 6)
    assert th <= tg


def test_simulation_deterministic_across_runs():
    verdicts = []
    for _ in range(2):
        p = paired_gset((1, 2), ("r1", "r2", "r3"), discipline=RELIABLE_ONLY)
        v = check_weak_simulation(p, "R1", HOST_BY_GUEST, step_bound=8)
        verdicts.append(json.dumps(v.to_report(), sort_keys=True))
    assert verdicts[0] == verdicts[1]


def test_bound_exhaustion_on_tiny_pair_budget():
    p = paired_gset((1, 2))
    v = check_weak_simulation(p, "R1", HOST_BY_GUEST, step_bound=6, max_pairs=3)
    assert v.outcome == "bound-exhausted"


# --- weak bisimulation -------------------------------------------------------------------


def test_bisim_atomic_passes():
    p = paired_gset(mode=ATOMIC_BROADCAST)
    v = check_weak_bisimulation(p, step_bound=6)
    assert v.passed


def test_bisim_separate_send_counterexample_values():
    p = paired_gset()
    v = check_weak_bisimulation(p, step_bound=8)
    assert v.outcome == "counterexample"
    dq = v.witness["distinguishing_query"]
    assert dq["attacker_value"] == 5
    assert dq["defender_options"] == [47]
    ops = [
        tuple(step["event"]["input"]["op"])
        for step in v.witness["play"]
        if step["event"]["input"]["kind"] == "upd"
    ]
    assert ("add", 5) in ops and ("add", 42) in ops


def test_bisim_trivial_single_replica_no_ops():
    obj = gset_op(())
    host = OpSystem(obj, ("r1",))
    guest = StSystem(op_to_st(obj), ("r1",))
    p = PairedSystem(host=host, guest=guest, direction="op-to-st")
    v = check_weak_bisimulation(p, step_bound=4)
    assert v.passed


def test_bisim_play_replays_on_both_systems():
    p = paired_gset()
    v = check_weak_bisimulation(p, step_bound=8)
    host_cfg = p.host.replay([e for e in _events(v.witness["host_events"])])
    guest_cfg = p.guest.replay([e for e in _events(v.witness["guest_events"])])
    assert host_cfg is not None and guest_cfg is not None


def _events(rendered):
    # reconstruct event objects by replaying the rendered forms through the
    # systems is heavier than needed; here we just re-parse identity fields
    from crdt_emu.core import Event, Input, Message, MessageId, Output, VectorClock

    def parse_msg(d):
        return Message(
            MessageId(d["origin"], d["seq"]),
            VectorClock.of(d["clock"]),
            _parse_payload(d["payload"]),
        )

    def _parse_payload(p):
        if isinstance(p, int):
            return p
        return frozenset(parse_msg(x) for x in p)

    out = []
    for e in rendered:
        i = e["input"]
        if i["kind"] == "upd":
            inp = Input.upd(tuple(i["op"]))
        elif i["kind"] == "qry":
            inp = Input.qry(i["query"])
        elif i["kind"] == "dlvr":
            inp = Input.dlvr(parse_msg(i["message"]))
        else:
            inp = Input.none()
        o = e["output"]
        if o["kind"] == "ret":
            outp = Output.ret(o["value"])
        elif o["kind"] == "send":
            outp = Output.send(parse_msg(o["message"]))
        else:
            outp = Output.none()
        out.append(Event(e["replica"], inp, outp))
    return out


# --- traces -----------------------------------------------------------------------


def test_weak_traces_len_zero():
    p = paired_gset()
    assert weak_traces(p.host, 0, 4) == {()}


def test_ex_2_5_causal_query_values_at_r3():
    """From the prefix where the first add causally precedes the second
    (r2 delivers before updating), r3 can observe sums 1 and 3 under causal
    delivery, and additionally 2 when the causal gate is dropped."""
    from crdt_emu.checker import attainable_query_values

    obj = gset_op((1, 2))

    def r3_values(discipline):
        system = OpSystem(obj, ("r1", "r2", "r3"), discipline=discipline)
        c = system.init()
        c = next(c2 for l, c2 in system.steps(c) if l.kind == "update" and l.replica == "r1")
        c = next(c2 for l, c2 in system.steps(c) if l.is_silent and l.replica == "r2")
        c = next(
            c2
            for l, c2 in system.steps(c)
            if l.kind == "update" and l.replica == "r2" and l.op == ("add", 2)
        )
        return set(attainable_query_values(system, c, "r3", "sum", tau_budget=6))

    assert r3_values("causal") == {0, 1, 3}
    assert r3_values(RELIABLE_ONLY) == {0, 1, 2, 3}


def test_trace_equivalence_pass_and_broken_guest():
    p = paired_gset((1, 2))
    assert check_trace_equivalence(p, max_len=3, step_bound=8).passed
    obj = gset_op((1, 2))
    broken = PairedSystem(
        host=OpSystem(obj, ROSTER2),
        guest=StSystem(break_query(op_to_st(obj)), ROSTER2),
        direction="op-to-st",
    )
    v = check_trace_equivalence(broken, max_len=3, step_bound=8)
    assert v.outcome == "counterexample"
    assert v.witness["trace"]


def test_trace_equivalence_st_to_op():
    q = paired_gcounter()
    assert check_trace_equivalence(q, max_len=3, step_bound=8).passed


# --- convergence and causal sweeps ------------------------------------------------------


def test_strong_convergence_requires_augmented_object():
    p = paired_gset()
    with pytest.raises(ValueError):
        check_strong_convergence(p.host, step_bound=2)


def test_strong_convergence_passes_on_augmented_pair():
    obj = augment_history_op(gset_op((5, 42)))
    host = OpSystem(obj, ROSTER2)
    guest = StSystem(op_to_st(obj), ROSTER2)
    assert check_strong_convergence(host, step_bound=5).passed
    assert check_strong_convergence(guest, step_bound=5).passed


def test_causal_safety_pass_and_fail():
    assert check_causal_safety(paired_gset((1, 2)).host, step_bound=5).passed
    bad = OpSystem(gset_op((1, 2)), ("r1", "r2", "r3"), discipline=RELIABLE_ONLY)
    v = check_causal_safety(bad, step_bound=8)
    assert v.outcome == "counterexample"
    assert v.witness["events"]


def test_causal_safety_depth_zero():
    assert check_causal_safety(paired_gset().host, step_bound=0).passed


def test_commutation_sweep():
    host = OpSystem(gset_op((1, 2)), ("r1", "r2", "r3"))
    v = check_commutation(host, step_bound=5)
    assert v.passed and v.stats["pairs_checked"] > 0
