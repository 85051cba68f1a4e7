"""Executable semantics for op-based and state-based CRDT systems, the
emulation transformers between them, and a bounded checker for the
simulation, trace, convergence and client-cotermination properties."""

from .core import (
    Event,
    FrozenDict,
    Input,
    Label,
    Message,
    MessageId,
    Ordering,
    Output,
    Trace,
    TRACE_EMPTY,
    VectorClock,
    bcast,
    delivered,
    downset,
    enabled,
    happens_before,
    satisfies_causal_delivery,
    sent,
    vc_compare,
)
from .objects import (
    OpObject,
    StObject,
    augment_history_op,
    augment_history_st,
    check_concurrent_commutation,
    gcounter_st,
    gset_op,
    gset_st,
)
from .opsem import OpConfig, OpSystem, op_init, op_replica_step, op_system_steps
from .stsem import StConfig, StSystem, st_init, st_replica_step, st_system_steps
from .emulation import interp, max_set, op_to_st, st_to_op
from .checker import (
    PairedSystem,
    Verdict,
    check_causal_safety,
    check_strong_convergence,
    check_trace_equivalence,
    check_weak_bisimulation,
    check_weak_simulation,
    deliverable_check,
    explore,
    in_relation,
    mergeable_check,
    weak_successors,
    weak_traces,
)
from .client import (
    ClientState,
    can_terminate,
    check_approximation,
    client_steps,
    eval_expr,
    parse_program,
    program_to_text,
)

__version__ = "0.1.0"
