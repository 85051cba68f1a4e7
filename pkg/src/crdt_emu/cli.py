"""Scenario-driven command line: load a scenario file, run checks, emit a
machine-readable report and witness traces.

Commands: ``explore`` (dump the bounded transition graph), ``check`` (run the
scenario's checks) and ``run-client`` (approximation check for a client
program).  Exit codes: 0 all pass, 1 any counterexample, 2 bound exhausted
with no failure, 3 usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import checker, client
from .checker import (
    BOUND_EXHAUSTED,
    COUNTEREXAMPLE,
    OP_TO_ST,
    ST_TO_OP,
    PairedSystem,
    Verdict,
    check_causal_safety,
    check_commutation,
    check_strong_convergence,
    check_trace_equivalence,
    check_weak_bisimulation,
    check_weak_simulation,
    explore,
    render_label,
)
from .core import FrozenDict, render
from .emulation import op_to_st, st_to_op
from .objects import (
    OpObject,
    StObject,
    augment_history_op,
    augment_history_st,
    gcounter_st,
    gset_op,
    gset_st,
)
from .opsem import CAUSAL, DISCIPLINES, OpSystem
from .stsem import MODES, SEPARATE_SEND, StSystem


class ScenarioError(ValueError):
    """Configuration problems that map to exit code 3."""


@dataclass
class Bounds:
    step_bound: int = 8
    max_trace_len: int = 3
    tau_budget: int | None = None
    client_bound: int = 16


@dataclass
class Scenario:
    name: str
    roster: tuple[str, ...]
    object_name: str
    augment: bool
    emulate: str | None
    discipline: str
    broadcast_mode: str
    broken_guest: bool
    repeat_ops: bool
    op_universe: tuple[tuple, ...]
    query_universe: tuple[str, ...]
    bounds: Bounds
    checks: tuple[dict, ...]
    client_program: str | None
    client_store: dict[str, int]
    base_dir: Path = field(default_factory=Path)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ScenarioError(message)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    _require(isinstance(data, dict), "scenario must be a JSON object")

    roster = tuple(data.get("roster", ()))
    _require(len(roster) > 0, "roster must be non-empty")
    _require(len(set(roster)) == len(roster), "roster has duplicate replica ids")

    obj = data.get("object", {})
    _require(isinstance(obj, dict) and "name" in obj, "object.name is required")
    object_name = obj["name"]
    _require(
        object_name in ("gset-op", "gset-st", "gcounter-st"),
        f"unknown object {object_name!r}",
    )

    semantics = data.get("semantics")
    implied = "op" if object_name.endswith("-op") else "st"
    _require(
        semantics in (None, implied),
        f"semantics {semantics!r} does not fit object {object_name!r}",
    )

    emulate = data.get("emulate")
    _require(
        emulate in (None, OP_TO_ST, ST_TO_OP),
        f"unknown emulate directive {emulate!r}",
    )
    if emulate == OP_TO_ST:
        _require(object_name.endswith("-op"), "op-to-st emulation needs an op-based object")
    if emulate == ST_TO_OP:
        _require(object_name.endswith("-st"), "st-to-op emulation needs a state-based object")

    discipline = data.get("discipline", CAUSAL)
    _require(discipline in DISCIPLINES, f"unknown discipline {discipline!r}")
    mode = data.get("broadcast_mode", SEPARATE_SEND)
    _require(mode in MODES, f"unknown broadcast mode {mode!r}")

    op_universe = tuple(tuple(op) for op in data.get("op_universe", ()))
    for op in op_universe:
        _require(
            len(op) >= 1 and isinstance(op[0], str),
            f"malformed operation {op!r}",
        )
    query_universe = tuple(data.get("query_universe", ("sum",)))
    _require(query_universe == ("sum",), "only the sum query is available")

    b = data.get("bounds", {})
    bounds = Bounds(
        step_bound=int(b.get("step_bound", 8)),
        max_trace_len=int(b.get("max_trace_len", 3)),
        tau_budget=(int(b["tau_budget"]) if b.get("tau_budget") is not None else None),
        client_bound=int(b.get("client_bound", 16)),
    )
    _require(bounds.step_bound >= 0, "step_bound must be non-negative")
    _require(bounds.max_trace_len >= 0, "max_trace_len must be non-negative")

    checks = tuple(data.get("checks", ()))
    for c in checks:
        _require(isinstance(c, dict) and "name" in c, f"malformed check {c!r}")

    client_cfg = data.get("client", {}) or {}
    return Scenario(
        name=data.get("name", path.stem),
        roster=roster,
        object_name=object_name,
        augment=bool(obj.get("augment", False)),
        emulate=emulate,
        discipline=discipline,
        broadcast_mode=mode,
        broken_guest=bool(data.get("broken_guest", False)),
        repeat_ops=bool(data.get("repeat_ops", False)),
        op_universe=op_universe,
        query_universe=query_universe,
        bounds=bounds,
        checks=checks,
        client_program=client_cfg.get("program"),
        client_store={str(k): int(v) for k, v in (client_cfg.get("store") or {}).items()},
        base_dir=path.parent,
    )


def _build_object(scenario: Scenario) -> OpObject | StObject:
    name = scenario.object_name
    if name in ("gset-op", "gset-st"):
        values = []
        for op in scenario.op_universe:
            _require(
                op[0] == "add" and len(op) == 2 and isinstance(op[1], int),
                f"{name} supports add[k] operations only, got {op!r}",
            )
            values.append(op[1])
        _require(len(values) > 0, "op_universe must list at least one operation")
        base = gset_op(tuple(values)) if name == "gset-op" else gset_st(tuple(values))
    else:
        for op in scenario.op_universe:
            _require(op == ("inc",), f"gcounter-st supports inc only, got {op!r}")
        _require(len(scenario.op_universe) == 1, "gcounter-st op_universe is [['inc']]")
        base = gcounter_st()
    if scenario.augment:
        if isinstance(base, OpObject):
            return augment_history_op(base)
        return augment_history_st(base)
    return base


def build_systems(scenario: Scenario) -> tuple[Any, PairedSystem | None]:
    """Host system, plus the paired host/guest systems when emulation is on."""
    base = _build_object(scenario)
    if isinstance(base, OpObject):
        host = OpSystem(
            base, scenario.roster, discipline=scenario.discipline,
            repeat_ops=scenario.repeat_ops,
        )
    else:
        host = StSystem(
            base, scenario.roster, mode=scenario.broadcast_mode,
            repeat_ops=scenario.repeat_ops,
        )
    if scenario.emulate is None:
        return host, None
    if scenario.emulate == OP_TO_ST:
        guest_obj = op_to_st(base)  # type: ignore[arg-type]
        if scenario.broken_guest:
            from .objects import break_query

            guest_obj = break_query(guest_obj)
        guest = StSystem(
            guest_obj, scenario.roster, mode=scenario.broadcast_mode,
            repeat_ops=scenario.repeat_ops,
        )
    else:
        guest_obj = st_to_op(base)  # type: ignore[arg-type]
        if scenario.broken_guest:
            from dataclasses import replace

            guest_obj = replace(guest_obj, query=lambda q, s: 0, name=guest_obj.name + "+broken")
        guest = OpSystem(
            guest_obj, scenario.roster, discipline=scenario.discipline,
            repeat_ops=scenario.repeat_ops,
        )
    return host, PairedSystem(host=host, guest=guest, direction=scenario.emulate)


def _op_side(scenario: Scenario, host, paired: PairedSystem | None):
    if host.kind == "op":
        return host
    if paired is not None and paired.guest.kind == "op":
        return paired.guest
    raise ScenarioError("this check needs an op-based side")


def _load_program(scenario: Scenario, rel_path: str) -> client.Prog:
    path = Path(rel_path)
    if not path.is_absolute():
        path = scenario.base_dir / path
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read client program: {exc}") from exc
    try:
        return client.parse_program(text)
    except client.ParseError as exc:
        raise ScenarioError(f"client program {path}: {exc}") from exc


def _run_approx(
    scenario: Scenario, paired: PairedSystem, prog: client.Prog, bound: int
) -> dict[str, Verdict]:
    store = FrozenDict(scenario.client_store)
    return {
        "host-to-guest": client.check_approximation(
            paired.host, paired.guest, store, prog, bound, bound
        ),
        "guest-to-host": client.check_approximation(
            paired.guest, paired.host, store, prog, bound, bound
        ),
    }


def run_check(
    scenario: Scenario,
    entry: dict,
    host,
    paired: PairedSystem | None,
    workers: int = 1,
    prune: bool = True,
) -> list[tuple[dict, Verdict]]:
    """Run one scenario check entry; returns (params, verdict) rows."""
    name = entry["name"]
    bounds = scenario.bounds
    step_bound = int(entry.get("step_bound", bounds.step_bound))
    tau_budget = entry.get("tau_budget", bounds.tau_budget)
    tau_budget = int(tau_budget) if tau_budget is not None else None

    if name == "sim":
        _require(paired is not None, "sim check needs an emulate directive")
        which = entry.get("direction", checker.HOST_BY_GUEST)
        rel = entry.get("relation")
        v = check_weak_simulation(
            paired, rel, which, step_bound=step_bound, tau_budget=tau_budget
        )
        return [({"name": name, "relation": v.bounds["relation"], "direction": which}, v)]
    if name == "bisim":
        _require(paired is not None, "bisim check needs an emulate directive")
        v = check_weak_bisimulation(paired, step_bound=step_bound, tau_budget=tau_budget)
        return [({"name": name, "mode": scenario.broadcast_mode}, v)]
    if name == "traces":
        _require(paired is not None, "traces check needs an emulate directive")
        max_len = int(entry.get("max_trace_len", bounds.max_trace_len))
        v = check_trace_equivalence(paired, max_len=max_len, step_bound=step_bound)
        return [({"name": name, "max_trace_len": max_len}, v)]
    if name == "convergence":
        out = []
        sides = entry.get("side", "both" if paired else "host")
        side_list = ("host", "guest") if sides == "both" else (sides,)
        for side in side_list:
            system = host if side == "host" else (paired.guest if paired else None)
            _require(system is not None, f"convergence check: no {side} system")
            v = check_strong_convergence(
                system, step_bound=step_bound, workers=workers, prune=prune
            )
            out.append(({"name": name, "side": side}, v))
        return out
    if name == "causal":
        system = _op_side(scenario, host, paired)
        v = check_causal_safety(system, step_bound=step_bound, prune=prune)
        return [({"name": name, "discipline": system.discipline}, v)]
    if name == "commutation":
        system = _op_side(scenario, host, paired)
        v = check_commutation(system, step_bound=step_bound, workers=workers, prune=prune)
        return [({"name": name}, v)]
    if name == "approx":
        _require(paired is not None, "approx check needs an emulate directive")
        prog_path = entry.get("program", scenario.client_program)
        _require(prog_path is not None, "approx check needs a client program")
        prog = _load_program(scenario, prog_path)
        bound = int(entry.get("client_bound", bounds.client_bound))
        out = []
        for direction, v in _run_approx(scenario, paired, prog, bound).items():
            out.append(({"name": name, "direction": direction, "program": prog_path}, v))
        return out
    raise ScenarioError(f"unknown check {name!r}")


def exit_code_for(verdicts: list[Verdict]) -> int:
    if any(v.outcome == COUNTEREXAMPLE for v in verdicts):
        return 1
    if any(v.outcome == BOUND_EXHAUSTED for v in verdicts):
        return 2
    return 0


def run_scenario(
    scenario: Scenario,
    only_checks: list[str] | None = None,
    workers: int = 1,
    prune: bool = True,
) -> tuple[dict, int]:
    host, paired = build_systems(scenario)
    started = time.monotonic()
    rows = []
    verdicts = []
    for entry in scenario.checks:
        if only_checks and entry["name"] not in only_checks:
            continue
        for params, v in run_check(
            scenario, entry, host, paired, workers=workers, prune=prune
        ):
            rows.append({"check": params, "verdict": v.to_report()})
            verdicts.append(v)
    report = {
        "scenario": scenario.name,
        "bounds": {
            "step_bound": scenario.bounds.step_bound,
            "max_trace_len": scenario.bounds.max_trace_len,
            "tau_budget": scenario.bounds.tau_budget,
        },
        "checks": rows,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    return report, exit_code_for(verdicts)


# --- explore dump ---------------------------------------------------------------


def _dump_system(system, depth: int, prune: bool, workers: int) -> dict:
    graph = explore(system, depth, prune=prune, workers=workers)
    nodes = []
    for idx, cfg in enumerate(graph.nodes):
        nodes.append(
            {
                "id": idx,
                "depth": graph.depths[idx],
                "states": {r: render(cfg.states[r]) for r in system.roster},
                "buffer": sorted(
                    (
                        {"to": r, "message": render(m)}
                        for r, m in cfg.buffer
                    ),
                    key=lambda d: json.dumps(d, sort_keys=True),
                ),
            }
        )
    edges = [
        {"from": i, "label": render_label(label), "to": j}
        for i, label, j in graph.edges
    ]
    return {"nodes": nodes, "edges": edges, "stats": graph.stats}


def cmd_explore(args) -> int:
    scenario = load_scenario(args.scenario)
    depth = args.depth if args.depth is not None else scenario.bounds.step_bound
    if depth < 0:
        raise ScenarioError("depth must be non-negative")
    host, paired = build_systems(scenario)
    workers = _worker_count()
    dump: dict[str, Any] = {"scenario": scenario.name, "depth": depth, "systems": {}}
    dump["systems"]["host"] = _dump_system(host, depth, not args.no_prune, workers)
    if paired is not None:
        dump["systems"]["guest"] = _dump_system(paired.guest, depth, not args.no_prune, workers)
    _emit(dump, args.out)
    return 0


def cmd_check(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.depth is not None:
        scenario.bounds.step_bound = args.depth
    if args.max_trace_len is not None:
        scenario.bounds.max_trace_len = args.max_trace_len
    if args.tau_budget is not None:
        scenario.bounds.tau_budget = args.tau_budget
    if not scenario.checks:
        raise ScenarioError("scenario lists no checks")
    report, code = run_scenario(
        scenario, workers=_worker_count(), prune=not args.no_prune
    )
    _emit(report, args.out)
    return code


def cmd_run_client(args) -> int:
    scenario = load_scenario(args.scenario)
    prog_path = args.program or scenario.client_program
    if prog_path is None:
        raise ScenarioError("no client program given (flag --program or scenario.client)")
    host, paired = build_systems(scenario)
    if paired is None:
        raise ScenarioError("run-client needs an emulate directive in the scenario")
    prog = _load_program(scenario, prog_path)
    started = time.monotonic()
    results = _run_approx(scenario, paired, prog, scenario.bounds.client_bound)
    report = {
        "scenario": scenario.name,
        "program": prog_path,
        "checks": [
            {"check": {"name": "approx", "direction": d}, "verdict": v.to_report()}
            for d, v in results.items()
        ],
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    _emit(report, args.out)
    return exit_code_for(list(results.values()))


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _worker_count() -> int:
    raw = os.environ.get("CRDT_EMU_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError(f"CRDT_EMU_WORKERS must be an integer, got {raw!r}")
    if n < 1:
        raise ScenarioError("CRDT_EMU_WORKERS must be >= 1")
    return n


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ScenarioError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crdt-emu", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--depth", type=int, default=None, help="step bound override")
        p.add_argument("--max-trace-len", type=int, default=None)
        p.add_argument("--tau-budget", type=int, default=None)
        p.add_argument("--out", default=None, help="write the report to a file")
        p.add_argument("--no-prune", action="store_true", help="disable summary pruning")

    p_explore = sub.add_parser("explore", help="dump the bounded transition graph")
    common(p_explore)
    p_explore.set_defaults(fn=cmd_explore)

    p_check = sub.add_parser("check", help="run the scenario's checks")
    common(p_check)
    p_check.set_defaults(fn=cmd_check)

    p_client = sub.add_parser("run-client", help="client-program approximation check")
    common(p_client)
    p_client.add_argument("--program", default=None, help="client program file")
    p_client.set_defaults(fn=cmd_run_client)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _worker_count()
        return args.fn(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
