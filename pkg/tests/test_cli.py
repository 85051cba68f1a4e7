from __future__ import annotations

import json
from pathlib import Path

import pytest

from crdt_emu.cli import (
    ScenarioError,
    build_systems,
    load_scenario,
    main,
    run_scenario,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def scenario_path(name: str) -> str:
    return str(SCENARIOS / f"{name}.scenario")


def write_scenario(tmp_path: Path, data: dict) -> str:
    p = tmp_path / "s.scenario"
    p.write_text(json.dumps(data), encoding="utf-8")
    return str(p)


def base_scenario(**over):
    data = {
        "name": "t",
        "roster": ["r1", "r2"],
        "object": {"name": "gset-op"},
        "emulate": "op-to-st",
        "op_universe": [["add", 1], ["add", 2]],
        "query_universe": ["sum"],
        "bounds": {"step_bound": 4},
        "checks": [{"name": "sim", "relation": "R1", "direction": "host-by-guest"}],
    }
    data.update(over)
    return data


def test_load_scenario_roundtrip(tmp_path):
    s = load_scenario(write_scenario(tmp_path, base_scenario()))
    assert s.roster == ("r1", "r2")
    assert s.op_universe == (("add", 1), ("add", 2))
    host, paired = build_systems(s)
    assert host.kind == "op" and paired.guest.kind == "st"


@pytest.mark.parametrize(
    "broken",
    [
        {"roster": []},
        {"roster": ["r1", "r1"]},
        {"object": {"name": "nope"}},
        {"emulate": "sideways"},
        {"emulate": "st-to-op"},  # mismatched with gset-op
        {"discipline": "best-effort"},
        {"op_universe": [["mul", 3]]},
        {"query_universe": ["max"]},
    ],
)
def test_load_scenario_rejects_bad_configs(tmp_path, broken):
    with pytest.raises(ScenarioError):
        s = load_scenario(write_scenario(tmp_path, base_scenario(**broken)))
        build_systems(s)


def test_cli_usage_error_is_exit_3(tmp_path, capsys):
    assert main(["check", "--scenario", str(tmp_path / "missing.scenario")]) == 3
    assert main(["frobnicate"]) == 3
    err = capsys.readouterr().err
    assert "error:" in err


def test_check_exit_codes_and_report(tmp_path, capsys):
    code = main(
        ["check", "--scenario", scenario_path("thm-4-2"), "--depth", "4",
         "--out", str(tmp_path / "report.json")]
    )
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["scenario"] == "thm-4-2"
    outcomes = {c["verdict"]["outcome"] for c in report["checks"]}
    assert outcomes == {"pass"}
    for c in report["checks"]:
        assert "stats" in c["verdict"] and "bounds" in c["verdict"]


def test_check_counterexample_exit_code(tmp_path):
    code = main(
        ["check", "--scenario", scenario_path("ex-2-5-no-causal"), "--depth", "6",
         "--out", str(tmp_path / "report.json")]
    )
    assert code == 1
    report = json.loads((tmp_path / "report.json").read_text())
    sim = next(c for c in report["checks"] if c["check"]["name"] == "sim")
    assert sim["verdict"]["outcome"] == "counterexample"
    assert sim["verdict"]["witness"]["distinguishing_query"]["attacker_value"] == 2


def test_bisim_scenarios_exit_codes(tmp_path):
    out = str(tmp_path / "r.json")
    assert main(["check", "--scenario", scenario_path("thm-4-9-bisim"), "--depth", "5", "--out", out]) == 0
    assert main(["check", "--scenario", scenario_path("ex-2-4-bisim"), "--out", out]) == 1
    report = json.loads(Path(out).read_text())
    dq = report["checks"][0]["verdict"]["witness"]["distinguishing_query"]
    assert dq["attacker_value"] == 5 and dq["defender_options"] == [47]


def test_scenario_semantics_field_consistency(tmp_path):
    s = load_scenario(write_scenario(tmp_path, base_scenario(semantics="op")))
    assert s.object_name == "gset-op"
    with pytest.raises(ScenarioError):
        load_scenario(write_scenario(tmp_path, base_scenario(semantics="st")))


def test_run_client_exit_codes(tmp_path):
    out = str(tmp_path / "r.json")
    assert main(["run-client", "--scenario", scenario_path("cor-5-3-client"), "--out", out]) == 0
    assert (
        main(
            ["run-client", "--scenario", scenario_path("cor-5-3-client"),
             "--program", "programs/forever.prog", "--out", out]
        )
        == 2
    )
    assert main(["run-client", "--scenario", scenario_path("cor-5-3-broken"), "--out", out]) == 1


def test_explore_dump_consistency(tmp_path):
    out = tmp_path / "dump.json"
    code = main(
        ["explore", "--scenario", scenario_path("ex-2-4-bisim"), "--depth", "3",
         "--out", str(out)]
    )
    assert code == 0
    dump = json.loads(out.read_text())
    for side in ("host", "guest"):
        g = dump["systems"][side]
        assert g["stats"]["states"] == len(g["nodes"])
        assert g["stats"]["edges"] == len(g["edges"])
        ids = {n["id"] for n in g["nodes"]}
        assert all(e["from"] in ids and e["to"] in ids for e in g["edges"])


def test_explore_depth_zero_single_node(tmp_path):
    out = tmp_path / "dump.json"
    code = main(
        ["explore", "--scenario", scenario_path("ex-2-4-bisim"), "--depth", "0",
         "--out", str(out)]
    )
    assert code == 0
    dump = json.loads(out.read_text())
    assert len(dump["systems"]["host"]["nodes"]) == 1


def test_reports_stable_across_runs(tmp_path):
    reports = []
    for i in range(2):
        s = load_scenario(scenario_path("ex-2-5-no-causal"))
        s.bounds.step_bound = 6
        report, code = run_scenario(s)
        report.pop("wall_time_s")
        reports.append(json.dumps(report, sort_keys=True))
        assert code == 1
    assert reports[0] == reports[1]


def test_workers_env_validation(monkeypatch):
    monkeypatch.setenv("CRDT_EMU_WORKERS", "zero")
    assert main(["check", "--scenario", scenario_path("thm-4-2")]) == 3
    monkeypatch.setenv("CRDT_EMU_WORKERS", "0")
    assert main(["check", "--scenario", scenario_path("thm-4-2")]) == 3
