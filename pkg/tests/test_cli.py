from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from builders import appdoc, comp, iface, op, scenario_doc
from conftest import FIXTURES


def run_cli(*args: str, cwd: Path) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "quiesce.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


@pytest.fixture
def workdir(tmp_path: Path) -> Path:
    for name in (
        "demo_chain.json",
        "demo_scenario.json",
        "demo_request.json",
        "late_app.json",
        "late_snapshot.json",
        "chain_snapshot.json",
    ):
        (tmp_path / name).write_text((FIXTURES / name).read_text())
    return tmp_path


class TestSimulate:
    def test_clean_run_writes_log_and_metrics(self, workdir):
        result = run_cli(
            "--out", "out", "simulate", "demo_chain.json", "demo_scenario.json",
            "--until", "200", cwd=workdir,
        )
        assert result.returncode == 0, result.stderr
        events = (workdir / "out" / "events.jsonl").read_text()
        assert '"kind": "InvocationStart"' in events
        metrics = json.loads((workdir / "out" / "metrics.json").read_text())
        assert metrics["aborted_transactions"] == 0

    def test_runs_are_byte_identical(self, workdir):
        for out in ("one", "two"):
            result = run_cli(
                "--out", out, "simulate", "demo_chain.json", "demo_scenario.json",
                "--until", "200", cwd=workdir,
            )
            assert result.returncode == 0
        assert (workdir / "one" / "events.jsonl").read_bytes() == (
            workdir / "two" / "events.jsonl"
        ).read_bytes()
        assert (workdir / "one" / "metrics.json").read_bytes() == (
            workdir / "two" / "metrics.json"
        ).read_bytes()

    def test_unknown_component_reference_exits_one(self, workdir):
        bad = scenario_doc([{"id": "c", "access": "Remote",
                             "script": [{"at": 0, "call": {"component": "Z", "interface": "IZ", "operation": "w"}}]}])
        (workdir / "bad_scenario.json").write_text(bad)
        result = run_cli("simulate", "demo_chain.json", "bad_scenario.json", cwd=workdir)
        assert result.returncode == 1
        assert "bad_scenario.json" in result.stderr

    def test_malformed_app_exits_one_naming_file(self, workdir):
        (workdir / "broken.json").write_text("{nope")
        result = run_cli("simulate", "broken.json", "demo_scenario.json", cwd=workdir)
        assert result.returncode == 1
        assert "broken.json" in result.stderr

    def test_empty_scenario_yields_zero_metrics(self, workdir):
        (workdir / "empty.json").write_text(scenario_doc())
        result = run_cli("--out", "o", "simulate", "demo_chain.json", "empty.json", cwd=workdir)
        assert result.returncode == 0
        metrics = json.loads((workdir / "o" / "metrics.json").read_text())
        assert metrics["held_invocations"]["count"] == 0
        assert metrics["invalidated_sessions"] == 0
        assert metrics["total_time"] == 0

    def test_protocol_violation_exits_two(self, workdir):
        # a caller whose automaton promises an operation the provider lacks:
        # the document is rejected at load; force it through a mid-run swap via redeploy instead
        components = [
            comp("A", required=["ILog", "IB"],
                 operations=[op("go", duration=20, automaton={
                     "states": ["q0", "q1", "q2"], "initial": "q0", "finals": ["q2"],
                     "transitions": [
                         {"from": "q0", "to": "q1", "calls_interface": "ILog", "calls_operation": "note", "min_delay": 10},
                         {"from": "q1", "to": "q2", "calls_interface": "IB", "calls_operation": "w", "min_delay": 0},
                     ]})],
                 provided=[iface("IA", "go")]),
            comp("B", provided=[iface("IB", "w")], operations=[op("w", tx="Joins", duration=3)]),
        ]
        (workdir / "pv_app.json").write_text(
            appdoc(components, wiring=[("A", "ILog", None), ("A", "IB", "B")])
        )
        (workdir / "pv_scenario.json").write_text(
            scenario_doc([{"id": "c", "access": "Remote",
                           "script": [{"at": 0, "call": {"component": "A", "interface": "IA", "operation": "go"}},
                                      {"at": 40, "call": {"component": "A", "interface": "IA", "operation": "go"}}]}])
        )
        gutted = comp("B", version=2, provided=[iface("IB", "other")],
                      operations=[op("other", tx="Joins", duration=3)])
        (workdir / "pv_request.json").write_text(
            json.dumps({"id": "r", "requested_at": 2, "targets": [{"component": "B", "descriptor": gutted}]})
        )
        result = run_cli(
            "redeploy", "pv_app.json", "pv_scenario.json", "pv_request.json",
            "--until", "100", cwd=workdir,
        )
        assert result.returncode == 2
        assert "protocol violation" in result.stderr


class TestRedeployCommand:
    def test_accepted_request_completes_with_zero_aborts(self, workdir):
        result = run_cli(
            "--out", "out", "redeploy", "demo_chain.json", "demo_scenario.json",
            "demo_request.json", "--until", "300", cwd=workdir,
        )
        assert result.returncode == 0, result.stderr
        report = json.loads((workdir / "out" / "report.json").read_text())
        assert report["outcome"] == "Completed"
        metrics = json.loads((workdir / "out" / "metrics.json").read_text())
        assert metrics["aborted_transactions"] == 0
        assert metrics["invalidated_sessions"] == 0
        assert metrics["messages"]["lost"] == 0

    def test_minimal_blocking_waits_no_longer_than_whole_app(self, workdir):
        totals = {}
        for mode in ("minimal", "whole-app"):
            result = run_cli(
                "--out", mode, "redeploy", "demo_chain.json", "demo_scenario.json",
                "demo_request.json", "--blocking", mode, "--until", "300", cwd=workdir,
            )
            assert result.returncode == 0, result.stderr
            metrics = json.loads((workdir / mode / "metrics.json").read_text())
            held = metrics["held_invocations"]
            totals[mode] = held["count"] * held["mean_wait"]
        assert totals["minimal"] <= totals["whole-app"]

    def test_unsafe_structural_stateful_request_exits_three(self, workdir):
        app_doc = appdoc(
            [comp("S", kind="StatefulSession", state_fields=["a"], operations=[op("work", duration=2)])]
        )
        (workdir / "stateful_app.json").write_text(app_doc)
        (workdir / "none.json").write_text(scenario_doc())
        new = comp("S", version=2, kind="StatefulSession", state_fields=["a", "b"],
                   operations=[op("work", duration=2)])
        (workdir / "unsafe_request.json").write_text(
            json.dumps({"id": "r", "requested_at": 0, "targets": [{"component": "S", "descriptor": new}]})
        )
        result = run_cli(
            "redeploy", "stateful_app.json", "none.json", "unsafe_request.json", cwd=workdir
        )
        assert result.returncode == 3
        assert "Unsafe" in result.stderr or "rejected" in result.stderr

    def test_strict_mode_rejects_structural_request(self, workdir):
        new = comp("C", version=2, provided=[iface("IC", "backWork", "extra")],
                   operations=[op("backWork", tx="Joins", duration=3), op("extra", duration=1)],
                   access={"IC": "Local"})
        (workdir / "structural_request.json").write_text(
            json.dumps({"id": "r", "requested_at": 8, "targets": [{"component": "C", "descriptor": new}]})
        )
        strict = run_cli(
            "redeploy", "demo_chain.json", "demo_scenario.json", "structural_request.json",
            "--mode", "strict", cwd=workdir,
        )
        assert strict.returncode == 3
        weakened = run_cli(
            "--out", "w", "redeploy", "demo_chain.json", "demo_scenario.json",
            "structural_request.json", "--mode", "weakened", "--until", "300", cwd=workdir,
        )
        assert weakened.returncode == 0, weakened.stderr


class TestAnalyzeDeps:
    def test_window_zero_keeps_only_immediate_work(self, workdir):
        result = run_cli(
            "--out", "o", "analyze-deps", "late_app.json", "--snapshot", "late_snapshot.json",
            "--targets", "B", "--window", "0", cwd=workdir,
        )
        assert result.returncode == 0, result.stderr
        doc = json.loads((workdir / "o" / "deps.json").read_text())
        assert doc["affected"] == ["B"]

    def test_window_inf_equals_static_closure_for_initial_cursors(self, workdir):
        result = run_cli(
            "--out", "o", "analyze-deps", "demo_chain.json", "--snapshot", "chain_snapshot.json",
            "--targets", "C", "--window", "inf", cwd=workdir,
        )
        assert result.returncode == 0, result.stderr
        doc = json.loads((workdir / "o" / "deps.json").read_text())
        assert doc["affected"] == ["A", "B", "C"]

    def test_past_cursor_excluded_from_affected(self, workdir):
        (workdir / "past_snapshot.json").write_text((FIXTURES / "past_snapshot.json").read_text())
        result = run_cli(
            "--out", "o", "analyze-deps", "demo_chain.json", "--snapshot", "past_snapshot.json",
            "--targets", "C", "--window", "100", cwd=workdir,
        )
        assert result.returncode == 0, result.stderr
        doc = json.loads((workdir / "o" / "deps.json").read_text())
        assert doc["affected"] == ["B", "C"]

    def test_dot_output(self, workdir):
        result = run_cli(
            "--out", "o", "analyze-deps", "demo_chain.json", "--snapshot", "chain_snapshot.json",
            "--targets", "C", "--window", "50", "--format", "dot", cwd=workdir,
        )
        assert result.returncode == 0, result.stderr
        assert (workdir / "o" / "deps.dot").read_text().startswith("digraph")

    def test_bad_window_value_exits_one(self, workdir):
        result = run_cli(
            "analyze-deps", "demo_chain.json", "--snapshot", "chain_snapshot.json",
            "--window", "soon", cwd=workdir,
        )
        assert result.returncode == 1


class TestLifecycleCommands:
    def archive_doc(self, version: int = 1, duration: int = 5) -> str:
        return json.dumps(
            {
                "module": "shop",
                "version": version,
                "components": [comp("S", version=version, operations=[op("work", duration=duration)])],
            }
        )

    def test_distribute_start_stop_undeploy_cycle(self, workdir):
        (workdir / "shop.json").write_text(self.archive_doc())
        for args, expected_state in (
            (("distribute", "shop.json"), "Distributed"),
            (("start", "shop"), "Started"),
            (("stop", "shop"), "Stopped"),
            (("undeploy", "shop"), "Undeployed"),
        ):
            result = run_cli(*args, "--state", "state.json", cwd=workdir)
            assert result.returncode == 0, (args, result.stderr)
            state = json.loads((workdir / "state.json").read_text())
            assert state["modules"]["shop"]["state"] == expected_state

    def test_start_before_distribute_exits_one(self, workdir):
        result = run_cli("start", "ghost", "--state", "state.json", cwd=workdir)
        assert result.returncode == 1

    def test_stop_with_scenario_exercises_drain(self, workdir):
        (workdir / "shop.json").write_text(self.archive_doc(duration=3))
        (workdir / "w.json").write_text(
            scenario_doc([{"id": "c", "access": "Remote",
                           "script": [{"at": 0, "call": {"component": "S", "interface": "IS", "operation": "work"}},
                                      {"at": 1, "call": {"component": "S", "interface": "IS", "operation": "work"}}]}])
        )
        run_cli("distribute", "shop.json", "--state", "state.json", cwd=workdir)
        run_cli("start", "shop", "--state", "state.json", cwd=workdir)
        result = run_cli(
            "stop", "shop", "--state", "state.json", "--scenario", "w.json", "--at", "0",
            cwd=workdir,
        )
        assert result.returncode == 0, result.stderr
        assert json.loads((workdir / "state.json").read_text())["modules"]["shop"]["state"] == "Stopped"

    def test_redeploy_via_archive_flag(self, workdir):
        (workdir / "app.json").write_text(
            appdoc([comp("S", operations=[op("work", duration=5)])])
        )
        (workdir / "none.json").write_text(scenario_doc())
        (workdir / "shop_v2.json").write_text(self.archive_doc(version=2, duration=2))
        result = run_cli(
            "--out", "o", "redeploy", "app.json", "none.json",
            "--archive", "shop_v2.json", "--module", "shop", "--until", "100", cwd=workdir,
        )
        assert result.returncode == 0, result.stderr
        report = json.loads((workdir / "o" / "report.json").read_text())
        assert report["outcome"] == "Completed"


class TestClassify:
    def test_prints_verdict_json(self, workdir):
        (workdir / "stateful.json").write_text(
            json.dumps(comp("S", kind="StatefulSession", state_fields=["a"],
                            operations=[op("work", duration=2)]))
        )
        result = run_cli(
            "classify", "stateful.json", "--change", "Structural", cwd=workdir
        )
        assert result.returncode == 0, result.stderr
        verdict = json.loads(result.stdout.strip().splitlines()[-1])
        assert verdict["verdict"] == "Unsafe"
        assert "HasConversationalState" in verdict["reasons"]

    def test_refs_decide_stateless_structural(self, workdir):
        (workdir / "stateless.json").write_text(
            json.dumps(comp("S", operations=[op("work", duration=2)], access={"IS": "Remote"}))
        )
        clean = run_cli("classify", "stateless.json", "--change", "Structural", cwd=workdir)
        assert json.loads(clean.stdout.strip().splitlines()[-1])["verdict"] == "Safe"
        held = run_cli(
            "classify", "stateless.json", "--change", "Structural", "--refs", "r1", cwd=workdir
        )
        assert json.loads(held.stdout.strip().splitlines()[-1])["verdict"] == "Unsafe"
