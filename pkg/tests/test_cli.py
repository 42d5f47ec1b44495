import json
import logging

import pytest

from conftest import BEHAVIOR, data_text
from regen.cli import main, parse_counterfactual, trace_table
from regen.expansion import enumerate_scenarios
from regen.graph import UNSIMULATABLE, ScenarioGraph


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def stages(tmp_path_factory):
    """expand -> ground -> solve -> run -> plot, once for the module."""
    root = tmp_path_factory.mktemp("stages")
    rcs = {
        "expand": run_cli("expand", "--behavior", BEHAVIOR, "-o", root / "exp"),
        "ground": run_cli("ground", root / "exp" / "graph.json", "-o", root / "grd"),
    }
    amb = next((root / "grd" / "configs").glob("*emergency*.config.json"))
    rcs["solve"] = run_cli("solve", amb, "-o", root / "sol")
    rcs["run"] = run_cli("run", root / "sol" / "scenario.json", "-o", root / "run")
    rcs["plot"] = run_cli("plot", root / "run" / "run.json", "-o", root / "a.png")
    rcs["plot2"] = run_cli("plot", root / "run" / "run.json", "-o", root / "b.png")
    return root, rcs


def test_stage_commands_succeed(stages):
    root, rcs = stages
    assert rcs == dict.fromkeys(rcs, 0)
    graph = ScenarioGraph.from_json((root / "exp" / "graph.json").read_text())
    assert len(graph.causes(graph.behavior_node_id)) == 6
    assert len(list((root / "grd" / "configs").glob("*.config.json"))) == 4
    scenario = json.loads((root / "sol" / "scenario.json").read_text())
    assert scenario["feasible"] and scenario["verdict"] == "accepted"
    run = json.loads((root / "run" / "run.json").read_text())
    assert run["verdict"] == "accepted" and run["stage_log"] == scenario["stage_log"]
    rows = (root / "run" / "trace.csv").read_text().splitlines()
    assert len(rows) == 1 + len(run["trace"]) * len(run["trace"][0]["actors"])


def test_manifests_record_hashes(stages):
    root, _ = stages
    man = json.loads((root / "grd" / "manifest.json").read_text())
    assert man["command"] == "ground"
    assert set(man["inputs"]) >= {"graph", "assets"}
    for rel, digest in man["artifacts"].items():
        import hashlib
        assert hashlib.sha256((root / "grd" / rel).read_bytes()).hexdigest() == digest


def test_plots_are_png_and_deterministic(stages):
    root, _ = stages
    a, b = (root / "a.png").read_bytes(), (root / "b.png").read_bytes()
    assert a.startswith(b"\x89PNG") and a == b


def test_expand_is_idempotent(tmp_path):
    for name in ("x", "y"):
        assert run_cli("expand", "--behavior", BEHAVIOR, "-o", tmp_path / name) == 0
    assert (tmp_path / "x" / "manifest.json").read_bytes() == (tmp_path / "y" / "manifest.json").read_bytes()


def test_depth_one_has_no_grandparents(stages):
    root, _ = stages
    graph = ScenarioGraph.from_json((root / "exp" / "graph.json").read_text())
    for ev in graph.events():
        if ev.id != graph.behavior_node_id:
            assert graph.causes(ev.id) == []


def test_transcript_miss_exits_2(tmp_path, caplog):
    with caplog.at_level(logging.ERROR):
        rc = run_cli("expand", "--behavior", "The ego-vehicle swerved", "-o", tmp_path)
    assert rc == 2 and "oracle" in caplog.text


def test_unknown_transcript_exits_2(tmp_path):
    assert run_cli("expand", "--behavior", BEHAVIOR, "--oracle", "scripted:nope", "-o", tmp_path) == 2


def test_unsimulatable_only_graph_writes_nothing(tmp_path, abrupt_stop_graph, caplog):
    tree = next(g for g in enumerate_scenarios(abrupt_stop_graph)
                if any(UNSIMULATABLE in g.event_flags(e.id) for e in g.events()))
    path = tmp_path / "tree.graph.json"
    path.write_text(tree.to_json())
    with caplog.at_level(logging.WARNING):
        assert run_cli("ground", path, "-o", tmp_path / "out") == 0
    assert "no simulatable" in caplog.text
    assert not list((tmp_path / "out").rglob("*.config.json"))


def test_diamond_grounds_two_configs(tmp_path):
    path = tmp_path / "diamond.graph.json"
    path.write_text(data_text("fixtures", "diamond.graph.json"))
    assert run_cli("ground", path, "--oracle", "scripted:diamond", "-o", tmp_path / "out") == 0
    assert len(list((tmp_path / "out" / "configs").glob("*.config.json"))) == 2


def test_contradictory_config_exits_4(tmp_path):
    path = tmp_path / "bad.config.json"
    path.write_text(data_text("fixtures", "contradictory.config.json"))
    assert run_cli("solve", path, "-o", tmp_path / "out") == 4
    assert json.loads((tmp_path / "out" / "scenario.json").read_text())["verdict"] == "stalled"


def test_counterfactual_pins_brake_light(tmp_path, counterfactual_config):
    cfg = tmp_path / "cf.config.json"
    cfg.write_text(counterfactual_config.to_json())
    assert run_cli("solve", cfg, "--counterfactual", "sedan1:brake_light=off", "-o", tmp_path / "sol") == 0
    assert run_cli("run", tmp_path / "sol" / "scenario.json", "-o", tmp_path / "run") == 0
    trace = json.loads((tmp_path / "run" / "run.json").read_text())["trace"]
    states = [s["actors"]["sedan1"] for s in trace]
    assert any(a["accel"] < -0.5 for a in states)
    assert all(a["properties"]["brake light"] == "off" for a in states)


def test_bad_counterfactual_exits_3(tmp_path, counterfactual_config):
    cfg = tmp_path / "cf.config.json"
    cfg.write_text(counterfactual_config.to_json())
    assert run_cli("solve", cfg, "--counterfactual", "paint=red", "-o", tmp_path) == 3
    assert run_cli("solve", cfg, "--counterfactual", "no-equals-sign", "-o", tmp_path) == 3


def test_parse_counterfactual():
    assert parse_counterfactual("sedan1:brake_light=off") == ("sedan1", "brake light", "off")
    assert parse_counterfactual("siren=on") == (None, "siren", "on")


def test_eval_reports_json(tmp_path, capsys):
    assert run_cli("eval", "feasible_scenarios", "--sample-size", "5", "--repeats", "3", "-o", tmp_path / "r.json") == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["repeats"] == 3 and len(rep["scores"]) == 3 and 0 <= rep["mean"] <= 1
    assert run_cli("eval", "feasible_scenarios", "--sample-size", "999") == 3


def test_empty_trace_plot_fails(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"route_id": "straight_2lane/stop_abruptly", "trace": []}))
    assert run_cli("plot", path, "-o", tmp_path / "x.png") == 3
    assert not (tmp_path / "x.png").exists()


def test_missing_input_exits_5(tmp_path):
    assert run_cli("ground", tmp_path / "absent.json", "-o", tmp_path / "out") == 5
    assert run_cli("eval", tmp_path / "absent.txt") == 5


def test_trace_table_header():
    text = trace_table([{"tick": 1, "actors": {"a": {"x": 1.0, "y": 2.0, "heading": 0.0, "speed": 0.0,
                                                       "accel": 0.0, "properties": {}}}}])
    assert text.splitlines()[0].startswith("tick,")
