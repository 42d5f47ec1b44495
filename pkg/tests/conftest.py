import json
from importlib import resources

import pytest

from regen.assets import load_asset_db
from regen.compiler import ScenarioConfig
from regen.expansion import DEFAULT_ROUTE, enumerate_scenarios
from regen.graph import ScenarioGraph
from regen.oracle import OracleHandle

BEHAVIOR = "The ego-vehicle stopped abruptly"


def data_text(package: str, name: str) -> str:
    return resources.files(f"regen.data.{package}").joinpath(name).read_text()


def load_graph(package: str, name: str) -> ScenarioGraph:
    return ScenarioGraph.from_json(data_text(package, name))


def load_config(package: str, name: str) -> ScenarioConfig:
    return ScenarioConfig.from_json(data_text(package, name))


@pytest.fixture(scope="session")
def db():
    return load_asset_db("driving")


@pytest.fixture(scope="session")
def abrupt_stop_oracle():
    return OracleHandle.scripted("abrupt_stop")


@pytest.fixture(scope="session")
def abrupt_stop_graph():
    return load_graph("goldens", "abrupt_stop.graph.json")


@pytest.fixture(scope="session")
def abrupt_stop_configs(abrupt_stop_graph, db, abrupt_stop_oracle):
    from regen.compiler import compile as compile_config

    subs = enumerate_scenarios(abrupt_stop_graph, simulatable_only=True)
    return [compile_config(s, db, abrupt_stop_oracle, DEFAULT_ROUTE) for s in subs]


@pytest.fixture(scope="session")
def ambulance_config():
    return load_config("goldens", "ambulance.config.json")


@pytest.fixture(scope="session")
def contradictory_config():
    return load_config("fixtures", "contradictory.config.json")


@pytest.fixture(scope="session")
def delivery_config():
    return load_config("fixtures", "delivery_truck.config.json")


@pytest.fixture(scope="session")
def counterfactual_config(db):
    from regen.compiler import compile as compile_config

    g = load_graph("fixtures", "counterfactual.graph.json")
    (sub,) = enumerate_scenarios(g, simulatable_only=True)
    return compile_config(sub, db, OracleHandle.scripted("counterfactual"), DEFAULT_ROUTE)


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True)


# -- acceptance reporting -----------------------------------------------------------
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
