import pytest
from hypothesis import given, strategies as st

from regen.graph import ATTR, CAUSE, SUPPORT, EntityNode, EventNode, GraphError, PropertyNode, ScenarioGraph


def small_graph():
    g = ScenarioGraph(behavior_node_id="e0")
    g.add_node(EventNode("e0", "behavior"))
    g.add_node(EventNode("n0", "cause"))
    g.add_node(EntityNode("a0", "sedan", "sedan1"))
    g.add_node(PropertyNode("p0", "brake light", "on", ("off", "on")))
    g.add_edge(CAUSE, "n0", "e0")
    g.add_edge(SUPPORT, "a0", "n0")
    g.add_edge(ATTR, "p0", "a0")
    return g


def test_valid_graph_round_trips():
    g = small_graph()
    assert g.check() == []
    again = ScenarioGraph.from_json(g.to_json())
    assert again.to_json() == g.to_json()
    assert again.nodes == g.nodes and again.edges == g.edges


def test_edge_typing_enforced():
    g = small_graph()
    with pytest.raises(GraphError):
        g.add_edge(CAUSE, "a0", "e0")
    with pytest.raises(GraphError):
        g.add_edge(SUPPORT, "n0", "e0")
    with pytest.raises(GraphError):
        g.add_edge("bogus", "n0", "e0")


def test_property_has_one_owner():
    g = small_graph()
    g.add_node(EntityNode("a1", "truck", "truck1"))
    g.add_edge(SUPPORT, "a1", "n0")
    with pytest.raises(GraphError, match="already attached"):
        g.add_edge(ATTR, "p0", "a1")


def test_cycle_rejected():
    g = small_graph()
    g.add_node(EventNode("n1", "deeper"))
    g.add_edge(CAUSE, "n1", "n0")
    with pytest.raises(GraphError, match="cycle"):
        g.add_edge(CAUSE, "n0", "n1")


def test_check_reports_problems():
    g = ScenarioGraph(behavior_node_id="e0")
    g.add_node(EventNode("e0", "b"))
    g.add_node(EntityNode("a0", "sedan", "sedan1"))
    g.add_node(PropertyNode("p0", "siren", "blue", ("off", "on")))
    problems = g.check()
    assert any("supports no event" in p for p in problems)
    assert any("exactly one owner" in p for p in problems)
    assert any("'blue'" in p for p in problems)


def test_next_id_and_depth():
    g = small_graph()
    assert g.next_id("n") == "n1"
    assert g.depth("n0") == 1 and g.depth("e0") == 0


@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)), max_size=30))
def test_cause_subgraph_stays_acyclic(pairs):
    # Insert random cause edges; accepted ones must never form a cycle.
    import networkx as nx

    g = ScenarioGraph(behavior_node_id="n0")
    for i in range(8):
        g.add_node(EventNode(f"n{i}", f"event {i}"))
    for a, b in pairs:
        if a == b:
            continue
        try:
            g.add_edge(CAUSE, f"n{a}", f"n{b}")
        except GraphError:
            pass
    dg = nx.DiGraph([(s, d) for k, s, d in g.edges])
    assert nx.is_directed_acyclic_graph(dg)
