"""Backward graph expansion from a behavior description.

Phase 1 grows cause events (propose, then classify the whole candidate set in
one oracle call).  Phase 2 attaches simulator entities to every cause event,
then properties to every accepted entity.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Optional

from .assets import AssetDatabase, list_entities, property_states
from .graph import (
    ATTR, BUDGET, CAUSE, NO_CAUSE, SUPPORT, UNSIMULATABLE,
    EntityNode, EventNode, GraphError, PropertyNode, ScenarioGraph,
)
from .oracle import OracleError, OracleHandle, ask, parse_answer

BEHAVIOR_KEY = "behavior"
DEFAULT_ROUTE = "straight_2lane/stop_abruptly"


@dataclass(frozen=True)
class BehaviorSpec:
    description: str
    route_id: str = DEFAULT_ROUTE

    def __post_init__(self):
        if not self.description or not self.description.strip():
            raise ValueError("behavior description must be non-empty")


@dataclass(frozen=True)
class ExpansionBudget:
    max_event_depth: int = 1
    max_events_per_node: int = 10
    max_total_nodes: int = 500

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 1:
                raise ValueError(f"{f.name} must be >= 1")


def init_graph(behavior: BehaviorSpec) -> ScenarioGraph:
    g = ScenarioGraph(behavior_node_id="e0")
    g.add_node(EventNode("e0", behavior.description.strip()))
    return g


def _key(text: str) -> str:
    return " ".join(text.lower().split())


def chain_to_behavior(graph: ScenarioGraph, event_id: str) -> list[str]:
    """Event texts from the behavior back to ``event_id`` (effect first)."""
    chain = [event_id]
    while True:
        effects = graph.targets(chain[-1], CAUSE)
        if not effects:
            break
        chain.append(effects[0])
    return [graph.nodes[i].text for i in reversed(chain)]


# -- node proposal -----------------------------------------------------------
def propose_event_nodes(
    graph: ScenarioGraph,
    source: EventNode | str,
    prior: Optional[str],
    oracle: OracleHandle,
    user_candidates: Iterable[str] = (),
) -> list[EventNode]:
    """Candidate causes of ``source``; ids are left empty until accepted."""
    src = graph.nodes[source] if isinstance(source, str) else source
    if src.id not in graph.nodes:
        raise GraphError(f"source {src.id} not in graph")
    variables = {"causal_graph": chain_to_behavior(graph, src.id)}
    if prior:
        variables["prior"] = prior
        pairs = parse_answer(ask(oracle, "event_proposal_prior", variables), "name_desc_list")
    else:
        pairs = parse_answer(ask(oracle, "event_proposal", variables), "name_desc_list")
    seen, out = set(), []
    for text in [name for name, _ in pairs] + list(user_candidates):
        k = _key(text)
        if k and k not in seen:
            seen.add(k)
            out.append(EventNode("", " ".join(text.split())))
    return out


def propose_property_values(graph: ScenarioGraph, entity: EntityNode, key: str, oracle: OracleHandle) -> list[str]:
    variables = {
        "causal_graph": _entity_chain(graph, entity.id),
        "entities_name": [entity.instance_name],
        "node_name": key,
    }
    payload = parse_answer(ask(oracle, "property_proposal", variables), "per_entity_value_lists")
    return payload.get(entity.instance_name, [])


# -- edge construction -------------------------------------------------------
def _chosen(payload: dict, key: str, allowed: list[str]) -> list[str]:
    chosen = payload.get(key, [])
    lookup = {_key(a): a for a in allowed}
    out = []
    for c in chosen:
        if _key(c) not in lookup:
            raise OracleError(f"oracle chose {c!r}, which is not among the candidates {allowed}")
        if lookup[_key(c)] not in out:
            out.append(lookup[_key(c)])
    return out


def _entity_chain(graph: ScenarioGraph, entity_id: str) -> list[str]:
    return chain_to_behavior(graph, graph.targets(entity_id, SUPPORT)[0])


def _entity_desc(graph: ScenarioGraph, db: AssetDatabase | None, ent: EntityNode) -> dict:
    asset = db.nodes[ent.asset_id].display_name if db and ent.asset_id in db.nodes else ent.asset_id
    return {
        "name": ent.instance_name,
        "entity_name": asset,
        "properties": {p.key: p.value for p in graph.properties_of(ent.id)},
    }


def construct_edges(
    graph: ScenarioGraph,
    source: str,
    candidates: list,
    edge_family: str,
    oracle: OracleHandle,
    *,
    db: AssetDatabase | None = None,
    key: str | None = None,
    states: Iterable[str] = (),
    limit: int | None = None,
) -> tuple[ScenarioGraph, list]:
    """Classify ``candidates`` against ``source`` in one oracle call.

    Event candidates are EventNodes (cause family), entity candidates are asset
    ids (support family), property candidates are value strings for ``key``
    (attr family; the first chosen value is kept).  Returns a new graph and the
    nodes that were added.
    """
    if not candidates:
        raise ValueError("construct_edges needs at least one candidate")
    g = graph.copy()
    src = g.nodes.get(source)
    if edge_family == CAUSE:
        if not isinstance(src, EventNode) or not all(isinstance(c, EventNode) for c in candidates):
            raise GraphError("cause edges join events to events")
        texts = [c.text for c in candidates]
        variables = {"causal_graph": chain_to_behavior(g, source), "effect": src.text, "candidates": texts}
        chosen = _chosen(parse_answer(ask(oracle, "event_edge", variables), "per_entity_value_lists"), "chosen", texts)
        if limit is not None and len(chosen) > limit:
            chosen = chosen[:limit]
            g.flag(source, BUDGET)
        accepted = []
        for text in chosen:
            node = EventNode(g.next_id("n"), text)
            g.add_node(node)
            g.add_edge(CAUSE, node.id, source)
            accepted.append(node)
        return g, accepted

    if edge_family == SUPPORT:
        if not isinstance(src, EventNode) or db is None:
            raise GraphError("support edges join asset entities to events and need the asset database")
        names = []
        for c in candidates:
            asset = db.nodes.get(c.id if hasattr(c, "id") else c)
            if asset is None or asset.kind not in ("entity-agent", "entity-object"):
                raise GraphError(f"entity candidate {c!r} is not an asset entity")
            names.append(asset.display_name)
        variables = {"causal_graph": chain_to_behavior(g, source), "event": src.text, "candidates": names}
        chosen = _chosen(parse_answer(ask(oracle, "entity_edge", variables), "per_entity_value_lists"), "chosen", names)
        if not chosen:
            graph = graph.copy()
            graph.flag(source, UNSIMULATABLE)
            return graph, []
        if limit is not None and len(chosen) > limit:
            chosen = chosen[:limit]
            g.flag(source, BUDGET)
        by_name = {db.nodes[c.id if hasattr(c, "id") else c].display_name: c.id if hasattr(c, "id") else c
                   for c in candidates}
        accepted = []
        for name in chosen:
            asset_id = by_name[name]
            count = sum(1 for e in g.entities() if e.asset_id == asset_id)
            inst = f"{asset_id.replace(' ', '_')}{count + 1}"
            node = EntityNode(g.next_id("a"), asset_id, inst)
            g.add_node(node)
            g.add_edge(SUPPORT, node.id, source)
            accepted.append(node)
        return g, accepted

    if edge_family == ATTR:
        if not isinstance(src, EntityNode) or key is None:
            raise GraphError("attr edges join property values to entities and need a key")
        values = [str(c) for c in candidates]
        ents = [_entity_desc(g, db, e) for e in g.entities()]
        variables = {
            "causal_graph": _entity_chain(g, source),
            "entities": ents,
            "node_name": key,
            "candidate_values": {src.instance_name: values},
        }
        payload = parse_answer(ask(oracle, "property_edge", variables), "per_entity_value_lists")
        chosen = _chosen(payload, src.instance_name, values)
        if not chosen:
            return g, []
        node = PropertyNode(g.next_id("p"), key, chosen[0], tuple(states))
        g.add_node(node)
        g.add_edge(ATTR, node.id, source)
        return g, [node]

    raise ValueError(f"unknown edge family {edge_family!r}")


# -- expansion driver --------------------------------------------------------
def entity_property_plan(db: AssetDatabase, asset_id: str) -> list[str]:
    """Static property keys of an asset, in expansion order."""
    return sorted(db.nodes[p].display_name for p in db.properties_of(asset_id))


def _expand_properties(g: ScenarioGraph, db: AssetDatabase, ent: EntityNode, oracle, budget) -> ScenarioGraph:
    def attach(g, key, states):
        if len(g.nodes) >= budget.max_total_nodes:
            return g, None
        options = list(states) or propose_property_values(g, ent, key, oracle)
        if not options:
            return g, None
        g, added = construct_edges(g, ent.id, options, ATTR, oracle, db=db, key=key, states=states)
        return g, (added[0] if added else None)

    for key in entity_property_plan(db, ent.asset_id):
        g, _ = attach(g, key, property_states(db, key))
    behaviors = db.behaviors_of(ent.asset_id)
    if not behaviors:
        return g
    names = sorted(db.nodes[b].display_name for b in behaviors)
    g, chosen = attach(g, BEHAVIOR_KEY, names)
    if chosen is None:
        return g
    beh = db.find(chosen.value)
    done = {p.key for p in g.properties_of(ent.id)}
    for key in sorted(db.nodes[p].display_name for p in db.properties_of(beh.id)):
        if key not in done:
            g, _ = attach(g, key, property_states(db, key))
    return g


def expand(
    graph: ScenarioGraph,
    db: AssetDatabase,
    budget: ExpansionBudget,
    oracle: OracleHandle,
    prior: Optional[str] = None,
    user_causes: Optional[dict[str, list[str]]] = None,
) -> ScenarioGraph:
    """Run both expansion phases; a partial graph is returned when the budget runs out.

    ``user_causes`` maps an event text to user-proposed candidate causes that
    join the oracle's proposals for that event.
    """
    g = graph.copy()
    user = {_key(k): v for k, v in (user_causes or {}).items()}

    # Phase 1: causes.
    attempted: set[str] = set()
    while True:
        open_events = [
            e for e in g.events()
            if e.id not in attempted and not g.causes(e.id) and g.depth(e.id) < budget.max_event_depth
        ]
        if not open_events:
            break
        open_events.sort(key=lambda e: (g.depth(e.id), g.node_ids().index(e.id)))
        if len(g.nodes) >= budget.max_total_nodes:
            for e in open_events:
                g.flag(e.id, BUDGET)
            break
        src = open_events[0]
        attempted.add(src.id)
        cands = propose_event_nodes(g, src, prior, oracle, user.get(_key(src.text), ()))
        if not cands:
            g.flag(src.id, NO_CAUSE)
            continue
        room = min(budget.max_events_per_node, budget.max_total_nodes - len(g.nodes))
        g, accepted = construct_edges(g, src.id, cands, CAUSE, oracle, limit=room)
        if not accepted:
            g.flag(src.id, NO_CAUSE)

    # Phase 2: entities and their properties.  The behavior node is the ego's
    # own event and takes no entity.
    for ev in g.events():
        if ev.id == g.behavior_node_id:
            continue
        if len(g.nodes) >= budget.max_total_nodes:
            g.flag(ev.id, BUDGET)
            continue
        cands = [a.id for a in list_entities(db)]
        if not cands:
            g.flag(ev.id, UNSIMULATABLE)
            continue
        g, ents = construct_edges(g, ev.id, cands, SUPPORT, oracle, db=db,
                                  limit=budget.max_total_nodes - len(g.nodes))
        for ent in ents:
            g = _expand_properties(g, db, ent, oracle, budget)
    return g


# -- scenarios ---------------------------------------------------------------
def _cause_paths(graph: ScenarioGraph) -> list[list[str]]:
    roots = [e.id for e in graph.events() if not graph.causes(e.id)]
    paths: list[list[str]] = []

    def walk(path):
        effects = graph.targets(path[-1], CAUSE)
        if not effects:
            if path[-1] == graph.behavior_node_id:
                paths.append(path)
            return
        for nxt in effects:
            walk(path + [nxt])

    for r in roots:
        walk([r])
    return paths


def subgraph_for_path(graph: ScenarioGraph, path: list[str]) -> ScenarioGraph:
    sub = ScenarioGraph(behavior_node_id=graph.behavior_node_id)
    keep = set(path)
    for ev in path:
        for ent in graph.sources(ev, SUPPORT):
            keep.add(ent)
            keep.update(graph.sources(ent, ATTR))
    for nid in graph.node_ids():
        if nid in keep:
            sub.add_node(graph.nodes[nid])
            if nid in graph.flags:
                sub.flags[nid] = set(graph.flags[nid])
    for a, b in zip(path, path[1:]):
        sub.add_edge(CAUSE, a, b)
    for kind, s, d in sorted(graph.edges):
        if kind != CAUSE and s in keep and d in keep:
            sub.add_edge(kind, s, d)
    return sub


def enumerate_scenarios(graph: ScenarioGraph, simulatable_only: bool = False) -> list[ScenarioGraph]:
    """One subgraph per root-to-behavior cause path, ordered by event texts.

    With ``simulatable_only`` paths through an event flagged unsimulatable are
    dropped (those are the ones grounding skips).
    """
    paths = _cause_paths(graph)
    if simulatable_only:
        paths = [p for p in paths if not any(UNSIMULATABLE in graph.event_flags(e) for e in p)]
    paths.sort(key=lambda p: [graph.nodes[e].text for e in p])
    return [subgraph_for_path(graph, p) for p in paths]


def perturb_property(graph: ScenarioGraph, property_node_id: str, new_value: str) -> ScenarioGraph:
    node = graph.nodes.get(property_node_id)
    if node is None:
        raise KeyError(f"unknown node '{property_node_id}'")
    if not isinstance(node, PropertyNode):
        raise GraphError(f"node '{property_node_id}' is not a property")
    if node.states and new_value not in node.states:
        raise ValueError(f"illegal value {new_value!r} for '{node.key}'; allowed {list(node.states)}")
    out = graph.copy()
    out.nodes[property_node_id] = dataclasses.replace(node, value=new_value)
    return out


def find_property(graph: ScenarioGraph, instance_name: str, key: str) -> PropertyNode:
    for ent in graph.entities():
        if ent.instance_name == instance_name:
            for p in graph.properties_of(ent.id):
                if p.key == key:
                    return p
    raise KeyError(f"no property '{key}' on '{instance_name}'")
