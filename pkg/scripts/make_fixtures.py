#!/usr/bin/env python3
"""Regenerate the bundled transcripts, goldens and fixtures.

The oracle answers are authored here as plain rules keyed on the request, then
replayed through the real pipeline so that every recorded prompt is exactly
the one the package renders.  Run from the repository root:

    python3 scripts/make_fixtures.py
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

import regen.oracle.backends as backends
from regen.assets import load_asset_db
from regen.compiler import assemble, compile as compile_config, validate_config
from regen.expansion import (
    BehaviorSpec, ExpansionBudget, construct_edges, enumerate_scenarios, expand, find_property,
    init_graph, perturb_property, propose_event_nodes,
)
from regen.graph import ATTR, CAUSE, SUPPORT, EntityNode, EventNode, PropertyNode, ScenarioGraph
from regen.oracle import OracleHandle, OracleResponse, Transcript, format_answer

DATA = Path(__file__).resolve().parents[1] / "src" / "regen" / "data"
BEHAVIOR = "The ego-vehicle stopped abruptly"

# -- authored oracle behaviour -------------------------------------------------
PROPOSALS = {
    (BEHAVIOR, None): [
        ("a jaywalker walked in front", "a pedestrian stepped onto the road ahead outside a crossing"),
        ("animal on the road", "an animal ran onto the lane ahead"),
        ("emergency vehicle approaching from behind", "an ambulance with its siren on came up from behind"),
        ("debris in the road", "an object lay on the lane ahead"),
    ],
    (BEHAVIOR, "police car"): [
        ("road block", "police blocked the road ahead"),
        ("police chase", "a police car chasing a suspect cut across the ego lane"),
        ("arrest", "an arrest was taking place on the road ahead"),
    ],
}
USER_CAUSES = {BEHAVIOR: ["a tree fell in front", "a jaywalker in another city", "a cyclist changed lanes"]}
REJECTED_CAUSES = {"a jaywalker in another city"}

ENTITY_CHOICE = {
    "a jaywalker walked in front": ["pedestrian"],
    "animal on the road": [],
    "emergency vehicle approaching from behind": ["ambulance"],
    "debris in the road": ["debris"],
    "a tree fell in front": [],
    "Tree fell in front": [],
    "a cyclist changed lanes": ["bicycle"],
    "the car in front braked suddenly": ["sedan"],
}

VEHICLE_STARTS = [
    "behind the ego-vehicle on adjacent lane", "behind the ego-vehicle on same lane",
    "in front of ego-vehicle on adjacent lane", "in front of ego-vehicle on same lane",
]
VEHICLE_ENDS = [
    "behind the ego-vehicle on same lane", "in front of ego-vehicle on adjacent lane",
    "in front of ego-vehicle on same lane",
]
VALUE_PROPOSALS = {
    ("ambulance1", "starting location"): VEHICLE_STARTS,
    ("ambulance1", "ending location"): VEHICLE_ENDS,
    ("ambulance1", "target speed"): ["30 km/h", "40 km/h", "60 km/h"],
    ("pedestrian1", "starting location"): ["on the sidewalk in front of ego-vehicle", "in front of ego-vehicle on same lane"],
    ("pedestrian1", "ending location"): ["across the road from its starting location", "on the sidewalk in front of ego-vehicle"],
    ("pedestrian1", "target speed"): ["5 km/h", "10 km/h"],
    ("debris1", "starting location"): ["in front of ego-vehicle on same lane", "in front of ego-vehicle on adjacent lane"],
    ("bicycle1", "starting location"): VEHICLE_STARTS,
    ("bicycle1", "ending location"): VEHICLE_ENDS,
    ("bicycle1", "target speed"): ["15 km/h", "25 km/h"],
}
PROPERTY_CHOICE = {
    ("ambulance1", "brake light"): [],
    ("ambulance1", "siren"): ["on"],
    ("ambulance1", "behavior"): ["constant speed"],
    ("ambulance1", "ending location"): ["in front of ego-vehicle on adjacent lane"],
    ("ambulance1", "starting location"): ["behind the ego-vehicle on adjacent lane"],
    ("ambulance1", "target speed"): ["40 km/h"],
    ("pedestrian1", "behavior"): ["walking"],
    ("pedestrian1", "starting location"): ["on the sidewalk in front of ego-vehicle"],
    ("pedestrian1", "ending location"): ["across the road from its starting location"],
    ("pedestrian1", "target speed"): ["5 km/h"],
    ("debris1", "starting location"): ["in front of ego-vehicle on same lane"],
    ("bicycle1", "behavior"): ["change lanes"],
    ("bicycle1", "starting location"): ["in front of ego-vehicle on adjacent lane"],
    ("bicycle1", "ending location"): ["in front of ego-vehicle on same lane"],
    ("bicycle1", "target speed"): ["15 km/h"],
}

ENTITYLESS_ROOTS = {"a truck lost its load"}

EGO = "ego-vehicle"
_STEADY = ("ego-vehicle", "Ego Driving Steady", 'is_ego_driving_steady("ego-vehicle")')
_BRAKING = ("ego-vehicle", "Ego Braking", 'is_braking("ego-vehicle")')
_STOPPED = ("ego-vehicle", "Ego Stopped Abruptly", 'is_currently_stopped("ego-vehicle")')
FSMS = {
    "emergency vehicle approaching from behind": {
        "states": [
            ("ambulance1", "Ambulance Approaching", 'behind_vehicle(ambulance1, "ego-vehicle") and is_currently_moving(ambulance1)'),
            ("ambulance1", "Ambulance Close to Ego", 'are_close_by(ambulance1, "ego-vehicle") and is_currently_moving(ambulance1)'),
            ("ambulance1", "Ambulance Passing Ego", 'right_in_front(ambulance1, "ego-vehicle") and is_currently_moving(ambulance1)'),
            _STEADY, _BRAKING, _STOPPED,
        ],
        "fsm": [
            [("ambulance1", "Ambulance Approaching"), (EGO, "Ego Driving Steady")],
            [("ambulance1", "Ambulance Close to Ego")],
            [(EGO, "Ego Braking")],
            [(EGO, "Ego Stopped Abruptly")],
            [("ambulance1", "Ambulance Passing Ego")],
        ],
    },
    "a jaywalker walked in front": {
        "states": [
            ("pedestrian1", "Pedestrian Walking", "is_currently_moving(pedestrian1)"),
            ("pedestrian1", "Pedestrian In Front", 'right_in_front(pedestrian1, "ego-vehicle") and is_currently_moving(pedestrian1)'),
            _STEADY, _BRAKING, _STOPPED,
        ],
        "fsm": [
            [("pedestrian1", "Pedestrian Walking"), (EGO, "Ego Driving Steady")],
            [("pedestrian1", "Pedestrian In Front")],
            [(EGO, "Ego Braking")],
            [(EGO, "Ego Stopped Abruptly")],
        ],
    },
    "debris in the road": {
        "states": [
            ("debris1", "Debris Ahead", 'right_in_front(debris1, "ego-vehicle")'),
            _STEADY, _BRAKING, _STOPPED,
        ],
        "fsm": [
            [(EGO, "Ego Driving Steady")],
            [("debris1", "Debris Ahead")],
            [(EGO, "Ego Braking")],
            [(EGO, "Ego Stopped Abruptly")],
        ],
    },
    "a cyclist changed lanes": {
        "states": [
            ("bicycle1", "Cyclist Riding", "is_currently_moving(bicycle1)"),
            ("bicycle1", "Cyclist Cutting In", 'right_in_front(bicycle1, "ego-vehicle") and is_currently_moving(bicycle1)'),
            _STEADY, _BRAKING, _STOPPED,
        ],
        "fsm": [
            [("bicycle1", "Cyclist Riding"), (EGO, "Ego Driving Steady")],
            [("bicycle1", "Cyclist Cutting In")],
            [(EGO, "Ego Braking")],
            [(EGO, "Ego Stopped Abruptly")],
        ],
    },
    "the car in front braked suddenly": {
        "states": [
            ("sedan1", "Sedan Ahead", 'right_in_front(sedan1, "ego-vehicle") and is_currently_moving(sedan1)'),
            ("sedan1", "Sedan Braking", "is_braking(sedan1)"),
            _STEADY, _BRAKING, ("ego-vehicle", "Ego Stopped", 'is_currently_stopped("ego-vehicle")'),
        ],
        "fsm": [
            [("sedan1", "Sedan Ahead"), (EGO, "Ego Driving Steady")],
            [("sedan1", "Sedan Braking")],
            [(EGO, "Ego Braking")],
            [(EGO, "Ego Stopped")],
        ],
    },
}


def respond(template_id: str, v: dict) -> str:
    if template_id in ("event_proposal", "event_proposal_prior"):
        key = (v["causal_graph"][-1], v.get("prior"))
        return ("Abrupt stops are usually reactions to something entering or blocking the path.\n"
                + format_answer(PROPOSALS[key], "name_desc_list"))
    if template_id == "event_edge":
        chosen = [c for c in v["candidates"] if c not in REJECTED_CAUSES]
        return "Each candidate was checked as a direct cause.\n" + format_answer({"chosen": chosen}, "per_entity_value_lists")
    if template_id == "entity_edge":
        chosen = [c for c in ENTITY_CHOICE[v["event"]] if c in v["candidates"]]
        return "Only simulator entities that can play the event are kept.\n" + format_answer({"chosen": chosen}, "per_entity_value_lists")
    if template_id == "property_proposal":
        (name,) = v["entities_name"]
        values = VALUE_PROPOSALS[(name, v["node_name"])]
        return "Listing values the simulator can represent.\n" + format_answer({name: values}, "per_entity_value_lists")
    if template_id == "property_edge":
        (name,) = v["candidate_values"]
        chosen = PROPERTY_CHOICE.get((name, v["node_name"]), [])
        payload = {name: chosen} if chosen else {}
        return f"1. **{v['node_name']}**\n- Conclusion: see below.\n" + format_answer(payload, "per_entity_value_lists")
    if template_id == "fsm_grounding":
        chain = v["causal_graph"]
        key = chain[1] if chain[0] in ENTITYLESS_ROOTS else chain[0]
        return "The stages follow the cause before its effect.\n" + format_answer(FSMS[key], "fsm_listing")
    raise KeyError(template_id)


def _authoring_query(handle, request):
    return OracleResponse(request, respond(request.template_id, request.vars))


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    print(f"wrote {path.relative_to(DATA.parents[2])}")


def abrupt_stop(db) -> None:
    rec = Transcript(user_causes=USER_CAUSES)
    oracle = OracleHandle.scripted(Transcript(), recorder=rec)
    graph = expand(init_graph(BehaviorSpec(BEHAVIOR)), db, ExpansionBudget(), oracle, user_causes=USER_CAUSES)
    _write(DATA / "goldens" / "abrupt_stop.graph.json", graph.to_json())
    # Prior-conditioned proposals and the three-entity classification shown alongside them.
    propose_event_nodes(graph, "e0", "police car", oracle)
    probe = ScenarioGraph(behavior_node_id="e0")
    probe.add_node(EventNode("e0", BEHAVIOR))
    for i, text in enumerate(["emergency vehicle approaching from behind", "Tree fell in front"], start=1):
        probe.add_node(EventNode(f"n{i}", text))
        probe.add_edge(CAUSE, f"n{i}", "e0")
        construct_edges(probe, f"n{i}", ["bicycle", "ambulance", "sedan"], SUPPORT, oracle, db=db)
    configs = {}
    for sub in enumerate_scenarios(graph, simulatable_only=True):
        cfg = compile_config(sub, db, oracle)
        configs[cfg.causal_graph[0]] = cfg
    _write(DATA / "goldens" / "ambulance.config.json", configs["emergency vehicle approaching from behind"].to_json())
    amb = next(s for s in enumerate_scenarios(graph, simulatable_only=True)
               if s.nodes[_root(s)].text.startswith("emergency"))
    _write(DATA / "fixtures" / "ambulance.graph.json", amb.to_json())
    bad = json.loads(configs["emergency vehicle approaching from behind"].to_json())
    bad["predicates"].append({"agent": "ambulance1", "name": "Ambulance Parked", "expr": "is_currently_stopped(ambulance1)"})
    bad["fsm"]["stages"][-1].append(["ambulance1", "Ambulance Parked"])
    _write(DATA / "fixtures" / "contradictory.config.json", json.dumps(bad, indent=2, ensure_ascii=False) + "\n")
    _write(DATA / "transcripts" / "abrupt_stop.transcript.json", rec.to_json())


def _root(g: ScenarioGraph) -> str:
    return next(e.id for e in g.events() if not g.causes(e.id))


SEDAN_PROPS = [
    ("p1", "brake light", "on", ("off", "on")),
    ("p2", "front door", "closed", ("closed", "open")),
    ("p3", "behavior", "stop abruptly", ("change lanes", "constant speed", "delayed start", "stationary", "stop abruptly")),
    ("p4", "starting location", "in front of ego-vehicle on same lane", ()),
    ("p5", "target speed", "20 km/h", ()),
]


def counterfactual(db) -> None:
    g = ScenarioGraph(behavior_node_id="e0")
    g.add_node(EventNode("e0", BEHAVIOR))
    g.add_node(EventNode("n1", "the car in front braked suddenly"))
    g.add_edge(CAUSE, "n1", "e0")
    g.add_node(EntityNode("a1", "sedan", "sedan1"))
    g.add_edge(SUPPORT, "a1", "n1")
    for pid, key, value, states in SEDAN_PROPS:
        g.add_node(PropertyNode(pid, key, value, states))
        g.add_edge(ATTR, pid, "a1")
    _write(DATA / "fixtures" / "counterfactual.graph.json", g.to_json())
    rec = Transcript()
    oracle = OracleHandle.scripted(Transcript(), recorder=rec)
    compile_config(g, db, oracle)
    perturbed = perturb_property(g, find_property(g, "sedan1", "brake light").id, "off")
    compile_config(perturbed, db, oracle)
    _write(DATA / "transcripts" / "counterfactual.transcript.json", rec.to_json())


def diamond(db) -> None:
    """Two cause paths sharing a root: a load spill both makes the car ahead brake and leaves debris."""
    g = ScenarioGraph(behavior_node_id="e0")
    g.add_node(EventNode("e0", BEHAVIOR))
    g.add_node(EventNode("n1", "the car in front braked suddenly"))
    g.add_node(EventNode("n2", "debris in the road"))
    g.add_node(EventNode("n3", "a truck lost its load"))
    for src, dst in (("n1", "e0"), ("n2", "e0"), ("n3", "n1"), ("n3", "n2")):
        g.add_edge(CAUSE, src, dst)
    g.add_node(EntityNode("a1", "sedan", "sedan1"))
    g.add_edge(SUPPORT, "a1", "n1")
    g.add_node(EntityNode("a2", "debris", "debris1"))
    g.add_edge(SUPPORT, "a2", "n2")
    for i, (_, key, value, states) in enumerate(SEDAN_PROPS, start=1):
        g.add_node(PropertyNode(f"p{i}", key, value, states))
        g.add_edge(ATTR, f"p{i}", "a1")
    g.add_node(PropertyNode("p6", "starting location", "in front of ego-vehicle on same lane"))
    g.add_edge(ATTR, "p6", "a2")
    _write(DATA / "fixtures" / "diamond.graph.json", g.to_json())
    rec = Transcript()
    oracle = OracleHandle.scripted(Transcript(), recorder=rec)
    for sub in enumerate_scenarios(g, simulatable_only=True):
        compile_config(sub, db, oracle)
    _write(DATA / "transcripts" / "diamond.transcript.json", rec.to_json())


def delivery_truck(db) -> None:
    g = ScenarioGraph(behavior_node_id="e0")
    g.add_node(EventNode("e0", BEHAVIOR))
    g.add_node(EventNode("n1", "a box fell off a delivery truck"))
    g.add_edge(CAUSE, "n1", "e0")
    g.add_node(EntityNode("a1", "truck", "truck1"))
    g.add_node(EntityNode("a2", "box", "box1"))
    g.add_edge(SUPPORT, "a1", "n1")
    g.add_edge(SUPPORT, "a2", "n1")
    props = [
        ("p1", "a1", "behavior", "constant speed", ("change lanes", "constant speed", "stationary", "stop abruptly")),
        ("p2", "a1", "ending location", "past the intersection", ()),
        ("p3", "a1", "starting location", "approaching the intersection from the left", ()),
        ("p4", "a1", "target speed", "40 km/h", ()),
        ("p5", "a2", "cargo state", "on truck", ("falling", "on ground", "on truck")),
        ("p6", "a2", "starting location", "on the truck", ()),
    ]
    for pid, owner, key, value, states in props:
        g.add_node(PropertyNode(pid, key, value, states))
        g.add_edge(ATTR, pid, owner)
    states = [
        ("truck1", "Approaching Intersection", 'is_currently_moving(truck1) and in_lane(truck1, "west_in")'),
        ("truck1", "In Intersection", "at_intersection(truck1)"),
        ("truck1", "Exiting Intersection", "at_intersection(truck1) and is_currently_moving(truck1)"),
        ("box1", "On Truck", 'property_is(box1, "cargo state", "on truck")'),
        ("box1", "Falling", 'property_is(box1, "cargo state", "falling")'),
        ("box1", "On Ground", 'property_is(box1, "cargo state", "on ground")'),
        (EGO, "Driving Steady", 'is_ego_driving_steady("ego-vehicle")'),
        (EGO, "Braking", 'is_braking("ego-vehicle")'),
        (EGO, "Stopped", 'is_currently_stopped("ego-vehicle")'),
    ]
    stages = [
        [("truck1", "Approaching Intersection"), ("box1", "On Truck"), (EGO, "Driving Steady")],
        [("truck1", "In Intersection"), ("box1", "Falling")],
        [("box1", "On Ground"), (EGO, "Braking")],
        [("truck1", "Exiting Intersection"), (EGO, "Stopped")],
    ]
    cfg = assemble(g, db, states, stages, route_id="intersection_4way/straight_through")
    cfg.light_overrides = {"all": "green"}
    report = validate_config(cfg, db)
    assert not report.errors, report.errors
    _write(DATA / "fixtures" / "delivery_truck.graph.json", g.to_json())
    _write(DATA / "fixtures" / "delivery_truck.config.json", cfg.to_json())


def main(argv=None) -> None:
    argparse.ArgumentParser(description=__doc__.splitlines()[0]).parse_args(argv)
    db = load_asset_db("driving")
    saved = backends.query
    backends.query = _authoring_query
    try:
        abrupt_stop(db)
        counterfactual(db)
        diamond(db)
        delivery_truck(db)
    finally:
        backends.query = saved


if __name__ == "__main__":
    main()
