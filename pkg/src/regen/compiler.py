"""Ground a single-chain scenario subgraph into a checked ScenarioConfig."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .assets import ENTITY_KINDS, AssetDatabase
from .expansion import BEHAVIOR_KEY, DEFAULT_ROUTE
from .graph import CAUSE, UNSIMULATABLE, ScenarioGraph
from .oracle import OracleHandle, ask, parse_answer
from .predicates import LIBRARY, SIGNATURES, ExprError, calls, check_calls, parse_expr
from .vocabulary import LOCATION_KEYS, is_location_phrase

EGO = "ego-vehicle"
BEHAVIORAL_KEYS = (*LOCATION_KEYS, "target speed")
DEFAULT_SPEED_KMH = {"vehicle": (20.0, 40.0), "walker": (4.0, 6.0), "static": (0.0, 0.0)}
DEFAULT_DELAY_S = 3.0

# Predicate pairs one agent cannot satisfy at the same instant or switch between instantly.
EXCLUSIVE = {
    frozenset({"is_currently_moving", "is_currently_stopped"}),
    frozenset({"is_braking", "is_currently_stopped"}),
}


class CompileError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid scenario config:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class AbstractState:
    name: str
    agent: str
    predicate_expr: str

    @property
    def expr(self):
        return parse_expr(self.predicate_expr)


@dataclass
class TaskFsm:
    stages: list[list[tuple[str, str]]]
    initial_conditions: dict = field(default_factory=dict)

    @property
    def terminal_stage_index(self) -> int:
        return len(self.stages) - 1

    def to_dict(self) -> dict:
        return {
            "stages": [[list(p) for p in st] for st in self.stages],
            "terminal_stage_index": self.terminal_stage_index,
            "initial_conditions": self.initial_conditions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskFsm":
        return cls([[tuple(p) for p in st] for st in d["stages"]], dict(d.get("initial_conditions", {})))


@dataclass
class ScenarioConfig:
    narrative: str
    causal_graph: list[str]
    entities: list[dict]
    vehicles: list[dict]
    fsm: TaskFsm
    predicates: list[AbstractState]
    placement_vars: dict[str, dict]
    route_id: str = DEFAULT_ROUTE
    light_overrides: dict[str, str] = field(default_factory=dict)

    def entity(self, name: str) -> dict:
        for e in self.entities:
            if e["name"] == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "narrative": self.narrative,
            "route_id": self.route_id,
            "causal_graph": list(self.causal_graph),
            "entities": self.entities,
            "vehicles": self.vehicles,
            "fsm": self.fsm.to_dict(),
            "predicates": [{"agent": s.agent, "name": s.name, "expr": s.predicate_expr} for s in self.predicates],
            "placement_vars": self.placement_vars,
            "light_overrides": self.light_overrides,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(
            narrative=d["narrative"],
            causal_graph=list(d["causal_graph"]),
            entities=[dict(e) for e in d["entities"]],
            vehicles=[dict(v) for v in d.get("vehicles", [])],
            fsm=TaskFsm.from_dict(d["fsm"]),
            predicates=[AbstractState(p["name"], p["agent"], p["expr"]) for p in d["predicates"]],
            placement_vars={k: dict(v) for k, v in d.get("placement_vars", {}).items()},
            route_id=d.get("route_id", DEFAULT_ROUTE),
            light_overrides=dict(d.get("light_overrides", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


_SPEED = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(km/h|kmh|kph|m/s|mph)?\s*$", re.IGNORECASE)


def parse_speed_kmh(text: str) -> float:
    m = _SPEED.match(text or "")
    if not m:
        raise ValueError(f"cannot read a speed from {text!r}")
    value, unit = float(m.group(1)), (m.group(2) or "km/h").lower()
    if unit == "m/s":
        return value * 3.6
    if unit == "mph":
        return value * 1.609344
    return value


# -- building blocks ---------------------------------------------------------
def _event_chain(sub: ScenarioGraph) -> list[str]:
    """Event ids of a single-chain subgraph, cause first."""
    roots = [e.id for e in sub.events() if not sub.causes(e.id)]
    if len(roots) != 1:
        raise CompileError([f"subgraph must be a single cause chain, found {len(roots)} roots"])
    chain = roots
    while True:
        nxt = sub.targets(chain[-1], CAUSE)
        if not nxt:
            break
        if len(nxt) > 1:
            raise CompileError(["subgraph must be a single cause chain"])
        chain.append(nxt[0])
    if chain[-1] != sub.behavior_node_id:
        raise CompileError(["cause chain does not end at the behavior node"])
    return chain


def _route_info(route_id: str) -> tuple[str, float]:
    from .sim.roadmap import resolve_route

    _, route = resolve_route(route_id)
    return route.primitive, route.target_speed


def build_entities(sub: ScenarioGraph, db: AssetDatabase, route_id: str) -> list[dict]:
    chain = _event_chain(sub)
    ego_primitive, _ = _route_info(route_id)
    entities = []
    for ev in chain:
        for ent in sub.entities_of(ev):
            asset = db.nodes.get(ent.asset_id)
            if asset is None or asset.kind not in ENTITY_KINDS:
                raise CompileError([f"entity {ent.instance_name} uses unknown asset '{ent.asset_id}'"])
            behavioral, static, nodes = {}, {}, {}
            for p in sub.properties_of(ent.id):
                nodes[p.key] = p.id
                if p.key == BEHAVIOR_KEY:
                    behavioral["action"] = p.value
                elif p.key in BEHAVIORAL_KEYS:
                    behavioral[p.key] = p.value
                else:
                    static[p.key] = p.value
            primitive = "stationary"
            if "action" in behavioral:
                beh = db.find(behavioral["action"])
                if beh is not None and beh.kind == "behavior":
                    primitive = beh.metadata.get("primitive", "driving_forward")
            entities.append({
                "name": ent.instance_name,
                "type": "agent" if asset.kind == "entity-agent" else "object",
                "asset_id": asset.id,
                "behavioral_properties": dict(sorted(behavioral.items())),
                "static_properties": dict(sorted(static.items())),
                "primitive": primitive,
                "property_nodes": dict(sorted(nodes.items())),
            })
    entities.append({
        "name": EGO,
        "type": "agent",
        "asset_id": EGO,
        "behavioral_properties": {"action": sub.nodes[sub.behavior_node_id].text},
        "static_properties": {},
        "primitive": ego_primitive,
        "property_nodes": {},
    })
    return entities


def _agent_calls(state: AbstractState, agent: str) -> set[str]:
    try:
        expr = parse_expr(state.predicate_expr)
    except ExprError:
        return set()
    return {c.name for c in calls(expr) if c.args and str(c.args[0]) == agent}


def _first_stage(fsm: TaskFsm, states: dict, agent: str, pred) -> Optional[int]:
    for j, stage in enumerate(fsm.stages):
        for a, s in stage:
            st = states.get((a, s))
            if a == agent and st is not None and pred(st):
                return j
    return None


def derive_triggers(entities: list[dict], fsm: TaskFsm, predicates: list[AbstractState]) -> None:
    """Bind scripted actions to the stage that precedes their first use.

    ``stop_abruptly`` fires when the stage before the agent's first braking or
    stopped requirement is met; ``delayed_start`` starts its countdown before
    the first moving requirement; a property_is requirement on a new value
    schedules that value for the preceding stage.  Stage -1 means "at start".
    """
    states = {(s.agent, s.name): s for s in predicates}
    for ent in entities:
        name = ent["name"]
        ent.pop("trigger_stage", None)
        ent.pop("schedule", None)
        if ent["primitive"] == "stop_abruptly":
            j = _first_stage(fsm, states, name, lambda s: bool(_agent_calls(s, name) & {"is_braking", "is_currently_stopped"}))
            ent["trigger_stage"] = None if j is None else j - 1
        elif ent["primitive"] == "delayed_start":
            j = _first_stage(fsm, states, name, lambda s: "is_currently_moving" in _agent_calls(s, name))
            ent["trigger_stage"] = None if j is None else j - 1
            ent.setdefault("delay_s", DEFAULT_DELAY_S)
        schedule = []
        current = dict(ent["static_properties"])
        for j, stage in enumerate(fsm.stages):
            for a, s in stage:
                st = states.get((a, s))
                if a != name or st is None:
                    continue
                try:
                    expr = parse_expr(st.predicate_expr)
                except ExprError:
                    continue
                for c in calls(expr):
                    if c.name == "property_is" and len(c.args) == 3 and str(c.args[0]) == name:
                        key, value = str(c.args[1]), str(c.args[2])
                        if key in current and current[key] != value:
                            schedule.append({"stage": j - 1, "key": key, "value": value})
                            current[key] = value
        if schedule:
            ent["schedule"] = schedule


def build_placement(entities: list[dict], db: AssetDatabase) -> tuple[dict, list[dict], list[str]]:
    pv, vehicles, problems = {}, [], []
    for ent in entities:
        if ent["name"] == EGO:
            continue
        asset = db.nodes[ent["asset_id"]]
        motion = asset.metadata.get("motion", "static")
        bp = ent["behavioral_properties"]
        if ent["primitive"] == "stationary" or motion == "static":
            speed = (0.0, 0.0)
        elif "target speed" in bp:
            try:
                v = parse_speed_kmh(bp["target speed"])
                speed = (v, v)
            except ValueError as exc:
                problems.append(f"{ent['name']}: {exc}")
                speed = DEFAULT_SPEED_KMH[motion]
        else:
            speed = DEFAULT_SPEED_KMH[motion]
        pv[ent["name"]] = {
            "start": bp.get("starting location"),
            "end": bp.get("ending location"),
            "speed_kmh": [speed[0], speed[1]],
        }
        vehicles.append({
            "name": ent["name"],
            "blueprint_id": asset.metadata.get("blueprint_id", asset.id),
            "driving_policy": ent["primitive"],
            "type": "static" if motion == "static" else "dynamic",
            "speed_range": [speed[0], speed[1]],
        })
    return pv, vehicles, problems


def fsm_prompt_vars(causal: list[str], entities: list[dict]) -> dict:
    return {
        "causal_graph": causal,
        "entities": [
            {
                "name": e["name"],
                "entity_name": e["asset_id"],
                "behavioral_properties": e["behavioral_properties"],
                "static_properties": e["static_properties"],
            }
            for e in entities
        ],
        "predicate_library": "\n".join(f"- {SIGNATURES[n]}" for n in LIBRARY),
    }


def assemble(sub: ScenarioGraph, db: AssetDatabase, states, stages, route_id: str = DEFAULT_ROUTE) -> ScenarioConfig:
    """Build a config from already-grounded abstract states and stages."""
    chain = _event_chain(sub)
    causal = [sub.nodes[e].text for e in chain]
    entities = build_entities(sub, db, route_id)
    predicates = [AbstractState(name, agent, expr) for agent, name, expr in states]
    fsm = TaskFsm([[tuple(p) for p in st] for st in stages])
    derive_triggers(entities, fsm, predicates)
    pv, vehicles, problems = build_placement(entities, db)
    if problems:
        raise CompileError(problems)
    fsm.initial_conditions = {
        "placements": {k: {"start": v["start"], "end": v["end"]} for k, v in pv.items()},
        "properties": {e["name"]: e["static_properties"] for e in entities if e["static_properties"]},
    }
    overrides = {}
    for e in entities:
        if "traffic light" in e["static_properties"]:
            overrides["all"] = e["static_properties"]["traffic light"]
    return ScenarioConfig(
        narrative=" -> ".join(causal),
        causal_graph=causal,
        entities=entities,
        vehicles=vehicles,
        fsm=fsm,
        predicates=predicates,
        placement_vars=pv,
        route_id=route_id,
        light_overrides=overrides,
    )


def compile(subgraph: ScenarioGraph, db: AssetDatabase, oracle: OracleHandle,
            route_id: str = DEFAULT_ROUTE) -> ScenarioConfig:
    """Ask the oracle for abstract states and FSM stages, then validate the result."""
    chain = _event_chain(subgraph)
    bad = [subgraph.nodes[e].text for e in chain if UNSIMULATABLE in subgraph.event_flags(e)]
    if bad:
        raise CompileError([f"event {t!r} cannot be simulated" for t in bad])
    causal = [subgraph.nodes[e].text for e in chain]
    entities = build_entities(subgraph, db, route_id)
    payload = parse_answer(ask(oracle, "fsm_grounding", fsm_prompt_vars(causal, entities)), "fsm_listing")
    config = assemble(subgraph, db, payload["states"], payload["fsm"], route_id)
    report = validate_config(config, db)
    if report.errors:
        raise CompileError(report.errors)
    return config


# -- validation --------------------------------------------------------------
def lint_over_constraint(config: ScenarioConfig) -> list[str]:
    states = {(s.agent, s.name): s for s in config.predicates}
    warnings = []
    stages = config.fsm.stages
    for i in range(len(stages) - 1):
        cur, nxt = stages[i], stages[i + 1]
        cur_agents = {a: s for a, s in cur}
        for agent, s_next in nxt:
            if agent not in cur_agents:
                continue
            a_calls = _agent_calls(states.get((agent, cur_agents[agent]), AbstractState("", agent, "")), agent)
            b_calls = _agent_calls(states.get((agent, s_next), AbstractState("", agent, "")), agent)
            clash = sorted(
                f"{p}->{q}" for p in a_calls for q in b_calls if frozenset({p, q}) in EXCLUSIVE
            )
            others = [f"{a} '{s}'" for a, s in nxt if a != agent]
            if clash and others:
                warnings.append(
                    f"over-constrained: stage {i + 1} requires {agent} '{s_next}' ({', '.join(clash)} needs time "
                    f"after stage {i}) at the same moment as {', '.join(others)}; consider splitting stage {i + 1}"
                )
    return warnings


def validate_config(config: ScenarioConfig, db: AssetDatabase) -> ValidationReport:
    rep = ValidationReport()
    names = [e["name"] for e in config.entities]
    dupes = sorted({n for n in names if names.count(n) > 1})
    for n in dupes:
        rep.errors.append(f"duplicate entity name '{n}'")
    agents = set(names)

    if not config.fsm.stages:
        rep.errors.append("FSM has no stages")
    declared = {}
    for st in config.predicates:
        if st.agent not in agents:
            rep.errors.append(f"abstract state '{st.name}' belongs to undeclared agent '{st.agent}'")
        if (st.agent, st.name) in declared:
            rep.errors.append(f"abstract state '{st.name}' declared twice for '{st.agent}'")
        declared[(st.agent, st.name)] = st
        try:
            expr = parse_expr(st.predicate_expr)
        except ExprError as exc:
            rep.errors.append(f"abstract state '{st.name}': {exc}")
            continue
        rep.errors.extend(f"abstract state '{st.name}': {p}" for p in check_calls(expr, agents))
    for i, stage in enumerate(config.fsm.stages):
        if not stage:
            rep.errors.append(f"stage {i} is empty")
        for agent, name in stage:
            if agent not in agents:
                rep.errors.append(f"stage {i} references undeclared agent '{agent}'")
            elif (agent, name) not in declared:
                rep.errors.append(f"stage {i} references undeclared state '{name}' of '{agent}'")

    for ent in config.entities:
        if ent["name"] == EGO:
            continue
        asset = db.nodes.get(ent["asset_id"])
        if asset is None or asset.kind not in ENTITY_KINDS:
            rep.errors.append(f"entity '{ent['name']}' uses unknown asset '{ent['asset_id']}'")
            continue
        bp = ent.get("behavioral_properties", {})
        action = bp.get("action")
        if action is not None:
            allowed = sorted(db.nodes[b].display_name for b in db.behaviors_of(asset.id))
            if action not in allowed:
                rep.errors.append(f"entity '{ent['name']}' behavior '{action}' is not available for {asset.id} {allowed}")
        for key in LOCATION_KEYS:
            if key in bp and not is_location_phrase(bp[key], key):
                rep.errors.append(f"entity '{ent['name']}' {key} {bp[key]!r} is not in the placement vocabulary")
        for key, value in ent.get("static_properties", {}).items():
            prop = db.find(key)
            if prop is None or prop.kind != "property":
                rep.errors.append(f"entity '{ent['name']}' has unknown property '{key}'")
                continue
            opts = sorted(db.nodes[c].display_name for c in db.children(prop.id) if db.nodes[c].kind == "state")
            if opts and value not in opts:
                rep.errors.append(f"entity '{ent['name']}' {key}={value!r} not in {opts}")
        if ent["name"] not in config.placement_vars:
            rep.errors.append(f"entity '{ent['name']}' has no placement variables")
        elif not config.placement_vars[ent["name"]].get("start"):
            rep.errors.append(f"entity '{ent['name']}' has no starting location")
        if ent.get("primitive") in ("stop_abruptly",) and ent.get("trigger_stage") is None:
            rep.warnings.append(f"entity '{ent['name']}' stops abruptly but no stage requires it to brake or stop")
    ego = next((e for e in config.entities if e["name"] == EGO), None)
    if ego is None:
        rep.errors.append("entity roster lacks the ego-vehicle")
    elif ego.get("primitive") == "stop_abruptly" and ego.get("trigger_stage") is None:
        rep.warnings.append("ego-vehicle stops abruptly but no stage requires it to brake or stop")

    rep.warnings.extend(lint_over_constraint(config))
    return rep
