"""Typed scenario graph: events, entities and properties with their edges.

Edge directions follow the cause -> effect convention: ``CauseEdge`` points
from a cause event to the event it explains, ``SupportEdge`` from an entity to
the event it takes part in, and ``AttrEdge`` from a property to its entity.
"""
from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Union


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class EventNode:
    id: str
    text: str


@dataclass(frozen=True)
class EntityNode:
    id: str
    asset_id: str
    instance_name: str


@dataclass(frozen=True)
class PropertyNode:
    id: str
    key: str
    value: str
    # State options from the asset database; empty for oracle-valued keys.
    states: tuple[str, ...] = ()


Node = Union[EventNode, EntityNode, PropertyNode]

CAUSE, SUPPORT, ATTR = "cause", "support", "attr"
EDGE_KINDS = (CAUSE, SUPPORT, ATTR)
_EDGE_TYPES = {CAUSE: (EventNode, EventNode), SUPPORT: (EntityNode, EventNode), ATTR: (PropertyNode, EntityNode)}

# Event flags explaining why an event was left without causes or entities.
UNSIMULATABLE, BUDGET, NO_CAUSE = "unsimulatable", "budget", "no_cause"


def _id_key(node_id: str):
    m = re.match(r"([a-z]+)(\d+)$", node_id)
    return (m.group(1), int(m.group(2))) if m else (node_id, -1)


@dataclass
class ScenarioGraph:
    nodes: dict[str, Node] = field(default_factory=dict)
    edges: set[tuple[str, str, str]] = field(default_factory=set)  # (kind, src, dst)
    behavior_node_id: str = ""
    flags: dict[str, set[str]] = field(default_factory=dict)

    # -- queries -----------------------------------------------------------
    def node_ids(self) -> list[str]:
        return sorted(self.nodes, key=_id_key)

    def events(self) -> list[EventNode]:
        return [self.nodes[k] for k in self.node_ids() if isinstance(self.nodes[k], EventNode)]

    def entities(self) -> list[EntityNode]:
        return [self.nodes[k] for k in self.node_ids() if isinstance(self.nodes[k], EntityNode)]

    def properties(self) -> list[PropertyNode]:
        return [self.nodes[k] for k in self.node_ids() if isinstance(self.nodes[k], PropertyNode)]

    def sources(self, dst: str, kind: str) -> list[str]:
        return sorted((s for k, s, d in self.edges if k == kind and d == dst), key=_id_key)

    def targets(self, src: str, kind: str) -> list[str]:
        return sorted((d for k, s, d in self.edges if k == kind and s == src), key=_id_key)

    def causes(self, event_id: str) -> list[str]:
        return self.sources(event_id, CAUSE)

    def entities_of(self, event_id: str) -> list[EntityNode]:
        return [self.nodes[i] for i in self.sources(event_id, SUPPORT)]

    def properties_of(self, entity_id: str) -> list[PropertyNode]:
        return [self.nodes[i] for i in self.sources(entity_id, ATTR)]

    def depth(self, event_id: str) -> int:
        """Length of the longest cause chain from ``event_id`` down to the behavior."""
        best = 0
        stack = [(event_id, 0)]
        while stack:
            cur, d = stack.pop()
            effects = self.targets(cur, CAUSE)
            if not effects:
                best = max(best, d)
            stack.extend((e, d + 1) for e in effects)
        return best

    def event_flags(self, event_id: str) -> set[str]:
        return self.flags.get(event_id, set())

    def next_id(self, prefix: str) -> str:
        used = [int(k[len(prefix):]) for k in self.nodes if re.fullmatch(rf"{prefix}\d+", k)]
        return f"{prefix}{max(used) + 1 if used else 0}"

    # -- mutation ----------------------------------------------------------
    def add_node(self, node: Node) -> None:
        if node.id in self.nodes:
            raise GraphError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node

    def add_edge(self, kind: str, src: str, dst: str) -> None:
        if kind not in _EDGE_TYPES:
            raise GraphError(f"unknown edge kind {kind}")
        src_t, dst_t = _EDGE_TYPES[kind]
        if not isinstance(self.nodes.get(src), src_t) or not isinstance(self.nodes.get(dst), dst_t):
            raise GraphError(f"{kind} edge must run {src_t.__name__} -> {dst_t.__name__}: {src} -> {dst}")
        if kind == CAUSE and self._reaches(dst, src):
            raise GraphError(f"cause edge {src} -> {dst} would close a cycle")
        if kind == ATTR and self.targets(src, ATTR):
            raise GraphError(f"property {src} already attached")
        self.edges.add((kind, src, dst))

    def _reaches(self, start: str, goal: str) -> bool:
        stack, seen = [start], set()
        while stack:
            cur = stack.pop()
            if cur == goal:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(self.targets(cur, CAUSE))
        return False

    def flag(self, event_id: str, flag: str) -> None:
        self.flags.setdefault(event_id, set()).add(flag)

    def copy(self) -> "ScenarioGraph":
        return copy.deepcopy(self)

    # -- checks ------------------------------------------------------------
    def check(self) -> list[str]:
        """Return invariant violations (an empty list means the graph is valid)."""
        problems = []
        beh = self.nodes.get(self.behavior_node_id)
        if not isinstance(beh, EventNode):
            problems.append("behavior node missing or not an event")
        elif self.targets(beh.id, CAUSE):
            problems.append("behavior node has outgoing cause edges")
        for kind, src, dst in self.edges:
            src_t, dst_t = _EDGE_TYPES[kind]
            if not isinstance(self.nodes.get(src), src_t) or not isinstance(self.nodes.get(dst), dst_t):
                problems.append(f"ill-typed {kind} edge {src}->{dst}")
        for ent in self.entities():
            if not self.targets(ent.id, SUPPORT):
                problems.append(f"entity {ent.id} supports no event")
        for prop in self.properties():
            if len(self.targets(prop.id, ATTR)) != 1:
                problems.append(f"property {prop.id} must have exactly one owner")
            if prop.states and prop.value not in prop.states:
                problems.append(f"property {prop.id} value {prop.value!r} not in {list(prop.states)}")
        for ev in self.events():
            if self._reaches_via_causes_cycle(ev.id):
                problems.append(f"cause cycle through {ev.id}")
                break
        return problems

    def _reaches_via_causes_cycle(self, start: str) -> bool:
        return any(self._reaches(t, start) for t in self.targets(start, CAUSE))

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        nodes = []
        for node_id in self.node_ids():
            node = self.nodes[node_id]
            if isinstance(node, EventNode):
                entry = {"id": node.id, "type": "event", "text": node.text}
                if self.event_flags(node.id):
                    entry["flags"] = sorted(self.event_flags(node.id))
            elif isinstance(node, EntityNode):
                entry = {"id": node.id, "type": "entity", "asset_id": node.asset_id,
                         "instance_name": node.instance_name}
            else:
                entry = {"id": node.id, "type": "property", "key": node.key, "value": node.value}
                if node.states:
                    entry["states"] = list(node.states)
            nodes.append(entry)
        edges = [
            {"type": k, "from": s, "to": d}
            for k, s, d in sorted(self.edges, key=lambda e: (EDGE_KINDS.index(e[0]), _id_key(e[1]), _id_key(e[2])))
        ]
        return {"behavior_node_id": self.behavior_node_id, "nodes": nodes, "edges": edges}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioGraph":
        g = cls(behavior_node_id=data["behavior_node_id"])
        for entry in data["nodes"]:
            t = entry["type"]
            if t == "event":
                g.add_node(EventNode(entry["id"], entry["text"]))
                for f in entry.get("flags", []):
                    g.flag(entry["id"], f)
            elif t == "entity":
                g.add_node(EntityNode(entry["id"], entry["asset_id"], entry["instance_name"]))
            elif t == "property":
                g.add_node(PropertyNode(entry["id"], entry["key"], entry["value"], tuple(entry.get("states", ()))))
            else:
                raise GraphError(f"unknown node type {t!r}")
        for e in data["edges"]:
            g.add_edge(e["type"], e["from"], e["to"])
        return g

    @classmethod
    def from_json(cls, text: str) -> "ScenarioGraph":
        return cls.from_dict(json.loads(text))


def cause_chain_texts(graph: ScenarioGraph, event_ids: Iterable[str]) -> list[str]:
    return [graph.nodes[i].text for i in event_ids]
