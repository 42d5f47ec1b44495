"""Simulator asset database: a directed graph of what a scenario may contain.

Edges point from an option to its owner, e.g. ``siren -> ambulance`` (siren is
a property of the ambulance) or ``siren:on -> siren`` (``on`` is a state of
the siren).  Files are YAML documents with ``nodes`` and ``edges`` sections.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

KINDS = ("entity-agent", "entity-object", "property", "behavior", "state", "sensor")
ENTITY_KINDS = ("entity-agent", "entity-object")


class AssetDbError(ValueError):
    """Raised for malformed or invariant-violating asset databases."""


@dataclass(frozen=True)
class AssetNode:
    id: str
    kind: str
    display_name: str
    metadata: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class AssetDatabase:
    nodes: dict[str, AssetNode]
    edges: frozenset[tuple[str, str]]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AssetDatabase):
            return NotImplemented
        return (
            self.edges == other.edges
            and self.nodes.keys() == other.nodes.keys()
            and all(
                self.nodes[k] == other.nodes[k] and self.nodes[k].metadata == other.nodes[k].metadata
                for k in self.nodes
            )
        )

    def __hash__(self) -> int:
        return hash((frozenset(self.nodes), self.edges))

    def children(self, node_id: str) -> list[str]:
        """Ids of nodes with an edge into ``node_id`` (its options), sorted."""
        return sorted(src for src, dst in self.edges if dst == node_id)

    def owners(self, node_id: str) -> list[str]:
        return sorted(dst for src, dst in self.edges if src == node_id)

    def of_kind(self, *kinds: str) -> list[AssetNode]:
        return [self.nodes[k] for k in sorted(self.nodes) if self.nodes[k].kind in kinds]

    def find(self, name: str) -> AssetNode | None:
        """Look a node up by id, falling back to a unique display-name match."""
        if name in self.nodes:
            return self.nodes[name]
        hits = [n for n in self.nodes.values() if n.display_name == name]
        return hits[0] if len(hits) == 1 else None

    def properties_of(self, owner_id: str) -> list[str]:
        return [c for c in self.children(owner_id) if self.nodes[c].kind == "property"]

    def behaviors_of(self, entity_id: str) -> list[str]:
        return [c for c in self.children(entity_id) if self.nodes[c].kind == "behavior"]


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = loader.construct_mapping(node, deep=deep)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _where(source: str, entry: dict) -> str:
    return f"{source}:{entry.get('__line__', '?')}"


def parse_asset_db(text: str, source: str = "<string>") -> AssetDatabase:
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise AssetDbError(f"{loc}: cannot parse asset database: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise AssetDbError(f"{source}: top level must be a mapping with 'nodes' and 'edges'")

    nodes: dict[str, AssetNode] = {}
    for entry in doc.get("nodes") or []:
        if not isinstance(entry, dict):
            raise AssetDbError(f"{source}: node entries must be mappings, got {entry!r}")
        for key in ("id", "kind"):
            if key not in entry:
                raise AssetDbError(f"{_where(source, entry)}: node missing field '{key}'")
        node_id = str(entry["id"])
        kind = entry["kind"]
        if kind not in KINDS:
            raise AssetDbError(f"{_where(source, entry)}: node '{node_id}' has unknown kind '{kind}'")
        if node_id in nodes:
            raise AssetDbError(f"{_where(source, entry)}: duplicate node id '{node_id}'")
        meta = dict(entry.get("metadata") or {})
        meta.pop("__line__", None)
        nodes[node_id] = AssetNode(node_id, kind, str(entry.get("display_name", node_id)), meta)

    edges = set()
    for entry in doc.get("edges") or []:
        if not isinstance(entry, dict) or "from" not in entry or "to" not in entry:
            raise AssetDbError(f"{source}: edge entries need 'from' and 'to', got {entry!r}")
        edges.add((str(entry["from"]), str(entry["to"])))

    db = AssetDatabase(nodes, frozenset(edges))
    validate_asset_db(db)
    return db


def validate_asset_db(db: AssetDatabase) -> None:
    for src, dst in sorted(db.edges):
        for end in (src, dst):
            if end not in db.nodes:
                raise AssetDbError(f"edge ({src} -> {dst}) references missing node '{end}'")
    out_deg = {k: 0 for k in db.nodes}
    in_deg = {k: 0 for k in db.nodes}
    for src, dst in db.edges:
        out_deg[src] += 1
        in_deg[dst] += 1
    for node in db.nodes.values():
        if node.kind == "property" and out_deg[node.id] == 0:
            raise AssetDbError(f"property '{node.id}' has no owner edge")
        if node.kind in ENTITY_KINDS and out_deg[node.id]:
            raise AssetDbError(f"entity '{node.id}' must only have incoming edges")
        if node.kind == "state" and in_deg[node.id]:
            raise AssetDbError(f"state '{node.id}' must not have incoming edges")
        if node.kind == "state" and any(db.nodes[d].kind != "property" for s, d in db.edges if s == node.id):
            raise AssetDbError(f"state '{node.id}' may only attach to properties")
    # Kahn's algorithm for the acyclicity check.
    indeg = dict(in_deg)
    ready = [k for k, d in indeg.items() if d == 0]
    seen = 0
    adjacency: dict[str, list[str]] = {k: [] for k in db.nodes}
    for src, dst in db.edges:
        adjacency[src].append(dst)
    while ready:
        cur = ready.pop()
        seen += 1
        for nxt in adjacency[cur]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
    if seen != len(db.nodes):
        cyclic = sorted(k for k, d in indeg.items() if d > 0)
        raise AssetDbError(f"asset database contains a cycle through {cyclic}")


def load_asset_db(path: str | Path) -> AssetDatabase:
    """Load a database file, or a bundled one by name (``driving``, ``tabletop``)."""
    p = Path(path)
    if not p.exists() and str(path) in bundled_asset_dbs():
        text = resources.files("regen.data.assets").joinpath(f"{path}.assetdb").read_text()
        return parse_asset_db(text, f"{path}.assetdb")
    try:
        text = p.read_text()
    except OSError as exc:
        raise AssetDbError(f"cannot read asset database {path}: {exc}") from exc
    return parse_asset_db(text, str(path))


def bundled_asset_dbs() -> list[str]:
    return sorted(
        f.name[: -len(".assetdb")]
        for f in resources.files("regen.data.assets").iterdir()
        if f.name.endswith(".assetdb")
    )


def dump_asset_db(db: AssetDatabase) -> str:
    nodes = []
    for node in (db.nodes[k] for k in sorted(db.nodes)):
        entry: dict[str, Any] = {"id": node.id, "kind": node.kind, "display_name": node.display_name}
        if node.metadata:
            entry["metadata"] = dict(node.metadata)
        nodes.append(entry)
    edges = [{"from": s, "to": d} for s, d in sorted(db.edges)]
    return yaml.safe_dump({"nodes": nodes, "edges": edges}, sort_keys=False)


def list_entities(db: AssetDatabase) -> list[AssetNode]:
    return db.of_kind(*ENTITY_KINDS)


def property_states(db: AssetDatabase, property_id: str) -> list[str]:
    """State options of a property, sorted; empty when the oracle supplies values."""
    node = db.find(property_id)
    if node is None or node.kind != "property":
        raise KeyError(f"unknown property '{property_id}'")
    return sorted(db.nodes[c].display_name for c in db.children(node.id) if db.nodes[c].kind == "state")


def with_node(db: AssetDatabase, node: AssetNode, edges: list[tuple[str, str]] = ()) -> AssetDatabase:
    """Return a new database with ``node`` (and edges) added; the input is untouched."""
    nodes = dict(db.nodes)
    nodes[node.id] = node
    out = AssetDatabase(nodes, db.edges | frozenset(edges))
    validate_asset_db(out)
    return out
