"""Road maps: lanes with centerlines, intersections, traffic lights and ego routes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .geometry import Polyline


class MapError(ValueError):
    pass


@dataclass
class Lane:
    id: str
    centerline: Polyline
    width: float
    left: Optional[str] = None
    right: Optional[str] = None
    successors: list[str] = field(default_factory=list)
    connector: bool = False  # lies inside an intersection box


@dataclass
class TrafficLight:
    id: str
    intersection: str
    lanes: list[str]  # controlled incoming lanes; the stop line is each lane's end
    schedule: list[tuple[str, float]]  # (state, seconds), cycled
    offset: float = 0.0

    def state_at(self, t: float) -> str:
        cycle = sum(d for _, d in self.schedule)
        if cycle <= 0:
            return self.schedule[0][0] if self.schedule else "off"
        u = (t + self.offset) % cycle
        for state, dur in self.schedule:
            if u < dur:
                return state
            u -= dur
        return self.schedule[-1][0]


@dataclass
class Intersection:
    id: str
    center: tuple[float, float]
    half_size: float
    incoming: list[str]
    traffic_lights: list[str]
    # approach side (relative to the ego route heading) -> incoming lane / straight exit lane
    approaches: dict[str, str] = field(default_factory=dict)
    exits: dict[str, str] = field(default_factory=dict)

    def contains(self, x: float, y: float) -> bool:
        return abs(x - self.center[0]) <= self.half_size and abs(y - self.center[1]) <= self.half_size


@dataclass
class EgoRoute:
    id: str
    start: tuple[float, float]
    heading: float
    goal: tuple[float, float]
    target_speed: float  # m/s
    primitive: str


@dataclass
class RoadMap:
    id: str
    lanes: dict[str, Lane]
    intersections: dict[str, Intersection] = field(default_factory=dict)
    traffic_lights: dict[str, TrafficLight] = field(default_factory=dict)
    routes: dict[str, EgoRoute] = field(default_factory=dict)
    sidewalk_offset: float = 1.5

    def check(self) -> None:
        for lane in self.lanes.values():
            for side, other in (("left", lane.left), ("right", lane.right)):
                if other is None:
                    continue
                if other not in self.lanes:
                    raise MapError(f"lane {lane.id} {side} neighbour {other} missing")
                back = self.lanes[other].right if side == "left" else self.lanes[other].left
                if back != lane.id:
                    raise MapError(f"adjacency between {lane.id} and {other} is not symmetric")
            for s in lane.successors:
                if s not in self.lanes:
                    raise MapError(f"lane {lane.id} successor {s} missing")
            _check_simple(lane)
        for tl in self.traffic_lights.values():
            owners = [x for x in self.intersections.values() if tl.id in x.traffic_lights]
            if len(owners) != 1 or owners[0].id != tl.intersection:
                raise MapError(f"traffic light {tl.id} must belong to exactly one intersection")

    def locate(self, x: float, y: float, heading: float | None = None) -> Optional[tuple[str, float, float]]:
        """Best lane containing the point: (lane id, arc length, lateral)."""
        best = None
        for lane in sorted(self.lanes.values(), key=lambda ln: ln.id):
            s, lat = lane.centerline.project(x, y, extend=False)
            if abs(lat) > lane.width / 2 + 1e-6:
                continue
            px, py, h = lane.centerline.point_at(s)
            if math.hypot(px - x, py - y) > lane.width / 2 + 1e-6:
                continue
            if heading is not None and abs(math.remainder(h - heading, 2 * math.pi)) > math.pi / 2:
                continue
            key = (abs(lat), lane.connector, lane.id)
            if best is None or key < best[0]:
                best = (key, (lane.id, s, lat))
        return None if best is None else best[1]

    def intersection_at(self, x: float, y: float) -> Optional[str]:
        for i in sorted(self.intersections):
            if self.intersections[i].contains(x, y):
                return i
        return None

    def road_edges(self, lane_id: str) -> tuple[float, float]:
        """Lateral offsets (right, left) of the carriageway edges relative to ``lane_id``."""
        lane = self.lanes[lane_id]
        right, left = -lane.width / 2, lane.width / 2
        cur = lane
        while cur.right:
            cur = self.lanes[cur.right]
            right -= cur.width
        cur = lane
        while cur.left:
            cur = self.lanes[cur.left]
            left += cur.width
        return right, left


def _check_simple(lane: Lane) -> None:
    pts = lane.centerline.pts
    n = len(pts) - 1
    for i in range(n):
        for j in range(i + 2, n):
            if _segments_cross(pts[i], pts[i + 1], pts[j], pts[j + 1]):
                raise MapError(f"lane {lane.id} centerline self-intersects")


def _segments_cross(a, b, c, d) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2, o3, o4 = orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b)
    return o1 * o2 < 0 and o3 * o4 < 0


def parse_map(text: str, source: str = "<string>") -> RoadMap:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MapError(f"{source}: cannot parse map: {exc}") from exc
    try:
        lanes = {
            ln["id"]: Lane(ln["id"], Polyline(ln["centerline"]), float(ln.get("width", 4.0)), ln.get("left"),
                           ln.get("right"), list(ln.get("successors", [])), bool(ln.get("connector", False)))
            for ln in doc["lanes"]
        }
        inters = {
            x["id"]: Intersection(x["id"], tuple(x["center"]), float(x["half_size"]), list(x.get("incoming", [])),
                                  list(x.get("traffic_lights", [])), dict(x.get("approaches", {})),
                                  dict(x.get("exits", {})))
            for x in doc.get("intersections") or []
        }
        lights = {
            t["id"]: TrafficLight(t["id"], t["intersection"], list(t["lanes"]),
                                  [(str(s), float(d)) for s, d in t["schedule"]], float(t.get("offset", 0.0)))
            for t in doc.get("traffic_lights") or []
        }
        routes = {
            name: EgoRoute(name, tuple(r["start"]), float(r.get("heading", 0.0)), tuple(r["goal"]),
                           float(r["target_speed"]), r.get("primitive", "driving_forward"))
            for name, r in (doc.get("routes") or {}).items()
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise MapError(f"{source}: malformed map: {exc}") from exc
    m = RoadMap(doc["id"], lanes, inters, lights, routes, float(doc.get("sidewalk_offset", 1.5)))
    m.check()
    return m


def bundled_maps() -> list[str]:
    return sorted(
        f.name[: -len(".yaml")] for f in resources.files("regen.data.maps").iterdir() if f.name.endswith(".yaml")
    )


_CACHE: dict[str, RoadMap] = {}


def load_map(map_id: str | Path) -> RoadMap:
    key = str(map_id)
    if key in _CACHE:
        return _CACHE[key]
    p = Path(key)
    if p.exists():
        m = parse_map(p.read_text(), key)
    elif key in bundled_maps():
        m = parse_map(resources.files("regen.data.maps").joinpath(f"{key}.yaml").read_text(), f"{key}.yaml")
    else:
        raise MapError(f"unknown map {key!r}")
    _CACHE[key] = m
    return m


def resolve_route(route_id: str) -> tuple[RoadMap, EgoRoute]:
    """``map_id/route_name`` -> (map, route)."""
    map_id, sep, name = route_id.rpartition("/")
    if not sep:
        raise MapError(f"route id must look like 'map/route', got {route_id!r}")
    m = load_map(map_id)
    if name not in m.routes:
        raise MapError(f"map {map_id} has no route {name!r}")
    return m, m.routes[name]
