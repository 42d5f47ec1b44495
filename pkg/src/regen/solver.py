"""Placement search: concrete start/end poses and speeds that make a config feasible.

Candidates come from the placement vocabulary laid out on a concrete map at a
fixed grid resolution.  Each joint candidate is pruned by cheap static checks
and then verified by rolling the simulator forward until the FSM's terminal
stage is met.
"""
from __future__ import annotations

import copy
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

from .assets import AssetDatabase
from .compiler import EGO, ScenarioConfig
from .sim import (
    Actor, NoPathError, Polyline, RoadMap, SimWorld, load_map, obb_corners, obb_overlap, plan_route,
    resolve_route, run, straight_route,
)
from .predicates import BoolOp, Call, parse_expr
from .vocabulary import VOCABULARY, Phrase, Region, region_for

DEFAULT_GAP_MIN = 8.0
HEADING_TOLERANCE = math.pi / 6
FREE_ROAM = 300.0  # m of lane followed by actors without an ending location
MAX_JOINT = 200_000
EGO_DIMENSIONS = {"length": 4.7, "width": 1.9, "a_max": 3.0, "b_max": 6.0}
DEFAULT_DIMENSIONS = {"length": 4.5, "width": 1.9, "a_max": 3.0, "b_max": 6.0}


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class SearchParams:
    grid_step: float = 5.0  # m
    speed_step: float = 1.0  # m/s
    max_candidates: int = 500
    seed: int = 0
    gap_min: float = DEFAULT_GAP_MIN
    max_ticks: int = 1200
    jobs: int = 1

    def __post_init__(self):
        if self.grid_step <= 0 or self.speed_step <= 0:
            raise ValueError("grid_step and speed_step must be positive")
        if self.max_candidates < 1 or self.max_ticks < 1 or self.jobs < 1:
            raise ValueError("max_candidates, max_ticks and jobs must be at least 1")


@dataclass
class ConcreteScenario:
    config: ScenarioConfig
    assignments: dict[str, dict]  # name -> {x0, y0, heading, xT, yT, speed} (m, rad, m/s)
    feasible: bool
    verdict: str
    reached_stage: int
    stage_log: list[int]
    unmet_stage: Optional[int] = None
    candidates_total: int = 0
    rollouts: int = 0
    search: dict = field(default_factory=dict)
    witness_trace: Optional[list[dict]] = None

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "verdict": self.verdict,
            "reached_stage": self.reached_stage,
            "unmet_stage": self.unmet_stage,
            "stage_log": self.stage_log,
            "assignments": self.assignments,
            "candidates_total": self.candidates_total,
            "rollouts": self.rollouts,
            "search": self.search,
            "config": self.config.to_dict(),
            "witness_trace": self.witness_trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConcreteScenario":
        return cls(
            config=ScenarioConfig.from_dict(d["config"]),
            assignments=d["assignments"],
            feasible=d["feasible"],
            verdict=d["verdict"],
            reached_stage=d["reached_stage"],
            stage_log=list(d["stage_log"]),
            unmet_stage=d.get("unmet_stage"),
            candidates_total=d.get("candidates_total", 0),
            rollouts=d.get("rollouts", 0),
            search=d.get("search", {}),
            witness_trace=d.get("witness_trace"),
        )


# -- geometry on the map -----------------------------------------------------
def _map_of(map_id) -> RoadMap:
    return map_id if isinstance(map_id, RoadMap) else load_map(map_id)


def _lane_point(road: RoadMap, lane_id: str, s: float):
    """Pose at arc length ``s`` of ``lane_id``, walking straight-on successors or predecessors."""
    lane = road.lanes[lane_id]
    for _ in range(16):
        if s < 0:
            h0 = lane.centerline.point_at(0.0)[2]
            prev = [l for l in road.lanes.values() if lane.id in l.successors]
            if not prev:
                return None
            lane = min(prev, key=lambda l: (abs(math.remainder(l.centerline.point_at(l.centerline.length)[2] - h0, 2 * math.pi)), l.id))
            s += lane.centerline.length
        elif s > lane.centerline.length:
            s -= lane.centerline.length
            h1 = lane.centerline.point_at(lane.centerline.length)[2]
            if not lane.successors:
                return None
            lane = min((road.lanes[n] for n in lane.successors),
                       key=lambda l: (abs(math.remainder(l.centerline.point_at(0.0)[2] - h1, 2 * math.pi)), l.id))
        else:
            return lane.centerline.point_at(s)
    return None


def _offsets(lo: float, hi: float, step: float) -> list[float]:
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [lo + i * step for i in range(n + 1)]


def _ego_lane(road: RoadMap, route) -> str:
    loc = road.locate(route.start[0], route.start[1], route.heading)
    if loc is None:
        raise SolverError(f"ego route {route.id} does not start on a lane")
    return loc[0]


def _region_poses(road: RoadMap, route, region: Region, step: float, anchor=None) -> list[tuple[float, tuple]]:
    """(distance to region centre, pose) pairs for a region."""
    center = (region.lo + region.hi) / 2
    out = []
    if region.anchor == "ego":
        lane_id = _ego_lane(road, route)
        lane = road.lanes[lane_id]
        if region.lane == "adjacent":
            lane_id = lane.left or lane.right
            if lane_id is None:
                return []
        s0 = road.lanes[lane_id].centerline.project(route.start[0], route.start[1])[0]
        right, _ = road.road_edges(_ego_lane(road, route))
        base_lane = _ego_lane(road, route)
        for o in _offsets(region.lo, region.hi, step):
            if region.lane == "sidewalk":
                p = _lane_point(road, base_lane, road.lanes[base_lane].centerline.project(*route.start)[0] + o)
                if p is None:
                    continue
                lat = right - road.sidewalk_offset
                x, y, h = p
                out.append((abs(o - center), (x - lat * math.sin(h), y + lat * math.cos(h), h + math.pi / 2)))
            else:
                p = _lane_point(road, lane_id, s0 + o)
                if p is not None:
                    out.append((abs(o - center), p))
    elif region.anchor == "approach":
        inter = road.intersections[sorted(road.intersections)[0]] if road.intersections else None
        if inter is None or region.lane not in inter.approaches:
            return []
        lane = road.lanes[inter.approaches[region.lane]]
        for o in _offsets(region.lo, region.hi, step):
            s = lane.centerline.length - o
            if s >= 0:
                out.append((abs(o - center), lane.centerline.point_at(s)))
    elif region.anchor == "exit":
        if anchor is None:
            raise SolverError("an exit region needs the actor's start pose")
        loc = road.locate(anchor[0], anchor[1], anchor[2])
        inter = road.intersections[sorted(road.intersections)[0]] if road.intersections else None
        if loc is None or inter is None or loc[0] not in inter.exits:
            return []
        lane = road.lanes[inter.exits[loc[0]]]
        for o in _offsets(region.lo, region.hi, step):
            if o <= lane.centerline.length:
                out.append((abs(o - center), lane.centerline.point_at(o)))
    elif region.anchor == "start":
        if anchor is None:
            raise SolverError("a start-anchored region needs the actor's start pose")
        base = _ego_lane(road, route)
        s, lat = road.lanes[base].centerline.project(anchor[0], anchor[1])
        right, left = road.road_edges(base)
        target = left + road.sidewalk_offset if lat < (right + left) / 2 else right - road.sidewalk_offset
        x, y, h = road.lanes[base].centerline.point_at(s, extend=True)
        out.append((0.0, (x - target * math.sin(h), y + target * math.cos(h), anchor[2])))
    else:
        raise SolverError(f"region anchor {region.anchor!r} has no pose generator")
    return sorted(out, key=lambda t: (round(t[0], 9), round(t[1][0], 9), round(t[1][1], 9)))


def enumerate_candidates(phrase: str, map_id, grid_step: float, *, role: str = "starting location",
                         route_id: Optional[str] = None, anchor=None, vocab: dict[str, Phrase] = VOCABULARY) -> list[tuple]:
    """Candidate poses (x, y, heading) for a location phrase, nearest to the region centre first."""
    if phrase not in vocab:
        raise SolverError(f"unknown location phrase {phrase!r}")
    region = (vocab[phrase].start if role == "starting location" else vocab[phrase].end)
    if region is None:
        raise SolverError(f"phrase {phrase!r} does not describe a {role}")
    road = _map_of(map_id)
    route = road.routes[route_id.rpartition("/")[2]] if route_id else road.routes[sorted(road.routes)[0]]
    if region.anchor == "attached":
        raise SolverError(f"phrase {phrase!r} is attached to another actor and has no poses of its own")
    return [p for _, p in _region_poses(road, route, region, grid_step, anchor)]


def speed_values(kmh_range, speed_step: float) -> list[float]:
    """Speeds in m/s over a km/h range, nearest to its middle first."""
    lo, hi = kmh_range[0] / 3.6, kmh_range[1] / 3.6
    vals = _offsets(lo, hi, speed_step) if hi > lo else [lo]
    mid = (lo + hi) / 2
    return sorted(vals, key=lambda v: (round(abs(v - mid), 9), v))


def min_spawn_gap_check(assignments: dict[str, dict], ego_route, gap_min: float = DEFAULT_GAP_MIN,
                        dynamic: Optional[set[str]] = None) -> bool:
    """True iff every dynamic actor spawns at least ``gap_min`` metres from the ego along its route."""
    line = ego_route if isinstance(ego_route, Polyline) else Polyline(ego_route)
    for name, a in assignments.items():
        if name == EGO or (dynamic is not None and name not in dynamic):
            continue
        s, _ = line.project(a["x0"], a["y0"])
        if abs(s) < gap_min:
            return False
    return True


# -- instantiation -----------------------------------------------------------
_EGO_PLANS: dict[tuple[int, str], tuple[RoadMap, object]] = {}


def _ego_plan(road: RoadMap, route):
    key = (id(road), route.id)
    hit = _EGO_PLANS.get(key)
    if hit is None or hit[0] is not road:
        wp = plan_route(road, (*route.start, route.heading), (*route.goal, route.heading)).waypoints
        hit = _EGO_PLANS[key] = (road, wp)
    return hit[1]


def _actor_route(road: RoadMap, motion: str, a: dict) -> Optional[Polyline]:
    if motion == "static":
        return None
    start = (a["x0"], a["y0"], a["heading"])
    if a.get("xT") is None:
        loc = road.locate(a["x0"], a["y0"], a["heading"])
        if loc is None:
            h = a["heading"]
            return Polyline([(a["x0"], a["y0"]), (a["x0"] + FREE_ROAM * math.cos(h), a["y0"] + FREE_ROAM * math.sin(h))])
        pts = [start[:2]]
        for k in range(1, int(FREE_ROAM // 2) + 1):
            p = _lane_point(road, loc[0], loc[1] + 2.0 * k)
            if p is None:
                break
            pts.append(p[:2])
        return Polyline(pts) if len(pts) > 1 else None
    if motion == "walker":
        return Polyline(straight_route(start, (a["xT"], a["yT"])).waypoints)
    return Polyline(plan_route(road, start, (a["xT"], a["yT"])).waypoints)


def instantiate(config: ScenarioConfig, assignments: dict[str, dict], db: AssetDatabase,
                gnss: Optional[dict[str, float]] = None) -> SimWorld:
    """Build a fresh world from a config and concrete placements."""
    road, route = resolve_route(config.route_id)
    actors = []
    for ent in config.entities:
        name = ent["name"]
        statics = dict(ent.get("static_properties", {}))
        common = dict(
            properties=statics,
            pinned=set(statics),
            trigger_stage=ent.get("trigger_stage"),
            schedule=[(s["stage"], s["key"], s["value"]) for s in ent.get("schedule", [])],
            delay=float(ent.get("delay_s", 0.0)),
            gnss_sigma=(gnss or {}).get(name),
        )
        if name == EGO:
            plan = _ego_plan(road, route)
            actors.append(Actor(
                EGO, EGO, route.start[0], route.start[1], route.heading, route.target_speed,
                motion="vehicle", route=Polyline(plan), primitive=ent.get("primitive", route.primitive),
                cruise_speed=route.target_speed, **EGO_DIMENSIONS, **common,
            ))
            continue
        meta = db.nodes[ent["asset_id"]].metadata
        motion = meta.get("motion", "static")
        dims = {k: float(meta.get(k, DEFAULT_DIMENSIONS[k])) for k in DEFAULT_DIMENSIONS}
        a = assignments[name]
        speed = float(a.get("speed", 0.0))
        spawn_speed = 0.0 if ent.get("primitive") in ("stationary", "delayed_start") else speed
        actors.append(Actor(
            name, ent["asset_id"], a["x0"], a["y0"], a["heading"], spawn_speed, motion=motion,
            route=_actor_route(road, motion, a) if not a.get("attached_to") else None,
            primitive=ent.get("primitive", "stationary") if motion != "static" else "stationary",
            cruise_speed=speed, attached_to=a.get("attached_to"), **dims, **common,
        ))
    overrides = {}
    for key, value in config.light_overrides.items():
        targets = sorted(road.traffic_lights) if key == "all" else [key]
        overrides.update({t: value for t in targets})
    return SimWorld(road, actors, light_overrides=overrides)


def rollout(config: ScenarioConfig, assignments: dict[str, dict], db: AssetDatabase,
            max_ticks: int = 1200, seed: int = 0, gnss: Optional[dict[str, float]] = None):
    world = instantiate(config, assignments, db, gnss)
    return run(world, config.fsm, config.predicates, max_ticks, seed)


# -- search ------------------------------------------------------------------
def _entity_options(config: ScenarioConfig, db: AssetDatabase, road: RoadMap, route, params: SearchParams):
    """Per entity: list of (cost, speed distance, assignment dict); attached entities get a host reference."""
    options: dict[str, list] = {}
    hosts: dict[str, str] = {}
    for ent in config.entities:
        name = ent["name"]
        if name == EGO:
            continue
        pv = config.placement_vars.get(name)
        if pv is None or not pv.get("start"):
            raise SolverError(f"entity {name} has no starting location")
        start_region = region_for(pv["start"], "starting location")
        if start_region.anchor == "attached":
            host = next((e["name"] for e in config.entities if e["asset_id"] == start_region.lane and e["name"] != name), None)
            if host is None:
                raise SolverError(f"{name} rides on a {start_region.lane} but the scenario has none")
            hosts[name] = host
            options[name] = [(0.0, 0.0, {"speed": 0.0, "attached_to": host})]
            continue
        starts = _region_poses(road, route, start_region, params.grid_step)
        if not starts:
            raise SolverError(f"phrase {pv['start']!r} yields no poses on map {road.id}")
        speeds = speed_values(pv.get("speed_kmh", [0, 0]), params.speed_step)
        opts = []
        for d0, p0 in starts:
            ends = [(0.0, None)]
            if pv.get("end"):
                ends = _region_poses(road, route, region_for(pv["end"], "ending location"), params.grid_step, p0)
            for d1, p1 in ends:
                for v in speeds:
                    mid = sum(pv["speed_kmh"]) / 7.2
                    a = {"x0": p0[0], "y0": p0[1], "heading": p0[2],
                         "xT": None if p1 is None else p1[0], "yT": None if p1 is None else p1[1], "speed": v}
                    opts.append((d0 + d1, abs(v - mid), a))
        if not opts:
            raise SolverError(f"entity {name} has an empty candidate set")
        options[name] = opts
    return options, hosts


def _value_key(a: dict) -> tuple:
    return tuple(round(v, 6) if isinstance(v, float) else (-1e18 if v is None else 0)
                 for v in (a.get("x0"), a.get("y0"), a.get("speed"), a.get("xT"), a.get("yT")))


def joint_candidates(config: ScenarioConfig, db: AssetDatabase, params: SearchParams) -> list[dict[str, dict]]:
    """Every joint assignment in deterministic search order (before static pruning)."""
    road, route = resolve_route(config.route_id)
    options, hosts = _entity_options(config, db, road, route, params)
    names = list(options)
    total = math.prod(len(options[n]) for n in names)
    if total > MAX_JOINT:
        raise SolverError(f"{total} joint candidates; coarsen grid_step or speed_step")
    joint = []
    for combo in itertools.product(*(options[n] for n in names)):
        cost = sum(c[0] for c in combo)
        vcost = sum(c[1] for c in combo)
        assign = {n: dict(c[2]) for n, c in zip(names, combo)}
        for n, host in hosts.items():
            h = assign[host]
            assign[n].update(x0=h["x0"], y0=h["y0"], heading=h["heading"], xT=None, yT=None)
        joint.append((round(cost, 9), round(vcost, 9), tuple(_value_key(assign[n]) for n in names), assign))
    joint.sort(key=lambda t: t[:3])
    return [j[3] for j in joint]


def static_check(config: ScenarioConfig, assign: dict[str, dict], db: AssetDatabase,
                 gap_min: float = DEFAULT_GAP_MIN) -> Optional[str]:
    """Reason a candidate fails the static constraints, or None if it passes."""
    road, route = resolve_route(config.route_id)
    ego_line = Polyline(_ego_plan(road, route))
    dynamic = set()
    boxes = [(EGO, None, obb_corners(route.start[0], route.start[1], route.heading,
                                     EGO_DIMENSIONS["length"], EGO_DIMENSIONS["width"]))]
    for ent in config.entities:
        name = ent["name"]
        if name == EGO:
            continue
        meta = db.nodes[ent["asset_id"]].metadata
        motion = meta.get("motion", "static")
        a = assign[name]
        if motion != "static":
            dynamic.add(name)
        if motion == "vehicle":
            loc = road.locate(a["x0"], a["y0"])
            if loc is None:
                return f"{name} starts off-lane"
            h = road.lanes[loc[0]].centerline.point_at(loc[1])[2]
            if abs(math.remainder(h - a["heading"], 2 * math.pi)) > HEADING_TOLERANCE:
                return f"{name} heading disagrees with its lane"
        if not a.get("attached_to"):
            try:
                line = _actor_route(road, motion, a)
            except NoPathError as exc:
                return f"{name} cannot reach its end: {exc}"
            if line is not None and a.get("xT") is not None and line.length < 1.0:
                return f"{name} end coincides with its start"
            boxes.append((name, None, obb_corners(a["x0"], a["y0"], a["heading"],
                                                  float(meta.get("length", 1.0)), float(meta.get("width", 1.0)))))
    if not min_spawn_gap_check(assign, ego_line, gap_min, dynamic):
        return "spawn too close to the ego-vehicle"
    for (n1, _, b1), (n2, _, b2) in itertools.combinations(boxes, 2):
        if obb_overlap(b1, b2):
            return f"{n1} and {n2} overlap at spawn"
    return None


def _dnf(expr) -> list[frozenset]:
    if isinstance(expr, Call):
        return [frozenset([expr])]
    parts = [_dnf(t) for t in expr.terms]
    if expr.op == "or":
        return [term for p in parts for term in p]
    out = [frozenset()]
    for p in parts:
        out = [a | b for a in out for b in p]
    return out


def unsatisfiable_stage(config: ScenarioConfig) -> Optional[int]:
    """Index of the first stage no world can meet (an agent both moving and stopped)."""
    exprs = {(s.agent, s.name): parse_expr(s.predicate_expr) for s in config.predicates}
    for k, stage in enumerate(config.fsm.stages):
        conj = BoolOp("and", tuple(exprs[p] for p in stage)) if len(stage) > 1 else exprs[stage[0]]
        ok = False
        for term in _dnf(conj):
            moving = {str(c.args[0]) for c in term if c.name == "is_currently_moving"}
            stopped = {str(c.args[0]) for c in term if c.name == "is_currently_stopped"}
            if not moving & stopped:
                ok = True
                break
        if not ok:
            return k
    return None


def _rollout_job(args):
    config_dict, assign, db, max_ticks, seed = args
    r = rollout(ScenarioConfig.from_dict(config_dict), assign, db, max_ticks, seed)
    return r.verdict, r.reached_stage, list(r.stage_log), r.trace if r.verdict == "accepted" else None


def solve_placement(config: ScenarioConfig, db: AssetDatabase, params: SearchParams = SearchParams()) -> ConcreteScenario:
    """First candidate (in search order) whose rollout meets the terminal stage.

    Candidates failing the static checks are skipped; at most
    ``max_candidates`` survivors are rolled out.  Parallel rollouts are
    evaluated in fixed-size batches, so the answer never depends on ``jobs``.
    """
    candidates = joint_candidates(config, db, params)
    search = asdict(params)
    dead = unsatisfiable_stage(config)
    if dead is not None:
        return ConcreteScenario(config, {}, False, "stalled", dead, [], dead, len(candidates), 0, search)
    survivors = (a for a in candidates if static_check(config, a, db, params.gap_min) is None)
    survivors = itertools.islice(survivors, params.max_candidates)
    cfg_dict = config.to_dict()
    best = None  # ((reached, not collided, -index), assignment, result)
    rollouts = 0
    pool = ProcessPoolExecutor(params.jobs) if params.jobs > 1 else None
    try:
        batch_size = params.jobs * 2 if pool else 1
        while True:
            batch = list(itertools.islice(survivors, batch_size))
            if not batch:
                break
            jobs = [(cfg_dict, a, db, params.max_ticks, params.seed) for a in batch]
            results = pool.map(_rollout_job, jobs) if pool else map(_rollout_job, jobs)
            found = False
            for a, res in zip(batch, results):
                key = (res[1], res[0] != "collided", -rollouts)
                rollouts += 1
                if best is None or key > best[0]:
                    best = (key, a, res)
                if res[0] == "accepted":
                    found = True
                    break
            if found:
                break
    finally:
        if pool:
            pool.shutdown()
    if best is None:
        return ConcreteScenario(config, {}, False, "infeasible", 0, [], 0, len(candidates), 0, search)
    _, assign, (verdict, reached, log, trace) = best
    feasible = verdict == "accepted"
    return ConcreteScenario(
        config, assign, feasible, verdict, reached, log,
        None if feasible else reached, len(candidates), rollouts, search, trace,
    )


def apply_counterfactual(config: ScenarioConfig, key: str, value: str, entity: Optional[str] = None) -> ScenarioConfig:
    """Copy of ``config`` with one static property of one entity changed."""
    out = ScenarioConfig.from_dict(copy.deepcopy(config.to_dict()))
    hits = [e for e in out.entities if key in e.get("static_properties", {}) and (entity is None or e["name"] == entity)]
    if not hits:
        raise KeyError(f"no entity has static property {key!r}")
    if len(hits) > 1:
        raise KeyError(f"{len(hits)} entities have {key!r}; name one of {[e['name'] for e in hits]}")
    ent = hits[0]
    ent["static_properties"][key] = value
    props = out.fsm.initial_conditions.setdefault("properties", {})
    props.setdefault(ent["name"], {})[key] = value
    return out
