"""Actors and the fixed-step world integrator."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .control import PidState, lateral, longitudinal
from .geometry import Polyline, obb_corners, obb_overlap, wrap_angle
from .roadmap import RoadMap

DT = 0.05
PRIMITIVES = ("stationary", "driving_forward", "change_lanes", "stop_abruptly", "delayed_start")
BRAKE_LIGHT_DECEL = 0.5
COMFORT_FRACTION = 0.5  # share of b_max used for planned stops (route end, red lights)


class SimError(ValueError):
    pass


@dataclass
class Actor:
    name: str
    asset_id: str
    x: float
    y: float
    heading: float = 0.0
    speed: float = 0.0
    motion: str = "vehicle"  # vehicle | walker | static
    length: float = 4.5
    width: float = 1.9
    a_max: float = 3.0
    b_max: float = 6.0
    route: Optional[Polyline] = None
    primitive: str = "driving_forward"
    cruise_speed: float = 0.0  # m/s
    delay: float = 0.0  # s, delayed_start only
    trigger_stage: Optional[int] = None
    properties: dict[str, str] = field(default_factory=dict)
    pinned: set[str] = field(default_factory=set)
    schedule: list[tuple[int, str, str]] = field(default_factory=list)  # (stage, key, value)
    attached_to: Optional[str] = None
    gnss_sigma: Optional[float] = None
    # runtime state
    triggered: bool = False
    trigger_tick: Optional[int] = None
    current_target: float = 0.0
    accel_cmd: float = 0.0
    steer_cmd: float = 0.0
    stopped_ticks: int = 0
    steady_ticks: int = 0
    gnss_reading: Optional[tuple[float, float]] = None
    speed_pid: PidState = field(default_factory=PidState)
    steer_pid: PidState = field(default_factory=PidState)
    stop_points: list[tuple[float, str]] = field(default_factory=list)  # (route s, light id)

    def __post_init__(self):
        if self.primitive not in PRIMITIVES:
            raise SimError(f"unknown primitive {self.primitive!r} for {self.name}")
        if self.speed < 0:
            raise SimError("speed must be non-negative")

    @property
    def wheelbase(self) -> float:
        return max(1.0, 0.6 * self.length)

    def route_s(self) -> float:
        return self.route.project(self.x, self.y)[0] if self.route is not None else 0.0


@dataclass
class SimWorld:
    road: RoadMap
    actors: list[Actor]
    dt: float = DT
    tick: int = 0
    light_overrides: dict[str, str] = field(default_factory=dict)
    trace: list[dict] = field(default_factory=list)
    collisions: list[tuple[int, str, str]] = field(default_factory=list)
    contacts: set[tuple[str, str]] = field(default_factory=set)

    def __post_init__(self):
        names = [a.name for a in self.actors]
        if len(set(names)) != len(names):
            raise SimError("actor names must be unique")
        for a in self.actors:
            a.stop_points = _stop_points(self.road, a)

    @property
    def time(self) -> float:
        return self.tick * self.dt

    def actor(self, name: str) -> Actor:
        for a in self.actors:
            if a.name == name:
                return a
        raise SimError(f"unknown actor {name!r}")

    def light_state(self, light_id: str) -> str:
        if light_id in self.light_overrides:
            return self.light_overrides[light_id]
        return self.road.traffic_lights[light_id].state_at(self.time)

    def copy(self) -> "SimWorld":
        return copy.deepcopy(self)

    def step(self, seed: int = 0) -> "SimWorld":
        """Advance one tick in place."""
        _step(self, seed)
        return self


def _stop_points(road: RoadMap, actor: Actor) -> list[tuple[float, str]]:
    if actor.route is None or actor.motion != "vehicle":
        return []
    out = []
    for tl in sorted(road.traffic_lights.values(), key=lambda t: t.id):
        for lid in tl.lanes:
            end = road.lanes[lid].centerline.pts[-1]
            s, lat = actor.route.project(float(end[0]), float(end[1]), extend=False)
            if abs(lat) < 1.0 and 0.0 < s < actor.route.length:
                out.append((s, tl.id))
    return sorted(out)


def _desired_speed(world: SimWorld, a: Actor) -> float:
    t = world.time
    if a.primitive == "stationary":
        return 0.0
    if a.primitive == "stop_abruptly" and a.triggered:
        return 0.0
    if a.primitive == "delayed_start":
        if a.trigger_stage is not None and not a.triggered:
            return 0.0
        t0 = world.dt * a.trigger_tick if a.trigger_tick is not None else 0.0
        if t - t0 < a.delay:
            return 0.0
    target = a.cruise_speed
    if a.route is not None:
        s = a.route_s()
        comfort = COMFORT_FRACTION * a.b_max
        rem = a.route.length - s
        target = min(target, math.sqrt(2 * comfort * max(0.0, rem - 0.5)))
        for s_stop, light in a.stop_points:
            d = s_stop - s - a.length / 2 - 1.0
            if d < -a.length:  # already past the line
                continue
            state = world.light_state(light)
            must_stop = state == "red" or (state == "yellow" and a.speed**2 / (2 * comfort) < max(d, 0.0))
            if must_stop and d > -0.5:
                target = min(target, math.sqrt(2 * comfort * max(0.0, d)))
    return max(0.0, target)


def _step(world: SimWorld, seed: int) -> None:
    dt = world.dt
    by_name = {a.name: a for a in world.actors}
    for a in world.actors:
        if a.motion == "static":
            host = by_name.get(a.attached_to) if a.attached_to else None
            if host is not None and a.properties.get("cargo state", "on truck") == "on truck":
                a.x, a.y, a.heading, a.speed = host.x, host.y, host.heading, host.speed
            else:
                a.speed = 0.0
            a.accel_cmd = a.steer_cmd = 0.0
            continue
        a.current_target = _desired_speed(world, a)
        if a.primitive == "stationary" and a.speed == 0.0:
            a.accel_cmd = a.steer_cmd = 0.0
            continue
        accel = longitudinal(a.speed_pid, a.speed, a.current_target, a.a_max, a.b_max, dt)
        if a.primitive == "stop_abruptly" and a.triggered and a.speed > 0.0:
            accel = -a.b_max
        new_speed = max(0.0, a.speed + accel * dt)
        if a.motion == "walker":
            steer = 0.0
            if a.route is not None:
                s = a.route_s()
                lx, ly, _ = a.route.point_at(s + 1.0)
                if math.hypot(lx - a.x, ly - a.y) > 1e-6:
                    a.heading = math.atan2(ly - a.y, lx - a.x)
        else:
            steer = lateral(a.steer_pid, a.x, a.y, a.heading, a.speed, a.route, dt) if a.route is not None else 0.0
        a.accel_cmd, a.steer_cmd = accel, steer
        a.x += new_speed * math.cos(a.heading) * dt
        a.y += new_speed * math.sin(a.heading) * dt
        if a.motion == "vehicle":
            a.heading = wrap_angle(a.heading + new_speed / a.wheelbase * math.tan(steer) * dt)
        a.speed = new_speed

    world.tick += 1
    for idx, a in enumerate(world.actors):
        a.stopped_ticks = a.stopped_ticks + 1 if a.speed <= 0.1 else 0
        steady = a.cruise_speed > 0 and abs(a.speed - a.cruise_speed) <= 0.1 * a.cruise_speed
        a.steady_ticks = a.steady_ticks + 1 if steady else 0
        if a.motion == "vehicle" and "brake light" not in a.pinned:
            a.properties["brake light"] = "on" if a.accel_cmd < -BRAKE_LIGHT_DECEL else "off"
        if a.gnss_sigma is not None:
            if a.gnss_sigma > 0:
                rng = np.random.default_rng([seed, world.tick, idx])
                nx, ny = rng.normal(0.0, a.gnss_sigma, 2)
                a.gnss_reading = (a.x + float(nx), a.y + float(ny))
            else:
                a.gnss_reading = (a.x, a.y)
    _collisions(world)
    _snapshot(world)


def _collisions(world: SimWorld) -> None:
    boxes = {a.name: obb_corners(a.x, a.y, a.heading, a.length, a.width) for a in world.actors}
    now = set()
    acts = world.actors
    for i in range(len(acts)):
        for j in range(i + 1, len(acts)):
            a, b = acts[i], acts[j]
            if a.attached_to == b.name or b.attached_to == a.name:
                continue
            if math.hypot(a.x - b.x, a.y - b.y) > (a.length + b.length + a.width + b.width) / 2:
                continue
            if obb_overlap(boxes[a.name], boxes[b.name]):
                pair = (a.name, b.name)
                now.add(pair)
                if pair not in world.contacts:
                    world.collisions.append((world.tick, a.name, b.name))
    world.contacts = now


def _snapshot(world: SimWorld) -> None:
    world.trace.append({
        "tick": world.tick,
        "actors": {
            a.name: {
                "x": a.x, "y": a.y, "heading": a.heading, "speed": a.speed, "accel": a.accel_cmd,
                "properties": dict(a.properties), "gnss": a.gnss_reading,
            }
            for a in world.actors
        },
    })


def step(world: SimWorld, seed: int = 0) -> SimWorld:
    """Pure step: returns a new world one tick ahead."""
    out = world.copy()
    _step(out, seed)
    return out


def add_gnss_noise(world: SimWorld, actor_name: str, sigma: float) -> SimWorld:
    if sigma < 0:
        raise SimError("sigma must be non-negative")
    out = world.copy()
    out.actor(actor_name).gnss_sigma = float(sigma)
    return out


def apply_stage_effects(world: SimWorld, stage_index: int) -> None:
    """Fire triggers and scheduled property changes bound to a met stage."""
    for a in world.actors:
        if a.trigger_stage == stage_index and not a.triggered:
            a.triggered = True
            a.trigger_tick = world.tick
        for stage, key, value in a.schedule:
            if stage == stage_index:
                a.properties[key] = value
                a.pinned.add(key)
